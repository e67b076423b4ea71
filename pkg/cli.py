"""
Command line front end.

```
python -m pseudosphere check --model mkdv
python -m pseudosphere laws --model sine-gordon --n 4
python -m pseudosphere riccati --model mkdv --eta 3 --grid 20x8192
python -m pseudosphere bench --model mkdv --config models/mkdv-gaussian.json
```

Exit statuses: 0 pass, 1 check failure, 2 input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import typing

from . import common
from . import models
from . import reports

log = logging.getLogger(__name__)


def parse_grid(text: str) -> typing.Tuple[float, int]:
    """ `LxN`, a length and a number of points or steps. """

    try:
        length, points = text.lower().split('x')
        return float(length), int(points)
    except ValueError:
        raise common.Config_Error(f"Grid must read LxN, got {text!r}") from None


def _report(cls, args) -> common.Report:
    report = cls(models.resolve(args.model), args.out)
    report.seed = args.seed
    return report


def _finish(report: common.Report, args) -> int:

    report.update(forced = args.force)
    result = report.result

    if result.get('failures'):
        print(f"{report.stem}: failed {', '.join(result['failures'])}", file = sys.stderr)
    elif result.get('worst'):
        worst = result['worst']
        print(f"{report.stem}: worst offender {worst['check']} at eta={worst['eta']}", file = sys.stderr)

    log.info("%s report: %s", report._command, report.os_path_target)
    return result.get('exit_status', 0)


def cmd_check(args) -> int:
    report = _report(reports.Check_Report, args)
    return _finish(report, args)


def cmd_laws(args) -> int:

    report = _report(reports.Laws_Report, args)
    settings = report.settings_laws

    values = {'mirror': args.mirror, 'workers': args.workers}
    if args.n is not None:
        values['count'] = args.n
    settings._update(values)

    return _finish(report, args)


def cmd_riccati(args) -> int:

    report = _report(reports.Riccati_Report, args)
    settings = report.settings_riccati

    if args.config:
        models.load_config(args.config, settings)

    values = {'workers': args.workers}
    if args.eta:
        values['etas'] = list(args.eta)
    if args.grid:
        length, steps = parse_grid(args.grid)
        values.update(path_length = length, path_steps = steps, fd_x_min = -length / 2, fd_x_max = length / 2)
    settings._update(values)

    report.solution = args.solution
    report.amplitude = args.amplitude
    report.perturb = args.perturb

    return _finish(report, args)


def cmd_bench(args) -> int:

    report = _report(reports.Bench_Report, args)
    settings = report.settings_bench

    if args.config:
        models.load_config(args.config, settings)

    values = {}
    if args.grid:
        values['length'], values['points'] = parse_grid(args.grid)
    if args.tmax is not None:
        values['t_max'] = args.tmax
    if args.dt is not None:
        values['dt'] = args.dt
    if args.n is not None:
        values['laws'] = list(range(1, args.n + 1))
    if args.amplitude is not None:
        values['amplitude'] = args.amplitude
    settings._update(values)

    return _finish(report, args)


COMMANDS = {
    'check': cmd_check,
    'laws': cmd_laws,
    'riccati': cmd_riccati,
    'bench': cmd_bench,
}


def get_parser() -> argparse.ArgumentParser:

    common_args = argparse.ArgumentParser(add_help = False)
    common_args.add_argument('--model', required = True, help = 'Model file, or the name of a bundled model: mkdv, sine-gordon.')
    common_args.add_argument('--out', default = 'reports', help = 'Directory of the reports.')
    common_args.add_argument('--seed', type = int, default = 0, help = 'Seed of the probe points.')
    common_args.add_argument('--force', action = 'store_true', help = 'Recompute even if the report is up to date.')
    common_args.add_argument('--verbose', '-v', action = 'store_true')
    common_args.add_argument('--workers', type = int, default = 1, help = 'Worker processes.')

    parser = argparse.ArgumentParser(prog = 'pseudosphere', description = 'Pseudospherical-surface checks, conservation-law hierarchies and drift benches.')
    parser.add_argument('--version', action = 'version', version = common.VERSION)
    subparsers = parser.add_subparsers(dest = 'command', required = True)

    subparsers.add_parser('check', parents = [common_args], help = 'Verify the structure equations on-shell.')

    laws = subparsers.add_parser('laws', parents = [common_args], help = 'Emit and verify the conservation-law hierarchy.')
    laws.add_argument('--n', type = int, help = 'Highest law order.')
    laws.add_argument('--mirror', action = 'store_true', help = 'Also emit the hierarchy of the Gammahat chart.')

    ricc = subparsers.add_parser('riccati', parents = [common_args], help = 'Riccati, angle and linear equivalence checks on an exact solution.')
    ricc.add_argument('--eta', type = float, nargs = '+', help = 'Spectral parameter values.')
    ricc.add_argument('--grid', help = 'Path length and steps, LxN.')
    ricc.add_argument('--solution', help = 'Exact solution family: mkdv-soliton, sg-kink.')
    ricc.add_argument('--amplitude', type = float, default = 1.0)
    ricc.add_argument('--perturb', action = 'store_true', help = 'Shift B by 0.1, a negative control.')
    ricc.add_argument('--config', help = 'JSON settings.')

    bench = subparsers.add_parser('bench', parents = [common_args], help = 'Drift of the conserved integrals.')
    bench.add_argument('--config', help = 'JSON run configuration.')
    bench.add_argument('--grid', help = 'Period and points, LxN.')
    bench.add_argument('--tmax', type = float)
    bench.add_argument('--dt', type = float)
    bench.add_argument('--n', type = int, help = 'Track the laws of order 1 to n.')
    bench.add_argument('--amplitude', type = float)

    return parser


def main(argv: typing.Optional[typing.List[str]] = None) -> int:

    args = get_parser().parse_args(argv)

    logging.basicConfig(
        level = logging.DEBUG if args.verbose else logging.INFO,
        format = '%(levelname)s %(name)s: %(message)s',
    )

    try:
        return COMMANDS[args.command](args)
    except common.Pseudosphere_Error as error:
        print(f"{type(error).__name__}: {error}", file = sys.stderr)
        return error.exit_status

