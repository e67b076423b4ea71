""" Lazy evaluated report handlers, one per command. """

from __future__ import annotations

import functools
import logging
import math
import os
import typing

from . import claws
from . import common
from . import models
from . import pdebench
from . import riccati
from . import structure
from . import symcore
from . import utils

log = logging.getLogger(__name__)


class Check_Report(common.Report):
    """ Structure equations, angle compatibility and closedness of a model file. """

    _command = 'check'

    def __init__(self, model_path: str, target_dir: str):
        super().__init__(model_path, target_dir)

        self.settings_probe = symcore.Settings_Probe()
        """ Random points of the soundness probe. """

    @property
    def _settings_dict(self):
        return {'seed': self.seed, 'probe': self.settings_probe._dict}

    def _compute(self):

        source = models.load(self.model_path)
        residuals = structure.check_all(source.qr, source.model, source.ft)

        entries = {}
        failures = []
        for label, residual in residuals.items():
            reduced = symcore.canonical(symcore.reduce(residual, source.model))
            zero = symcore.is_zero(reduced)
            largest = symcore.probe(reduced, self.settings_probe, self.seed)

            if zero and largest > self.settings_probe.zero_tolerance:
                log.warning("%s is exactly zero but probes to %.3g", label, largest)

            entries[label] = {'zero': zero, 'probe': largest, 'residual': symcore.to_text(reduced)}
            if not zero:
                failures.append(label)
                log.info("%s does not vanish on-shell: %s", label, symcore.to_text(reduced))

        return {
            'evolution': symcore.to_text(source.model.evolution),
            'derived': source.derived,
            'residuals': entries,
            'failures': failures,
            'passed': not failures,
            'exit_status': 1 if failures else 0,
        }


class Laws_Report(common.Report):
    """ The conservation-law hierarchy up to order `settings_laws.count`, each law verified exactly. """

    _command = 'laws'

    def __init__(self, model_path: str, target_dir: str):
        super().__init__(model_path, target_dir)

        self.settings_laws = claws.Settings_Laws()

    @property
    def _settings_dict(self):
        data = self.settings_laws._dict
        data.pop('workers')
        return {'seed': self.seed, 'laws': data}

    def _compute(self):

        source = models.load(self.model_path)
        m = source.model

        failures = structure.residuals_qr(source.qr, m).failures(m)
        if failures:
            raise common.Hierarchy_Error(f"The coefficient data fails {', '.join(failures)}, no hierarchy exists")

        n_max = self.settings_laws.count
        gs, laws, verified = claws.hierarchy(source.qr, m, n_max, workers = self.settings_laws.workers)

        entries = [dict(law.as_dict(), verified = ok) for law, ok in zip(laws, verified)]

        if self.settings_laws.mirror:
            _, mirror_laws, mirror_verified = claws.hierarchy(source.qr, m, n_max, mirror = True, workers = self.settings_laws.workers)
            entries.extend(dict(law.as_dict(), verified = ok) for law, ok in zip(mirror_laws, mirror_verified))
            verified = list(verified) + list(mirror_verified)

        series = []
        if self.settings_laws.series_check and len(gs):
            series = [symcore.to_text(value) for value in claws.series_residual(gs, m) if not symcore.is_zero(value)]
            if series:
                log.warning("The truncated series leaves %s nonzero coefficients", len(series))

        passed = all(verified) and not series
        return {
            'g': [symcore.to_text(value) for value in gs.values],
            'laws': entries,
            'series_residual': series,
            'passed': passed,
            'exit_status': 0 if passed else 1,
        }


def _solution_field(eta: float, solution: pdebench.Exact_Solution, qr: structure.QR_Model, m: symcore.Evolution_Model, perturb: bool) -> riccati.Coefficient_Field:
    field = riccati.Solution_Field(solution, qr, m, eta)
    if perturb:
        return riccati.Perturbed_Field(field)
    return field


class Riccati_Report(common.Report):
    """ Equivalence and closedness checks of the Riccati and linear systems on an exact solution. """

    _command = 'riccati'

    def __init__(self, model_path: str, target_dir: str):
        super().__init__(model_path, target_dir)

        self.settings_riccati = riccati.Settings_Riccati()

        self.solution = None
        """ Exact solution family, the model file's `solution` by default. """

        self.amplitude = 1.0

        self.perturb = False
        """ Shift `B` by 0.1, a negative control that must fail. """

    @property
    def csv_os_path_target(self):
        return os.path.join(self.target_directory, self.stem + '.riccati.csv')

    @property
    def _settings_dict(self):
        data = self.settings_riccati._dict
        data.pop('workers')
        return {'seed': self.seed, 'riccati': data, 'solution': self.solution, 'amplitude': self.amplitude, 'perturb': self.perturb}

    def _compute(self):

        source = models.load(self.model_path)

        family = self.solution or source.solution
        if not family:
            raise common.Model_Error(f"No solution named for {self.stem}")

        potential = source.model.potentials[0] if source.model.potentials else 'u'
        solution = pdebench.Exact_Solution(family, self.amplitude, source.model.field, potential)

        factory = functools.partial(_solution_field, solution = solution, qr = source.qr, m = source.model, perturb = self.perturb)
        results = riccati.run_suites(factory, self.settings_riccati)

        rows = [result.row() for result in results]
        utils.write_csv(self.csv_os_path_target, rows, ['check', 'eta', 'h', 'mismatch', 'order', 'passed'])

        failed = [result for result in results if not result.passed]
        worst = None
        if failed:
            worst = min(failed, key = lambda result: (result.order if result.order is not None else math.inf, -result.mismatch))
            log.info("Worst offender: %s at eta=%s", worst.check, worst.eta)

        return {
            'solution': family,
            'rows': rows,
            'failed_checks': sorted({result.check for result in failed}),
            'worst': None if worst is None else worst.row(),
            'passed': not failed,
            'exit_status': 1 if failed else 0,
        }


class Bench_Report(common.Report):
    """ Drift of the conserved integrals of the hierarchy on a solver run or an exact history. """

    _command = 'bench'

    def __init__(self, model_path: str, target_dir: str):
        super().__init__(model_path, target_dir)

        self.settings_bench = pdebench.Settings_Bench()

        self.residual_tolerance = 1e-9
        """ Largest accepted pointwise residual of the exact solution in `exact` mode. """

    @property
    def csv_os_path_target(self):
        return os.path.join(self.target_directory, self.stem + '.bench.csv')

    @property
    def _settings_dict(self):
        return {'seed': self.seed, 'bench': self.settings_bench._dict}

    def _compute(self):

        source = models.load(self.model_path)
        m = source.model
        settings = self.settings_bench

        wanted = sorted(set(settings.laws))
        _, laws, verified = claws.hierarchy(source.qr, m, max(wanted, default = 0))

        chosen = [(law, ok) for law, ok in zip(laws, verified) if law.n in wanted]
        missing = sorted(set(wanted) - {law.n for law, _ in chosen})
        if missing:
            log.info("Orders %s are not emitted for %s", missing, m.name)

        history = pdebench.simulate(m, settings)
        report = pdebench.drift_report([law for law, _ in chosen], history, m, [ok for _, ok in chosen], settings)

        utils.write_csv(self.csv_os_path_target, report.rows())

        body = report.as_dict()
        body['missing'] = missing
        passed = report.passed

        if settings.mode == 'exact':
            solution = pdebench.exact_solution(m, settings.shape, settings.amplitude)
            residual = max(solution.equation_residual(m, history.grid.x, t) for t in history.times)
            body['equation_residual'] = residual
            passed = passed and residual < self.residual_tolerance

        body['passed'] = passed
        body['exit_status'] = 0 if passed else 1
        return body
