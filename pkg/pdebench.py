"""
Exact solutions, spectral evolution and conserved-integral drift for the two bundled equations.

The domain is periodic. Solutions decay at the edges, so the periodic box stands in for the line.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import typing

import numpy
import sympy

from . import common
from . import symcore
from .symcore import jet

log = logging.getLogger(__name__)

X = sympy.Symbol('x', real = True)
T = sympy.Symbol('t', real = True)

MKDV = 'mkdv'
SINE_GORDON = 'sine-gordon'

SHAPES = ('gaussian', 'soliton', 'kink', 'zero')


class Settings_Bench(common.Settings):
    """ Drift bench of conserved integrals. """

    length = 40.0
    """
    Period of the x-grid, the grid covers `[-length/2, length/2)`.

    #### Default: `40.0`
    """

    points = 512
    """
    Grid points, a power of two.

    #### Default: `512`
    """

    t_max = 1.0
    """
    #### Default: `1.0`
    """

    dt = 5e-4
    """
    Fixed time step.

    #### Default: `5e-4`
    """

    save_every = 200
    """
    Steps between saved time samples.

    #### Default: `200`
    """

    shape = 'gaussian'
    """
    Initial condition: `gaussian`, `soliton` (mkdv), `kink` (sine-gordon) or `zero`.

    #### Default: `'gaussian'`
    """

    amplitude = 1.0
    """
    Amplitude of the gaussian, `a` of the soliton and of the kink.

    #### Default: `1.0`
    """

    mode = 'evolve'
    """
    `evolve` runs the solver, `exact` samples the exact solution named by `shape`.

    #### Default: `'evolve'`
    """

    laws = [1, 2, 3, 4, 5]
    """
    Orders of the laws whose integrals are tracked.

    #### Default: `[1, 2, 3, 4, 5]`
    """

    drift = 1e-6
    """
    Largest accepted relative drift of a nontrivial law on an evolved history.

    #### Default: `1e-6`
    """

    exact_drift = 1e-8
    """
    Largest accepted relative drift of a nontrivial law on an exact history.

    #### Default: `1e-8`
    """

    trivial = 1e-10
    """
    Largest accepted `|I(t)|` of a trivial density.

    #### Default: `1e-10`
    """

    edge_tolerance = 1e-10
    """
    The field is expected to decay below this at the grid edges.

    #### Default: `1e-10`
    """

    stability_limit = 2.8
    """
    Largest accepted `dt` times the estimated stiffness of the explicit part.

    #### Default: `2.8`
    """

    blow_up = 1e6
    """
    The run fails once the field exceeds this in magnitude.

    #### Default: `1e6`
    """

    max_jet_order = 8
    """
    Highest spectral derivative a density may use.

    #### Default: `8`
    """

    def _validate(self):

        if self.points < 4 or self.points & (self.points - 1):
            raise common.Config_Error(f"Grid points must be a power of two, got {self.points}")

        if not self.length > 0 or not self.t_max >= 0 or not self.dt > 0 or self.save_every < 1:
            raise common.Config_Error("Grid length, t_max, dt and save_every must be positive")

        if self.shape not in SHAPES:
            raise common.Config_Error(f"Unknown initial shape {self.shape!r}, expected one of {', '.join(SHAPES)}")

        if self.mode not in ('evolve', 'exact'):
            raise common.Config_Error(f"Unknown bench mode {self.mode!r}")

    @property
    def grid(self) -> 'Periodic_Grid':
        return Periodic_Grid(self.length, self.points)


@dataclasses.dataclass(frozen = True)
class Periodic_Grid:

    length: float
    points: int

    def __post_init__(self):
        if self.points < 4 or self.points & (self.points - 1):
            raise common.Config_Error(f"Grid points must be a power of two, got {self.points}")

    @property
    def dx(self) -> float:
        return self.length / self.points

    @property
    def x(self) -> numpy.ndarray:
        return -self.length / 2 + self.dx * numpy.arange(self.points)

    @property
    def k(self) -> numpy.ndarray:
        return 2 * numpy.pi * numpy.fft.fftfreq(self.points, d = self.dx)

    def multiplier(self, order: int) -> numpy.ndarray:
        """ `(ik)^order` with the Nyquist mode removed from odd orders. """
        symbol = (1j * self.k) ** order
        if order % 2:
            symbol[self.points // 2] = 0
        return symbol

    def derivative(self, values: numpy.ndarray, order: int) -> numpy.ndarray:
        if order == 0:
            return values
        return numpy.fft.ifft(self.multiplier(order) * numpy.fft.fft(values)).real


class Exact_Solution:
    """ Closed forms in `x` and `t`, with jets by symbolic differentiation. """

    def __init__(self, family: str, amplitude = 1.0, field = 'q', potential = 'u'):

        a = sympy.nsimplify(amplitude)
        if a == 0:
            raise common.Config_Error("The amplitude of an exact solution must not vanish")

        self.family = family
        self.amplitude = float(amplitude)
        self.field = field

        if family == 'mkdv-soliton':
            self.potential = None
            self.potential_expr = None
            self.field_expr = a / sympy.cosh(a * X - a ** 3 * T)
        elif family == 'sg-kink':
            self.potential = potential
            self.potential_expr = 4 * sympy.atan(sympy.exp(a * X + T / a))
            self.field_expr = sympy.diff(self.potential_expr, X) / 2
        else:
            raise common.Config_Error(f"Unknown exact solution {family!r}")

    def expression(self, symbol: sympy.Expr) -> sympy.Expr:
        """ The jet or trig generator `symbol` as a function of `x` and `t`. """

        if isinstance(symbol, (sympy.sin, sympy.cos)):
            return symbol.func(self.expression(symbol.args[0]))

        parts = symcore.split_jet(symbol)
        if parts is None:
            raise common.Evaluation_Error(f"{symbol} is not a jet of the {self.family} solution")

        name, order, t_order = parts
        if name == self.field:
            base = self.field_expr
        elif name == self.potential:
            base = self.potential_expr
        else:
            raise common.Evaluation_Error(f"The {self.family} solution has no field {name}")

        if order:
            base = sympy.diff(base, X, order)
        if t_order:
            base = sympy.diff(base, T, t_order)
        return base

    def substitute(self, e) -> sympy.Expr:
        e = sympy.sympify(e)
        return e.xreplace({symbol: self.expression(symbol) for symbol in e.free_symbols})

    def evaluate(self, symbols: typing.Sequence[sympy.Symbol], x, t) -> typing.Dict[sympy.Symbol, numpy.ndarray]:
        x, t = numpy.broadcast_arrays(numpy.asarray(x, float), numpy.asarray(t, float))
        return {symbol: self.sample(self.expression(symbol), x, t) for symbol in symbols}

    def sample(self, e, x, t) -> numpy.ndarray:
        x, t = numpy.broadcast_arrays(numpy.asarray(x, float), numpy.asarray(t, float))
        return numpy.broadcast_to(numpy.asarray(symcore.lambdify((X, T), e)(x, t), float), x.shape).copy()

    def equation_residual(self, m: symcore.Evolution_Model, x, t) -> float:
        """ Largest `|q_t - E|` of the solution at the points. """

        lhs = self.expression(jet(self.field, 0, 1))
        rhs = self.substitute(symcore.reduce(m.evolution, m))
        return float(numpy.max(numpy.abs(self.sample(lhs - rhs, x, t))))

    def history(self, grid: Periodic_Grid, times: typing.Sequence[float]) -> 'Field_History':

        x = grid.x
        values = numpy.array([self.sample(self.field_expr, x, time) for time in times])

        potential_values = None
        if self.potential is not None:
            potential_values = numpy.array([self.sample(self.potential_expr, x, time) for time in times])

        return Field_History(grid, numpy.asarray(times, float), self.field, values, self.potential, potential_values)


@dataclasses.dataclass(frozen = True)
class Field_History:
    """ Saved samples of the field, and of its potential when the equation evolves one. """

    grid: Periodic_Grid
    times: numpy.ndarray
    field: str
    values: numpy.ndarray
    potential: typing.Optional[str] = None
    potential_values: typing.Optional[numpy.ndarray] = None

    def index(self, t: float) -> int:
        index = int(numpy.argmin(numpy.abs(self.times - t)))
        if not math.isclose(self.times[index], t, rel_tol = 1e-9, abs_tol = 1e-12):
            raise common.Evaluation_Error(f"No saved sample at t={t}")
        return index

    def jets(self, symbols: typing.Iterable[sympy.Symbol], index: int, max_order = 8) -> typing.Dict[sympy.Symbol, numpy.ndarray]:

        result = {}
        for symbol in symbols:
            parts = symcore.split_jet(symbol)
            if parts is None or parts[2]:
                raise common.Evaluation_Error(f"{symbol} is not an x-jet available from the history")

            name, order, _ = parts
            if order > max_order:
                raise common.Evaluation_Error(f"{symbol} needs derivatives beyond order {max_order}")

            if name == self.field:
                result[symbol] = self.grid.derivative(self.values[index], order)
            elif name == self.potential and order == 0:
                result[symbol] = self.potential_values[index]
            else:
                raise common.Evaluation_Error(f"{symbol} is not available from the history of {self.field}")

        return result


def _check_field(values: numpy.ndarray, settings: Settings_Bench, t: float):

    if not numpy.all(numpy.isfinite(values)):
        raise common.Blow_Up_Error(f"Non-finite field at t={t:.6g}")

    peak = float(numpy.max(numpy.abs(values)))
    if peak > settings.blow_up:
        raise common.Blow_Up_Error(f"Field blows up at t={t:.6g}: max |q| = {peak:.6g}")


def _warn_edges(values: numpy.ndarray, settings: Settings_Bench, name: str):
    edge = max(abs(values[0]), abs(values[-1]))
    if edge > settings.edge_tolerance:
        log.warning("%s does not decay at the grid edges: %.3g", name, edge)


def _schedule(settings: Settings_Bench) -> typing.Tuple[int, typing.List[int]]:
    steps = int(round(settings.t_max / settings.dt))
    if not math.isclose(steps * settings.dt, settings.t_max, rel_tol = 1e-9, abs_tol = 1e-12):
        raise common.Config_Error(f"t_max {settings.t_max} is not a multiple of dt {settings.dt}")
    saves = sorted(set(range(0, steps + 1, settings.save_every)) | {steps})
    return steps, saves


def evolve_mkdv(initial: numpy.ndarray, settings: typing.Optional[Settings_Bench] = None, field = 'q') -> Field_History:
    """
    `q_t + 6 q^2 q_x + q_xxx = 0` by the integrating factor of `q_xxx` and classical fourth-order steps on `-2 (q^3)_x`.
    """

    if settings is None:
        settings = Settings_Bench()

    grid = settings.grid
    q = numpy.asarray(initial, float)
    if q.shape != (grid.points,):
        raise common.Initial_Data_Error(f"Initial data has shape {q.shape}, the grid has {grid.points} points")

    _check_field(q, settings, 0.0)
    _warn_edges(q, settings, field)

    dt = settings.dt
    stiffness = 6 * float(numpy.max(numpy.abs(q))) ** 2 * float(numpy.max(numpy.abs(grid.k)))
    if dt * stiffness > settings.stability_limit:
        raise common.Stability_Error(f"dt={dt} exceeds the stability bound {settings.stability_limit / stiffness:.3g} of the nonlinear term")

    steps, saves = _schedule(settings)

    # -q_xxx in Fourier space
    linear = 1j * grid.k ** 3
    half = numpy.exp(linear * dt / 2)
    full = half ** 2
    derivative = grid.multiplier(1)

    def nonlinear(spectrum):
        return -2 * derivative * numpy.fft.fft(numpy.fft.ifft(spectrum).real ** 3)

    spectrum = numpy.fft.fft(q)
    times = [0.0]
    values = [q]

    for step in range(1, steps + 1):
        k1 = nonlinear(spectrum)
        k2 = nonlinear(half * (spectrum + dt / 2 * k1))
        k3 = nonlinear(half * spectrum + dt / 2 * k2)
        k4 = nonlinear(full * spectrum + dt * half * k3)
        spectrum = full * spectrum + dt / 6 * (full * k1 + 2 * half * (k2 + k3) + k4)

        if step in saves:
            q = numpy.fft.ifft(spectrum).real
            _check_field(q, settings, step * dt)
            times.append(step * dt)
            values.append(q)
            log.debug("mkdv t=%.4g max|q|=%.6g", step * dt, float(numpy.max(numpy.abs(q))))

    return Field_History(grid, numpy.array(times), field, numpy.array(values))


def _vacuum_edges(u: numpy.ndarray, tolerance = 1e-6):

    for name, value in (('left', u[0]), ('right', u[-1])):
        if abs(math.cos(value) - 1) > tolerance or abs(math.sin(value)) > tolerance:
            raise common.Initial_Data_Error(f"u={value:.6g} at the {name} edge is not a vacuum state, sin(u) does not decay")


def _unwind(u: numpy.ndarray, grid: Periodic_Grid) -> typing.Tuple[numpy.ndarray, float]:
    """ `u` minus the ramp of its winding, periodic on the grid, and the removed slope. """

    winding = round((u[-1] - u[0]) / (2 * math.pi))
    slope = 2 * math.pi * winding / grid.length
    return u - slope * (grid.x - grid.x[0]), slope


def _light_cone_rate(u: numpy.ndarray, grid: Periodic_Grid) -> numpy.ndarray:
    """
    `u_t(x) = integral of sin(u)` from the left edge, where `u_t` vanishes.

    The pinned edge value is exact only to the size of `u_t` there, and that error is carried to the right,
    so the left edge has to sit where the true `u_t` is below the wanted accuracy.
    """

    integrand = numpy.sin(u)
    mean = float(numpy.mean(integrand))

    spectrum = numpy.fft.fft(integrand - mean)
    k = grid.k
    antiderivative = numpy.zeros_like(spectrum)
    nonzero = k != 0
    antiderivative[nonzero] = spectrum[nonzero] / (1j * k[nonzero])
    antiderivative[grid.points // 2] = 0

    periodic = numpy.fft.ifft(antiderivative).real
    return periodic - periodic[0] + mean * (grid.x - grid.x[0])


def evolve_sg(initial: numpy.ndarray, settings: typing.Optional[Settings_Bench] = None, field = 'q', potential = 'u') -> Field_History:
    """
    `u_xt = sin(u)` stepped in `t` by classical fourth-order steps of the light-cone rate.

    The history carries `u` and `q = u_x/2`.
    """

    if settings is None:
        settings = Settings_Bench()

    grid = settings.grid
    u = numpy.asarray(initial, float)
    if u.shape != (grid.points,):
        raise common.Initial_Data_Error(f"Initial data has shape {u.shape}, the grid has {grid.points} points")

    _check_field(u, settings, 0.0)
    _vacuum_edges(u)

    dt = settings.dt
    if dt * grid.length > settings.stability_limit:
        raise common.Stability_Error(f"dt={dt} exceeds the stability bound {settings.stability_limit / grid.length:.3g} of the light-cone rate")

    steps, saves = _schedule(settings)

    def field_of(u):
        periodic, slope = _unwind(u, grid)
        return (grid.derivative(periodic, 1) + slope) / 2

    q = field_of(u)
    _warn_edges(q, settings, field)

    times = [0.0]
    potentials = [u]
    values = [q]

    for step in range(1, steps + 1):
        k1 = _light_cone_rate(u, grid)
        k2 = _light_cone_rate(u + dt / 2 * k1, grid)
        k3 = _light_cone_rate(u + dt / 2 * k2, grid)
        k4 = _light_cone_rate(u + dt * k3, grid)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

        if step in saves:
            _check_field(u, settings, step * dt)
            times.append(step * dt)
            potentials.append(u)
            values.append(field_of(u))

    return Field_History(grid, numpy.array(times), field, numpy.array(values), potential, numpy.array(potentials))


def equation_of(m: symcore.Evolution_Model) -> str:
    """ `MKDV` or `SINE_GORDON`, decided from the model's evolution. """

    if m.evolution is None:
        raise common.Model_Error(f"Model {m.name!r} has no evolution to run")

    q = jet(m.field)
    if symcore.is_zero(symcore.reduce(m.evolution, m) - (-6 * q ** 2 * jet(m.field, 1) - jet(m.field, 3))):
        return MKDV

    for potential in m.potentials:
        try:
            flow = m.potential_flow(potential)
        except common.Model_Error:
            continue
        if symcore.is_zero(flow - sympy.sin(sympy.Symbol(potential))):
            return SINE_GORDON

    raise common.Model_Error(f"No solver for {m.field}_t = {symcore.to_text(m.evolution)}")


def _exact_family(equation: str, shape: str) -> str:
    if equation == MKDV and shape == 'soliton':
        return 'mkdv-soliton'
    if equation == SINE_GORDON and shape == 'kink':
        return 'sg-kink'
    raise common.Config_Error(f"No exact {shape} solution for {equation}")


def exact_solution(m: symcore.Evolution_Model, shape: str, amplitude = 1.0) -> Exact_Solution:
    potential = m.potentials[0] if m.potentials else 'u'
    return Exact_Solution(_exact_family(equation_of(m), shape), amplitude, m.field, potential)


def initial_data(m: symcore.Evolution_Model, settings: Settings_Bench) -> numpy.ndarray:
    """ The evolved quantity at `t = 0`: `q` for mkdv, `u` for sine-gordon. """

    equation = equation_of(m)
    x = settings.grid.x

    if settings.shape == 'zero':
        return numpy.zeros_like(x)

    if settings.shape == 'gaussian':
        return settings.amplitude * numpy.exp(-x ** 2)

    solution = exact_solution(m, settings.shape, settings.amplitude)
    if equation == SINE_GORDON:
        return solution.sample(solution.potential_expr, x, 0.0)
    return solution.sample(solution.field_expr, x, 0.0)


def simulate(m: symcore.Evolution_Model, settings: typing.Optional[Settings_Bench] = None) -> Field_History:
    """ The history the bench measures: a solver run, or samples of the exact solution in `exact` mode. """

    if settings is None:
        settings = Settings_Bench()

    if settings.mode == 'exact':
        _, saves = _schedule(settings)
        return exact_solution(m, settings.shape, settings.amplitude).history(settings.grid, [step * settings.dt for step in saves])

    initial = initial_data(m, settings)
    if equation_of(m) == SINE_GORDON:
        potential = m.potentials[0]
        return evolve_sg(initial, settings, m.field, potential)
    return evolve_mkdv(initial, settings, m.field)


def conserved_integral(density, h: Field_History, t: float, m: typing.Optional[symcore.Evolution_Model] = None, max_order = 8) -> float:
    """ Periodic trapezoid rule of the density over the grid at the saved time `t`. """

    e = symcore.reduce(density, m) if m is not None else sympy.sympify(density)

    if symcore.ETA in e.free_symbols:
        raise common.Evaluation_Error(f"Density {symcore.to_text(e)} depends on eta")

    symbols = sorted(e.free_symbols, key = str)
    jets = h.jets(symbols, h.index(t), max_order)

    values = numpy.broadcast_to(numpy.asarray(symcore.lambdify(symbols, e)(*[jets[symbol] for symbol in symbols]), float), (h.grid.points,))
    return float(h.grid.dx * numpy.sum(values))


@dataclasses.dataclass(frozen = True)
class Law_Drift:

    n: int
    integrals: typing.Tuple[float, ...]
    drift: float
    trivial: bool
    verified: bool
    passed: bool
    discrepancy: bool
    """ The integral is conserved but the symbolic verification of the law failed. """

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen = True)
class Drift_Report:

    times: typing.Tuple[float, ...]
    laws: typing.Tuple[Law_Drift, ...]

    @property
    def passed(self) -> bool:
        return all(law.passed for law in self.laws)

    def rows(self) -> typing.List[dict]:
        """ `{t, I_n...}` per saved time. """
        return [{'t': t, **{f'I_{law.n}': law.integrals[index] for law in self.laws}} for index, t in enumerate(self.times)]

    def as_dict(self) -> dict:
        return {
            'passed': self.passed,
            'times': list(self.times),
            'laws': [law.as_dict() for law in self.laws],
        }


def relative_drift(integrals: typing.Sequence[float]) -> float:
    first = integrals[0]
    return max(abs(value - first) for value in integrals) / max(abs(first), 1.0)


def drift_report(laws, h: Field_History, m: typing.Optional[symcore.Evolution_Model] = None, verified: typing.Optional[typing.Sequence[bool]] = None,
        settings: typing.Optional[Settings_Bench] = None, threshold: typing.Optional[float] = None) -> Drift_Report:
    """
    `I_n(t)` of each law at every saved time.

    Trivial densities pass when `|I|` stays below `settings.trivial`, the others when the relative drift stays below `threshold`.
    """

    if settings is None:
        settings = Settings_Bench()

    if threshold is None:
        threshold = settings.exact_drift if settings.mode == 'exact' else settings.drift

    if verified is None:
        verified = [True] * len(laws)

    results = []
    for law, ok in zip(laws, verified):
        integrals = tuple(conserved_integral(law.density, h, t, m, settings.max_jet_order) for t in h.times)
        drift = relative_drift(integrals)

        if law.trivial:
            conserved = max(abs(value) for value in integrals) < settings.trivial
        else:
            conserved = drift < threshold

        if conserved and not ok:
            log.warning("Law n=%s conserves its integral but fails symbolic verification", law.n)

        results.append(Law_Drift(law.n, integrals, drift, law.trivial, bool(ok), conserved and bool(ok), conserved and not ok))
        log.info("Law n=%s: drift %.3g%s", law.n, drift, " (trivial)" if law.trivial else "")

    return Drift_Report(tuple(float(t) for t in h.times), tuple(results))
