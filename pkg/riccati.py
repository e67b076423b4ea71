"""
Numeric side of the angle, Riccati and linear systems along paths and on space-time grids.

The Riccati variable is projective: it is carried in the `Gamma` chart or the `Gammahat = 1/Gamma` chart
and switches chart whenever its magnitude leaves the threshold, so poles of `Gamma` are never integrated through.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
import typing

import numpy
import sympy

from . import common
from . import symcore
from . import utils
from .structure import QR_Model
from .symcore import ETA

log = logging.getLogger(__name__)

GAMMA_CHART = 0
GAMMA_HAT_CHART = 1

COEFFICIENTS = ('q', 'r', 'A', 'B', 'C')


class Settings_Riccati(common.Settings):
    """ Equivalence and closedness checks of the Riccati and linear systems. """

    etas = [1.0, 3.0, 10.0]
    """
    Values of the spectral parameter to check.

    #### Default: `[1.0, 3.0, 10.0]`
    """

    chart_threshold = 1.5
    """
    The projective value switches chart when its magnitude exceeds this.

    #### Default: `1.5`
    """

    chart_hysteresis = 0.1
    """
    Smallest accepted gap between `chart_threshold` and its reciprocal, the value right after a switch.

    #### Default: `0.1`
    """

    initial_angle = 0.3
    """
    `phi` at the start of every path and grid, `Gamma = tan(phi/2)` and `(psi_1, psi_2) = (1, Gamma)` are matched to it.

    #### Default: `0.3`
    """

    path_length = 20.0
    """
    Length of the x-path, centered at zero.

    #### Default: `20.0`
    """

    path_steps = 8192
    """
    Fixed fourth-order steps along the path.

    #### Default: `8192`
    """

    path_time = 0.0
    """
    Time of the x-path.

    #### Default: `0.0`
    """

    equivalence_tolerance = 1e-7
    """
    Largest accepted disagreement of `Gamma` with `tan(phi/2)` and with `psi_2/psi_1`.

    #### Default: `1e-7`
    """

    wronskian_tolerance = 1e-8
    """
    Largest accepted deviation of the Wronskian from one.

    #### Default: `1e-8`
    """

    fd_x_min = -10.0
    """
    Left edge of the finite-difference grid.

    #### Default: `-10.0`
    """

    fd_x_max = 10.0
    """
    Right edge of the finite-difference grid.

    #### Default: `10.0`
    """

    fd_points_x = 256
    """
    Least number of x-intervals of the coarsest grid.

    #### Default: `256`
    """

    fd_points_t = 32
    """
    Number of t-intervals of the coarsest grid.

    #### Default: `32`
    """

    fd_cells_per_unit = 4.0
    """
    Least x-intervals per unit of `eta * x`, keeps the coarsest grid resolved at large `eta`.

    #### Default: `4.0`
    """

    fd_levels = 3
    """
    Number of grids, each halving both spacings.

    #### Default: `3`
    """

    fd_time_cap = 1.0
    """
    Upper bound of the grid's time extent.

    #### Default: `1.0`
    """

    fd_time_budget = 1.0
    """
    The time extent is at most `fd_time_budget / max|A|`, which bounds the growth of `Gamma` along t.

    #### Default: `1.0`
    """

    fd_mask_bound = 4.0
    """
    A conservation-form equation is evaluated only where its chart variable stays below this on the whole stencil.

    #### Default: `4.0`
    """

    fd_floor = 1e-11
    """
    Mismatches below this count as converged.

    #### Default: `1e-11`
    """

    min_order = 1.9
    """
    Least accepted convergence order of the finite-difference residuals.

    #### Default: `1.9`
    """

    workers = 1
    """
    Worker processes, one `eta` per work item.

    #### Default: `1`
    """

    def _validate(self):

        if self.chart_threshold <= 1:
            raise common.Config_Error(f"Chart threshold must exceed 1, got {self.chart_threshold}")

        if self.chart_threshold - 1 / self.chart_threshold < self.chart_hysteresis:
            raise common.Config_Error(f"Chart threshold {self.chart_threshold} leaves less than {self.chart_hysteresis} hysteresis")

        if self.path_steps < 1 or self.fd_points_x < 2 or self.fd_points_t < 2:
            raise common.Config_Error("Step and grid counts must be positive")

        if self.fd_levels < 2:
            raise common.Config_Error("At least two grid levels are needed for a convergence order")


class Coefficient_Field:
    """ `q, r, A, B, C` at any `(x, t)` with `eta` fixed to a number. """

    eta = 0.0

    def values(self, x, t) -> typing.Dict[str, numpy.ndarray]:
        raise NotImplementedError('This function samples the coefficients.')

    def f_values(self, x, t) -> typing.Dict[str, numpy.ndarray]:
        """ The same one-forms as an `F_Table`. """
        c = self.values(x, t)
        return _f_from_qr(c, self.eta)


def _f_from_qr(c, eta):
    return {
        'f11': numpy.full_like(c['q'], -eta),
        'f12': -2 * c['A'],
        'f21': c['r'] + c['q'],
        'f22': c['C'] + c['B'],
        'f31': c['r'] - c['q'],
        'f32': c['C'] - c['B'],
    }


class Constant_Field(Coefficient_Field):

    def __init__(self, q = 0.0, r = 0.0, A = 0.0, B = 0.0, C = 0.0, eta = 0.0):
        self.constants = {'q': q, 'r': r, 'A': A, 'B': B, 'C': C}
        self.eta = float(eta)

    def values(self, x, t):
        shape = numpy.broadcast(numpy.asarray(x), numpy.asarray(t)).shape
        return {key: numpy.full(shape, float(value)) for key, value in self.constants.items()}


class Solution_Field(Coefficient_Field):
    """ The coefficient data evaluated on the jets of an exact solution. """

    def __init__(self, solution, qr: QR_Model, m: symcore.Evolution_Model, eta: float):
        self.solution = solution
        self.eta = float(eta)

        reduced = qr.reduced(m)
        self.expressions = {key: sympy.sympify(value).xreplace({ETA: sympy.Float(self.eta)}) for key, value in reduced.entries.items()}

        symbols = set()
        for expr in self.expressions.values():
            symbols |= expr.free_symbols

        self.symbols = sorted(symbols, key = str)
        self._functions = {key: symcore.lambdify(self.symbols, expr) for key, expr in self.expressions.items()}

    def values(self, x, t):
        x, t = numpy.broadcast_arrays(numpy.asarray(x, float), numpy.asarray(t, float))
        jets = self.solution.evaluate(self.symbols, x, t)
        arguments = [jets[symbol] for symbol in self.symbols]
        return {key: numpy.broadcast_to(numpy.asarray(function(*arguments), float), x.shape).copy() for key, function in self._functions.items()}


class Perturbed_Field(Coefficient_Field):
    """ A field with `B` shifted by a constant, which breaks the compatibility of the systems. """

    def __init__(self, base: Coefficient_Field, shift_B = 0.1):
        self.base = base
        self.shift_B = float(shift_B)
        self.eta = base.eta

    def values(self, x, t):
        c = dict(self.base.values(x, t))
        c['B'] = c['B'] + self.shift_B
        return c


@dataclasses.dataclass(frozen = True)
class Projective_State:

    chart: int
    value: float

    @property
    def gamma(self) -> float:
        if self.chart == GAMMA_CHART:
            return self.value
        return math.inf if self.value == 0 else 1 / self.value

    def switched(self) -> 'Projective_State':
        return Projective_State(1 - self.chart, 1 / self.value)

    @classmethod
    def from_angle(cls, phi: float, threshold = 1.5) -> 'Projective_State':
        value = math.tan(phi / 2)
        if abs(value) <= threshold:
            return cls(GAMMA_CHART, value)
        return cls(GAMMA_HAT_CHART, math.cos(phi / 2) / math.sin(phi / 2))


@dataclasses.dataclass(frozen = True)
class Linear_State:

    psi1: float
    psi2: float

    def __post_init__(self):
        if self.psi1 == 0 and self.psi2 == 0:
            raise common.Numeric_Error("Linear state must not vanish")


@dataclasses.dataclass(frozen = True)
class Path_Spec:
    """ A straight path along `x` at fixed `t`, or along `t` at fixed `x`. """

    direction: str
    start: float
    length: float
    steps: int
    fixed: float = 0.0

    def __post_init__(self):
        if self.direction not in ('x', 't'):
            raise common.Config_Error(f"Path direction must be 'x' or 't', got {self.direction!r}")
        if self.steps < 1:
            raise common.Config_Error(f"Path needs at least one step, got {self.steps}")
        if not math.isfinite(self.length) or self.length <= 0:
            raise common.Config_Error(f"Path length must be finite and positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.steps

    @property
    def nodes(self) -> numpy.ndarray:
        return self.start + self.h * numpy.arange(self.steps + 1)

    def _points(self, s):
        if self.direction == 'x':
            return s, numpy.full_like(s, self.fixed)
        return numpy.full_like(s, self.fixed), s

    def sample(self, cf: Coefficient_Field) -> typing.Dict[str, numpy.ndarray]:
        """ Coefficients at the nodes and the midpoints, `2 * steps + 1` values. """
        s = self.start + (self.h / 2) * numpy.arange(2 * self.steps + 1)
        return cf.values(*self._points(s))


@dataclasses.dataclass(frozen = True)
class Angle_Trajectory:
    nodes: numpy.ndarray
    phi: numpy.ndarray


@dataclasses.dataclass(frozen = True)
class Projective_Trajectory:

    nodes: numpy.ndarray
    values: numpy.ndarray
    charts: numpy.ndarray
    switches: typing.Tuple[int, ...]
    coherence: float
    """ Largest `|Gamma * Gammahat - 1|` at the switches. """

    def state(self, index: int) -> Projective_State:
        return Projective_State(int(self.charts[index]), float(self.values[index]))

    @property
    def gamma(self) -> numpy.ndarray:
        with numpy.errstate(divide = 'ignore'):
            return numpy.where(self.charts == GAMMA_CHART, self.values, 1 / self.values)


@dataclasses.dataclass(frozen = True)
class Linear_Trajectory:

    nodes: numpy.ndarray
    psi: numpy.ndarray
    """ Unit vectors `(psi_1, psi_2)`, shape `(steps + 1, 2)`. """
    log_scale: numpy.ndarray
    """ Logarithm of the norm removed up to each node. """

    def state(self, index: int) -> Linear_State:
        return Linear_State(float(self.psi[index, 0]), float(self.psi[index, 1]))


def _slices(samples, step: int):
    return (
        {key: value[2 * step] for key, value in samples.items()},
        {key: value[2 * step + 1] for key, value in samples.items()},
        {key: value[2 * step + 2] for key, value in samples.items()},
    )


def _rk4_step(rate, y, c0, cm, c1, h):
    k1 = rate(y, c0)
    k2 = rate(y + 0.5 * h * k1, cm)
    k3 = rate(y + 0.5 * h * k2, cm)
    k4 = rate(y + h * k3, c1)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _phi_rate(direction: str, eta: float):

    if direction == 'x':
        def rate(phi, c):
            return (c['r'] - c['q']) - eta * numpy.sin(phi) + (c['r'] + c['q']) * numpy.cos(phi)
    else:
        def rate(phi, c):
            return (c['C'] - c['B']) - 2 * c['A'] * numpy.sin(phi) + (c['C'] + c['B']) * numpy.cos(phi)

    return rate


def _projective_rate(direction: str, eta: float, chart):

    if direction == 'x':
        def rate(v, c):
            gamma = c['r'] - eta * v - c['q'] * v ** 2
            hat = c['q'] + eta * v - c['r'] * v ** 2
            return numpy.where(chart, hat, gamma)
    else:
        def rate(v, c):
            gamma = c['C'] - 2 * c['A'] * v - c['B'] * v ** 2
            hat = c['B'] + 2 * c['A'] * v - c['C'] * v ** 2
            return numpy.where(chart, hat, gamma)

    return rate


def projective_rate(state: Projective_State, values: typing.Mapping[str, float], direction: str, eta: float) -> float:
    """ Derivative of the chart value: `Gamma_x = r - eta Gamma - q Gamma^2`, `Gammahat_x = q + eta Gammahat - r Gammahat^2` and their t companions. """
    c = {key: numpy.asarray(float(values[key])) for key in COEFFICIENTS}
    return float(_projective_rate(direction, float(eta), numpy.asarray(state.chart == GAMMA_HAT_CHART))(numpy.asarray(state.value), c))


def _linear_rate(direction: str, eta: float):

    if direction == 'x':
        def rate(psi, c):
            return numpy.stack((0.5 * eta * psi[0] + c['q'] * psi[1], c['r'] * psi[0] - 0.5 * eta * psi[1]))
    else:
        def rate(psi, c):
            return numpy.stack((c['A'] * psi[0] + c['B'] * psi[1], c['C'] * psi[0] - c['A'] * psi[1]))

    return rate


def _integrate_phi(samples, direction: str, eta: float, phi0, h: float, steps: int) -> numpy.ndarray:

    rate = _phi_rate(direction, eta)
    phi = numpy.asarray(phi0, float)
    result = [phi]

    for step in range(steps):
        phi = _rk4_step(rate, phi, *_slices(samples, step), h)
        if not numpy.all(numpy.isfinite(phi)):
            raise common.Numeric_Error(f"Non-finite angle at step {step + 1} along {direction}")
        result.append(phi)

    return numpy.array(result)


def _integrate_projective(samples, direction: str, eta: float, value0, chart0, h: float, steps: int, threshold: float):

    value = numpy.asarray(value0, float)
    chart = numpy.asarray(chart0, bool)

    values = [value]
    charts = [chart]
    switches = []
    coherence = 0.0

    with numpy.errstate(all = 'ignore'):
        for step in range(steps):
            c0, cm, c1 = _slices(samples, step)

            new = _rk4_step(_projective_rate(direction, eta, chart), value, c0, cm, c1, h)

            bad = ~numpy.isfinite(new)
            if numpy.any(bad):
                # retry in the other chart
                retry_chart = chart ^ bad
                retry_value = numpy.where(bad, 1 / value, value)
                retry = _rk4_step(_projective_rate(direction, eta, retry_chart), retry_value, c0, cm, c1, h)
                if not numpy.all(numpy.isfinite(retry)):
                    raise common.Numeric_Error(f"Both charts blow up at step {step + 1} along {direction}, the step is too large")
                new = numpy.where(bad, retry, new)
                chart = retry_chart

            switch = numpy.abs(new) > threshold
            if numpy.any(switch):
                flipped = 1 / new
                coherence = max(coherence, float(numpy.max(numpy.abs(new[switch] * flipped[switch] - 1))) if numpy.ndim(new) else abs(float(new * flipped) - 1))
                new = numpy.where(switch, flipped, new)
                chart = chart ^ switch
                switches.append(step + 1)
                log.debug("Chart switch at step %s along %s", step + 1, direction)

            value = new
            values.append(value)
            charts.append(chart)

    return numpy.array(values), numpy.array(charts, dtype = int), tuple(switches), coherence


def flow_phi(cf: Coefficient_Field, path: Path_Spec, phi0: float) -> Angle_Trajectory:
    """ `phi_x = f31 + f11 sin(phi) + f21 cos(phi)` or `phi_t = f32 + f12 sin(phi) + f22 cos(phi)` along the path. """
    phi = _integrate_phi(path.sample(cf), path.direction, cf.eta, phi0, path.h, path.steps)
    return Angle_Trajectory(path.nodes, phi)


def flow_gamma(cf: Coefficient_Field, path: Path_Spec, state0: Projective_State, settings: typing.Optional[Settings_Riccati] = None) -> Projective_Trajectory:

    if settings is None:
        settings = Settings_Riccati()

    values, charts, switches, coherence = _integrate_projective(
        path.sample(cf), path.direction, cf.eta, state0.value, state0.chart == GAMMA_HAT_CHART, path.h, path.steps, settings.chart_threshold)

    return Projective_Trajectory(path.nodes, values, charts, switches, coherence)


def flow_linear(cf: Coefficient_Field, path: Path_Spec, state0: Linear_State) -> Linear_Trajectory:
    """ The linear system, renormalized to unit length every step with the removed log-norm kept apart. """

    samples = path.sample(cf)
    rate = _linear_rate(path.direction, cf.eta)

    psi = numpy.array([state0.psi1, state0.psi2], float)
    norm = numpy.linalg.norm(psi)
    scale = math.log(norm)
    psi = psi / norm

    result = [psi]
    scales = [scale]

    for step in range(path.steps):
        psi = _rk4_step(rate, psi, *_slices(samples, step), path.h)
        norm = numpy.linalg.norm(psi)
        if not math.isfinite(norm) or norm == 0:
            raise common.Numeric_Error(f"Linear flow degenerates at step {step + 1}")
        psi = psi / norm
        scale += math.log(norm)
        result.append(psi)
        scales.append(scale)

    return Linear_Trajectory(path.nodes, numpy.array(result), numpy.array(scales))


def wronskian_deviation(cf: Coefficient_Field, path: Path_Spec) -> float:
    """
    Largest `|W - 1|` of the fundamental matrix started at the identity.

    The basis is re-orthonormalized every step, `W` is the product of the step determinants.
    """

    samples = path.sample(cf)
    rate = _linear_rate(path.direction, cf.eta)

    basis = numpy.eye(2)
    log_det = 0.0
    sign = 1.0
    deviation = 0.0

    for step in range(path.steps):
        advanced = _rk4_step(rate, basis, *_slices(samples, step), path.h)

        ratio = numpy.linalg.det(advanced) / numpy.linalg.det(basis)
        if not math.isfinite(ratio) or ratio == 0:
            raise common.Numeric_Error(f"Fundamental matrix degenerates at step {step + 1}")

        log_det += math.log(abs(ratio))
        sign *= math.copysign(1.0, ratio)
        deviation = max(deviation, abs(sign * math.exp(log_det) - 1))

        basis, _ = numpy.linalg.qr(advanced)

    return deviation


def angle_mismatch(trajectory: Projective_Trajectory, angle: Angle_Trajectory, threshold = 1.5) -> float:
    """ `Gamma` against `tan(phi/2)` and `Gammahat` against `cot(phi/2)`, each where that value is below the threshold. """

    half = angle.phi / 2
    with numpy.errstate(all = 'ignore'):
        tangent = numpy.sin(half) / numpy.cos(half)
        cotangent = numpy.cos(half) / numpy.sin(half)

    reference = numpy.where(trajectory.charts == GAMMA_CHART, tangent, cotangent)
    usable = numpy.isfinite(reference) & (numpy.abs(reference) < threshold)
    if not numpy.any(usable):
        log.warning("No point of the path is comparable with the angle")
        return 0.0

    return float(numpy.max(numpy.abs(trajectory.values[usable] - reference[usable])))


def projective_mismatch(trajectory: Projective_Trajectory, linear: Linear_Trajectory, threshold = 1.5) -> float:
    """ `Gamma` against `psi_2/psi_1` and `Gammahat` against `psi_1/psi_2`. """

    with numpy.errstate(all = 'ignore'):
        reference = numpy.where(trajectory.charts == GAMMA_CHART, linear.psi[:, 1] / linear.psi[:, 0], linear.psi[:, 0] / linear.psi[:, 1])

    usable = numpy.isfinite(reference) & (numpy.abs(reference) < threshold)
    if not numpy.any(usable):
        log.warning("No point of the path is comparable with the linear flow")
        return 0.0

    return float(numpy.max(numpy.abs(trajectory.values[usable] - reference[usable])))


@dataclasses.dataclass(frozen = True)
class Grid_Spec:
    """ `nx * nt` intervals on `[x_min, x_max] x [t_min, t_max]`. """

    x_min: float
    x_max: float
    t_min: float
    t_max: float
    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 2 or self.nt < 2 or not self.x_max > self.x_min or not self.t_max > self.t_min:
            raise common.Config_Error(f"Degenerate grid {self}")

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def ht(self) -> float:
        return (self.t_max - self.t_min) / self.nt

    @property
    def x(self) -> numpy.ndarray:
        return self.x_min + self.hx * numpy.arange(self.nx + 1)

    @property
    def t(self) -> numpy.ndarray:
        return self.t_min + self.ht * numpy.arange(self.nt + 1)

    def refined(self, level: int) -> 'Grid_Spec':
        return dataclasses.replace(self, nx = self.nx * 2 ** level, nt = self.nt * 2 ** level)

    def mesh(self):
        return numpy.meshgrid(self.x, self.t, indexing = 'ij')


def _line_samples(start: float, h: float, steps: int) -> numpy.ndarray:
    return start + (h / 2) * numpy.arange(2 * steps + 1)


def projective_grid(cf: Coefficient_Field, grid: Grid_Spec, state0: Projective_State, threshold = 1.5, from_right = False):
    """
    `(values, charts)` of shape `(nx + 1, nt + 1)`: a t-line at the edge, then x-lines from it.

    `from_right` starts at `x_max` and integrates the x-lines backwards.
    """

    x_base = grid.x_max if from_right else grid.x_min
    hx = -grid.hx if from_right else grid.hx

    t_samples = _line_samples(grid.t_min, grid.ht, grid.nt)
    base = cf.values(numpy.full_like(t_samples, x_base), t_samples)
    base_values, base_charts, _, _ = _integrate_projective(base, 't', cf.eta, state0.value, state0.chart == GAMMA_HAT_CHART, grid.ht, grid.nt, threshold)

    x_samples = _line_samples(x_base, hx, grid.nx)
    xs, ts = numpy.meshgrid(x_samples, grid.t, indexing = 'ij')
    lines = cf.values(xs, ts)
    values, charts, _, _ = _integrate_projective(lines, 'x', cf.eta, base_values, base_charts.astype(bool), hx, grid.nx, threshold)

    if from_right:
        values, charts = values[::-1], charts[::-1]

    return values, charts


def phi_grid(cf: Coefficient_Field, grid: Grid_Spec, phi0: float, t_first = True) -> numpy.ndarray:
    """ `phi` of shape `(nx + 1, nt + 1)`, integrated t-line first (`t_first`) or x-line first. """

    if t_first:
        t_samples = _line_samples(grid.t_min, grid.ht, grid.nt)
        base = cf.values(numpy.full_like(t_samples, grid.x_min), t_samples)
        base_phi = _integrate_phi(base, 't', cf.eta, phi0, grid.ht, grid.nt)

        xs, ts = numpy.meshgrid(_line_samples(grid.x_min, grid.hx, grid.nx), grid.t, indexing = 'ij')
        return _integrate_phi(cf.values(xs, ts), 'x', cf.eta, base_phi, grid.hx, grid.nx)

    x_samples = _line_samples(grid.x_min, grid.hx, grid.nx)
    base = cf.values(x_samples, numpy.full_like(x_samples, grid.t_min))
    base_phi = _integrate_phi(base, 'x', cf.eta, phi0, grid.hx, grid.nx)

    ts, xs = numpy.meshgrid(_line_samples(grid.t_min, grid.ht, grid.nt), grid.x, indexing = 'ij')
    return _integrate_phi(cf.values(xs, ts), 't', cf.eta, base_phi, grid.ht, grid.nt).T


def _central_t(u: numpy.ndarray, ht: float) -> numpy.ndarray:
    return (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * ht)


def _central_x(u: numpy.ndarray, hx: float) -> numpy.ndarray:
    return (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * hx)


def _stencil_mask(bounded: numpy.ndarray) -> numpy.ndarray:
    return bounded[1:-1, 1:-1] & bounded[2:, 1:-1] & bounded[:-2, 1:-1] & bounded[1:-1, 2:] & bounded[1:-1, :-2]


def _coarse(u: numpy.ndarray, level: int) -> numpy.ndarray:
    """ Interior values at the interior points of the coarsest grid. """
    stride = 2 ** level
    return u[stride - 1::stride, stride - 1::stride]


@dataclasses.dataclass(frozen = True)
class Convergence_Report:

    check: str
    eta: float
    spacings: typing.Tuple[float, ...]
    mismatches: typing.Tuple[float, ...]
    order: float
    points: int

    def passed(self, min_order: float) -> bool:
        return self.order >= min_order

    def rows(self, min_order: float) -> typing.List[dict]:
        return [
            {'check': self.check, 'eta': self.eta, 'h': h, 'mismatch': mismatch, 'order': self.order, 'passed': self.passed(min_order)}
            for h, mismatch in zip(self.spacings, self.mismatches)
        ]


def convergence_order(mismatches: typing.Sequence[float], floor = 1e-11) -> float:
    """ Smallest `log2` ratio of successive mismatches, infinite once they reach the floor. """

    orders = []
    for coarse, fine in zip(mismatches, mismatches[1:]):
        if coarse <= floor or fine <= floor:
            orders.append(math.inf)
        else:
            orders.append(math.log2(coarse / fine))

    return min(orders, default = math.inf)


def _convergence(check: str, eta: float, grid: Grid_Spec, levels: int, residual_func, settings: Settings_Riccati) -> Convergence_Report:
    """ `residual_func(grid, level)` returns `(residuals, mask)` on the interior coarse points. """

    residuals = []
    mask = None
    for level in range(levels):
        residual, usable = residual_func(grid.refined(level), level)
        residuals.append(residual)
        mask = usable if mask is None else mask & usable

    if not numpy.any(mask):
        log.warning("%s at eta=%s: no grid point passes the mask", check, eta)
        mismatches = tuple(0.0 for _ in residuals)
    else:
        mismatches = tuple(float(numpy.max(numpy.abs(residual[mask]))) for residual in residuals)

    spacings = tuple(grid.refined(level).hx for level in range(levels))
    order = convergence_order(mismatches, settings.fd_floor)
    log.debug("%s at eta=%s: mismatches %s, order %s", check, eta, mismatches, order)

    return Convergence_Report(check, eta, spacings, mismatches, order, int(numpy.count_nonzero(mask)))


def make_grid(cf: Coefficient_Field, settings: Settings_Riccati) -> Grid_Spec:
    """ The coarsest grid: the time extent shrinks with `max|A|`, the x-resolution grows with `eta`. """

    width = settings.fd_x_max - settings.fd_x_min
    x = numpy.linspace(settings.fd_x_min, settings.fd_x_max, settings.fd_points_x + 1)
    largest = float(numpy.max(numpy.abs(cf.values(x, numpy.zeros_like(x))['A'])))

    extent = settings.fd_time_cap
    if largest > 0:
        extent = min(extent, settings.fd_time_budget / largest)

    nx = max(settings.fd_points_x, 2 * math.ceil(settings.fd_cells_per_unit * abs(cf.eta) * width / 2))
    return Grid_Spec(settings.fd_x_min, settings.fd_x_max, 0.0, extent, nx, settings.fd_points_t)


def check_conservation_form(cf: Coefficient_Field, grid: Grid_Spec, settings: typing.Optional[Settings_Riccati] = None) -> typing.Tuple[Convergence_Report, Convergence_Report]:
    """
    Central-difference residuals of `(q Gamma)_t - (A + B Gamma)_x` and `(r Gammahat)_t - (-A + C Gammahat)_x`.

    The second equation uses the solution started at the right edge in the `Gammahat` chart, where that chart stays bounded.
    """

    if settings is None:
        settings = Settings_Riccati()

    phi0 = settings.initial_angle
    bound = settings.fd_mask_bound

    def gamma_form(level_grid: Grid_Spec, level: int):
        values, charts = projective_grid(cf, level_grid, Projective_State.from_angle(phi0, settings.chart_threshold), settings.chart_threshold)
        with numpy.errstate(all = 'ignore'):
            gamma = numpy.where(charts == GAMMA_CHART, values, 1 / values)
            c = cf.values(*level_grid.mesh())
            residual = _central_t(c['q'] * gamma, level_grid.ht) - _central_x(c['A'] + c['B'] * gamma, level_grid.hx)
            mask = _stencil_mask(numpy.isfinite(gamma) & (numpy.abs(gamma) <= bound))
        return _coarse(residual, level), _coarse(mask, level)

    def hat_form(level_grid: Grid_Spec, level: int):
        start = Projective_State(GAMMA_HAT_CHART, math.tan(phi0 / 2))
        values, charts = projective_grid(cf, level_grid, start, settings.chart_threshold, from_right = True)
        with numpy.errstate(all = 'ignore'):
            hat = numpy.where(charts == GAMMA_HAT_CHART, values, 1 / values)
            c = cf.values(*level_grid.mesh())
            residual = _central_t(c['r'] * hat, level_grid.ht) - _central_x(-c['A'] + c['C'] * hat, level_grid.hx)
            mask = _stencil_mask(numpy.isfinite(hat) & (numpy.abs(hat) <= bound))
        return _coarse(residual, level), _coarse(mask, level)

    return (
        _convergence('conservation_form_gamma', cf.eta, grid, settings.fd_levels, gamma_form, settings),
        _convergence('conservation_form_gamma_hat', cf.eta, grid, settings.fd_levels, hat_form, settings),
    )


def _angle_functions(values: numpy.ndarray, charts: numpy.ndarray):
    """ `sin(phi)` and `cos(phi)` from the chart value, finite in both charts. """
    denominator = 1 + values ** 2
    sin = 2 * values / denominator
    cos = numpy.where(charts == GAMMA_CHART, 1 - values ** 2, values ** 2 - 1) / denominator
    return sin, cos


def check_theta_closed(cf: Coefficient_Field, grid: Grid_Spec, settings: typing.Optional[Settings_Riccati] = None) -> Convergence_Report:
    """ `P_t - Q_x` for `theta_1 = P dx + Q dt`, `P = f11 cos(phi) - f21 sin(phi)`, `Q = f12 cos(phi) - f22 sin(phi)`. """

    if settings is None:
        settings = Settings_Riccati()

    def residual_func(level_grid: Grid_Spec, level: int):
        values, charts = projective_grid(cf, level_grid, Projective_State.from_angle(settings.initial_angle, settings.chart_threshold), settings.chart_threshold)
        sin, cos = _angle_functions(values, charts)
        f = cf.f_values(*level_grid.mesh())
        p = f['f11'] * cos - f['f21'] * sin
        q = f['f12'] * cos - f['f22'] * sin
        residual = _central_t(p, level_grid.ht) - _central_x(q, level_grid.hx)
        return _coarse(residual, level), _coarse(numpy.isfinite(residual), level)

    return _convergence('theta_closed', cf.eta, grid, settings.fd_levels, residual_func, settings)


def check_phi_path_independence(cf: Coefficient_Field, grid: Grid_Spec, settings: typing.Optional[Settings_Riccati] = None) -> Convergence_Report:
    """ `phi` integrated t-line first against x-line first, compared on the coarse points. """

    if settings is None:
        settings = Settings_Riccati()

    def residual_func(level_grid: Grid_Spec, level: int):
        difference = phi_grid(cf, level_grid, settings.initial_angle, t_first = True) - phi_grid(cf, level_grid, settings.initial_angle, t_first = False)
        stride = 2 ** level
        coarse = difference[::stride, ::stride]
        return coarse, numpy.isfinite(coarse)

    return _convergence('phi_path_independence', cf.eta, grid, settings.fd_levels, residual_func, settings)


@dataclasses.dataclass(frozen = True)
class Check_Result:

    check: str
    eta: float
    h: float
    mismatch: float
    order: typing.Optional[float]
    passed: bool

    def row(self) -> dict:
        return {'check': self.check, 'eta': self.eta, 'h': self.h, 'mismatch': self.mismatch, 'order': '' if self.order is None else self.order, 'passed': self.passed}


def equivalence_suite(cf: Coefficient_Field, settings: typing.Optional[Settings_Riccati] = None) -> typing.List[Check_Result]:
    """ Every equivalence and closedness check for one coefficient field. """

    if settings is None:
        settings = Settings_Riccati()

    eta = cf.eta
    phi0 = settings.initial_angle
    path = Path_Spec('x', -settings.path_length / 2, settings.path_length, settings.path_steps, settings.path_time)

    state0 = Projective_State.from_angle(phi0, settings.chart_threshold)
    angle = flow_phi(cf, path, phi0)
    gamma = flow_gamma(cf, path, state0, settings)
    linear = flow_linear(cf, path, Linear_State(1.0, math.tan(phi0 / 2)))

    tolerance = settings.equivalence_tolerance
    results = []

    mismatch = angle_mismatch(gamma, angle, settings.chart_threshold)
    results.append(Check_Result('angle_equivalence', eta, path.h, mismatch, None, mismatch < tolerance))

    mismatch = projective_mismatch(gamma, linear, settings.chart_threshold)
    results.append(Check_Result('projective_equivalence', eta, path.h, mismatch, None, mismatch < tolerance))

    results.append(Check_Result('chart_coherence', eta, path.h, gamma.coherence, None, gamma.coherence < 1e-10))

    deviation = wronskian_deviation(cf, path)
    results.append(Check_Result('wronskian', eta, path.h, deviation, None, deviation < settings.wronskian_tolerance))

    grid = make_grid(cf, settings)
    reports = [
        *check_conservation_form(cf, grid, settings),
        check_theta_closed(cf, grid, settings),
        check_phi_path_independence(cf, grid, settings),
    ]

    for report in reports:
        for h, mismatch in zip(report.spacings, report.mismatches):
            results.append(Check_Result(report.check, eta, h, mismatch, report.order, report.passed(settings.min_order)))

    return results


def _suite_item(eta: float, field_factory, settings: Settings_Riccati) -> typing.List[Check_Result]:
    return equivalence_suite(field_factory(eta), settings)


def run_suites(field_factory: typing.Callable[[float], Coefficient_Field], settings: Settings_Riccati) -> typing.List[Check_Result]:
    """ `equivalence_suite` for every `eta` of the settings, one work item each. """

    suites = utils.parallel_map(functools.partial(_suite_item, field_factory = field_factory, settings = settings), settings.etas, settings.workers)
    return [result for suite in suites for result in suite]
