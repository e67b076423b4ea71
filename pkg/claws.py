"""
Conservation-law hierarchy generated by the Riccati series `q Gamma = sum g_n eta^-n`.

Fluxes come from matching powers of `eta` in `(q Gamma)_t = (A + B Gamma)_x`.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import typing

import sympy

from . import common
from . import symcore
from . import utils
from .structure import QR_Model
from .symcore import ETA, canonical, total_dt_onshell, total_dx

log = logging.getLogger(__name__)


class Settings_Laws(common.Settings):

    count = 6
    """
    Highest order `n` of the emitted laws.

    #### Default: `6`
    """

    mirror = False
    """
    Also emit the hierarchy of the `Gammahat` chart.

    #### Default: `False`
    """

    series_check = True
    """
    Check that the truncated series solves the Riccati relation to the expected order.

    #### Default: `True`
    """

    workers = 1
    """
    Worker processes for the verification of independent laws.

    #### Default: `1`
    """

    def _validate(self):
        if self.count < 0:
            raise common.Config_Error(f"Law count must be non-negative, got {self.count}")


@dataclasses.dataclass(frozen = True)
class G_Sequence:
    """ `g_1 ... g_N` of the data `qr`, 1-based through `[]`. """

    values: typing.Tuple[sympy.Expr, ...]
    qr: QR_Model
    model: symcore.Evolution_Model

    def __getitem__(self, n: int) -> sympy.Expr:
        if n < 1:
            raise IndexError(f"g_{n} does not exist")
        return self.values[n - 1]

    def __len__(self):
        return len(self.values)

    def recursion_residual(self, n: int) -> sympy.Expr:
        """ `g_{n+1} + sum g_k g_{n-k} + q (g_n/q)_x`, zero for a consistent sequence. """

        q = self.qr.reduced(self.model).q
        convolution = sum((self[k] * self[n - k] for k in range(1, n)), sympy.S.Zero)
        return canonical(self[n + 1] + convolution + q * total_dx(self[n] / q, self.model))


@dataclasses.dataclass(frozen = True)
class Conservation_Law:
    """ `D_t(density) = D_x(flux)` on-shell. """

    n: int
    density: sympy.Expr
    flux: sympy.Expr
    trivial: bool = False
    mirror: bool = False

    def residual(self, m: symcore.Evolution_Model) -> sympy.Expr:
        return total_dt_onshell(self.density, m) - total_dx(self.flux, m)

    def as_dict(self) -> dict:
        return {
            'n': self.n,
            'density': symcore.to_text(self.density),
            'flux': symcore.to_text(self.flux),
            'trivial': self.trivial,
            'mirror': self.mirror,
        }


def g_sequence(qr: QR_Model, m: symcore.Evolution_Model, count: int) -> G_Sequence:
    """ `g_1 = q r`, `g_{n+1} = -sum_{k=1}^{n-1} g_k g_{n-k} - q (g_n/q)_x`. """

    if count < 1:
        raise common.Hierarchy_Error(f"At least one g is needed, got {count}")

    d = qr.reduced(m)
    if symcore.is_zero(d.q):
        raise common.Model_Error("q vanishes identically, the series is undefined")

    values = [canonical(d.q * d.r)]
    while len(values) < count:
        n = len(values)
        convolution = sum((values[k - 1] * values[n - k - 1] for k in range(1, n)), sympy.S.Zero)
        values.append(canonical(-convolution - d.q * total_dx(values[n - 1] / d.q, m)))
        log.debug("g_%s = %s", n + 1, symcore.to_text(values[-1]))

    return G_Sequence(tuple(values), qr, m)


def _coefficients(e: sympy.Expr) -> typing.Dict[int, sympy.Expr]:
    low, high = symcore.eta_bounds(e)
    return {power: value for power, value in zip(range(low, high + 1), symcore.laurent_eta(e, low, high)) if value != 0}


def flux_sequence(qr: QR_Model, gs: G_Sequence, m: typing.Optional[symcore.Evolution_Model] = None, n_max: typing.Optional[int] = None) -> typing.List[Conservation_Law]:
    """
    Laws from equating like powers of `eta` in `sum D_t(g_n) eta^-n = D_x(A + B sum (g_n/q) eta^-n)`.

    The flux of `g_n` is `A_{-n} + sum_j b_j g_{n+j} / q` with `B = sum_j b_j eta^j`.
    Non-negative powers must reduce to constants, orders only `A` reaches are checked and not emitted.
    """

    if m is None:
        m = gs.model

    d = qr.reduced(m)
    a = _coefficients(d.A)
    b = _coefficients(d.B)
    size = len(gs)

    def series(n: int) -> sympy.Expr:
        return sum((coefficient * gs[n + power] / d.q for power, coefficient in b.items() if 1 <= n + power <= size), sympy.S.Zero)

    high = max([0, *a.keys(), *(power - 1 for power in b.keys())])
    for power in range(0, high + 1):
        term = a.get(power, 0) + series(-power)
        if not symcore.is_zero(total_dx(term, m)):
            raise common.Hierarchy_Error(f"Unmatched eta^{power} term: D_x({symcore.to_text(canonical(term))}) is not zero")

    low_b = min(b.keys(), default = 0)
    high_b = max(b.keys(), default = 0)
    first = max(1, 1 - low_b)

    if n_max is None:
        n_max = size - max(high_b, 0)

    if n_max + max(high_b, 0) > size:
        raise common.Hierarchy_Error(f"Laws up to order {n_max} need g_{n_max + max(high_b, 0)}, only {size} available")

    for n in range(1, min(first, n_max + 1)):
        absorbed = total_dt_onshell(gs[n], m) - total_dx(a.get(-n, 0), m)
        if not symcore.is_zero_onshell(absorbed, m):
            raise common.Hierarchy_Error(f"Order {n} is only reached by A and does not cancel")
        log.debug("Order %s cancels against A and is not emitted", n)

    laws = []
    for n in range(first, n_max + 1):
        density = gs[n]
        flux = canonical(a.get(-n, 0) + series(n))
        laws.append(Conservation_Law(n, density, flux, _safe_trivial(density, m)))

    return laws


def _safe_trivial(density: sympy.Expr, m: symcore.Evolution_Model) -> bool:
    try:
        return euler_trivial(density, m)
    except common.Algebra_Error as error:
        log.warning("Triviality undecided for %s: %s", symcore.to_text(density), error)
        return False


def verify(law: Conservation_Law, m: symcore.Evolution_Model) -> bool:
    """ Exact on-shell zero test of `D_t(density) - D_x(flux)`. """
    return symcore.is_zero_onshell(law.residual(m), m)


def defect_residual(law: Conservation_Law, m: symcore.Evolution_Model, defect = 'w') -> sympy.Expr:
    """ The law's residual off-shell, with the evolution `q_t = E + w` for a generic field `w`. """

    off_shell = m.with_fields(defect).with_evolution(m.evolution + symcore.jet(defect))
    return canonical(law.residual(off_shell))


def euler_operator(density: sympy.Expr, m: symcore.Evolution_Model) -> sympy.Expr:
    """ `sum_k (-D_x)^k d(density)/d(q_k)` over the jets of the evolving field. """

    form = symcore.normalize(symcore.reduce(density, m))

    for generator in symcore.generators(form.expr):
        parts = symcore.split_jet(generator)
        if generator != ETA and (parts is None or parts[0] != m.field):
            raise common.Algebra_Error(f"Density depends on {generator}, not only on jets of {m.field}")

    denominator = form.denominator.as_expr()
    if denominator.free_symbols and len(sympy.Poly(denominator, *symcore.generators(denominator)).terms()) != 1:
        raise common.Algebra_Error(f"Density is not polynomial after clearing {m.field}-denominators: {form}")

    expr = form.expr
    orders = [symcore.split_jet(symbol)[1] for symbol in expr.free_symbols if symbol != ETA]

    result = sympy.S.Zero
    for order in range(max(orders, default = -1) + 1):
        term = sympy.diff(expr, symcore.jet(m.field, order))
        for _ in range(order):
            term = -total_dx(term, m)
        result += term

    return canonical(result)


def euler_trivial(density: sympy.Expr, m: symcore.Evolution_Model) -> bool:
    """ `True` iff the density is a total x-derivative. """
    return symcore.is_zero(euler_operator(density, m))


def series_residual(gs: G_Sequence, m: typing.Optional[symcore.Evolution_Model] = None) -> typing.List[sympy.Expr]:
    """
    Coefficients of `eta^0, eta^-1, ... eta^-(N-1)` left by the truncation `S = sum_{n<=N} g_n eta^-n`
    in `eta S = q r - S^2 - q (S/q)_x`. All vanish for a consistent sequence.
    """

    if m is None:
        m = gs.model

    d = gs.qr.reduced(m)
    size = len(gs)
    series = sum((gs[n] * ETA ** -n for n in range(1, size + 1)), sympy.S.Zero)

    residual = ETA * series - (d.q * d.r - series ** 2 - d.q * total_dx(series / d.q, m))
    coefficients = symcore.laurent_eta(residual, -(size - 1), 0)
    return list(reversed(coefficients))


def _verify_item(law: Conservation_Law, m: symcore.Evolution_Model) -> bool:
    return verify(law, m)


def hierarchy(qr: QR_Model, m: symcore.Evolution_Model, n_max: int, mirror = False, workers = 1) -> typing.Tuple[G_Sequence, typing.List[Conservation_Law], typing.List[bool]]:
    """
    Laws of order up to `n_max` with their exact verification.

    With `mirror` the same construction runs on the mirrored data; `rGammahat = sum (-1)^n g'_n eta^-n`
    so density and flux take the sign `(-1)^n`.
    """

    source = qr.mirrored() if mirror else qr

    if n_max < 1:
        return G_Sequence((), source, m), [], []

    _, high_b = symcore.eta_bounds(source.reduced(m).B)
    gs = g_sequence(source, m, n_max + max(high_b, 0))
    laws = flux_sequence(source, gs, m, n_max)

    if mirror:
        laws = [
            dataclasses.replace(law, density = (-1) ** law.n * law.density, flux = (-1) ** law.n * law.flux, mirror = True)
            for law in laws
        ]

    verified = utils.parallel_map(functools.partial(_verify_item, m = m), laws, workers)

    for law, ok in zip(laws, verified):
        if not ok:
            log.warning("Law n=%s failed verification", law.n)

    return gs, laws, verified
