"""
Structure equations of pseudospherical surfaces as exact on-shell residuals.

One-forms are handled through their coordinate coefficients, `omega_a = f_a1 dx + f_a2 dt`, and every exterior derivative through its `dx^dt` coefficient.
"""

from __future__ import annotations

import dataclasses
import logging
import typing

import sympy

from . import common
from . import symcore
from .symcore import ETA, total_dt_onshell, total_dx

log = logging.getLogger(__name__)

PHI = sympy.Symbol('phi')
GAMMA = sympy.Symbol('Gamma')
GAMMA_HAT = sympy.Symbol('Gammahat')


@dataclasses.dataclass(frozen = True)
class F_Table:
    """ `omega_1 = f11 dx + f12 dt`, `omega_2 = f21 dx + f22 dt`, `omega_12 = f31 dx + f32 dt`. """

    f11: sympy.Expr
    f12: sympy.Expr
    f21: sympy.Expr
    f22: sympy.Expr
    f31: sympy.Expr
    f32: sympy.Expr

    def replace(self, **changes) -> 'F_Table':
        return dataclasses.replace(self, **{key: sympy.sympify(value) for key, value in changes.items()})

    def reduced(self, m: symcore.Evolution_Model) -> 'F_Table':
        return F_Table(*(symcore.reduce(value, m) for value in dataclasses.astuple(self)))

    @property
    def entries(self) -> typing.Dict[str, sympy.Expr]:
        return {field.name: getattr(self, field.name) for field in dataclasses.fields(self)}


@dataclasses.dataclass(frozen = True)
class QR_Model:
    """
    ```
    omega_1 = -eta dx - 2 A dt
    omega_2 = (q + r) dx + (B + C) dt
    omega_12 = (r - q) dx + (C - B) dt
    ```
    """

    q: sympy.Expr
    r: sympy.Expr
    A: sympy.Expr
    B: sympy.Expr
    C: sympy.Expr

    def replace(self, **changes) -> 'QR_Model':
        return dataclasses.replace(self, **{key: sympy.sympify(value) for key, value in changes.items()})

    def reduced(self, m: symcore.Evolution_Model) -> 'QR_Model':
        return QR_Model(*(symcore.reduce(value, m) for value in dataclasses.astuple(self)))

    @property
    def entries(self) -> typing.Dict[str, sympy.Expr]:
        return {field.name: getattr(self, field.name) for field in dataclasses.fields(self)}

    def mirrored(self) -> 'QR_Model':
        """ Data whose `Gamma` system is the `Gammahat` system of this one: `q <-> r`, `B <-> C`, `A -> -A`, `eta -> -eta`. """

        def flip(e):
            return sympy.sympify(e).xreplace({ETA: -ETA})

        return QR_Model(
            q = self.r,
            r = self.q,
            A = -flip(self.A),
            B = flip(self.C),
            C = flip(self.B),
        )


@dataclasses.dataclass(frozen = True)
class Structure_Residual:
    """ Named residuals, each the left minus the right side of one equation, zero on-shell when the equation holds. """

    labels: typing.Tuple[str, ...]
    expressions: typing.Tuple[sympy.Expr, ...]

    def __iter__(self):
        return iter(zip(self.labels, self.expressions))

    def __getitem__(self, index: int) -> sympy.Expr:
        return self.expressions[index]

    def __len__(self):
        return len(self.expressions)

    def onshell_zero(self, m: typing.Optional[symcore.Evolution_Model] = None) -> typing.Tuple[bool, ...]:
        return tuple(symcore.is_zero_onshell(e, m) for e in self.expressions)

    def failures(self, m: typing.Optional[symcore.Evolution_Model] = None) -> typing.List[str]:
        return [label for label, zero in zip(self.labels, self.onshell_zero(m)) if not zero]


def residuals_f(ft: F_Table, m: symcore.Evolution_Model) -> Structure_Residual:
    """ Structure equations with Gaussian curvature `K = -1` hard-coded in the third. """

    f = ft.reduced(m)

    first = -total_dt_onshell(f.f11, m) + total_dx(f.f12, m) - (f.f31 * f.f22 - f.f21 * f.f32)
    second = -total_dt_onshell(f.f21, m) + total_dx(f.f22, m) - (f.f11 * f.f32 - f.f12 * f.f31)
    third = -total_dt_onshell(f.f31, m) + total_dx(f.f32, m) - (f.f11 * f.f22 - f.f12 * f.f21)

    return Structure_Residual(('f_1', 'f_2', 'f_3'), (first, second, third))


def residuals_qr(qr: QR_Model, m: symcore.Evolution_Model) -> Structure_Residual:

    d = qr.reduced(m)

    first = total_dx(d.A, m) - (d.q * d.C - d.r * d.B)
    second = total_dt_onshell(d.q, m) - (total_dx(d.B, m) + 2 * d.A * d.q - ETA * d.B)
    third = total_dt_onshell(d.r, m) - (total_dx(d.C, m) - 2 * d.A * d.r + ETA * d.C)

    return Structure_Residual(('qr_1', 'qr_2', 'qr_3'), (first, second, third))


def qr_to_f(qr: QR_Model) -> F_Table:
    return F_Table(
        f11 = -ETA,
        f12 = -2 * qr.A,
        f21 = qr.r + qr.q,
        f22 = qr.C + qr.B,
        f31 = qr.r - qr.q,
        f32 = qr.C - qr.B,
    )


def derive_evolution(qr: QR_Model, m: symcore.Evolution_Model) -> symcore.Evolution_Model:
    """
    Read `q_t = B_x + 2 A q - eta B` off the second coefficient equation and check the third against it.

    `m` supplies the field name, constraints and potentials; its evolution, if any, is replaced.
    """

    d = qr.reduced(m)

    if symcore.split_jet(d.q) != (m.field, 0, 0):
        raise common.Model_Error(f"q of the coefficient data must be the field {m.field}, got {symcore.to_text(d.q)}")

    evolution = symcore.canonical(total_dx(d.B, m) + 2 * d.A * d.q - ETA * d.B)
    if ETA in evolution.free_symbols:
        raise common.Model_Error(f"Derived flow q_t = {symcore.to_text(evolution)} depends on eta")

    derived = m.with_evolution(evolution)

    third = total_dt_onshell(d.r, derived) - (total_dx(d.C, derived) - 2 * d.A * d.r + ETA * d.C)
    if not symcore.is_zero_onshell(third, derived):
        raise common.Model_Error(f"The r_t equation is inconsistent with q_t = {symcore.to_text(evolution)}: residual {symcore.to_text(symcore.canonical(third))}")

    log.debug("Derived %s_t = %s", m.field, symcore.to_text(evolution))
    return derived


def _phi_rates(ft: F_Table) -> typing.Tuple[sympy.Expr, sympy.Expr]:
    phi_x = ft.f31 + ft.f11 * sympy.sin(PHI) + ft.f21 * sympy.cos(PHI)
    phi_t = ft.f32 + ft.f12 * sympy.sin(PHI) + ft.f22 * sympy.cos(PHI)
    return phi_x, phi_t


def phi_compatibility(ft: F_Table, m: symcore.Evolution_Model) -> sympy.Expr:
    """ `phi_xt - phi_tx` of the angle system, `sin(phi)` and `cos(phi)` kept as generators. """

    f = ft.reduced(m)
    phi_x, phi_t = _phi_rates(f)

    residual = total_dt_onshell(phi_x, m, rules = {PHI: phi_t}) - total_dx(phi_t, m, rules = {PHI: phi_x})
    return symcore.canonical(residual)


def closedness_residuals(ft: F_Table, m: symcore.Evolution_Model) -> typing.Tuple[sympy.Expr, sympy.Expr]:
    """
    `dx^dt` coefficients of `d theta_1` and `d Phi` with the angle system substituted.

    `theta_1 = cos(phi) omega_1 - sin(phi) omega_2` and `Phi = omega_12 + sin(phi) omega_1 + cos(phi) omega_2` without its exact part `-d phi`.
    """

    f = ft.reduced(m)
    phi_x, phi_t = _phi_rates(f)
    rules_x = {PHI: phi_x}
    rules_t = {PHI: phi_t}

    sin, cos = sympy.sin(PHI), sympy.cos(PHI)

    p = f.f11 * cos - f.f21 * sin
    q = f.f12 * cos - f.f22 * sin
    theta = total_dx(q, m, rules = rules_x) - total_dt_onshell(p, m, rules = rules_t)

    big_p = f.f31 + sin * f.f11 + cos * f.f21
    big_q = f.f32 + sin * f.f12 + cos * f.f22
    big_phi = total_dx(big_q, m, rules = rules_x) - total_dt_onshell(big_p, m, rules = rules_t)

    return symcore.canonical(theta), symcore.canonical(big_phi)


def theta_gamma_residuals(qr: QR_Model, m: symcore.Evolution_Model) -> typing.Tuple[sympy.Expr, sympy.Expr]:
    """
    Closedness of `Theta_1 = omega_1 + Gamma (omega_12 - omega_2)` and `Theta_2 = omega_1 + Gammahat (omega_12 + omega_2)`,
    with `Gamma` and `Gammahat` moving by their Riccati equations.
    """

    d = qr.reduced(m)

    gamma_x = d.r - ETA * GAMMA - d.q * GAMMA ** 2
    gamma_t = d.C - 2 * d.A * GAMMA - d.B * GAMMA ** 2

    hat_x = d.q + ETA * GAMMA_HAT - d.r * GAMMA_HAT ** 2
    hat_t = d.B + 2 * d.A * GAMMA_HAT - d.C * GAMMA_HAT ** 2

    # Theta_1 = (-eta - 2 q Gamma) dx + (-2 A - 2 B Gamma) dt
    first = total_dx(-2 * d.A - 2 * d.B * GAMMA, m, rules = {GAMMA: gamma_x}) - total_dt_onshell(-ETA - 2 * d.q * GAMMA, m, rules = {GAMMA: gamma_t})

    # Theta_2 = (-eta + 2 r Gammahat) dx + (-2 A + 2 C Gammahat) dt
    second = total_dx(-2 * d.A + 2 * d.C * GAMMA_HAT, m, rules = {GAMMA_HAT: hat_x}) - total_dt_onshell(-ETA + 2 * d.r * GAMMA_HAT, m, rules = {GAMMA_HAT: hat_t})

    return symcore.canonical(first), symcore.canonical(second)


def check_all(qr: QR_Model, m: symcore.Evolution_Model, ft: typing.Optional[F_Table] = None) -> typing.Dict[str, sympy.Expr]:
    """ Every residual of the coefficient data, keyed by name. `ft` defaults to the table of `qr`. """

    if ft is None:
        ft = qr_to_f(qr)

    residuals = {}
    residuals.update(dict(residuals_qr(qr, m)))
    residuals.update(dict(residuals_f(ft, m)))
    residuals['phi_compatibility'] = phi_compatibility(ft, m)

    theta, big_phi = closedness_residuals(ft, m)
    residuals['theta_closed'] = theta
    residuals['Phi_closed'] = big_phi

    theta_1, theta_2 = theta_gamma_residuals(qr, m)
    residuals['Theta_1_closed'] = theta_1
    residuals['Theta_2_closed'] = theta_2

    return residuals
