import pytest
import sympy

from pseudosphere import common
from pseudosphere import models
from pseudosphere import structure
from pseudosphere import symcore
from pseudosphere.symcore import ETA, jet

q, q_x, q_xx, q_xxx = (jet('q', k) for k in range(4))
u = sympy.Symbol('u')


@pytest.fixture(params = ['mkdv', 'sine_gordon'])
def source(request):
    return request.getfixturevalue(request.param)


def test_qr_residuals_vanish_onshell(source):
    residual = structure.residuals_qr(source.qr, source.model)
    assert residual.labels == ('qr_1', 'qr_2', 'qr_3')
    assert all(residual.onshell_zero(source.model))
    assert residual.failures(source.model) == []


def test_first_qr_residual_vanishes_offshell(source):
    d = source.qr.reduced(source.model)
    first = symcore.total_dx(d.A, source.model) - (d.q * d.C - d.r * d.B)
    assert symcore.is_zero(first)


def test_f_residuals_vanish_onshell(source):
    residual = structure.residuals_f(structure.qr_to_f(source.qr), source.model)
    assert all(residual.onshell_zero(source.model))


def test_qr_to_f_table():
    qr = structure.QR_Model(q, -q, ETA, q_x, q_xx)
    ft = structure.qr_to_f(qr)
    assert ft.f11 == -ETA
    assert ft.f12 == -2 * ETA
    assert ft.f21 == 0
    assert ft.f22 == q_xx + q_x
    assert ft.f31 == -2 * q
    assert ft.f32 == q_xx - q_x


def test_derive_evolution_mkdv(mkdv):
    derived = structure.derive_evolution(mkdv.qr, mkdv.model)
    assert symcore.is_zero(derived.evolution - (-6 * q ** 2 * q_x - q_xxx))


def test_derive_evolution_sine_gordon(sine_gordon):
    derived = structure.derive_evolution(sine_gordon.qr, sine_gordon.model)
    assert symcore.is_zero(derived.evolution - sympy.sin(u) / 2)
    assert symcore.is_zero(derived.potential_flow('u') - sympy.sin(u))


def test_derive_evolution_rejects_eta_dependence(mkdv):
    flipped = mkdv.qr.replace(B = -mkdv.qr.B)
    with pytest.raises(common.Model_Error):
        structure.derive_evolution(flipped, mkdv.model)


def test_derive_evolution_needs_field_as_q(mkdv):
    with pytest.raises(common.Model_Error):
        structure.derive_evolution(mkdv.qr.replace(q = 2 * q), mkdv.model)


def test_flipped_B_fails_second_equation(mkdv):
    flipped = mkdv.qr.replace(B = -mkdv.qr.B)
    assert 'qr_2' in structure.residuals_qr(flipped, mkdv.model).failures(mkdv.model)


def test_phi_compatibility(source):
    assert symcore.is_zero(structure.phi_compatibility(structure.qr_to_f(source.qr), source.model))


def test_phi_compatibility_detects_broken_data(mkdv):
    flipped = mkdv.qr.replace(B = -mkdv.qr.B)
    assert not symcore.is_zero(structure.phi_compatibility(structure.qr_to_f(flipped), mkdv.model))


def test_closedness(source):
    theta, big_phi = structure.closedness_residuals(structure.qr_to_f(source.qr), source.model)
    assert symcore.is_zero(theta)
    assert symcore.is_zero(big_phi)


def test_theta_gamma_closed(source):
    first, second = structure.theta_gamma_residuals(source.qr, source.model)
    assert symcore.is_zero(first)
    assert symcore.is_zero(second)


def test_check_all(source):
    residuals = structure.check_all(source.qr, source.model)
    assert set(residuals) == {
        'qr_1', 'qr_2', 'qr_3', 'f_1', 'f_2', 'f_3',
        'phi_compatibility', 'theta_closed', 'Phi_closed', 'Theta_1_closed', 'Theta_2_closed',
    }
    assert all(symcore.is_zero_onshell(value, source.model) for value in residuals.values())


def test_mirrored_data_is_pseudospherical(mkdv):
    mirrored = mkdv.qr.mirrored()
    assert all(structure.residuals_qr(mirrored, mkdv.model).onshell_zero(mkdv.model))


def test_explicit_f_table_in_model_file():
    text = '\n'.join([
        '[model]',
        'field = q',
        'evolution = -6*q^2*q_x - q_xxx',
        '[qr]',
        'q = q',
        'r = -q',
        'A = -1/2*eta^3 - eta*q^2',
        'B = -q_xx - eta*q_x - eta^2*q - 2*q^3',
        'C = q_xx - eta*q_x + eta^2*q + 2*q^3',
        '[f]',
        'f11 = -eta',
        'f12 = eta^3 + 2*eta*q^2',
        'f21 = 0',
        'f22 = -2*eta*q_x',
        'f31 = -2*q',
        'f32 = 2*q_xx + 2*eta^2*q + 4*q^3',
    ])
    source = models.loads(text)
    assert source.ft is not None
    assert all(structure.residuals_f(source.ft, source.model).onshell_zero(source.model))


def test_zero_model_table():
    ft = structure.qr_to_f(structure.QR_Model(0, 0, 0, 0, 0))
    assert ft.f11 == -ETA
    assert all(value == 0 for key, value in ft.entries.items() if key != 'f11')


def test_sine_gordon_table(sine_gordon):
    ft = structure.qr_to_f(sine_gordon.qr).reduced(sine_gordon.model)
    assert symcore.is_zero(ft.f21)
    assert symcore.is_zero_onshell(ft.f31 + jet('u', 1), sine_gordon.model)


def test_derive_evolution_of_static_data():
    base = symcore.Evolution_Model('q')
    derived = structure.derive_evolution(structure.QR_Model(q, -q, 0, 0, 0), base)
    assert derived.evolution == 0


def test_wrong_model_breaks_third_f_equation(mkdv):
    wrong = mkdv.model.with_evolution(q_x)
    residual = structure.residuals_f(structure.qr_to_f(mkdv.qr), wrong)
    assert not symcore.is_zero_onshell(residual[2], wrong)


@pytest.mark.parametrize('flip', [False, True])
def test_f_residuals_follow_qr_residuals(source, flip):
    qr = source.qr.replace(B = -source.qr.B) if flip else source.qr
    qr_residual = structure.residuals_qr(qr, source.model)
    f_residual = structure.residuals_f(structure.qr_to_f(qr), source.model)

    assert symcore.is_zero(f_residual[0] + 2 * qr_residual[0])
    assert symcore.is_zero(f_residual[1] + qr_residual[1] + qr_residual[2])
    assert symcore.is_zero(f_residual[2] - qr_residual[1] + qr_residual[2])


def test_perturbed_tables_are_detected(mkdv):
    ft = structure.qr_to_f(mkdv.qr)
    assert not symcore.is_zero(structure.phi_compatibility(ft.replace(f32 = ft.f32 + q), mkdv.model))

    theta, _ = structure.closedness_residuals(ft.replace(f12 = ft.f12 + q), mkdv.model)
    assert not symcore.is_zero(theta)


def test_constant_table_is_compatible_off_shell():
    # constant coefficients solving the structure equations identically
    ft = structure.F_Table(0, 0, 1, 1, 0, 0)
    m = symcore.Evolution_Model('q', evolution = sympy.Integer(0))
    assert all(structure.residuals_f(ft, m).onshell_zero(m))
    assert structure.phi_compatibility(ft, m) == 0
