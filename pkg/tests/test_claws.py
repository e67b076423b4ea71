import functools

import pytest
import sympy

from pseudosphere import claws
from pseudosphere import common
from pseudosphere import structure
from pseudosphere import symcore
from pseudosphere import utils
from pseudosphere.symcore import jet

q, q_x, q_xx, q_xxx = (jet('q', k) for k in range(4))
r, r_x = jet('r'), jet('r', 1)
u = sympy.Symbol('u')
w = jet('w')


def brute_force_g(count):
    """ The recursion on an undetermined function of x, converted to jets afterwards. """

    x = sympy.Symbol('x')
    Q = sympy.Function('Q')(x)

    values = [-Q ** 2]
    while len(values) < count:
        n = len(values)
        convolution = sum((values[k - 1] * values[n - k - 1] for k in range(1, n)), sympy.S.Zero)
        values.append(sympy.expand(-convolution - Q * sympy.diff(values[n - 1] / Q, x)))

    def to_jets(e):
        for order in range(2 * count, 0, -1):
            e = e.subs(sympy.Derivative(Q, (x, order)), jet('q', order))
        return e.subs(Q, q)

    return [to_jets(value) for value in values]


def test_generic_first_two():
    m = symcore.Evolution_Model('q', fields = ('r',))
    gs = claws.g_sequence(structure.QR_Model(q, r, 0, 0, 0), m, 2)
    assert symcore.is_zero(gs[1] - q * r)
    assert symcore.is_zero(gs[2] + q * r_x)


def test_mkdv_sequence(mkdv):
    gs = claws.g_sequence(mkdv.qr, mkdv.model, 4)
    assert symcore.is_zero(gs[1] + q ** 2)
    assert symcore.is_zero(gs[2] - q * q_x)
    assert symcore.is_zero(gs[3] - (-q ** 4 - q * q_xx))
    assert symcore.is_zero(gs[4] - (5 * q ** 3 * q_x + q * q_xxx))


def test_mkdv_sequence_matches_brute_force(mkdv):
    gs = claws.g_sequence(mkdv.qr, mkdv.model, 6)
    for n, expected in enumerate(brute_force_g(6), start = 1):
        assert symcore.is_zero(gs[n] - expected), n


def test_recursion_residual(mkdv):
    gs = claws.g_sequence(mkdv.qr, mkdv.model, 5)
    assert all(symcore.is_zero(gs.recursion_residual(n)) for n in range(1, 5))


def test_g_index():
    m = symcore.Evolution_Model('q', fields = ('r',))
    gs = claws.g_sequence(structure.QR_Model(q, r, 0, 0, 0), m, 1)
    with pytest.raises(IndexError):
        gs[0]


def test_series_residual(mkdv):
    gs = claws.g_sequence(mkdv.qr, mkdv.model, 5)
    assert all(symcore.is_zero(value) for value in claws.series_residual(gs))


def test_mkdv_first_flux(mkdv):
    _, laws, verified = claws.hierarchy(mkdv.qr, mkdv.model, 1)
    assert [law.n for law in laws] == [1]
    assert verified == [True]
    assert symcore.is_zero(laws[0].flux - (3 * q ** 4 + 2 * q * q_xx - q_x ** 2))


@pytest.mark.parametrize('n_max', [8])
def test_mkdv_laws_verified(mkdv, n_max):
    _, laws, verified = claws.hierarchy(mkdv.qr, mkdv.model, n_max)
    assert [law.n for law in laws] == list(range(1, n_max + 1))
    assert all(verified)
    assert [law.trivial for law in laws] == [n % 2 == 0 for n in range(1, n_max + 1)]


def test_sine_gordon_laws(sine_gordon):
    _, laws, verified = claws.hierarchy(sine_gordon.qr, sine_gordon.model, 6)
    assert [law.n for law in laws] == [2, 3, 4, 5, 6]
    assert all(verified)

    by_order = {law.n: law for law in laws}
    assert symcore.is_zero(by_order[2].density - q * q_x)
    assert symcore.is_zero(by_order[2].flux - q * sympy.sin(u) / 2)
    assert symcore.is_zero(by_order[3].density + q ** 4 + q * q_xx)
    assert symcore.is_zero(by_order[3].flux + q_x * sympy.sin(u) / 2)
    assert symcore.is_zero(by_order[4].flux - (q ** 3 + q_xx) * sympy.sin(u) / 2)


def test_sine_gordon_second_law_reproduces_equation(sine_gordon):
    _, laws, _ = claws.hierarchy(sine_gordon.qr, sine_gordon.model, 2)
    residual = claws.defect_residual(laws[0], sine_gordon.model)

    assert not symcore.is_zero(residual)
    assert symcore.is_zero(residual - symcore.total_dx(q * w))


def test_wrong_flux_fails(mkdv):
    law = claws.Conservation_Law(1, -q ** 2, 3 * q ** 4 + 2 * q * q_xx - q_x ** 2 + q)
    assert not claws.verify(law, mkdv.model)


def test_euler_operator(mkdv):
    assert claws.euler_operator(q * q_x, mkdv.model) == 0
    assert symcore.is_zero(claws.euler_operator(-q ** 2, mkdv.model) + 2 * q)


def test_euler_trivial_by_antiderivative(mkdv):
    gs = claws.g_sequence(mkdv.qr, mkdv.model, 4)
    assert symcore.is_zero(gs[2] - symcore.total_dx(q ** 2 / 2))
    assert symcore.is_zero(gs[4] - symcore.total_dx(sympy.Rational(5, 4) * q ** 4 + q * q_xx - q_x ** 2 / 2))
    assert [claws.euler_trivial(gs[n], mkdv.model) for n in range(1, 5)] == [False, True, False, True]


def test_euler_rejects_foreign_generators(mkdv):
    with pytest.raises(common.Algebra_Error):
        claws.euler_operator(q * r, mkdv.model)


def test_mirror_hierarchy(mkdv):
    _, laws, verified = claws.hierarchy(mkdv.qr, mkdv.model, 4, mirror = True)
    assert all(law.mirror for law in laws)
    assert all(verified)
    assert symcore.is_zero(laws[0].density - q ** 2)


def test_empty_hierarchy(mkdv):
    gs, laws, verified = claws.hierarchy(mkdv.qr, mkdv.model, 0)
    assert len(gs) == 0
    assert laws == []
    assert verified == []


def test_flux_sequence_needs_enough_g(mkdv):
    gs = claws.g_sequence(mkdv.qr, mkdv.model, 3)
    with pytest.raises(common.Hierarchy_Error):
        claws.flux_sequence(mkdv.qr, gs, mkdv.model, n_max = 3)


def test_law_as_dict(mkdv):
    _, laws, _ = claws.hierarchy(mkdv.qr, mkdv.model, 2)
    data = laws[1].as_dict()
    assert data['n'] == 2
    assert data['trivial'] is True
    assert symcore.is_zero(symcore.parse(data['density']) - q * q_x)


def test_settings_laws_validation():
    with pytest.raises(common.Config_Error):
        claws.Settings_Laws(count = -1)


def test_mkdv_fluxes_match_transcribed_family(mkdv):
    gs, laws, _ = claws.hierarchy(mkdv.qr, mkdv.model, 6)
    for law in laws:
        n = law.n
        expected = -((q_xx / q + 2 * q ** 2) * gs[n] + q_x / q * gs[n + 1] + gs[n + 2])
        assert symcore.is_zero(law.flux - expected), n


def test_sine_gordon_fluxes_match_transcribed_family(sine_gordon):
    gs, laws, _ = claws.hierarchy(sine_gordon.qr, sine_gordon.model, 6)
    for law in laws:
        expected = -sympy.sin(u) / jet('u', 1) * gs[law.n - 1]
        assert symcore.is_zero_onshell(law.flux - expected, sine_gordon.model), law.n


def test_density_without_flux_fails(mkdv):
    assert not claws.verify(claws.Conservation_Law(1, q, sympy.Integer(0)), mkdv.model)


def test_parallel_verification(mkdv):
    _, laws, verified = claws.hierarchy(mkdv.qr, mkdv.model, 4, workers = 2)
    assert [law.n for law in laws] == [1, 2, 3, 4]
    assert verified == [True] * 4


def test_parallel_verification_keeps_order(mkdv):
    laws = [
        claws.Conservation_Law(1, -q ** 2, 3 * q ** 4 + 2 * q * q_xx - q_x ** 2),
        claws.Conservation_Law(1, q, sympy.Integer(0)),
        claws.Conservation_Law(2, q * q_x, sympy.Integer(0)),
    ]
    verified = utils.parallel_map(functools.partial(claws.verify, m = mkdv.model), laws, workers = 2)
    assert verified == [True, False, False]
