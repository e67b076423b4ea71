import functools
import math

import numpy
import pytest

from pseudosphere import common
from pseudosphere import pdebench
from pseudosphere import riccati
from pseudosphere import symcore
from pseudosphere.symcore import jet


@pytest.fixture(scope = 'module')
def soliton():
    return pdebench.Exact_Solution('mkdv-soliton', 1.0)


@pytest.fixture(scope = 'module')
def kink():
    return pdebench.Exact_Solution('sg-kink', 1.0, 'q', 'u')


def small_settings(**changes):
    values = dict(fd_x_min = -5.0, fd_x_max = 5.0, fd_points_x = 128, fd_points_t = 16)
    values.update(changes)
    return riccati.Settings_Riccati(**values)


def test_constant_angle_flow():
    cf = riccati.Constant_Field(q = -0.5, r = 0.5)
    path = riccati.Path_Spec('x', 0.0, 2.0, 64)
    angle = riccati.flow_phi(cf, path, 0.3)
    assert numpy.allclose(angle.phi, 0.3 + path.nodes, atol = 1e-12)


def test_projective_rate_at_zero():
    values = {'q': 0.7, 'r': -0.2, 'A': 1.5, 'B': 0.4, 'C': 2.5}
    assert riccati.projective_rate(riccati.Projective_State(riccati.GAMMA_CHART, 0.0), values, 'x', 2.0) == pytest.approx(-0.2)
    assert riccati.projective_rate(riccati.Projective_State(riccati.GAMMA_HAT_CHART, 0.0), values, 'x', 2.0) == pytest.approx(0.7)
    assert riccati.projective_rate(riccati.Projective_State(riccati.GAMMA_CHART, 0.0), values, 't', 2.0) == pytest.approx(2.5)
    assert riccati.projective_rate(riccati.Projective_State(riccati.GAMMA_HAT_CHART, 0.0), values, 't', 2.0) == pytest.approx(0.4)


def test_projective_state():
    state = riccati.Projective_State.from_angle(0.3)
    assert state.chart == riccati.GAMMA_CHART
    assert state.value == pytest.approx(math.tan(0.15))

    far = riccati.Projective_State.from_angle(3.0)
    assert far.chart == riccati.GAMMA_HAT_CHART
    assert far.gamma == pytest.approx(math.tan(1.5))

    switched = state.switched()
    assert switched.chart == riccati.GAMMA_HAT_CHART
    assert switched.gamma == pytest.approx(state.gamma)


def test_linear_state_must_not_vanish():
    with pytest.raises(common.Numeric_Error):
        riccati.Linear_State(0.0, 0.0)


def test_path_validation():
    with pytest.raises(common.Config_Error):
        riccati.Path_Spec('y', 0.0, 1.0, 8)
    with pytest.raises(common.Config_Error):
        riccati.Path_Spec('x', 0.0, math.inf, 8)


def test_chart_switches_through_poles():
    # Gamma = tan(x + 0.15) has two poles on [0, 5]
    cf = riccati.Constant_Field(q = -1.0, r = 1.0)
    path = riccati.Path_Spec('x', 0.0, 5.0, 4096)

    state0 = riccati.Projective_State.from_angle(0.3)
    gamma = riccati.flow_gamma(cf, path, state0)
    angle = riccati.flow_phi(cf, path, 0.3)
    linear = riccati.flow_linear(cf, path, riccati.Linear_State(1.0, math.tan(0.15)))

    assert len(gamma.switches) >= 2
    assert gamma.coherence < 1e-10
    assert numpy.all(numpy.abs(gamma.values) <= 1.5)
    assert riccati.angle_mismatch(gamma, angle) < 1e-7
    assert riccati.projective_mismatch(gamma, linear) < 1e-7


def test_zero_field_linear_flow_is_constant():
    cf = riccati.Constant_Field()
    path = riccati.Path_Spec('x', 0.0, 1.0, 16)
    linear = riccati.flow_linear(cf, path, riccati.Linear_State(3.0, 4.0))

    assert numpy.allclose(linear.psi, [0.6, 0.8])
    assert numpy.allclose(linear.log_scale, math.log(5.0))


def test_solution_field_matches_symbolic(mkdv, soliton):
    cf = riccati.Solution_Field(soliton, mkdv.qr, mkdv.model, 3.0)
    c = cf.values(0.7, 0.2)

    q, q_x, q_xx = jet('q'), jet('q', 1), jet('q', 2)
    jets = soliton.evaluate([q, q_x, q_xx], 0.7, 0.2)
    point = {symbol: float(value) for symbol, value in jets.items()}
    point['eta'] = 3.0

    for key in riccati.COEFFICIENTS:
        expected = symcore.evaluate(symcore.reduce(mkdv.qr.entries[key], mkdv.model), point)
        assert float(c[key]) == pytest.approx(expected, abs = 1e-10)


def test_wronskian_on_soliton(mkdv, soliton):
    cf = riccati.Solution_Field(soliton, mkdv.qr, mkdv.model, 3.0)
    path = riccati.Path_Spec('x', -10.0, 20.0, 8192)
    assert riccati.wronskian_deviation(cf, path) < 1e-8


@pytest.mark.parametrize('source_name, family, eta', [
    ('mkdv', 'mkdv-soliton', 3.0),
    ('sine_gordon', 'sg-kink', 1.0),
])
def test_path_equivalence(request, source_name, family, eta):
    source = request.getfixturevalue(source_name)
    solution = pdebench.Exact_Solution(family, 1.0, 'q', 'u')
    cf = riccati.Solution_Field(solution, source.qr, source.model, eta)
    path = riccati.Path_Spec('x', -10.0, 20.0, 8192)

    gamma = riccati.flow_gamma(cf, path, riccati.Projective_State.from_angle(0.3))
    angle = riccati.flow_phi(cf, path, 0.3)
    linear = riccati.flow_linear(cf, path, riccati.Linear_State(1.0, math.tan(0.15)))

    assert riccati.angle_mismatch(gamma, angle) < 1e-7
    assert riccati.projective_mismatch(gamma, linear) < 1e-7


def test_zero_field_is_closed_exactly():
    grid = riccati.Grid_Spec(-1.0, 1.0, 0.0, 1.0, 8, 8)
    report = riccati.check_theta_closed(riccati.Constant_Field(), grid, riccati.Settings_Riccati(fd_levels = 2))

    assert report.mismatches == (0.0, 0.0)
    assert report.order == math.inf
    assert report.passed(1.9)


def test_convergence_order():
    assert riccati.convergence_order([4e-4, 1e-4, 2.5e-5]) == pytest.approx(2.0)
    assert riccati.convergence_order([1e-3, 1e-12]) == math.inf
    assert riccati.convergence_order([1e-3, 1e-3]) == pytest.approx(0.0)


def test_make_grid_scales_with_eta(mkdv, soliton):
    settings = small_settings()
    grid = riccati.make_grid(riccati.Solution_Field(soliton, mkdv.qr, mkdv.model, 10.0), settings)
    assert grid.nx == 400
    assert grid.t_max == pytest.approx(1 / (500 + 10 * 1.0), rel = 1e-6)


def test_finite_difference_orders_on_soliton(mkdv, soliton):
    settings = small_settings()
    cf = riccati.Solution_Field(soliton, mkdv.qr, mkdv.model, 3.0)
    grid = riccati.make_grid(cf, settings)

    reports = [
        *riccati.check_conservation_form(cf, grid, settings),
        riccati.check_theta_closed(cf, grid, settings),
        riccati.check_phi_path_independence(cf, grid, settings),
    ]

    for report in reports:
        assert report.points > 0, report.check
        assert report.order >= settings.min_order, (report.check, report.mismatches)


def test_perturbed_field_is_not_closed(mkdv, soliton):
    settings = small_settings()
    cf = riccati.Perturbed_Field(riccati.Solution_Field(soliton, mkdv.qr, mkdv.model, 3.0))
    report = riccati.check_theta_closed(cf, riccati.make_grid(cf, settings), settings)
    assert report.order < settings.min_order


def test_settings_validation():
    with pytest.raises(common.Config_Error):
        riccati.Settings_Riccati(chart_threshold = 1.0)
    with pytest.raises(common.Config_Error):
        riccati.Settings_Riccati(chart_threshold = 1.04)
    with pytest.raises(common.Config_Error):
        riccati.Settings_Riccati(fd_levels = 1)


def test_suite_rows(mkdv, soliton):
    settings = small_settings(path_length = 10.0, path_steps = 2048)
    results = riccati.equivalence_suite(riccati.Solution_Field(soliton, mkdv.qr, mkdv.model, 1.0), settings)

    checks = {result.check for result in results}
    assert {'angle_equivalence', 'projective_equivalence', 'chart_coherence', 'wronskian', 'theta_closed'} <= checks
    assert set(results[0].row()) == {'check', 'eta', 'h', 'mismatch', 'order', 'passed'}


@pytest.mark.parametrize('eta', [1.0, 3.0, 10.0])
@pytest.mark.parametrize('source_name, family', [('mkdv', 'mkdv-soliton'), ('sine_gordon', 'sg-kink')])
def test_equivalence_suite_passes(request, source_name, family, eta):
    source = request.getfixturevalue(source_name)
    solution = pdebench.Exact_Solution(family, 1.0, 'q', 'u')
    results = riccati.equivalence_suite(riccati.Solution_Field(solution, source.qr, source.model, eta))

    failed = [(result.check, result.mismatch, result.order) for result in results if not result.passed]
    assert failed == []

    checks = {result.check for result in results}
    assert {'wronskian', 'conservation_form_gamma', 'conservation_form_gamma_hat', 'theta_closed', 'phi_path_independence'} <= checks


@pytest.mark.parametrize('eta', [1.0, 10.0])
def test_wronskian_on_kink(sine_gordon, kink, eta):
    cf = riccati.Solution_Field(kink, sine_gordon.qr, sine_gordon.model, eta)
    assert riccati.wronskian_deviation(cf, riccati.Path_Spec('x', -10.0, 20.0, 8192)) < 1e-8


def test_parallel_suites_match_sequential(mkdv, soliton):
    factory = functools.partial(riccati.Solution_Field, soliton, mkdv.qr, mkdv.model)
    sequential = small_settings(path_length = 10.0, path_steps = 2048, etas = [1.0, 3.0])
    parallel = small_settings(path_length = 10.0, path_steps = 2048, etas = [1.0, 3.0], workers = 2)

    rows = [result.row() for result in riccati.run_suites(factory, sequential)]
    assert [result.row() for result in riccati.run_suites(factory, parallel)] == rows
    assert rows[0]['eta'] == 1.0
