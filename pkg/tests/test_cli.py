import json
import logging
import os

import pytest

from pseudosphere import cli
from pseudosphere import common
from pseudosphere import models
from pseudosphere import reports


def read_report(out, stem, command):
    with open(os.path.join(out, f'{stem}.{command}.json'), encoding = 'utf-8') as file:
        return json.load(file)


@pytest.fixture
def flipped_model(tmp_path):
    with open(models.MKDV_MODEL, encoding = 'utf-8') as file:
        text = file.read()
    text = text.replace('B = -q_xx - eta*q_x - eta^2*q - 2*q^3', 'B = q_xx + eta*q_x + eta^2*q + 2*q^3')
    path = tmp_path / 'flipped.model'
    path.write_text(text, encoding = 'utf-8')
    return str(path)


@pytest.mark.parametrize('name, stem', [('mkdv', 'mkdv'), ('sine-gordon', 'sine-gordon')])
def test_check_passes(tmp_path, name, stem):
    out = str(tmp_path / 'reports')
    assert cli.main(['check', '--model', name, '--out', out, '--seed', '7']) == 0

    report = read_report(out, stem, 'check')
    assert report['passed'] is True
    assert report['failures'] == []
    assert report['seed'] == 7
    assert report['version'] == common.VERSION
    assert len(report['model_hash']) == 64


def test_check_flipped_B_fails(tmp_path, flipped_model):
    out = str(tmp_path / 'reports')
    assert cli.main(['check', '--model', flipped_model, '--out', out]) == 1
    assert 'qr_2' in read_report(out, 'flipped', 'check')['failures']


def test_laws_mkdv(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['laws', '--model', 'mkdv', '--n', '6', '--out', out]) == 0

    laws = read_report(out, 'mkdv', 'laws')['laws']
    assert [law['n'] for law in laws] == [1, 2, 3, 4, 5, 6]
    assert [law['trivial'] for law in laws] == [False, True, False, True, False, True]
    assert all(law['verified'] for law in laws)


def test_laws_sine_gordon_start_at_two(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['laws', '--model', 'sine-gordon', '--n', '4', '--out', out]) == 0
    assert [law['n'] for law in read_report(out, 'sine-gordon', 'laws')['laws']] == [2, 3, 4]


def test_laws_empty(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['laws', '--model', 'mkdv', '--n', '0', '--out', out]) == 0
    assert read_report(out, 'mkdv', 'laws')['laws'] == []


def test_laws_of_broken_data(tmp_path, flipped_model):
    assert cli.main(['laws', '--model', flipped_model, '--n', '2', '--out', str(tmp_path)]) == 1


def test_parse_error_is_input_error(tmp_path):
    path = tmp_path / 'broken.model'
    path.write_text('\n'.join([
        '[model]',
        'field = q',
        'evolution = sin(u)/(2*eta',
        '[qr]',
        'q = q',
        'r = -q',
        'A = 0',
        'B = 0',
        'C = 0',
    ]), encoding = 'utf-8')
    assert cli.main(['check', '--model', str(path), '--out', str(tmp_path)]) == 2


def test_missing_model(tmp_path):
    assert cli.main(['check', '--model', 'no-such-model', '--out', str(tmp_path)]) == 2


def test_bench_unstable_step(tmp_path):
    assert cli.main(['bench', '--model', 'mkdv', '--dt', '0.1', '--n', '1', '--out', str(tmp_path)]) == 3


def test_bench_exact_soliton(tmp_path):
    config = os.path.join(models.MODELS_DIR, 'mkdv-soliton.json')
    out = str(tmp_path / 'reports')
    assert cli.main(['bench', '--model', 'mkdv', '--config', config, '--n', '3', '--out', out]) == 0

    report = read_report(out, 'mkdv', 'bench')
    assert report['equation_residual'] < 1e-9
    assert [law['n'] for law in report['laws']] == [1, 2, 3]
    assert os.path.exists(os.path.join(out, 'mkdv.bench.csv'))


def test_parse_grid():
    assert cli.parse_grid('20x8192') == (20.0, 8192)
    with pytest.raises(common.Config_Error):
        cli.parse_grid('20by8192')


@pytest.fixture
def riccati_config(tmp_path):
    path = tmp_path / 'riccati.json'
    path.write_text(json.dumps({'fd_points_x': 128, 'fd_points_t': 16}), encoding = 'utf-8')
    return str(path)


def test_riccati_perturbed_fails(tmp_path, riccati_config):
    out = str(tmp_path / 'reports')
    argv = ['riccati', '--model', 'mkdv', '--eta', '3', '--grid', '10x2048', '--config', riccati_config, '--perturb', '--out', out]
    assert cli.main(argv) == 1

    report = read_report(out, 'mkdv', 'riccati')
    assert 'theta_closed' in report['failed_checks']
    assert report['worst'] is not None
    assert os.path.exists(os.path.join(out, 'mkdv.riccati.csv'))


def test_riccati_soliton_passes(tmp_path, riccati_config):
    out = str(tmp_path / 'reports')
    argv = ['riccati', '--model', 'mkdv', '--eta', '3', '--grid', '10x4096', '--config', riccati_config, '--out', out]
    assert cli.main(argv) == 0
    assert read_report(out, 'mkdv', 'riccati')['failed_checks'] == []


def test_second_run_is_up_to_date(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['check', '--model', 'mkdv', '--out', out]) == 0

    report = reports.Check_Report(models.resolve('mkdv'), out)
    assert not report.needs_update

    report.seed = 1
    assert report.needs_update


def test_bench_sine_gordon_kink(tmp_path):
    config = os.path.join(models.MODELS_DIR, 'sg-kink.json')
    out = str(tmp_path / 'reports')
    assert cli.main(['bench', '--model', 'sine-gordon', '--config', config, '--out', out]) == 0

    report = read_report(out, 'sine-gordon', 'bench')
    assert [law['n'] for law in report['laws']] == [2, 3, 4, 5]
    assert all(law['drift'] < 1e-6 for law in report['laws'] if not law['trivial'])


def test_riccati_kink_passes(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['riccati', '--model', 'sine-gordon', '--eta', '1', '--out', out]) == 0

    report = read_report(out, 'sine-gordon', 'riccati')
    assert report['solution'] == 'sg-kink'
    assert report['failed_checks'] == []


def test_riccati_with_workers(tmp_path, riccati_config):
    out = str(tmp_path / 'reports')
    argv = ['riccati', '--model', 'mkdv', '--eta', '3', '10', '--grid', '10x4096', '--config', riccati_config, '--workers', '2', '--out', out]
    cli.main(argv)

    rows = read_report(out, 'mkdv', 'riccati')['rows']
    assert {row['eta'] for row in rows} == {3.0, 10.0}
    assert rows[0]['eta'] == 3.0


def test_laws_with_workers(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['laws', '--model', 'mkdv', '--n', '4', '--workers', '2', '--out', out]) == 0
    assert all(law['verified'] for law in read_report(out, 'mkdv', 'laws')['laws'])


def test_check_report_records_sampled_magnitudes(tmp_path):
    out = str(tmp_path / 'reports')
    assert cli.main(['check', '--model', 'mkdv', '--out', out, '--seed', '3']) == 0

    residuals = read_report(out, 'mkdv', 'check')['residuals']
    assert residuals
    for entry in residuals.values():
        assert entry['zero'] is True
        assert entry['probe'] < 1e-9


def test_check_flipped_B_samples_nonzero(tmp_path, flipped_model):
    out = str(tmp_path / 'reports')
    cli.main(['check', '--model', flipped_model, '--out', out])
    entry = read_report(out, 'flipped', 'check')['residuals']['qr_2']
    assert entry['zero'] is False
    assert entry['probe'] > 1e-3


def test_fresh_run_is_computed_once(tmp_path, caplog):
    out = str(tmp_path / 'reports')
    caplog.set_level(logging.INFO)

    assert cli.main(['check', '--model', 'mkdv', '--out', out]) == 0
    assert caplog.text.count('Computing check report') == 1
    assert 'is up to date' not in caplog.text

    caplog.clear()
    assert cli.main(['check', '--model', 'mkdv', '--out', out]) == 0
    assert 'Computing check report' not in caplog.text
    assert 'is up to date' in caplog.text
