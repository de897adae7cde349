"""
Tests for the batch report command line
"""
import sys
import os
import csv
import json
import tempfile
from unittest import mock

import numpy as np
import pytest

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from superopt.core.errors import SymbolFormatError
from superopt.api.cli_report import (RunConfig, SCHEMA, main, run, parse_checks, canonical_report, validate)

SAMPLES = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'samples')


def sample(name):
    return os.path.join(SAMPLES, name)


def write_json(directory, name, document):
    path = os.path.join(directory, name)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(document, handle)
    return path


def load_json(path):
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def test_config_validation():
    config = RunConfig()
    assert config.checks == {'constancy', 'index_sums', 'inequalities'}
    assert config.to_dict()['transpose'] == 'auto'
    assert parse_checks('none') == frozenset()
    assert parse_checks('constancy, index_sums') == {'constancy', 'index_sums'}

    with pytest.raises(SymbolFormatError):
        RunConfig(checks={'bogus'})
    with pytest.raises(SymbolFormatError):
        RunConfig(tol_gap=-1.0)
    with pytest.raises(SymbolFormatError):
        RunConfig(transpose='maybe')


def test_diagonal_report_and_profile():
    with tempfile.TemporaryDirectory() as tmp:
        report_path = os.path.join(tmp, 'report.json')
        csv_path = os.path.join(tmp, 'profile.csv')
        code = main(['--input', sample('diag_nehari.json'), '--out-report', report_path, '--out-csv', csv_path])
        assert code == 0

        report = load_json(report_path)
        assert report['schema'] == SCHEMA
        assert report['status'] == 'ok'
        assert report['t_seq'] == pytest.approx([1.0, 0.5], abs=1e-8)
        assert report['k'] == [1, 1]
        assert report['norms']['gamma'] == pytest.approx(1.0, abs=1e-8)
        assert report['norms']['error_sup'] == pytest.approx(1.0, abs=1e-8)
        assert report['diagnostics']['constancy']['passed']
        assert report['diagnostics']['index_sums']['passed']
        assert report['diagnostics']['inequalities']['passed']
        assert report['error'] is None

        with open(csv_path, 'r', encoding='utf-8') as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ['theta', 's_0', 's_1']
        assert len(rows) - 1 == 512
        assert all(len(row) == 3 for row in rows)
        assert float(rows[1][0]) == 0.0
        assert float(rows[1][1]) == pytest.approx(1.0, abs=1e-8)
        assert float(rows[1][2]) == pytest.approx(0.5, abs=1e-8)


def test_explicit_grid_size_sets_profile_rows():
    with tempfile.TemporaryDirectory() as tmp:
        report_path = os.path.join(tmp, 'report.json')
        csv_path = os.path.join(tmp, 'profile.csv')
        code = main(['--input', sample('four_block.json'), '--out-report', report_path,
                     '--out-csv', csv_path, '--grid-size', '64', '--checks', 'constancy'])
        assert code == 0
        with open(csv_path, 'r', encoding='utf-8') as handle:
            rows = list(csv.reader(handle))
        assert len(rows) == 65
        report = load_json(report_path)
        assert report['diagnostics']['index_sums'] is None
        assert report['norms']['essential_lower'] == pytest.approx(0.3)


def test_report_is_deterministic():
    with tempfile.TemporaryDirectory() as tmp:
        first = os.path.join(tmp, 'first.json')
        second = os.path.join(tmp, 'second.json')
        assert run(RunConfig(out_report=first, seed=3), sample('four_block.json')) == 0
        assert run(RunConfig(out_report=second, seed=3), sample('four_block.json')) == 0
        assert canonical_report(load_json(first)) == canonical_report(load_json(second))


def test_empty_corrected_block_is_parse_error():
    document = {'partition': {'m1': 0, 'm2': 2, 'n1': 1, 'n2': 1},
                'coeffs': [{'k': -1, 're': [[1.0, 0.0], [0.0, 1.0]]}]}
    with tempfile.TemporaryDirectory() as tmp:
        input_path = write_json(tmp, 'empty.json', document)
        report_path = os.path.join(tmp, 'report.json')
        assert main(['--input', input_path, '--out-report', report_path]) == 1
        report = load_json(report_path)
        assert report['status'] == 'error'
        assert report['exit_code'] == 1
        assert report['error']['code'] == 'parse_error'
        assert 'empty corrected block' in report['error']['message']


def test_hypothesis_failure_exit_code():
    document = {'partition': {'m1': 1, 'm2': 1, 'n1': 1, 'n2': 1},
                'coeffs': [{'k': -1, 're': [[0.2, 0.0], [0.0, 0.0]]},
                           {'k': 0, 're': [[0.0, 0.0], [0.0, 1.0]]}]}
    with tempfile.TemporaryDirectory() as tmp:
        input_path = write_json(tmp, 'weak.json', document)
        report_path = os.path.join(tmp, 'report.json')
        assert main(['--input', input_path, '--out-report', report_path]) == 2
        assert load_json(report_path)['error']['code'] == 'essential_norm_hypothesis'


def test_grid_below_aliasing_limit():
    with tempfile.TemporaryDirectory() as tmp:
        report_path = os.path.join(tmp, 'report.json')
        code = main(['--input', sample('coupled_nehari.json'), '--out-report', report_path, '--grid-size', '4'])
        assert code == 3
        assert load_json(report_path)['error']['code'] == 'aliasing'


def test_linear_algebra_failure_exit_code():
    with tempfile.TemporaryDirectory() as tmp:
        report_path = os.path.join(tmp, 'report.json')
        with mock.patch('superopt.api.cli_report.recurse_superoptimal',
                        side_effect=np.linalg.LinAlgError("SVD did not converge")):
            code = run(RunConfig(out_report=report_path), sample('diag_nehari.json'))
        assert code == 3
        report = load_json(report_path)
        assert report['status'] == 'error'
        assert report['exit_code'] == 3
        assert report['error']['code'] == 'numerical_error'
        assert 'SVD did not converge' in report['error']['message']


def test_argument_errors():
    assert main(['--input', sample('diag_nehari.json'), '--checks', 'bogus']) == 1
    assert main(['--grid-size', '64']) == 1
    assert main(['--input', sample('diag_nehari.json'), '--transpose', 'sideways']) == 1


def test_validate_mode():
    assert validate(sample('four_block.json')) == []
    assert main(['--input', sample('diag_nehari.json'), '--validate']) == 0

    document = {'partition': {'m1': 1, 'm2': 0, 'n1': 1, 'n2': 0},
                'coeffs': [{'k': 1, 're': [[1.0]]}, {'k': 1, 're': [[2.0]]}]}
    with tempfile.TemporaryDirectory() as tmp:
        input_path = write_json(tmp, 'duplicate.json', document)
        violations = validate(input_path)
        assert any('duplicate' in v for v in violations)
        assert main(['--input', input_path, '--validate']) == 1
        assert validate(os.path.join(tmp, 'missing.json'))[0].startswith('cannot read')


if __name__ == '__main__':
    tests = [value for name, value in sorted(globals().items()) if name.startswith('test_') and callable(value)]
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__}: {e}")
            import traceback
            traceback.print_exc()
    if failed:
        sys.exit(1)
    print("All report tests passed!")
