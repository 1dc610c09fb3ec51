import json

import numpy as np
import pytest

from src.about import about
from src.commands import run_command
from src.controllers import DESK_CONFIG
from src.utils import ImageFile, error_line
from tests.conftest import tone, write_headered


@pytest.fixture
def tone_file(tmp_path):
    return write_headered(tmp_path / 'tone.txt', tone(4.0, 128.0, 5.0), 128.0)


def snapshot(directory):
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob('*')) if p.is_file()}


def test_version(capsys):
    assert run_command(['--version']) == 0
    assert about['version'] in capsys.readouterr().out


def test_unknown_command(capsys):
    assert run_command(['fly']) == 2
    assert 'fly' in capsys.readouterr().err


def test_transform_writes_native_map(tmp_path, tone_file, capsys):
    out = tmp_path / 'map.pgm'
    assert run_command(['transform', '--method', 'scalogram', '--in', str(tone_file), '--out', str(out)]) == 0
    values = ImageFile.read(out)
    assert values.shape == (74, 640)
    assert values.min() == 0.0 and values.max() == 1.0
    assert 'Scalogram' in capsys.readouterr().out


def test_transform_toeplitz_from_csv(tmp_path, capsys):
    source = tmp_path / 'trace.csv'
    source.write_text('\n'.join(f'{i / 64!r},{float(i % 5)!r}' for i in range(16)) + '\n', encoding='utf-8')
    out = tmp_path / 'map.pgm'
    assert run_command(['transform', '--method', 'toeplitz', '--in', str(source), '--out', str(out)]) == 0
    assert ImageFile.read(out).shape == (8, 8)


def test_transform_short_signal_is_a_data_error(tmp_path, capsys):
    source = write_headered(tmp_path / 'short.txt', np.arange(10.0), 256.0)
    code = run_command(['transform', '--method', 'spwvd', '--in', str(source), '--out', str(tmp_path / 'm.pgm')])
    assert code == 1
    assert 'DataError: ' in capsys.readouterr().err
    assert not (tmp_path / 'm.pgm').exists()


def test_error_line_colors_only_on_a_terminal():
    assert error_line('DataError', 'bad input', enabled=False) == 'DataError: bad input'
    colored = error_line('DataError', 'bad input', enabled=True)
    assert colored == '\033[31m\033[1mDataError\033[0m: bad input'


def test_transform_rejects_other_image_types(tmp_path, tone_file, capsys):
    code = run_command(['transform', '--method', 'toeplitz', '--in', str(tone_file), '--out', str(tmp_path / 'm.png')])
    assert code == 1
    assert 'ConfigError' in capsys.readouterr().err


def test_missing_required_flag(tmp_path, tone_file, capsys):
    assert run_command(['transform', '--in', str(tone_file), '--out', str(tmp_path / 'm.pgm')]) == 2


def test_render_gray_and_color(tmp_path, tone_file, capsys):
    gray = tmp_path / 'img.pgm'
    assert run_command(['render', '--method', 'spwvd', '--in', str(tone_file), '--out', str(gray),
                        '--size', '16']) == 0
    assert ImageFile.read(gray).shape == (16, 16)

    color = tmp_path / 'img.ppm'
    assert run_command(['render', '--method', 'scalogram', '--in', str(tone_file), '--out', str(color),
                        '--size', '16', '--pseudocolor']) == 0
    values = ImageFile.read(color)
    assert values.shape == (16, 16, 3)
    assert not np.array_equal(values[:, :, 0], values[:, :, 2])


def test_render_pseudocolor_needs_ppm(tmp_path, tone_file, capsys):
    code = run_command(['render', '--method', 'toeplitz', '--in', str(tone_file), '--out',
                        str(tmp_path / 'img.pgm'), '--pseudocolor'])
    assert code == 1
    assert 'ConfigError' in capsys.readouterr().err


def test_unknown_config_key(tmp_path, tone_file, capsys):
    config = tmp_path / 'bad.json'
    config.write_text('{"mask_rate": 0.5}', encoding='utf-8')
    code = run_command(['transform', '--method', 'toeplitz', '--in', str(tone_file),
                        '--out', str(tmp_path / 'm.pgm'), '--config', str(config)])
    assert code == 1
    assert "unknown configuration key 'mask_rate'" in capsys.readouterr().err


def test_synth_is_reproducible(tmp_path, capsys):
    args = ['synth', '--subjects', '2', '--per-subject', '3', '--seed', '7']
    assert run_command(args + ['--out', str(tmp_path / 'a')]) == 0
    assert run_command(args + ['--out', str(tmp_path / 'b')]) == 0
    first, second = snapshot(tmp_path / 'a'), snapshot(tmp_path / 'b')
    assert len(first) == 2 * (2 * 3 + 1)
    assert first == second


def test_pretrain_needs_checkpoint_dir(tmp_path, capsys):
    assert run_command(['synth', '--subjects', '2', '--per-subject', '2', '--out', str(tmp_path / 'data')]) == 0
    code = run_command(['pretrain', '--config', str(DESK_CONFIG), '--data', str(tmp_path / 'data')])
    assert code == 1
    assert 'ConfigError' in capsys.readouterr().err


def pipeline(root):
    data, checkpoint, run = root / 'data', root / 'ckpt', root / 'run'
    assert run_command(['synth', '--subjects', '2', '--per-subject', '4', '--seed', '1', '--out', str(data)]) == 0
    assert run_command(['pretrain', '--config', str(DESK_CONFIG), '--data', str(data),
                        '--checkpoint', str(checkpoint), '--steps', '3']) == 0
    assert run_command(['finetune', '--config', str(DESK_CONFIG), '--data', str(data), '--checkpoint',
                        str(checkpoint), '--out', str(run), '--epochs', '1', '--axis', 'valence']) == 0
    return (checkpoint / 'loss_trace.csv').read_bytes(), (run / 'metrics.json').read_bytes()


def test_full_runs_are_identical(tmp_path, capsys):
    first = pipeline(tmp_path / 'first')
    second = pipeline(tmp_path / 'second')
    assert first == second

    trace = first[0].decode('utf-8').splitlines()
    assert trace[0] == 'step,l_m,l_c,total,lr'
    assert len(trace) == 4
    metrics = json.loads(first[1])
    assert metrics['axis'] == 'valence' and len(metrics['per_fold']) == 2
    assert all(isinstance(v, int) for row in metrics['per_fold'][0]['confusion'] for v in row)

    capsys.readouterr()
    data, model = tmp_path / 'first' / 'data', tmp_path / 'first' / 'run' / 'model'
    report = tmp_path / 'eval.json'
    assert run_command(['eval', '--data', str(data), '--checkpoint', str(model), '--axis', 'valence',
                        '--out', str(report), '--config', str(DESK_CONFIG)]) == 0
    evaluated = json.loads(report.read_text(encoding='utf-8'))
    assert sum(sum(row) for row in evaluated['confusion']) == 8
    assert 0.0 <= evaluated['accuracy'] <= 1.0


def test_eval_needs_classifier(tmp_path, capsys):
    data, checkpoint = tmp_path / 'data', tmp_path / 'ckpt'
    assert run_command(['synth', '--subjects', '2', '--per-subject', '2', '--out', str(data)]) == 0
    assert run_command(['pretrain', '--config', str(DESK_CONFIG), '--data', str(data),
                        '--checkpoint', str(checkpoint), '--steps', '1']) == 0
    capsys.readouterr()
    assert run_command(['eval', '--data', str(data), '--checkpoint', str(checkpoint)]) == 1
    assert 'ConfigError' in capsys.readouterr().err


def test_compare_outputs_every_method(tmp_path, capsys):
    data = tmp_path / 'data'
    assert run_command(['synth', '--subjects', '2', '--per-subject', '4', '--out', str(data)]) == 0
    out = tmp_path / 'compare.json'
    assert run_command(['compare', '--config', str(DESK_CONFIG), '--data', str(data), '--epochs', '1',
                        '--methods', 'toeplitz', '--methods', 'scalogram', '--out', str(out)]) == 0
    results = json.loads(out.read_text(encoding='utf-8'))
    assert sorted(results) == ['scalogram', 'toeplitz']
    assert set(results['toeplitz']) == {'accuracy', 'f1'}
