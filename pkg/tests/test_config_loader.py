import json

import pytest

from src.controllers import DESK_CONFIG, load_config
from src.errors import ConfigError
from src.models import RunConfig, TransformMethod


def write_config(tmp_path, payload) -> str:
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(payload), encoding='utf-8')
    return str(path)


def test_empty_object_gives_defaults(tmp_path):
    config = load_config(write_config(tmp_path, {}))
    assert (config.lambda_m, config.lambda_c, config.mask_ratio, config.base_lr, config.batch_size) == \
           (0.4, 1.0, 0.75, 1e-4, 4)
    assert config.method is TransformMethod.SCALOGRAM
    assert config == RunConfig() == load_config(None)


def test_desk_config_file():
    config = load_config(DESK_CONFIG)
    transformer = config.transformer_config()
    assert (transformer.image_size, transformer.patch_size, transformer.n_patches) == (32, 8, 16)
    assert config.train_config().folds == 2


@pytest.mark.parametrize('payload', [{'mask_ratio': 1.5}, {'mask_ratio': 0.0}, {'lambda_m': -1}])
def test_out_of_range_values(tmp_path, payload):
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path, payload))
    assert next(iter(payload)) in info.value.message


def test_zero_loss_weight_is_allowed(tmp_path):
    assert load_config(write_config(tmp_path, {'lambda_m': 0})).lambda_m == 0.0


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path, {'lamda_m': 0.4}))
    assert info.value.message == "unknown configuration key 'lamda_m'"


def test_inconsistent_dimensions(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {'d_model': 10, 'n_heads_enc': 4}))


@pytest.mark.parametrize('content', ['[1, 2]', '"text"', '{"d_model": '])
def test_not_an_object(tmp_path, content):
    path = tmp_path / 'config.json'
    path.write_text(content, encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'absent.json')


def test_flags_override_file(tmp_path):
    config = load_config(write_config(tmp_path, {'seed': 3, 'base_lr': 0.01}))
    updated = config.with_overrides(seed=9, base_lr=None, method='toeplitz')
    assert (updated.seed, updated.base_lr, updated.method) == (9, 0.01, TransformMethod.TOEPLITZ)
    assert updated.transformer_config().init_seed == 9
