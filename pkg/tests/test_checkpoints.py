import json

import numpy as np
import pytest
import torch

from src.controllers import UBVMT, LossKind, compute_gradients, load_checkpoint, make_pretrain_batch, save_checkpoint
from src.controllers.checkpoints import MANIFEST, WEIGHTS, restore_optimizer
from src.controllers.train_harness import adam_update, build_optimizer
from src.controllers.ubvmt_model import param_manifest
from src.errors import ConfigError
from src.models import TrainConfig


def test_saved_weights_reload_exactly(tmp_path, tiny_config):
    model = UBVMT(tiny_config, n_classes=3)
    save_checkpoint(tmp_path / 'ckpt', model, step=12)

    loaded = load_checkpoint(tmp_path / 'ckpt')
    assert loaded.step == 12
    assert loaded.model.n_classes == 3
    assert loaded.model.config == tiny_config
    assert loaded.optimizer_state is None
    for (name, a), (_, b) in zip(model.named_parameters(), loaded.model.named_parameters()):
        assert torch.equal(a, b), name


def test_manifest_lists_every_tensor_in_order(tmp_path, tiny_config):
    model = UBVMT(tiny_config)
    directory = save_checkpoint(tmp_path / 'ckpt', model)
    manifest = json.loads((directory / MANIFEST).read_text(encoding='utf-8'))
    assert [(e['name'], tuple(e['shape'])) for e in manifest] == param_manifest(model)
    assert all(e['dtype'] == 'f32' for e in manifest)

    offsets = [e['byte_offset'] for e in manifest]
    sizes = [4 * int(np.prod(e['shape'])) for e in manifest]
    assert offsets == list(np.cumsum([0] + sizes[:-1]))
    assert (directory / WEIGHTS).stat().st_size == sum(sizes)


def test_overwrite_replaces_previous_checkpoint(tmp_path, tiny_config):
    save_checkpoint(tmp_path / 'ckpt', UBVMT(tiny_config), step=1)
    save_checkpoint(tmp_path / 'ckpt', UBVMT(tiny_config), step=2)
    assert load_checkpoint(tmp_path / 'ckpt').step == 2
    assert not (tmp_path / 'ckpt.tmp').exists()


def test_shape_mismatch(tmp_path, tiny_config):
    save_checkpoint(tmp_path / 'ckpt', UBVMT(tiny_config))
    wider = tiny_config.model_copy(update={'d_model': 16})
    with pytest.raises(ConfigError) as info:
        load_checkpoint(tmp_path / 'ckpt', wider)
    assert 'shape' in info.value.message


def test_missing_tensor_is_named(tmp_path, tiny_config):
    save_checkpoint(tmp_path / 'ckpt', UBVMT(tiny_config))
    deeper = tiny_config.model_copy(update={'enc_layers': 2})
    with pytest.raises(ConfigError) as info:
        load_checkpoint(tmp_path / 'ckpt', deeper)
    assert 'blocks.1' in info.value.message


def test_missing_weights_file(tmp_path, tiny_config):
    directory = save_checkpoint(tmp_path / 'ckpt', UBVMT(tiny_config))
    (directory / WEIGHTS).unlink()
    with pytest.raises(ConfigError):
        load_checkpoint(directory)


def test_missing_directory(tmp_path):
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / 'absent')


def test_optimizer_moments_survive(tmp_path, tiny_config, tiny_examples):
    model = UBVMT(tiny_config)
    optimizer = build_optimizer(model, TrainConfig(base_lr=1e-3))
    store = compute_gradients(LossKind.PRETRAIN, make_pretrain_batch(tiny_examples, 4, seed=0), model)
    adam_update(model, store.grads, optimizer, 1e-3)
    save_checkpoint(tmp_path / 'ckpt', model, step=1, optimizer=optimizer)

    loaded = load_checkpoint(tmp_path / 'ckpt')
    restored = build_optimizer(loaded.model, TrainConfig(base_lr=1e-3))
    restore_optimizer(restored, loaded.model, loaded.optimizer_state)
    for original, copy in zip(model.parameters(), loaded.model.parameters()):
        before, after = optimizer.state[original], restored.state[copy]
        assert float(after['step']) == float(before['step']) == 1.0
        assert torch.equal(after['exp_avg'], before['exp_avg'])
        assert torch.equal(after['exp_avg_sq'], before['exp_avg_sq'])
