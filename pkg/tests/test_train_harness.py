import math

import numpy as np
import pytest
import torch

from src.controllers import (UBVMT, adam_update, evaluate, finetune_loop, kfold_split, load_checkpoint, lr_schedule,
                             make_pretrain_batch, prepare_examples, pretrain_loop, ratings_to_classes, read_loss_trace,
                             synth_generate)
from src.controllers.train_harness import (LOSS_TRACE, LOSS_TRACE_HEADER, build_optimizer, decays,
                                           metrics_from_predictions, step_seed)
from src.errors import ConfigError, DataError, NumericsError
from src.models import ClassScheme, EmotionAxis, SynthSpec, TrainConfig, TransformSettings


class TestSchedule:
    def test_endpoints(self):
        assert lr_schedule(0, 100, 1e-4) == pytest.approx(1e-4)
        assert lr_schedule(100, 100, 1e-4) == pytest.approx(0.0, abs=1e-20)
        assert lr_schedule(50, 100, 1e-4) == pytest.approx(5e-5)

    def test_floor(self):
        assert lr_schedule(100, 100, 1e-4, floor_ratio=0.1) == pytest.approx(1e-5)

    def test_monotone(self):
        values = [lr_schedule(s, 40, 1e-3) for s in range(41)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        with pytest.raises(DataError):
            lr_schedule(101, 100, 1e-4)


class TestOptimizer:
    def test_decay_groups(self, tiny_config):
        model = UBVMT(tiny_config)
        optimizer = build_optimizer(model, TrainConfig(weight_decay=0.001))
        decayed, plain = optimizer.param_groups
        assert decayed['weight_decay'] == 0.001 and plain['weight_decay'] == 0.0
        names = {id(p): n for n, p in model.named_parameters()}
        decayed_names = {names[id(p)] for p in decayed['params']}
        assert 'blocks.0.attn.qkv.weight' in decayed_names
        assert 'cls_token' not in decayed_names and 'mask_token' not in decayed_names
        assert not any(n.endswith('bias') or 'norm' in n for n in decayed_names)
        assert not decays('blocks.0.norm1.weight', torch.zeros(8))

    def test_first_step_moves_by_learning_rate(self, tiny_config):
        model = UBVMT(tiny_config)
        optimizer = build_optimizer(model, TrainConfig(weight_decay=0.0))
        before = {name: p.detach().clone() for name, p in model.named_parameters()}
        grads = {name: torch.zeros_like(p) for name, p in model.named_parameters()}
        grads['matching_head.bias'] = torch.ones(1)
        adam_update(model, grads, optimizer, lr=0.1)
        params = dict(model.named_parameters())
        assert params['matching_head.bias'].item() == pytest.approx(before['matching_head.bias'].item() - 0.1, rel=1e-6)
        for name, value in before.items():
            if name != 'matching_head.bias':
                assert torch.equal(params[name], value), name

    def test_non_finite_gradient_is_refused(self, tiny_config):
        model = UBVMT(tiny_config)
        grads = {name: torch.zeros_like(p) for name, p in model.named_parameters()}
        grads['cls_token'] = torch.full_like(grads['cls_token'], float('inf'))
        with pytest.raises(NumericsError):
            adam_update(model, grads, build_optimizer(model, TrainConfig()), lr=0.1)


class TestPretrainBatch:
    def test_half_positive(self, tiny_examples):
        batch = make_pretrain_batch(tiny_examples, 4, seed=5)
        assert batch.labels == [1, 1, 0, 0]
        for example in batch.examples:
            if example.y == 1:
                assert example.face_source == example.bio_source
            else:
                assert example.face_source != example.bio_source
        assert len(batch.face_plans) == len(batch.bio_plans) == 2
        assert all(p.n_masked == 3 for p in batch.face_plans + batch.bio_plans)

    def test_reproducible(self, tiny_examples):
        first, second = make_pretrain_batch(tiny_examples, 4, 9), make_pretrain_batch(tiny_examples, 4, 9)
        assert [(e.face_source, e.bio_source) for e in first.examples] == \
               [(e.face_source, e.bio_source) for e in second.examples]
        assert first.face_plans == second.face_plans and first.bio_plans == second.bio_plans

    def test_fixed_masks_repeat_per_example(self, tiny_examples):
        def plans_by_source(mask_seed):
            seen = {}
            for step in range(1, 40):
                batch = make_pretrain_batch(tiny_examples, 4, step_seed(0, step), mask_seed=mask_seed)
                for example, face, bio in zip(batch.examples, batch.face_plans, batch.bio_plans):
                    seen.setdefault(example.bio_source, set()).add((face.masked_indices, bio.masked_indices))
            return seen

        fixed = plans_by_source(mask_seed=0)
        assert len(fixed) == len(tiny_examples)
        assert all(len(plans) == 1 for plans in fixed.values())
        assert any(len(plans) > 1 for plans in plans_by_source(mask_seed=None).values())

    def test_step_seeds_differ(self):
        assert step_seed(0, 1) == step_seed(0, 1)
        assert len({step_seed(0, s) for s in range(100)}) == 100

    @pytest.mark.parametrize('size', [3, 0, 10])
    def test_bad_batch_size(self, tiny_examples, size):
        with pytest.raises(DataError):
            make_pretrain_batch(tiny_examples, size, 0)


class TestFolds:
    def test_partition_sizes(self):
        subjects = [f's{i:02d}' for i in range(27)]
        plan = kfold_split(subjects, 10, seed=0)
        assert sorted(plan.fold_sizes()) == [2, 2, 2, 3, 3, 3, 3, 3, 3, 3]
        assert sorted(s for f in range(10) for s in plan.test_subjects(f)) == subjects
        for fold in range(10):
            assert set(plan.test_subjects(fold)).isdisjoint(plan.train_subjects(fold))

    def test_deterministic(self):
        subjects = [f's{i}' for i in range(12)]
        assert kfold_split(subjects, 4, 3) == kfold_split(list(reversed(subjects)), 4, 3)

    def test_duplicate_ids_collapse(self):
        plan = kfold_split(['a', 'a', 'b', 'b', 'c'], 2, 0)
        assert sorted(plan.assignments) == ['a', 'b', 'c']

    @pytest.mark.parametrize('k', [1, 6])
    def test_bad_k(self, k):
        with pytest.raises(ConfigError):
            kfold_split(['a', 'b', 'c', 'd', 'e'], k, 0)


class TestMetrics:
    def test_binary(self):
        metrics = metrics_from_predictions([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert metrics.accuracy == 0.75
        assert metrics.confusion == [[1, 1], [0, 2]]
        assert metrics.f1 == pytest.approx((2 / 3 + 0.8) / 2)

    def test_absent_class_counts_as_zero(self):
        metrics = metrics_from_predictions([0, 0], [0, 0], 3)
        assert metrics.confusion == [[2, 0, 0], [0, 0, 0], [0, 0, 0]]
        assert metrics.f1 == pytest.approx(1 / 3)

    def test_constant_predictor_on_balanced_labels(self, tiny_examples, tiny_config):
        examples = [e.model_copy(update={'arousal': i % 2}) for i, e in enumerate(tiny_examples)]
        model = UBVMT(tiny_config, n_classes=2)
        with torch.no_grad():
            for parameter in model.classifier.parameters():
                parameter.zero_()
            model.classifier[2].bias.copy_(torch.tensor([1.0, 0.0]))
        metrics = evaluate(model, examples, 2, EmotionAxis.AROUSAL, batch_size=3)
        assert metrics.accuracy == 0.5
        assert metrics.f1 == pytest.approx(1 / 3)
        assert metrics.confusion == [[4, 0], [4, 0]]

    def test_empty(self):
        with pytest.raises(DataError):
            metrics_from_predictions([], [], 2)


class TestRatings:
    def test_binary(self):
        assert ratings_to_classes([1, 5, 5.5, 9], ClassScheme.BINARY) == [0, 0, 1, 1]

    def test_ternary(self):
        assert ratings_to_classes([1, 4, 4.5, 6, 6.5, 9], ClassScheme.TERNARY) == [0, 0, 1, 1, 2, 2]

    def test_out_of_scale(self):
        with pytest.raises(DataError):
            ratings_to_classes([0.5], ClassScheme.BINARY)


class TestPreparation:
    def test_order_and_shapes(self, raw_examples, prepared_examples, desk_config):
        assert [p.index for p in prepared_examples] == [r.index for r in raw_examples]
        for prepared in prepared_examples:
            assert prepared.face.patches.shape == (desk_config.n_patches, desk_config.patch_dim)
            assert prepared.bio.patches.shape == (desk_config.n_patches, desk_config.patch_dim)

    def test_thread_count_does_not_change_output(self, raw_examples, desk_config):
        single = prepare_examples(raw_examples, TransformSettings(), desk_config, threads=1)
        pooled = prepare_examples(raw_examples, TransformSettings(), desk_config, threads=3)
        for a, b in zip(single, pooled):
            np.testing.assert_array_equal(a.bio.patches, b.bio.patches)
            np.testing.assert_array_equal(a.face.patches, b.face.patches)

    def test_normalization_ignores_other_subjects(self, raw_examples, prepared_examples, desk_config):
        subject = raw_examples[0].subject_id
        alone = prepare_examples([r for r in raw_examples if r.subject_id == subject], TransformSettings(), desk_config)
        together = [p for p in prepared_examples if p.subject_id == subject]
        assert len(alone) == len(together)
        for a, b in zip(alone, together):
            np.testing.assert_array_equal(a.bio.patches, b.bio.patches)


def train_config(**overrides) -> TrainConfig:
    values = dict(batch_size=4, base_lr=1e-3, total_steps=6, checkpoint_every=2, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


class TestPretrainLoop:
    def test_trace_file(self, tmp_path, tiny_examples, tiny_config):
        result = pretrain_loop(tiny_examples, tiny_config, train_config(), tmp_path / 'ckpt')
        lines = (tmp_path / 'ckpt' / LOSS_TRACE).read_text(encoding='utf-8').splitlines()
        assert lines[0] == LOSS_TRACE_HEADER
        assert len(lines) == 7
        assert [row.step for row in result.trace] == [1, 2, 3, 4, 5, 6]
        assert result.trace[0].lr == pytest.approx(1e-3)
        for row in result.trace:
            assert row.total == pytest.approx(0.4 * row.l_m + row.l_c, rel=1e-6)
        assert load_checkpoint(tmp_path / 'ckpt').step == 6
        assert 0.0 <= result.training_match_accuracy <= 1.0

    def test_identical_runs(self, tmp_path, tiny_examples, tiny_config):
        first = pretrain_loop(tiny_examples, tiny_config, train_config(total_steps=10), tmp_path / 'a')
        second = pretrain_loop(tiny_examples, tiny_config, train_config(total_steps=10), tmp_path / 'b')
        assert first.trace == second.trace
        assert (tmp_path / 'a' / 'weights.bin').read_bytes() == (tmp_path / 'b' / 'weights.bin').read_bytes()

    def test_resume_matches_uninterrupted_run(self, tmp_path, tiny_examples, tiny_config):
        train = train_config()
        full = pretrain_loop(tiny_examples, tiny_config, train, tmp_path / 'full')

        partial = pretrain_loop(tiny_examples, tiny_config, train, tmp_path / 'split', stop_at=3)
        assert partial.final_step == 3
        assert load_checkpoint(tmp_path / 'split').step == 3
        resumed = pretrain_loop(tiny_examples, tiny_config, train, tmp_path / 'split', resume=True)

        assert resumed.trace == full.trace
        assert read_loss_trace(tmp_path / 'split' / LOSS_TRACE) == full.trace
        for name in ('weights.bin', 'optimizer.bin'):
            assert (tmp_path / 'split' / name).read_bytes() == (tmp_path / 'full' / name).read_bytes()

    def test_missing_trace_reads_empty(self, tmp_path):
        assert read_loss_trace(tmp_path / LOSS_TRACE) == []

    @pytest.mark.slow
    def test_overfits_eight_pairs(self, tmp_path, desk_config):
        raw = synth_generate(SynthSpec(n_subjects=2, per_subject=4, image_size=32), seed=0)
        dataset = prepare_examples(raw, TransformSettings(), desk_config)
        train = TrainConfig(batch_size=4, base_lr=5e-3, lr_floor_ratio=0.1, total_steps=200, checkpoint_every=200,
                            seed=0, fixed_masks=True)
        result = pretrain_loop(dataset, desk_config, train, tmp_path / 'ckpt')
        assert result.trace[-1].total < 0.1 * result.trace[0].total
        assert result.training_match_accuracy == 1.0


class TestFinetuneLoop:
    def test_report_layout(self, tmp_path, tiny_examples, tiny_config):
        plan = kfold_split([e.subject_id for e in tiny_examples], 2, 0)
        report = finetune_loop(tiny_examples, tiny_config, train_config(finetune_epochs=1), EmotionAxis.AROUSAL,
                               plan, 2, save_model_to=tmp_path / 'model')
        assert [m.fold for m in report.per_fold] == [0, 1]
        for metrics in report.per_fold:
            assert metrics.total == 4
            assert len(metrics.confusion) == 2
        assert report.mean.accuracy == pytest.approx(np.mean([m.accuracy for m in report.per_fold]))
        assert load_checkpoint(tmp_path / 'model').model.n_classes == 2

    def test_starts_from_pretrained_checkpoint(self, tmp_path, tiny_examples, tiny_config):
        pretrain_loop(tiny_examples, tiny_config, train_config(total_steps=2), tmp_path / 'ckpt')
        plan = kfold_split([e.subject_id for e in tiny_examples], 2, 0)
        report = finetune_loop(tiny_examples, tiny_config, train_config(finetune_epochs=1), EmotionAxis.VALENCE,
                               plan, 2, checkpoint=tmp_path / 'ckpt', use_face=False)
        assert len(report.per_fold) == 2

    def test_incompatible_checkpoint(self, tmp_path, tiny_examples, tiny_config):
        pretrain_loop(tiny_examples, tiny_config, train_config(total_steps=1), tmp_path / 'ckpt')
        plan = kfold_split([e.subject_id for e in tiny_examples], 2, 0)
        wider = tiny_config.model_copy(update={'d_model': 16})
        with pytest.raises(ConfigError):
            finetune_loop(tiny_examples, wider, train_config(), EmotionAxis.AROUSAL, plan, 2,
                          checkpoint=tmp_path / 'ckpt')

    def test_label_outside_scheme(self, tiny_examples, tiny_config):
        shifted = [e.model_copy(update={'arousal': 2}) for e in tiny_examples]
        plan = kfold_split([e.subject_id for e in tiny_examples], 2, 0)
        with pytest.raises(DataError):
            finetune_loop(shifted, tiny_config, train_config(), EmotionAxis.AROUSAL, plan, 2)

    @pytest.fixture
    def separable(self, desk_config):
        raw = synth_generate(SynthSpec(n_subjects=4, per_subject=32, image_size=32), seed=0)
        return prepare_examples(raw, TransformSettings(), desk_config, threads=2)

    @pytest.mark.slow
    def test_separable_labels(self, separable, desk_config):
        plan = kfold_split([e.subject_id for e in separable], 2, 0)
        report = finetune_loop(separable, desk_config, train_config(), EmotionAxis.AROUSAL, plan, 2)
        assert report.mean.accuracy >= 0.95

    @pytest.mark.slow
    def test_shuffled_labels_stay_at_chance(self, separable, desk_config):
        labels = np.random.default_rng(1).permutation([e.arousal for e in separable])
        shuffled = [e.model_copy(update={'arousal': int(y)}) for e, y in zip(separable, labels)]
        plan = kfold_split([e.subject_id for e in shuffled], 2, 0)
        report = finetune_loop(shuffled, desk_config, train_config(), EmotionAxis.AROUSAL, plan, 2)
        assert abs(report.mean.accuracy - 0.5) <= 0.15
        assert math.isfinite(report.mean.f1)
