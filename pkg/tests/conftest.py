from pathlib import Path

import numpy as np
import pytest

from src.controllers import prepare_examples, synth_generate
from src.models import (ClassScheme, Modality, RunConfig, Segment, Signal, SynthSpec, TransformerConfig,
                        TransformSettings)

ROOT = Path(__file__).resolve().parents[1]


def tone(frequency_hz: float, sample_rate_hz: float, duration_s: float, amplitude: float = 1.0) -> np.ndarray:
    t = np.arange(int(round(duration_s * sample_rate_hz))) / sample_rate_hz
    return amplitude * np.cos(2.0 * np.pi * frequency_hz * t)


def as_signal(samples: np.ndarray, sample_rate_hz: float, modality: Modality = Modality.PPG) -> Signal:
    return Signal(samples=samples, sample_rate_hz=sample_rate_hz, subject_id='s01', modality=modality)


def as_segment(samples: np.ndarray, sample_rate_hz: float) -> Segment:
    return Segment(samples=samples, sample_rate_hz=sample_rate_hz, source_index=0,
                   duration_s=len(samples) / sample_rate_hz)


def write_headered(path: Path, samples, sample_rate_hz: float) -> Path:
    lines = [f'# fs {sample_rate_hz}'] + [repr(float(v)) for v in samples]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


@pytest.fixture
def desk_config() -> TransformerConfig:
    return TransformerConfig.desk()


@pytest.fixture
def tiny_config() -> TransformerConfig:
    """Modelo mínimo para checagem de gradiente: imagens 8×8, patches 4×4, d_model 8."""
    return TransformerConfig(d_model=8, enc_layers=1, dec_layers=1, d_decoder=8, n_heads_enc=2,
                             n_heads_dec=2, mlp_ratio=2.0, image_size=8, patch_size=4)


@pytest.fixture
def desk_run_config() -> RunConfig:
    return RunConfig.from_json({
        'd_model': 64, 'enc_layers': 2, 'dec_layers': 1, 'd_decoder': 64, 'n_heads_enc': 4,
        'n_heads_dec': 4, 'image_size': 32, 'patch_size': 8, 'base_lr': 1e-3, 'folds': 2,
    })


@pytest.fixture
def synth_spec() -> SynthSpec:
    return SynthSpec(n_subjects=4, per_subject=4, class_scheme=ClassScheme.BINARY, image_size=32)


@pytest.fixture
def raw_examples(synth_spec):
    return synth_generate(synth_spec, seed=3)


@pytest.fixture
def prepared_examples(raw_examples, desk_config):
    return prepare_examples(raw_examples, TransformSettings(), desk_config, threads=2)


@pytest.fixture
def tiny_examples(tiny_config):
    spec = SynthSpec(n_subjects=2, per_subject=4, image_size=8, duration_s=2.0)
    return prepare_examples(synth_generate(spec, seed=1), TransformSettings(), tiny_config)
