from typing import List

import numpy as np

from ..models import ImageTensor, RawExample, Segment, SynthSpec
from ..utils import Logger

logger = Logger(app_name=__name__)

LOW_RATE_HZ = 0.9
HIGH_RATE_HZ = 1.4
WIDE_PULSE_S = 0.12
NARROW_PULSE_S = 0.06


def _levels(n_classes: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_classes)


def pulse_train(rng: np.random.Generator,
                n_samples: int,
                sample_rate_hz: float,
                rate_hz: float,
                width_s: float,
                amplitude: float,
                baseline: float,
                noise: float) -> np.ndarray:
    """Trem de pulsos gaussianos com fase aleatória, onda dicrótica e ruído branco."""
    t = np.arange(n_samples) / sample_rate_hz
    period = 1.0 / rate_hz
    first = rng.uniform(0.0, period)
    beats = np.arange(first - period, t[-1] + period, period)
    delta = t[None, :] - beats[:, None]
    main = np.exp(-0.5 * (delta / width_s) ** 2)
    notch = 0.35 * np.exp(-0.5 * ((delta - 2.5 * width_s) / (1.5 * width_s)) ** 2)
    wave = amplitude * (main + notch).sum(axis=0)
    return baseline + wave + noise * rng.standard_normal(n_samples)


def grating(rng: np.random.Generator,
            size: int,
            orientation: float,
            cycles: float,
            phase: float,
            tint: np.ndarray,
            noise: float) -> np.ndarray:
    """Grade senoidal colorida size × size × 3 em [0, 1]."""
    coords = np.arange(size) / size
    yy, xx = np.meshgrid(coords, coords, indexing='ij')
    carrier = np.cos(2.0 * np.pi * cycles * (xx * np.cos(orientation) + yy * np.sin(orientation)) + phase)
    gray = 0.5 + 0.4 * carrier
    image = gray[:, :, None] * tint[None, None, :]
    image = image + 0.5 * noise * rng.standard_normal(image.shape)
    return np.clip(image, 0.0, 1.0)


def synth_generate(spec: SynthSpec, seed: int) -> List[RawExample]:
    """
    Gera um conjunto sintético com estrutura dependente dos rótulos nas duas modalidades.

    Biossensor: trem de pulsos cuja taxa cresce com a excitação (0.9 Hz → 1.4 Hz) e cuja
    largura diminui com a valência. Face: grade senoidal cuja frequência espacial cresce
    com a excitação e cuja orientação gira com a valência (0° → 90°). Um código latente
    z ~ U(−1, 1) compartilhado pelo par alinhado modula a taxa (×(1 + 0.1z)) e a fase e a
    orientação da grade. Cada sujeito tem deslocamento de amplitude e tonalidade próprios.

    Args:
        spec (SynthSpec): Tamanho do conjunto, esquema de classes e formato dos sinais.
        seed (int): Semente; a mesma semente gera o mesmo conjunto bit a bit.

    Returns:
        List[RawExample]: Exemplos ordenados por sujeito.
    """
    rng = np.random.default_rng(seed)
    levels = _levels(spec.class_scheme.n_classes)
    n_samples = int(round(spec.duration_s * spec.sample_rate_hz))
    n_samples -= n_samples % 2

    examples = []
    index = 0
    for s in range(spec.n_subjects):
        subject_id = f'subject_{s:02d}'
        amplitude = rng.uniform(0.8, 1.2)
        baseline = rng.normal(0.0, 0.2)
        tint = rng.uniform(0.85, 1.0, size=3)

        for _ in range(spec.per_subject):
            valence = int(rng.integers(len(levels)))
            arousal = int(rng.integers(len(levels)))
            z = rng.uniform(-1.0, 1.0)

            rate = (LOW_RATE_HZ + (HIGH_RATE_HZ - LOW_RATE_HZ) * levels[arousal]) * (1.0 + 0.1 * z)
            width = WIDE_PULSE_S - (WIDE_PULSE_S - NARROW_PULSE_S) * levels[valence]
            samples = pulse_train(rng, n_samples, spec.sample_rate_hz, rate, width,
                                  amplitude, baseline, spec.noise)

            orientation = 0.5 * np.pi * levels[valence] + 0.15 * z
            cycles = 2.0 + 3.0 * levels[arousal]
            face = grating(rng, spec.image_size, orientation, cycles, np.pi * z, tint, spec.noise)

            examples.append(RawExample(
                index=index,
                subject_id=subject_id,
                face=ImageTensor(values=face),
                bio=Segment(samples=samples, sample_rate_hz=spec.sample_rate_hz,
                            source_index=0, duration_s=n_samples / spec.sample_rate_hz,
                            subject_id=subject_id),
                valence=valence,
                arousal=arousal,
            ))
            index += 1

    logger.info(f'generated {len(examples)} synthetic examples for {spec.n_subjects} subjects (seed {seed})')
    return examples
