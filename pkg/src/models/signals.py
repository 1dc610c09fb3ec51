from .._compat import StrEnum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import DataError


def _finite_samples(value) -> np.ndarray:
    samples = np.asarray(value, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise DataError('signal has no samples')
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise DataError(f'non-finite sample at index {bad}')
    samples.setflags(write=False)
    return samples


class Modality(StrEnum):
    ECG = 'ECG'
    PPG = 'PPG'


class Signal(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray
    sample_rate_hz: float = Field(gt=0)
    subject_id: str = 'unknown'
    modality: Modality = Modality.PPG

    check_samples = field_validator('samples', mode='before')(_finite_samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "Signal":
        return Signal(samples=samples,
                      sample_rate_hz=self.sample_rate_hz,
                      subject_id=self.subject_id,
                      modality=self.modality)


class FilterKind(StrEnum):
    NOTCH = 'Notch'
    HIGHPASS = 'Highpass'
    LOWPASS = 'Lowpass'
    SMOOTH_SUBTRACT = 'SmoothSubtract'


class FilterSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FilterKind
    cutoff_hz: float = Field(gt=0)
    q_or_order: float = Field(gt=0)
    window_s: float = Field(default=0.25, gt=0)

    @staticmethod
    def notch(center_hz: float = 60.0, q: float = 30.0) -> "FilterSpec":
        return FilterSpec(kind=FilterKind.NOTCH, cutoff_hz=center_hz, q_or_order=q)

    @staticmethod
    def highpass(cutoff_hz: float = 0.4, order: int = 4) -> "FilterSpec":
        return FilterSpec(kind=FilterKind.HIGHPASS, cutoff_hz=cutoff_hz, q_or_order=order)

    @staticmethod
    def lowpass(cutoff_hz: float = 200.0, order: int = 4) -> "FilterSpec":
        return FilterSpec(kind=FilterKind.LOWPASS, cutoff_hz=cutoff_hz, q_or_order=order)

    @staticmethod
    def smooth_subtract(window_s: float = 0.25) -> "FilterSpec":
        # cutoff nominal da média móvel: 1 / janela
        return FilterSpec(kind=FilterKind.SMOOTH_SUBTRACT, cutoff_hz=1.0 / window_s,
                          q_or_order=1, window_s=window_s)


class FilterResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    signal: Signal
    skipped: bool = False
    warning: Optional[str] = None


class Segment(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray
    sample_rate_hz: float = Field(gt=0)
    source_index: int = 0
    duration_s: float = Field(gt=0)
    subject_id: str = 'unknown'

    check_samples = field_validator('samples', mode='before')(_finite_samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    def with_samples(self, samples: np.ndarray) -> "Segment":
        return self.model_copy(update={'samples': _finite_samples(samples)})

    @staticmethod
    def from_signal(signal: Signal, even: bool = True) -> "Segment":
        """Trata o sinal inteiro como um segmento (comprimento forçado a par)."""
        n = signal.samples.size - (signal.samples.size % 2 if even else 0)
        if n == 0:
            raise DataError('signal too short to form a segment')
        return Segment(samples=signal.samples[:n],
                       sample_rate_hz=signal.sample_rate_hz,
                       source_index=0,
                       duration_s=n / signal.sample_rate_hz,
                       subject_id=signal.subject_id)


class NormalizationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    person_min: float
    person_max: float
    alpha: float = Field(default=1000.0, gt=0)

    @model_validator(mode='after')
    def check_range(self) -> "NormalizationParams":
        if not self.person_max > self.person_min:
            raise DataError(
                f'person_max ({self.person_max}) must exceed person_min ({self.person_min})'
            )
        return self


class PreprocessSettings(BaseModel):
    """Parâmetros das cadeias de pré-processamento de ECG e PPG."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    smoothing_window_s: float = Field(default=0.25, gt=0)
    notch_hz: float = Field(default=60.0, gt=0)
    notch_q: float = Field(default=30.0, gt=0)
    highpass_hz: float = Field(default=0.4, gt=0)
    lowpass_hz: float = Field(default=200.0, gt=0)
    filter_order: int = Field(default=4, ge=1)
    ecg_segment_s: float = Field(default=5.0, gt=0)
    detrend_order: int = Field(default=50, ge=1)
    peak_min_distance_s: float = Field(default=0.5, gt=0)
    peak_min_prominence: Optional[float] = Field(default=None, ge=0)
    pulse_window_s: float = Field(default=1.1, gt=0)


class PreprocessResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    segments: List[Segment]
    warnings: List[str] = []
