from .._compat import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.signal.windows import kaiser

from ..errors import DataError


class MapKind(StrEnum):
    TOEPLITZ = 'Toeplitz'
    SPWVD = 'SPWVD'
    SCALOGRAM = 'Scalogram'


class TransformMethod(StrEnum):
    TOEPLITZ = 'toeplitz'
    SPWVD = 'spwvd'
    SCALOGRAM = 'scalogram'


class TimeFreqMap(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    row_axis: np.ndarray
    col_axis: np.ndarray
    kind: MapKind

    @field_validator('values', mode='before')
    @classmethod
    def check_values(cls, value) -> np.ndarray:
        values = np.asarray(value, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise DataError(f'time-frequency map must be a non-empty matrix, got shape {values.shape}')
        if not np.all(np.isfinite(values)):
            raise DataError('time-frequency map contains non-finite values')
        return values

    @field_validator('row_axis', 'col_axis', mode='before')
    @classmethod
    def check_axis(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode='after')
    def check_shape(self) -> "TimeFreqMap":
        rows, cols = self.values.shape
        if self.row_axis.size != rows or self.col_axis.size != cols:
            raise DataError(
                f'axis lengths ({self.row_axis.size}, {self.col_axis.size}) '
                f'do not match map shape {self.values.shape}'
            )
        if self.kind != MapKind.TOEPLITZ and np.any(self.values < 0):
            raise DataError(f'{self.kind} map must hold non-negative magnitudes')
        return self

    @property
    def shape(self) -> tuple:
        return self.values.shape


class SmoothingWindows(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    time_window: np.ndarray
    freq_window: np.ndarray
    beta: float = Field(gt=0)

    @field_validator('time_window', 'freq_window', mode='before')
    @classmethod
    def check_window(cls, value) -> np.ndarray:
        window = np.asarray(value, dtype=np.float64).reshape(-1)
        if window.size % 2 == 0:
            raise DataError(f'smoothing window length must be odd, got {window.size}')
        if not np.all(window > 0):
            raise DataError('smoothing window must be strictly positive')
        if not np.allclose(window, window[::-1]):
            raise DataError('smoothing window must be symmetric')
        return window / window.sum()

    @property
    def half_length(self) -> int:
        return self.time_window.size // 2

    @staticmethod
    def kaiser(length: int = 31, beta: float = 8.6) -> "SmoothingWindows":
        """
        Janelas de Kaiser de mesmo comprimento para tempo e frequência.

        Args:
            length (int): Comprimento ímpar das janelas (31 por padrão).
            beta (float): Parâmetro de forma da janela de Kaiser.

        Returns:
            SmoothingWindows: Janelas normalizadas para soma unitária.
        """
        window = kaiser(length, beta, sym=True)
        return SmoothingWindows(time_window=window, freq_window=window, beta=beta)


class ImageTensor(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray

    @field_validator('values', mode='before')
    @classmethod
    def check_values(cls, value) -> np.ndarray:
        values = np.asarray(value, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3 or values.shape[0] != values.shape[1]:
            raise DataError(f'image must be square H×W×3, got shape {values.shape}')
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise DataError('image values must lie in [0, 1]')
        return values

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])


class TransformSettings(BaseModel):
    """Parâmetros das três representações 2D."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    method: TransformMethod = TransformMethod.SCALOGRAM
    kaiser_length: int = Field(default=31, ge=3)
    kaiser_beta: float = Field(default=8.6, gt=0)
    n_freq_bins: int = Field(default=256, ge=32)
    gamma: float = Field(default=3.0, gt=0)
    time_bandwidth: float = Field(default=60.0, gt=0)
    voices_per_octave: int = Field(default=10, ge=1)
    alpha: float = Field(default=1000.0, gt=0)
    pseudocolor: bool = False

    @model_validator(mode='after')
    def check_settings(self) -> "TransformSettings":
        if self.kaiser_length % 2 == 0:
            raise ValueError('kaiser_length must be odd')
        if self.n_freq_bins & (self.n_freq_bins - 1):
            raise ValueError('n_freq_bins must be a power of two')
        if self.time_bandwidth <= self.gamma:
            raise ValueError('time_bandwidth must exceed gamma')
        return self

    @property
    def windows(self) -> SmoothingWindows:
        return SmoothingWindows.kaiser(self.kaiser_length, self.kaiser_beta)
