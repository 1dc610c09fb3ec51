from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from scipy import fft
from scipy.linalg import hankel
from scipy.signal import hilbert

from ..errors import ConfigError, DataError
from ..models import (ImageTensor, MapKind, Segment, SmoothingWindows, TimeFreqMap,
                      TransformMethod, TransformSettings)
from ..utils import Logger

logger = Logger(app_name=__name__)

IMAGE_SIZE = 224


def toeplitz_map(segment: Segment) -> TimeFreqMap:
    """
    Mapa espaço-temporal de Toeplitz: matriz P/2 × P/2 com T[i][j] = s[i + j].

    Args:
        segment (Segment): Segmento de comprimento par P ≥ 4.

    Returns:
        TimeFreqMap: Linhas indexadas pelo atraso, colunas pelo tempo (s).

    Raises:
        DataError: Segmento ímpar ou curto demais.
    """
    s = segment.samples
    p = s.size
    if p % 2 or p < 4:
        raise DataError(f'Toeplitz map needs an even segment of at least 4 samples, got {p}')

    half = p // 2
    values = hankel(s[:half], s[half - 1:p - 1])
    return TimeFreqMap(values=values,
                       row_axis=np.arange(half, dtype=np.float64),
                       col_axis=np.arange(half) / segment.sample_rate_hz,
                       kind=MapKind.TOEPLITZ)


def _lag_products(x: np.ndarray, lag: int, half: int) -> np.ndarray:
    # x[m + lag] · conj(x[m - lag]) para m em [-half, n + half)
    pad = 2 * half
    xp = np.pad(x, pad)
    m = np.arange(-half, x.size + half) + pad
    return xp[m + lag] * np.conj(xp[m - lag])


def spwvd_map(segment: Segment,
              windows: Optional[SmoothingWindows] = None,
              n_freq_bins: int = 256) -> TimeFreqMap:
    """
    Distribuição pseudo Wigner-Ville suavizada (magnitude) do sinal analítico.

    values[k][n] = | Σ_τ v[τ] (Σ_μ u[μ] x[n+μ+τ] x*[n+μ−τ]) e^{−j4πkτ/N} |, k ∈ [0, N/2],
    com x o sinal analítico (Hilbert via FFT) estendido por zeros fora do segmento.

    Args:
        segment (Segment): Segmento com pelo menos duas janelas de comprimento.
        windows (SmoothingWindows | None): Janelas u (tempo) e v (frequência); Kaiser 31 por padrão.
        n_freq_bins (int): N, potência de dois ≥ 32.

    Returns:
        TimeFreqMap: Linha k na frequência k·fs/N (linha 0 = DC), colunas no tempo.

    Raises:
        DataError: Segmento curto demais ou N inválido.
    """
    windows = windows or SmoothingWindows.kaiser()
    n = segment.samples.size
    half = windows.half_length
    if n < 2 * windows.time_window.size:
        raise DataError(
            f'SPWVD needs at least {2 * windows.time_window.size} samples, got {n}'
        )
    if n_freq_bins < 32 or n_freq_bins & (n_freq_bins - 1):
        raise DataError(f'n_freq_bins must be a power of two >= 32, got {n_freq_bins}')

    x = hilbert(segment.samples)
    u, v = windows.time_window, windows.freq_window

    kernel = np.zeros((n_freq_bins, n), dtype=np.complex128)
    for lag in range(-half, half + 1):
        smoothed = np.convolve(_lag_products(x, lag, half), u, mode='valid')
        kernel[(2 * lag) % n_freq_bins] += v[lag + half] * smoothed

    spectrum = fft.fft(kernel, axis=0)[:n_freq_bins // 2 + 1]
    fs = segment.sample_rate_hz
    return TimeFreqMap(values=np.abs(spectrum),
                       row_axis=np.arange(n_freq_bins // 2 + 1) * fs / n_freq_bins,
                       col_axis=np.arange(n) / fs,
                       kind=MapKind.SPWVD)


class MorseWavelet:
    """Wavelet de Morse analítica definida no domínio da frequência."""

    def __init__(self, gamma: float = 3.0, time_bandwidth: float = 60.0) -> None:
        if time_bandwidth <= gamma:
            raise DataError('time_bandwidth must exceed gamma')
        self.gamma = gamma
        self.beta = time_bandwidth / gamma
        self.peak = (self.beta / self.gamma) ** (1.0 / self.gamma)
        # a = 2 (eγ/β)^{β/γ}: valor 2 na frequência de pico
        self.amplitude = 2.0 * (np.e * self.gamma / self.beta) ** (self.beta / self.gamma)

    def __call__(self, omega: np.ndarray) -> np.ndarray:
        out = np.zeros_like(omega, dtype=np.float64)
        pos = omega > 0
        w = omega[pos]
        # forma logarítmica evita overflow de ω^β
        out[pos] = np.exp(np.log(self.amplitude) + self.beta * np.log(w) - w ** self.gamma)
        return out

    def scale_for(self, frequency_hz: np.ndarray, sample_rate_hz: float) -> np.ndarray:
        return self.peak * sample_rate_hz / (2.0 * np.pi * frequency_hz)


def scalogram_frequencies(duration_s: float, sample_rate_hz: float, voices_per_octave: int) -> np.ndarray:
    """Grade geométrica de fs/2 até 2/duração, em ordem decrescente."""
    f_max = sample_rate_hz / 2.0
    f_min = 2.0 / duration_s
    if f_min >= f_max:
        raise DataError(f'segment of {duration_s} s is too short for a scalogram at {sample_rate_hz} Hz')
    n_rows = int(np.floor(voices_per_octave * np.log2(f_max / f_min))) + 1
    return f_max * 2.0 ** (-np.arange(n_rows) / voices_per_octave)


def cwt_scalogram(segment: Segment,
                  gamma: float = 3.0,
                  time_bandwidth: float = 60.0,
                  voices_per_octave: int = 10) -> TimeFreqMap:
    """
    Escalograma: |CWT| com a wavelet de Morse (γ, P²).

    A transformada é calculada por multiplicação no domínio da frequência e FFT inversa
    por escala, com o sinal estendido por zeros até a potência de dois ≥ 2N. As linhas
    vão da frequência mais alta (fs/2) para a mais baixa (2/duração).

    Raises:
        DataError: Segmento com menos de 32 amostras ou parâmetros inválidos.
    """
    x = segment.samples
    n = x.size
    if n < 32:
        raise DataError(f'scalogram needs at least 32 samples, got {n}')
    if voices_per_octave < 1:
        raise DataError('voices_per_octave must be >= 1')

    fs = segment.sample_rate_hz
    wavelet = MorseWavelet(gamma, time_bandwidth)
    frequencies = scalogram_frequencies(n / fs, fs, voices_per_octave)
    scales = wavelet.scale_for(frequencies, fs)

    n_fft = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = fft.fft(x, n=n_fft)
    omega = 2.0 * np.pi * fft.fftfreq(n_fft)

    filters = wavelet(scales[:, None] * omega[None, :])
    coefficients = fft.ifft(spectrum[None, :] * filters, axis=1)[:, :n]

    return TimeFreqMap(values=np.abs(coefficients),
                       row_axis=frequencies,
                       col_axis=np.arange(n) / fs,
                       kind=MapKind.SCALOGRAM)


def make_map(segment: Segment, settings: TransformSettings = TransformSettings()) -> TimeFreqMap:
    """Despacha para a representação 2D escolhida em `settings.method`."""
    method = TransformMethod(settings.method)
    if method is TransformMethod.TOEPLITZ:
        return toeplitz_map(segment)
    if method is TransformMethod.SPWVD:
        return spwvd_map(segment, settings.windows, settings.n_freq_bins)
    if method is TransformMethod.SCALOGRAM:
        return cwt_scalogram(segment, settings.gamma, settings.time_bandwidth,
                             settings.voices_per_octave)
    raise ConfigError(f'unknown transform method \'{method}\'')


def min_max(values: np.ndarray) -> np.ndarray:
    """Normalização min-max para [0, 1]; matriz constante vira zeros."""
    low, high = float(values.min()), float(values.max())
    if high <= low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def map_to_gray(tf_map: TimeFreqMap) -> np.ndarray:
    return min_max(tf_map.values)


def resize_bilinear(values: np.ndarray, size: int) -> np.ndarray:
    """
    Redimensionamento bilinear com amostragem alinhada aos cantos.

    O pixel de saída (i, j) amostra a posição (i·(H−1)/(size−1), j·(W−1)/(size−1)) da
    entrada, de modo que os quatro cantos são preservados exatamente.
    """
    if size < 1:
        raise DataError(f'image size must be positive, got {size}')
    tensor = torch.from_numpy(np.ascontiguousarray(values, dtype=np.float64))[None, None]
    if tensor.shape[-2:] == (size, size):
        return values.astype(np.float64, copy=True)
    if min(tensor.shape[-2:]) == 1:
        # interpolate exige ao menos 2 amostras por eixo com align_corners
        tensor = tensor.expand(1, 1, max(tensor.shape[-2], 2), max(tensor.shape[-1], 2))
    resized = F.interpolate(tensor, size=(size, size), mode='bilinear', align_corners=True)
    return resized[0, 0].numpy()


def resize_image(image: ImageTensor, size: int) -> ImageTensor:
    """Redimensiona cada canal de uma imagem com `resize_bilinear`."""
    if image.height == size:
        return image
    channels = [resize_bilinear(image.values[:, :, c], size) for c in range(image.channels)]
    return ImageTensor(values=np.clip(np.stack(channels, axis=2), 0.0, 1.0))


def pseudocolor_palette() -> np.ndarray:
    """Tabela fixa de 256 cores (azul → ciano → amarelo → vermelho), valores em [0, 1]."""
    anchors = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    colors = np.array([[0.0, 0.0, 0.5],
                       [0.0, 0.8, 1.0],
                       [1.0, 1.0, 0.0],
                       [0.6, 0.0, 0.0]])
    levels = np.linspace(0.0, 1.0, 256)
    return np.stack([np.interp(levels, anchors, colors[:, c]) for c in range(3)], axis=1)


def render_image(tf_map: TimeFreqMap,
                 size: int = IMAGE_SIZE,
                 palette: Optional[np.ndarray] = None) -> ImageTensor:
    """
    Converte um mapa em imagem size × size × 3 com valores em [0, 1].

    Args:
        tf_map (TimeFreqMap): Mapa a renderizar (linha 0 fica no topo da imagem).
        size (int): Lado da imagem quadrada (224 por padrão).
        palette (np.ndarray | None): Tabela 256 × 3 opcional; sem ela, o cinza é replicado
            nos três canais.

    Returns:
        ImageTensor: Imagem renderizada.
    """
    # normaliza depois de reamostrar: a interpolação suaviza os extremos internos
    gray = min_max(resize_bilinear(tf_map.values, size))
    if palette is None:
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
    else:
        palette = np.asarray(palette, dtype=np.float64)
        if palette.shape != (256, 3):
            raise DataError(f'palette must be 256×3, got {palette.shape}')
        rgb = palette[np.rint(gray * 255.0).astype(np.int64)]
    return ImageTensor(values=rgb)


def segment_to_image(segment: Segment,
                     settings: TransformSettings = TransformSettings(),
                     size: int = IMAGE_SIZE) -> ImageTensor:
    palette = pseudocolor_palette() if settings.pseudocolor else None
    return render_image(make_map(segment, settings), size=size, palette=palette)
