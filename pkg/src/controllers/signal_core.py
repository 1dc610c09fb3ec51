from .._compat import StrEnum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import Legendre
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, filtfilt, find_peaks, iirnotch, sosfiltfilt

from ..errors import DataError, ParseError
from ..models import (FilterKind, FilterResult, FilterSpec, Modality, NormalizationParams,
                      PreprocessResult, PreprocessSettings, Segment, Signal)
from ..utils import Logger

logger = Logger(app_name=__name__)

SignalLike = Union[Signal, Segment]


class SignalFormat(StrEnum):
    HEADERED_TEXT = 'HeaderedText'
    TWO_COLUMN_CSV = 'TwoColumnCSV'


def _parse_samples(lines: Sequence[str], path: Path, first_line: int) -> np.ndarray:
    values = []
    for offset, line in enumerate(lines):
        text = line.strip()
        if not text:
            continue
        try:
            values.append(float(text))
        except ValueError as e:
            raise ParseError(f'{path}:{first_line + offset}: not a number: \'{text}\'', error=e)
    return np.asarray(values, dtype=np.float64)


def _load_headered(path: Path, modality: Modality) -> Signal:
    lines = path.read_text(encoding='utf-8').splitlines()
    if not lines:
        raise ParseError(f'{path}: empty file')

    header = lines[0].split()
    if len(header) < 3 or header[0] != '#' or header[1] != 'fs':
        raise ParseError(f'{path}: header must read \'# fs <rate> [ECG|PPG] [subject]\'')
    try:
        fs = float(header[2])
    except ValueError as e:
        raise ParseError(f'{path}: invalid sample rate \'{header[2]}\'', error=e)
    if not np.isfinite(fs) or fs <= 0:
        raise ParseError(f'{path}: sample rate must be positive, got {header[2]}')

    if len(header) > 3:
        try:
            modality = Modality(header[3])
        except ValueError as e:
            raise ParseError(f'{path}: unknown modality \'{header[3]}\'', error=e)
    subject_id = header[4] if len(header) > 4 else path.stem

    samples = _parse_samples(lines[1:], path, first_line=2)
    return Signal(samples=samples, sample_rate_hz=fs, subject_id=subject_id, modality=modality)


def _load_csv(path: Path, modality: Modality) -> Signal:
    try:
        table = np.loadtxt(path, delimiter=',', ndmin=2,
                           comments='#', skiprows=_csv_header_rows(path))
    except ValueError as e:
        raise ParseError(f'{path}: malformed CSV', error=e)
    if table.shape[1] != 2 or table.shape[0] < 2:
        raise ParseError(f'{path}: expected at least two \'time_s,value\' rows')

    times, values = table[:, 0], table[:, 1]
    if not np.all(np.isfinite(times)):
        raise DataError(f'{path}: non-finite timestamp')
    steps = np.diff(times)
    period = float(np.median(steps))
    if period <= 0:
        raise DataError(f'{path}: timestamps must increase')
    # tolerância de 50% do período nominal
    if np.any(np.abs(steps - period) > 0.5 * period):
        bad = int(np.flatnonzero(np.abs(steps - period) > 0.5 * period)[0])
        raise DataError(f'{path}: non-uniform sampling near row {bad + 1}')

    return Signal(samples=values, sample_rate_hz=1.0 / period,
                  subject_id=path.stem, modality=modality)


def _csv_header_rows(path: Path) -> int:
    with path.open(encoding='utf-8') as handle:
        first = handle.readline()
    try:
        [float(cell) for cell in first.split(',')]
        return 0
    except ValueError:
        return 1


def load_signal(path: Union[str, Path],
                declared_format: SignalFormat = SignalFormat.HEADERED_TEXT,
                modality: Modality = Modality.PPG) -> Signal:
    """
    Carrega um sinal de um arquivo texto.

    Args:
        path (str | Path): Caminho do arquivo.
        declared_format (SignalFormat): HeaderedText ('# fs <rate> ...' + uma amostra por linha)
            ou TwoColumnCSV (linhas 'time_s,value' uniformemente espaçadas).
        modality (Modality): Modalidade usada quando o arquivo não a declara.

    Returns:
        Signal: Amostras na ordem do arquivo.

    Raises:
        ParseError: Cabeçalho ou linha malformados.
        DataError: Amostra não finita ou amostragem não uniforme.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f'signal file \'{path}\' not found')

    if SignalFormat(declared_format) is SignalFormat.TWO_COLUMN_CSV:
        signal = _load_csv(path, modality)
    else:
        signal = _load_headered(path, modality)

    logger.debug(f'loaded {signal.samples.size} samples @ {signal.sample_rate_hz} Hz from {path}')
    return signal


def save_signal(path: Union[str, Path], signal: SignalLike, modality: Modality = Modality.PPG) -> Path:
    """Grava no formato HeaderedText (amostras com precisão de ida e volta)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    modality = getattr(signal, 'modality', modality)
    lines = [f'# fs {signal.sample_rate_hz!r} {modality} {signal.subject_id}']
    lines.extend(repr(float(v)) for v in signal.samples)
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def apply_filter(signal: Signal, spec: FilterSpec) -> FilterResult:
    """
    Aplica um filtro de fase zero (ida e volta).

    Notch usa um biquad (iirnotch); passa-altas e passa-baixas usam Butterworth em SOS.
    Cortes no ou acima de Nyquist não são aplicados: o resultado volta marcado como
    ignorado, com o sinal intacto e um aviso.
    """
    fs = signal.sample_rate_hz
    nyquist = fs / 2.0
    x = signal.samples

    if spec.kind is FilterKind.SMOOTH_SUBTRACT:
        width = max(1, int(round(spec.window_s * fs)))
        smooth = uniform_filter1d(x, size=width, mode='nearest')
        return FilterResult(signal=signal.with_samples(x - smooth))

    if spec.cutoff_hz >= nyquist:
        warning = (f'{spec.kind} at {spec.cutoff_hz} Hz skipped: '
                   f'cutoff is at or above Nyquist ({nyquist} Hz)')
        logger.warning(warning)
        return FilterResult(signal=signal, skipped=True, warning=warning)

    if spec.kind is FilterKind.NOTCH:
        b, a = iirnotch(spec.cutoff_hz, spec.q_or_order, fs=fs)
        padlen = min(x.size - 1, int(round(fs)))
        y = filtfilt(b, a, x, padlen=padlen)
    else:
        btype = 'highpass' if spec.kind is FilterKind.HIGHPASS else 'lowpass'
        sos = butter(int(spec.q_or_order), spec.cutoff_hz, btype=btype, fs=fs, output='sos')
        padlen = min(x.size - 1, 3 * (2 * len(sos) + 1))
        y = sosfiltfilt(sos, x, padlen=padlen)

    return FilterResult(signal=signal.with_samples(y))


def detrend_polynomial(signal: SignalLike, order: int) -> SignalLike:
    """
    Subtrai o ajuste polinomial de mínimos quadrados de ordem `order`.

    O ajuste é feito na base de Legendre com o tempo reescalado para [-1, 1], estável
    mesmo na ordem 50.
    """
    if order < 1:
        raise DataError(f'polynomial order must be >= 1, got {order}')
    n = signal.samples.size
    if n <= order:
        raise DataError(f'{n} samples cannot support a degree-{order} fit')

    t = np.linspace(-1.0, 1.0, n)
    fit = Legendre.fit(t, signal.samples, deg=order, domain=[-1.0, 1.0])
    return signal.with_samples(signal.samples - fit(t))


def _default_prominence(samples: np.ndarray) -> float:
    q75, q25 = np.percentile(samples, [75, 25])
    return 0.3 * float(q75 - q25)


def detect_peaks(signal: SignalLike,
                 min_distance_s: float = 0.5,
                 min_prominence: Optional[float] = None) -> List[int]:
    """
    Detecta picos locais com distância e proeminência mínimas.

    Args:
        signal: Sinal ou segmento.
        min_distance_s (float): Separação mínima entre picos, em segundos.
        min_prominence (float | None): Proeminência mínima; None usa 0.3 × intervalo interquartil.

    Returns:
        List[int]: Índices estritamente crescentes.
    """
    distance = int(round(min_distance_s * signal.sample_rate_hz))
    if distance < 1:
        raise DataError('min_distance_s × sample_rate_hz must be at least one sample')

    x = signal.samples
    if min_prominence is None:
        min_prominence = _default_prominence(x)

    _, props = find_peaks(x, distance=distance, prominence=max(min_prominence, 0.0),
                          plateau_size=1)
    # borda esquerda de cada platô: x[i-1] < x[i] >= x[i+1]
    candidates = props['left_edges']
    if min_prominence == 0.0:
        candidates = candidates[props['prominences'] > 0]

    peaks: List[int] = []
    for index in candidates.tolist():
        if not peaks or index - peaks[-1] >= distance:
            peaks.append(int(index))
    return peaks


def _even_floor(n: int) -> int:
    return n - (n % 2)


def segment_fixed(signal: Signal, duration_s: float) -> List[Segment]:
    """Recorta segmentos consecutivos, sem sobreposição, de `duration_s` (descartando o resto)."""
    if duration_s <= 0:
        raise DataError('segment duration must be positive')
    width = _even_floor(int(np.floor(duration_s * signal.sample_rate_hz + 1e-9)))
    if width < 2:
        raise DataError(f'{duration_s} s is shorter than two samples')

    count = signal.samples.size // width
    return [
        Segment(samples=signal.samples[k * width:(k + 1) * width],
                sample_rate_hz=signal.sample_rate_hz,
                source_index=k * width,
                duration_s=duration_s,
                subject_id=signal.subject_id)
        for k in range(count)
    ]


def segment_pulses(signal: Signal, peaks: Iterable[int], duration_s: float) -> List[Segment]:
    """Uma janela centrada em cada pico; picos cuja janela sai do sinal são ignorados."""
    width = _even_floor(int(round(duration_s * signal.sample_rate_hz)))
    if width < 2:
        raise DataError('duration_s × sample_rate_hz must be at least two samples')

    half = width // 2
    n = signal.samples.size
    segments = []
    for peak in peaks:
        start, stop = int(peak) - half, int(peak) + half
        if start < 0 or stop > n:
            continue
        segments.append(Segment(samples=signal.samples[start:stop],
                                sample_rate_hz=signal.sample_rate_hz,
                                source_index=start,
                                duration_s=duration_s,
                                subject_id=signal.subject_id))
    return segments


def fit_personal_params(samples: Iterable[SignalLike], alpha: float = 1000.0) -> NormalizationParams:
    """Mínimo e máximo pessoais sobre todas as amostras de um sujeito."""
    lows, highs = [], []
    for item in samples:
        lows.append(float(np.min(item.samples)))
        highs.append(float(np.max(item.samples)))
    if not lows:
        raise DataError('no samples to fit personal normalization')
    return NormalizationParams(person_min=min(lows), person_max=max(highs), alpha=alpha)


def normalize_personal(segment: SignalLike, params: NormalizationParams) -> SignalLike:
    """z̄ = (z − min) / (max − min) × α."""
    span = params.person_max - params.person_min
    if span <= 0:
        raise DataError('personal normalization needs person_max > person_min')
    return segment.with_samples((segment.samples - params.person_min) / span * params.alpha)


def preprocess_ecg(signal: Signal, settings: PreprocessSettings = PreprocessSettings()) -> PreprocessResult:
    """
    Cadeia de ECG: subtração da suavização, notch, passa-altas, passa-baixas e
    segmentação em janelas fixas.
    """
    chain = [
        FilterSpec.smooth_subtract(settings.smoothing_window_s),
        FilterSpec.notch(settings.notch_hz, settings.notch_q),
        FilterSpec.highpass(settings.highpass_hz, settings.filter_order),
        FilterSpec.lowpass(settings.lowpass_hz, settings.filter_order),
    ]
    warnings = []
    current = signal
    for spec in chain:
        result = apply_filter(current, spec)
        current = result.signal
        if result.skipped:
            warnings.append(result.warning)

    segments = segment_fixed(current, settings.ecg_segment_s)
    logger.info(f'ECG {signal.subject_id}: {len(segments)} segments, {len(warnings)} filters skipped')
    return PreprocessResult(segments=segments, warnings=warnings)


def preprocess_ppg(signal: Signal, settings: PreprocessSettings = PreprocessSettings()) -> PreprocessResult:
    """Cadeia de PPG: remoção de tendência polinomial, picos e pulsos centrados."""
    detrended = detrend_polynomial(signal, settings.detrend_order)
    peaks = detect_peaks(detrended, settings.peak_min_distance_s, settings.peak_min_prominence)
    segments = segment_pulses(detrended, peaks, settings.pulse_window_s)
    logger.info(f'PPG {signal.subject_id}: {len(peaks)} peaks, {len(segments)} pulses')
    return PreprocessResult(segments=segments)
