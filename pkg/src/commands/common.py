from pathlib import Path
from typing import Any, List, Optional

import click

from ..controllers import (SignalFormat, load_config, load_dataset, load_signal, preprocess_ecg, preprocess_ppg,
                           prepare_examples)
from ..errors import ConfigError, DataError
from ..models import (ClassScheme, EmotionAxis, Modality, PreparedExample, RawExample, RunConfig, Segment,
                      TransformerConfig, TransformMethod)
from ..utils import Logger

logger = Logger(app_name=__name__)

METHODS = [method.value for method in TransformMethod]
AXES = [axis.value for axis in EmotionAxis]
SCHEMES = [scheme.value for scheme in ClassScheme]
PREPROCESS = ['none', 'ecg', 'ppg']

config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                             help='Arquivo JSON de configuração (as flags vencem).')
data_option = click.option('--data', 'data_dir', type=click.Path(file_okay=False), default=None,
                           help='Diretório do conjunto (um subdiretório por sujeito).')
seed_option = click.option('--seed', type=int, default=None, help='Semente da execução.')
method_option = click.option('--method', type=click.Choice(METHODS), default=None,
                             help='Representação 2D do biossinal.')
scheme_option = click.option('--scheme', type=click.Choice(SCHEMES), default=ClassScheme.BINARY.value,
                             show_default=True, help='Esquema de classes.')
ratings_option = click.option('--ratings', is_flag=True, default=False,
                              help='labels.csv traz notas 1-9 a converter pelo esquema de classes.')


def resolve_config(config_path: Optional[str], **overrides: Any) -> RunConfig:
    """Configuração do arquivo (ou padrões) com as flags aplicadas por cima."""
    return load_config(config_path).with_overrides(**overrides)


def require_data_dir(config: RunConfig) -> Path:
    if not config.data_dir:
        raise ConfigError('no dataset directory given (use --data or data_dir in the config)')
    return Path(config.data_dir)


def load_raw(config: RunConfig, scheme: str, ratings: bool) -> List[RawExample]:
    return load_dataset(require_data_dir(config), ClassScheme(scheme) if ratings else None)


def load_prepared(config: RunConfig,
                  scheme: str,
                  ratings: bool,
                  transformer: Optional[TransformerConfig] = None) -> List[PreparedExample]:
    raw = load_raw(config, scheme, ratings)
    return prepare_examples(raw, config.transform_settings(), transformer or config.transformer_config())


def signal_format(path: str, declared: Optional[str]) -> SignalFormat:
    if declared is not None:
        return SignalFormat.TWO_COLUMN_CSV if declared == 'csv' else SignalFormat.HEADERED_TEXT
    return SignalFormat.TWO_COLUMN_CSV if Path(path).suffix.lower() == '.csv' else SignalFormat.HEADERED_TEXT


def select_segment(path: str, declared: Optional[str], preprocess: str, index: int) -> Segment:
    """
    Carrega um sinal e devolve o segmento pedido.

    Sem pré-processamento o sinal inteiro vira um segmento (com comprimento par). Com
    'ecg' ou 'ppg' a cadeia correspondente roda antes e `index` escolhe o segmento.

    Raises:
        DataError: Índice fora dos segmentos produzidos.
    """
    modality = Modality.ECG if preprocess == 'ecg' else Modality.PPG
    signal = load_signal(path, signal_format(path, declared), modality)

    if preprocess == 'none':
        segments = [Segment.from_signal(signal)]
    elif preprocess == 'ecg':
        segments = preprocess_ecg(signal).segments
    else:
        segments = preprocess_ppg(signal).segments

    if not 0 <= index < len(segments):
        raise DataError(f'segment index {index} out of range ({len(segments)} segments)')
    return segments[index]
