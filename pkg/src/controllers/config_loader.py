import json
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError

from ..errors import ConfigError, config_error_from_validation
from ..models import RunConfig
from ..utils import Logger

logger = Logger(app_name=__name__)

DESK_CONFIG = Path(__file__).resolve().parents[2] / 'configs' / 'desk.json'


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Carrega a configuração de execução de um arquivo JSON.

    Chaves ausentes recebem os padrões documentados (λ_M = 0.4, λ_C = 1,
    máscara 0.75, lr 1e-4, lote 4).

    Args:
        path (str | Path | None): Arquivo JSON com um objeto; None devolve os padrões.

    Returns:
        RunConfig: Configuração validada.

    Raises:
        ConfigError: Arquivo ilegível, JSON inválido, chave desconhecida ou valor fora dos invariantes.
    """
    if path is None:
        return RunConfig()

    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError as e:
        raise ConfigError(f'configuration file \'{path}\' not found', error=e)
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path}: invalid JSON ({e.msg} at line {e.lineno})', error=e)

    if not isinstance(payload, dict):
        raise ConfigError(f'{path}: configuration must be a JSON object')

    try:
        config = RunConfig.from_json(payload)
    except ValidationError as e:
        raise config_error_from_validation(e)

    logger.debug(f'configuration loaded from {path}')
    return config
