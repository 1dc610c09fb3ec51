import os

from ..errors import ConfigError


def preprocessing_threads() -> int:
    """Número de threads de pré-processamento (PULSEMAP_THREADS, padrão 1)."""
    raw = os.environ.get('PULSEMAP_THREADS', '1').strip() or '1'
    try:
        threads = int(raw)
    except ValueError as e:
        raise ConfigError(f'PULSEMAP_THREADS must be an integer, got \'{raw}\'', error=e)
    if threads < 1:
        raise ConfigError(f'PULSEMAP_THREADS must be >= 1, got {threads}')
    return threads
