from typing import Any, Dict, Optional

from pydantic import ValidationError


class PulsemapException(Exception):
    kind: str = 'PulsemapError'
    exit_code: int = 1

    def __init__(self, message: str, error: Optional[Exception] = None, **extra: Any):
        super().__init__(message)
        self.message = message
        self.detail: Dict[str, Any] = {
            'message': message,
            'kind': self.kind,
            'exit_code': self.exit_code,
            'error': str(error) if error else 'N/A',
            **extra
        }

    def __str__(self) -> str:
        return self.message


class ParseError(PulsemapException):
    kind = 'ParseError'


class DataError(PulsemapException):
    kind = 'DataError'


class ConfigError(PulsemapException):
    kind = 'ConfigError'


class NumericsError(PulsemapException):
    kind = 'NumericsError'

    def __init__(self, tensor_name: str, message: Optional[str] = None):
        super().__init__(
            message or f'non-finite values in tensor \'{tensor_name}\'',
            tensor_name=tensor_name
        )
        self.tensor_name = tensor_name


class InternalError(PulsemapException):
    kind = 'InternalError'

    def __init__(self, message: str = 'An internal error occurred.', error: Optional[Exception] = None):
        super().__init__(message, error=error)


def config_error_from_validation(e: ValidationError) -> ConfigError:
    """Traduz um ValidationError do pydantic, nomeando o primeiro campo inválido."""
    first = e.errors()[0]
    key = '.'.join(str(part) for part in first.get('loc', ())) or '<root>'
    if first.get('type') == 'extra_forbidden':
        return ConfigError(f'unknown configuration key \'{key}\'', error=e, key=key)
    return ConfigError(f'invalid value for \'{key}\': {first.get("msg")}', error=e, key=key)


def handle_exception(e: Exception) -> PulsemapException:
    if isinstance(e, PulsemapException):
        return e
    if isinstance(e, ValidationError):
        return config_error_from_validation(e)
    return InternalError(error=e)
