import logging
import os
import sys

LOG_FORMAT = '%(levelname)s - %(asctime)s - %(name)s  - %(message)s'


def _configure_root() -> None:
    root = logging.getLogger()
    if getattr(root, '_pulsemap_configured', False):
        return

    log_file = os.environ.get('PULSEMAP_LOG_FILE', '')
    if log_file:
        handler: logging.Handler = logging.FileHandler(log_file, mode='a', encoding='utf-8')
    else:
        handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root._pulsemap_configured = True


class Logger:
    def __init__(self,
                 app_name: str,
                 level: int | str | None = None) -> None:
        """
        Cria um logger nomeado para um módulo do pipeline.

        Args:
            app_name (str): Nome do logger (normalmente __name__ do módulo).
            level (int | str | None): Nível mínimo. Se omitido, usa PULSEMAP_LOG_LEVEL (padrão INFO).
        """
        _configure_root()

        if level is None:
            level = os.environ.get('PULSEMAP_LOG_LEVEL', 'INFO').upper()

        self.logger = logging.getLogger(app_name)
        self.logger.setLevel(level)

    def log(self, message, level=logging.INFO):
        if self.logger.isEnabledFor(level):
            self.logger.log(level, message)

    def debug(self, message):
        self.log(message, logging.DEBUG)

    def info(self, message):
        self.log(message, logging.INFO)

    def warning(self, message):
        self.log(message, logging.WARNING)

    def error(self, message):
        self.log(message, logging.ERROR)

    def critical(self, message):
        self.log(message, logging.CRITICAL)
