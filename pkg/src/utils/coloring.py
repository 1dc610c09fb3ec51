from .._compat import StrEnum
from typing import Any


class Colors(StrEnum):
    RESET = "\033[0m"
    RED = "\033[31m"
    BOLD = "\033[1m"


class Coloring:
    def __init__(self, color: str, enabled: bool = True) -> None:
        self.color = color
        self.enabled = enabled

    def color_result(self, s: Any) -> str:
        s = str(s)
        if not self.enabled:
            return s
        return f"{self.color}{s}{Colors.RESET}"


def error_line(kind: str, message: str, enabled: bool) -> str:
    """Formata '<kind>: <message>' para o stderr da CLI, com o tipo em vermelho."""
    return f"{Coloring(Colors.RED + Colors.BOLD, enabled).color_result(kind)}: {message}"
