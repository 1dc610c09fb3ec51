from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from ..errors import ParseError

PathLike = Union[str, Path]


class ImageFile:
    """Leitura e escrita de PGM (P5) / PPM (P6) de 8 bits via Pillow, linha superior primeiro."""

    @staticmethod
    def quantize(values: np.ndarray) -> np.ndarray:
        # valor = round(255·v), v em [0, 1]
        return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)

    @staticmethod
    def write(path: PathLike, values: np.ndarray) -> Path:
        """
        Grava uma imagem em [0, 1] como PGM (matriz H×W) ou PPM (H×W×3).

        Args:
            path (PathLike): Arquivo de destino; diretórios ausentes são criados.
            values (np.ndarray): Intensidades em [0, 1].

        Returns:
            Path: Caminho gravado.
        """
        if not (values.ndim == 2 or (values.ndim == 3 and values.shape[2] == 3)):
            raise ValueError(f'unsupported image shape {values.shape}')

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(ImageFile.quantize(values)).save(path, format='PPM')
        return path

    @staticmethod
    def read(path: PathLike) -> np.ndarray:
        """
        Lê um PGM/PPM de 8 bits e devolve floats em [0, 1].

        Raises:
            ParseError: Arquivo ilegível ou fora dos modos cinza/RGB de 8 bits.
        """
        try:
            with Image.open(path) as image:
                if image.mode not in ('L', 'RGB'):
                    raise ParseError(f'{path}: only 8-bit gray or RGB images are supported (mode {image.mode})')
                image.load()
                pixels = np.asarray(image, dtype=np.uint8)
        except OSError as e:
            raise ParseError(f'{path}: unreadable image file', error=e)
        return pixels.astype(np.float64) / 255.0
