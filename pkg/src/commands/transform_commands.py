from pathlib import Path
from typing import Optional

import click

from ..controllers import make_map, map_to_gray, segment_to_image
from ..errors import ConfigError, handle_exception
from ..utils import ImageFile, Logger
from .common import METHODS, PREPROCESS, config_option, method_option, resolve_config, select_segment

logger = Logger(app_name=__name__)

input_option = click.option('--in', 'input_path', required=True, type=click.Path(dir_okay=False),
                            help='Arquivo de sinal (texto com cabeçalho ou CSV de duas colunas).')
format_option = click.option('--format', 'input_format', type=click.Choice(['text', 'csv']), default=None,
                             help='Formato do sinal; sem a flag, .csv é CSV e o resto é texto.')
preprocess_option = click.option('--preprocess', type=click.Choice(PREPROCESS), default='none', show_default=True,
                                 help='Cadeia de pré-processamento aplicada antes da transformação.')
segment_option = click.option('--segment-index', type=int, default=0, show_default=True,
                              help='Segmento usado quando há pré-processamento.')


@click.command('transform')
@click.option('--method', type=click.Choice(METHODS), required=True, help='Representação 2D.')
@input_option
@click.option('--out', 'output_path', required=True, type=click.Path(dir_okay=False), help='Arquivo .pgm de saída.')
@format_option
@preprocess_option
@segment_option
@config_option
def transform(method: str,
              input_path: str,
              output_path: str,
              input_format: Optional[str],
              preprocess: str,
              segment_index: int,
              config_path: Optional[str]) -> None:
    """
    Converte um sinal em mapa 2D e grava o mapa em cinza como PGM.

    O mapa é normalizado para [0, 1] por min-max e gravado na resolução nativa
    (linha 0 no topo), com valor = round(255·v).

    Exemplo:

        pulsemap transform --method scalogram --in s.txt --out m.pgm
    """
    try:
        if Path(output_path).suffix.lower() != '.pgm':
            raise ConfigError(f'transform writes PGM files, got \'{output_path}\'')
        config = resolve_config(config_path, method=method)
        segment = select_segment(input_path, input_format, preprocess, segment_index)
        tf_map = make_map(segment, config.transform_settings())
        ImageFile.write(output_path, map_to_gray(tf_map))
        logger.info(f'{method} map {tf_map.shape} written to {output_path}')
        click.echo(f'{tf_map.kind} map {tf_map.shape[0]}x{tf_map.shape[1]} -> {output_path}')
    except Exception as e:
        raise handle_exception(e)


@click.command('render')
@method_option
@input_option
@click.option('--out', 'output_path', required=True, type=click.Path(dir_okay=False),
              help='Arquivo .pgm (cinza) ou .ppm (RGB) de saída.')
@click.option('--size', type=int, default=None, help='Lado da imagem (padrão: image_size da configuração).')
@click.option('--pseudocolor', is_flag=True, default=False, help='Usa a tabela de 256 cores.')
@format_option
@preprocess_option
@segment_option
@config_option
def render(method: Optional[str],
           input_path: str,
           output_path: str,
           size: Optional[int],
           pseudocolor: bool,
           input_format: Optional[str],
           preprocess: str,
           segment_index: int,
           config_path: Optional[str]) -> None:
    """
    Renderiza um sinal como a imagem size × size consumida pelo modelo.

    Saída .pgm grava o canal cinza (só sem pseudocor); .ppm grava os três canais.

    Exemplo:

        pulsemap render --method spwvd --in s.txt --out img.ppm --size 224
    """
    try:
        suffix = Path(output_path).suffix.lower()
        if suffix not in ('.pgm', '.ppm'):
            raise ConfigError(f'render writes .pgm or .ppm files, got \'{output_path}\'')
        config = resolve_config(config_path, method=method, pseudocolor=pseudocolor or None)
        if suffix == '.pgm' and config.pseudocolor:
            raise ConfigError('pseudocolor images need a .ppm output')

        segment = select_segment(input_path, input_format, preprocess, segment_index)
        image = segment_to_image(segment, config.transform_settings(), size or config.image_size)
        values = image.values[:, :, 0] if suffix == '.pgm' else image.values
        ImageFile.write(output_path, values)
        click.echo(f'{config.method} image {image.height}x{image.width} -> {output_path}')
    except Exception as e:
        raise handle_exception(e)
