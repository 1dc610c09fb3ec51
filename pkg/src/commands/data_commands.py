import click

from ..controllers import save_dataset, synth_generate
from ..errors import handle_exception
from ..models import ClassScheme, Modality, SynthSpec
from .common import SCHEMES


@click.command('synth')
@click.option('--subjects', type=int, default=4, show_default=True, help='Número de sujeitos.')
@click.option('--per-subject', type=int, default=8, show_default=True, help='Exemplos por sujeito.')
@click.option('--seed', type=int, default=0, show_default=True, help='Semente do gerador.')
@click.option('--out', 'output_dir', required=True, type=click.Path(file_okay=False), help='Diretório de saída.')
@click.option('--image-size', type=int, default=32, show_default=True, help='Lado das imagens de face.')
@click.option('--scheme', type=click.Choice(SCHEMES), default=ClassScheme.BINARY.value, show_default=True,
              help='Esquema de classes dos rótulos.')
@click.option('--sample-rate', type=float, default=128.0, show_default=True, help='Taxa do biossinal (Hz).')
@click.option('--duration', type=float, default=5.0, show_default=True, help='Duração de cada segmento (s).')
@click.option('--noise', type=float, default=0.05, show_default=True, help='Desvio do ruído aditivo.')
def synth(subjects: int,
          per_subject: int,
          seed: int,
          output_dir: str,
          image_size: int,
          scheme: str,
          sample_rate: float,
          duration: float,
          noise: float) -> None:
    """
    Gera um conjunto sintético com estrutura dependente dos rótulos e o grava em disco.

    Layout: um diretório por sujeito com face_####.ppm, bio_####.txt e labels.csv.
    A mesma semente gera diretórios idênticos byte a byte.

    Exemplo:

        pulsemap synth --subjects 4 --per-subject 8 --seed 7 --out data/
    """
    try:
        spec = SynthSpec(n_subjects=subjects, per_subject=per_subject, class_scheme=scheme,
                         sample_rate_hz=sample_rate, duration_s=duration, image_size=image_size, noise=noise)
        examples = synth_generate(spec, seed)
        save_dataset(output_dir, examples, Modality.PPG)
        click.echo(f'{len(examples)} examples for {subjects} subjects -> {output_dir}')
    except Exception as e:
        raise handle_exception(e)
