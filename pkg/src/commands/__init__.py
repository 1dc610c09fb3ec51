import sys
from typing import Sequence

import click

from ..about import about
from ..errors import PulsemapException
from ..utils import error_line
from .data_commands import synth
from .train_commands import compare, evaluate_command, finetune, pretrain
from .transform_commands import render, transform


@click.group(name=about['name'], help=about['description'])
@click.version_option(about['version'], prog_name=about['name'])
def cli() -> None:
    pass


for command in (transform, render, synth, pretrain, finetune, evaluate_command, compare):
    cli.add_command(command)


def run_command(argv: Sequence[str]) -> int:
    """
    Executa a CLI e devolve o código de saída.

    0 em sucesso, 1 para erros de dados, configuração ou numéricos (com '<tipo>: <mensagem>'
    no stderr) e 2 para erros de uso.
    """
    try:
        result = cli.main(args=list(argv), prog_name=about['name'], standalone_mode=False)
    except click.exceptions.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        return 1
    except PulsemapException as e:
        click.echo(error_line(e.kind, e.message, sys.stderr.isatty()), err=True)
        return e.exit_code
    return result if isinstance(result, int) else 0
