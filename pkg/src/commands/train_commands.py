import json
from pathlib import Path
from typing import Optional, Tuple

import click

from ..controllers import (compare_representations, evaluate, finetune_loop, kfold_split, load_checkpoint,
                           pretrain_loop)
from ..errors import ConfigError, handle_exception
from ..models import ClassScheme, EmotionAxis, TransformMethod
from ..utils import Logger
from .common import (AXES, METHODS, config_option, data_option, load_prepared, load_raw, method_option,
                     ratings_option, resolve_config, scheme_option, seed_option)

logger = Logger(app_name=__name__)

METRICS_FILE = 'metrics.json'
MODEL_DIR = 'model'

axis_option = click.option('--axis', type=click.Choice(AXES), default=EmotionAxis.AROUSAL.value, show_default=True,
                           help='Eixo emocional a classificar.')
unimodal_option = click.option('--unimodal', is_flag=True, default=False,
                               help='Classifica só com a representação do biossensor.')


@click.command('pretrain')
@data_option
@click.option('--checkpoint', 'checkpoint_dir', type=click.Path(file_okay=False), default=None,
              help='Diretório do checkpoint (com loss_trace.csv).')
@click.option('--steps', type=int, default=None, help='Total de passos do cronograma.')
@click.option('--batch-size', type=int, default=None, help='Tamanho do lote (par).')
@click.option('--lr', 'base_lr', type=float, default=None, help='Taxa de aprendizado base.')
@click.option('--resume', is_flag=True, default=False, help='Retoma do checkpoint existente.')
@click.option('--stop-at', type=int, default=None, help='Interrompe após este passo.')
@click.option('--fixed-masks', is_flag=True, default=False, help='Mantém um plano de máscara fixo por exemplo.')
@seed_option
@method_option
@scheme_option
@ratings_option
@config_option
def pretrain(data_dir: Optional[str],
             checkpoint_dir: Optional[str],
             steps: Optional[int],
             batch_size: Optional[int],
             base_lr: Optional[float],
             resume: bool,
             stop_at: Optional[int],
             fixed_masks: bool,
             seed: Optional[int],
             method: Optional[str],
             scheme: str,
             ratings: bool,
             config_path: Optional[str]) -> None:
    """
    Pré-treina o transformer com MAE nos pares alinhados e correspondência contrastiva.

    Grava checkpoints periódicos e o traço de perdas (step,l_m,l_c,total,lr) no
    diretório do checkpoint.

    Exemplo:

        pulsemap pretrain --config configs/desk.json --data data/ --checkpoint ckpt/
    """
    try:
        config = resolve_config(config_path, data_dir=data_dir, checkpoint_dir=checkpoint_dir,
                                total_steps=steps, batch_size=batch_size, base_lr=base_lr,
                                seed=seed, method=method, fixed_masks=fixed_masks or None)
        if not config.checkpoint_dir:
            raise ConfigError('no checkpoint directory given (use --checkpoint or checkpoint_dir in the config)')

        dataset = load_prepared(config, scheme, ratings)
        result = pretrain_loop(dataset, config.transformer_config(), config.train_config(),
                               config.checkpoint_dir, resume=resume, stop_at=stop_at)
        final = result.trace[-1] if result.trace else None
        if final is not None:
            click.echo(f'step {result.final_step}: l_m={final.l_m:.6f} l_c={final.l_c:.6f} total={final.total:.6f}')
        click.echo(f'training matching accuracy {result.training_match_accuracy:.3f} -> {result.checkpoint_dir}')
    except Exception as e:
        raise handle_exception(e)


@click.command('finetune')
@data_option
@axis_option
@click.option('--out', 'output_dir', required=True, type=click.Path(file_okay=False),
              help='Diretório com metrics.json e o modelo do último fold.')
@click.option('--checkpoint', type=click.Path(file_okay=False), default=None,
              help='Checkpoint pré-treinado; sem ele o encoder parte do zero.')
@click.option('--folds', type=int, default=None, help='Número de folds por sujeito.')
@click.option('--epochs', 'finetune_epochs', type=int, default=None, help='Épocas por fold.')
@click.option('--lr', 'base_lr', type=float, default=None, help='Taxa de aprendizado base.')
@click.option('--freeze-encoder', is_flag=True, default=False, help='Treina só o classificador.')
@unimodal_option
@seed_option
@method_option
@scheme_option
@ratings_option
@config_option
def finetune(data_dir: Optional[str],
             axis: str,
             output_dir: str,
             checkpoint: Optional[str],
             folds: Optional[int],
             finetune_epochs: Optional[int],
             base_lr: Optional[float],
             freeze_encoder: bool,
             unimodal: bool,
             seed: Optional[int],
             method: Optional[str],
             scheme: str,
             ratings: bool,
             config_path: Optional[str]) -> None:
    """
    Ajusta encoder + MLP com validação cruzada independente de sujeito.

    Grava `metrics.json` ({per_fold, mean}, matrizes de confusão como listas de inteiros)
    e o modelo do último fold em `<out>/model`.

    Exemplo:

        pulsemap finetune --config configs/desk.json --data data/ --axis valence --out run/
    """
    try:
        config = resolve_config(config_path, data_dir=data_dir, folds=folds, finetune_epochs=finetune_epochs,
                                base_lr=base_lr, freeze_encoder=freeze_encoder or None, seed=seed, method=method)
        output = Path(output_dir)
        output.mkdir(parents=True, exist_ok=True)

        dataset = load_prepared(config, scheme, ratings)
        plan = kfold_split([e.subject_id for e in dataset], config.folds, config.seed)
        report = finetune_loop(dataset, config.transformer_config(), config.train_config(), EmotionAxis(axis),
                               plan, ClassScheme(scheme).n_classes, checkpoint=checkpoint,
                               use_face=not unimodal, save_model_to=output / MODEL_DIR)
        (output / METRICS_FILE).write_text(report.to_json(), encoding='utf-8')
        click.echo(f'{axis}: mean accuracy {report.mean.accuracy:.4f}, mean F1 {report.mean.f1:.4f} '
                   f'-> {output / METRICS_FILE}')
    except Exception as e:
        raise handle_exception(e)


@click.command('eval')
@data_option
@click.option('--checkpoint', required=True, type=click.Path(file_okay=False),
              help='Checkpoint com classificador (por exemplo <out>/model de finetune).')
@axis_option
@click.option('--out', 'output_path', type=click.Path(dir_okay=False), default=None,
              help='Arquivo JSON para as métricas.')
@unimodal_option
@method_option
@scheme_option
@ratings_option
@config_option
def evaluate_command(data_dir: Optional[str],
                     checkpoint: str,
                     axis: str,
                     output_path: Optional[str],
                     unimodal: bool,
                     method: Optional[str],
                     scheme: str,
                     ratings: bool,
                     config_path: Optional[str]) -> None:
    """
    Avalia um modelo ajustado em um conjunto: acurácia, F1 macro e matriz de confusão.

    A arquitetura vem do config.json do checkpoint; a configuração só define a
    representação 2D usada na preparação.

    Exemplo:

        pulsemap eval --data data/ --checkpoint run/model --axis valence
    """
    try:
        config = resolve_config(config_path, data_dir=data_dir, method=method)
        model = load_checkpoint(checkpoint).model
        if model.n_classes is None:
            raise ConfigError(f'checkpoint \'{checkpoint}\' has no classifier head')

        dataset = load_prepared(config, scheme, ratings, transformer=model.config)
        metrics = evaluate(model, dataset, model.n_classes, EmotionAxis(axis), use_face=not unimodal)
        payload = metrics.model_dump_json(indent=2)
        if output_path:
            Path(output_path).write_text(payload, encoding='utf-8')
        click.echo(payload)
    except Exception as e:
        raise handle_exception(e)


@click.command('compare')
@data_option
@axis_option
@click.option('--methods', 'methods', multiple=True, type=click.Choice(METHODS),
              help='Representações a comparar (repetível; padrão: todas).')
@click.option('--folds', type=int, default=None, help='Número de folds por sujeito.')
@click.option('--epochs', 'finetune_epochs', type=int, default=None, help='Épocas por fold.')
@click.option('--out', 'output_path', type=click.Path(dir_okay=False), default=None,
              help='Arquivo JSON com as médias por representação.')
@seed_option
@scheme_option
@ratings_option
@config_option
def compare(data_dir: Optional[str],
            axis: str,
            methods: Tuple[str, ...],
            folds: Optional[int],
            finetune_epochs: Optional[int],
            output_path: Optional[str],
            seed: Optional[int],
            scheme: str,
            ratings: bool,
            config_path: Optional[str]) -> None:
    """
    Compara as representações 2D com ajuste fino unimodal nos mesmos folds.

    Exemplo:

        pulsemap compare --config configs/desk.json --data data/ --methods toeplitz --methods scalogram
    """
    try:
        config = resolve_config(config_path, data_dir=data_dir, folds=folds, finetune_epochs=finetune_epochs,
                                seed=seed)
        raw = load_raw(config, scheme, ratings)
        plan = kfold_split([e.subject_id for e in raw], config.folds, config.seed)
        chosen = [TransformMethod(m) for m in methods] or list(TransformMethod)
        results = compare_representations(raw, config.transform_settings(), config.transformer_config(),
                                          config.train_config(), EmotionAxis(axis), plan,
                                          ClassScheme(scheme).n_classes, chosen)
        payload = json.dumps({name: mean.model_dump() for name, mean in results.items()}, indent=2)
        if output_path:
            Path(output_path).write_text(payload, encoding='utf-8')
        click.echo(payload)
    except Exception as e:
        raise handle_exception(e)
