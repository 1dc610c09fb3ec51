import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score
from sklearn.model_selection import KFold

from ..errors import ConfigError, DataError, NumericsError
from ..models import (ClassScheme, EmotionAxis, FinetuneBatch, FoldMetrics, FoldPlan, FoldReport,
                      LossRow, MatchExample, MeanMetrics, Metrics, NormalizationParams,
                      PreparedExample, PretrainBatch, PretrainResult, RawExample, TrainConfig,
                      TransformerConfig, TransformMethod, TransformSettings)
from ..utils import Logger, preprocessing_threads
from .checkpoints import load_checkpoint, restore_optimizer, save_checkpoint
from .patch_embed import patchify, plan_mask
from .signal_core import fit_personal_params, normalize_personal
from .transform2d import make_map, pseudocolor_palette, render_image, resize_image
from .ubvmt_model import (UBVMT, LossKind, compute_gradients, encode_pairs, matching_probability,
                          predict_classes)

logger = Logger(app_name=__name__)

PathLike = Union[str, Path]

LOSS_TRACE = 'loss_trace.csv'
LOSS_TRACE_HEADER = 'step,l_m,l_c,total,lr'


def lr_schedule(step: int, total_steps: int, base_lr: float, floor_ratio: float = 0.0) -> float:
    """
    Cosseno de base_lr até floor_ratio·base_lr.

    lr = base_lr × (floor + (1 − floor) × 0.5 × (1 + cos(π·step/total))).
    """
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise DataError(f'step {step} outside [0, {total_steps}]')
    cosine = 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return base_lr * (floor_ratio + (1.0 - floor_ratio) * cosine)


def decays(name: str, parameter: torch.Tensor) -> bool:
    # vieses, normas, tokens e vetores de modalidade ficam sem decaimento
    return parameter.ndim > 1 and not name.endswith(('bias', '_token')) and 'norm' not in name


def build_optimizer(model: UBVMT, train: TrainConfig) -> torch.optim.AdamW:
    """Adam com decaimento de peso desacoplado só nos tensores de peso."""
    decay, no_decay = [], []
    for name, parameter in model.named_parameters():
        (decay if decays(name, parameter) else no_decay).append(parameter)
    groups = [
        {'params': decay, 'weight_decay': train.weight_decay},
        {'params': no_decay, 'weight_decay': 0.0},
    ]
    return torch.optim.AdamW(groups, lr=train.base_lr, betas=tuple(train.betas),
                             eps=train.epsilon, foreach=False)


def adam_update(model: UBVMT,
                grads: Dict[str, torch.Tensor],
                optimizer: torch.optim.Optimizer,
                lr: float) -> None:
    """
    Um passo de Adam com correção de viés sobre os parâmetros treináveis.

    Raises:
        NumericsError: Gradiente não finito.
        DataError: Gradiente ausente para um parâmetro do manifesto.
    """
    for name, parameter in model.named_parameters():
        if not parameter.requires_grad:
            parameter.grad = None
            continue
        if name not in grads:
            raise DataError(f'gradient store has no entry for \'{name}\'')
        grad = grads[name]
        if not bool(torch.isfinite(grad).all()):
            raise NumericsError(name)
        parameter.grad = grad.detach().clone().to(parameter.dtype)

    for group in optimizer.param_groups:
        group['lr'] = lr
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)


def step_seed(seed: int, step: int) -> int:
    """Semente derivada de (seed, step); retomar no passo s reproduz a mesma sequência."""
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def make_pretrain_batch(dataset: Sequence[PreparedExample],
                        batch_size: int,
                        seed: int,
                        mask_ratio: float = 0.75,
                        mask_seed: Optional[int] = None) -> PretrainBatch:
    """
    Monta um lote de pré-treino com metade de pares alinhados e metade trocados.

    Cada negativo substitui a face por outra sorteada de um exemplo diferente. Os planos
    de máscara são sorteados de forma independente por modalidade, para cada positivo.
    Com `mask_seed`, o plano de cada exemplo depende só de (mask_seed, índice, modalidade)
    e se repete em todos os passos.

    Raises:
        DataError: Conjunto menor que o lote ou lote ímpar.
    """
    if batch_size < 2 or batch_size % 2:
        raise DataError(f'batch_size must be even and >= 2, got {batch_size}')
    n = len(dataset)
    if n < batch_size:
        raise DataError(f'dataset of {n} examples cannot fill a batch of {batch_size}')

    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=batch_size, replace=False)
    half = batch_size // 2

    examples = []
    for source in chosen[:half].tolist():
        item = dataset[source]
        examples.append(MatchExample(face=item.face, bio=item.bio, y=1,
                                     face_source=source, bio_source=source))
    for source in chosen[half:].tolist():
        other = int(rng.integers(n - 1))
        if other >= source:
            other += 1
        examples.append(MatchExample(face=dataset[other].face, bio=dataset[source].bio, y=0,
                                     face_source=other, bio_source=source))

    face_plans, bio_plans = [], []
    for example in examples[:half]:
        if mask_seed is None:
            face_seed, bio_seed = int(rng.integers(2 ** 31)), int(rng.integers(2 ** 31))
        else:
            face_seed, bio_seed = (int(s) for s in
                                   np.random.SeedSequence([mask_seed, example.bio_source]).generate_state(2))
        face_plans.append(plan_mask(example.face.n_patches, mask_ratio, face_seed))
        bio_plans.append(plan_mask(example.bio.n_patches, mask_ratio, bio_seed))
    return PretrainBatch(examples=examples, face_plans=face_plans, bio_plans=bio_plans)


def kfold_split(subject_ids: Iterable[str], k: int, seed: int) -> FoldPlan:
    """
    Partição embaralhada e determinística dos sujeitos em k folds.

    Raises:
        ConfigError: k < 2 ou k maior que o número de sujeitos.
    """
    subjects = sorted(set(subject_ids))
    if k < 2 or k > len(subjects):
        raise ConfigError(f'cannot split {len(subjects)} subjects into {k} folds')

    assignments = {}
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    for fold, (_, test) in enumerate(splitter.split(subjects)):
        for index in test:
            assignments[subjects[index]] = fold
    return FoldPlan(k=k, seed=seed, assignments=assignments)


def metrics_from_predictions(labels: Sequence[int], predictions: Sequence[int], n_classes: int) -> Metrics:
    """Acurácia, F1 macro e matriz de confusão (linhas = classe verdadeira)."""
    if len(labels) == 0:
        raise DataError('cannot compute metrics on an empty set')
    classes = list(range(n_classes))
    return Metrics(
        accuracy=float(accuracy_score(labels, predictions)),
        f1=float(f1_score(labels, predictions, labels=classes, average='macro', zero_division=0)),
        confusion=confusion_matrix(labels, predictions, labels=classes).tolist(),
    )


def _chunks(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def finetune_batch(examples: Sequence[PreparedExample], axis: EmotionAxis, use_face: bool = True) -> FinetuneBatch:
    return FinetuneBatch(face=[e.face for e in examples] if use_face else None,
                         bio=[e.bio for e in examples],
                         labels=[e.label(axis) for e in examples])


def evaluate(model: UBVMT,
             examples: Sequence[PreparedExample],
             n_classes: int,
             axis: EmotionAxis = EmotionAxis.AROUSAL,
             use_face: bool = True,
             batch_size: int = 16) -> Metrics:
    """Métricas a partir do argmax do classificador."""
    if not examples:
        raise DataError('evaluation needs at least one example')
    labels, predictions = [], []
    for chunk in _chunks(list(examples), batch_size):
        batch = finetune_batch(chunk, axis, use_face)
        predictions.extend(predict_classes(model, batch).tolist())
        labels.extend(batch.labels)
    return metrics_from_predictions(labels, predictions, n_classes)


def ratings_to_classes(ratings: Iterable[float], scheme: ClassScheme) -> List[int]:
    """
    Converte notas 1–9 em classes.

    binary: nota > 5 → 1 (alta), senão 0.
    ternary: [1, 4] → 0, (4, 6] → 1, (6, 9] → 2.
    """
    classes = []
    for rating in ratings:
        rating = float(rating)
        if not 1.0 <= rating <= 9.0:
            raise DataError(f'rating {rating} outside the 1-9 scale')
        if ClassScheme(scheme) is ClassScheme.BINARY:
            classes.append(int(rating > 5.0))
        else:
            classes.append(0 if rating <= 4.0 else 1 if rating <= 6.0 else 2)
    return classes


def _prepare_one(item: Tuple[RawExample, NormalizationParams],
                 settings: TransformSettings,
                 transformer: TransformerConfig) -> PreparedExample:
    raw, params = item
    palette = pseudocolor_palette() if settings.pseudocolor else None
    segment = normalize_personal(raw.bio, params)
    bio_image = render_image(make_map(segment, settings), size=transformer.image_size, palette=palette)
    face_image = resize_image(raw.face, transformer.image_size)
    return PreparedExample(index=raw.index, subject_id=raw.subject_id,
                           face=patchify(face_image, transformer.patch_size),
                           bio=patchify(bio_image, transformer.patch_size),
                           valence=raw.valence, arousal=raw.arousal)


def prepare_examples(raw_examples: Sequence[RawExample],
                     settings: TransformSettings,
                     transformer: TransformerConfig,
                     threads: Optional[int] = None) -> List[PreparedExample]:
    """
    Normalização pessoal → mapa 2D → imagem → patches, para cada exemplo.

    O mínimo e o máximo pessoais de cada sujeito são ajustados sobre todos os exemplos
    daquele sujeito presentes em `raw_examples`, sem rótulos. Como as dobras de validação
    separam sujeitos inteiros, nenhum sujeito de teste contribui para a normalização de um
    sujeito de treino. O trabalho roda num pool de threads limitado por PULSEMAP_THREADS e
    o resultado sai na ordem de entrada.
    """
    by_subject: Dict[str, List[RawExample]] = {}
    for raw in raw_examples:
        by_subject.setdefault(raw.subject_id, []).append(raw)
    params = {s: fit_personal_params([r.bio for r in items], settings.alpha)
              for s, items in by_subject.items()}

    threads = threads or preprocessing_threads()
    work = [(raw, params[raw.subject_id]) for raw in raw_examples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        prepared = list(pool.map(lambda item: _prepare_one(item, settings, transformer), work))

    logger.info(f'prepared {len(prepared)} examples from {len(by_subject)} subjects '
                f'({settings.method}, {threads} threads)')
    return prepared


def write_loss_trace(path: PathLike, rows: Sequence[LossRow]) -> Path:
    path = Path(path)
    lines = [LOSS_TRACE_HEADER] + [row.csv_line() for row in rows]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def read_loss_trace(path: PathLike) -> List[LossRow]:
    path = Path(path)
    if not path.exists():
        return []
    rows = []
    for line in path.read_text(encoding='utf-8').splitlines()[1:]:
        if not line.strip():
            continue
        step, l_m, l_c, total, lr = line.split(',')
        rows.append(LossRow(step=int(step), l_m=float(l_m), l_c=float(l_c),
                            total=float(total), lr=float(lr)))
    return rows


def matching_accuracy(model: UBVMT, examples: Sequence[MatchExample]) -> float:
    """Fração de pares cuja probabilidade de correspondência cai do lado certo de 0.5."""
    if not examples:
        raise DataError('matching accuracy needs at least one pair')
    labels = np.array([e.y for e in examples])
    with torch.no_grad():
        encoded = encode_pairs(model, [e.face for e in examples], [e.bio for e in examples])
        p = matching_probability(encoded.cls_hidden, model).numpy()
    return float(np.mean((p > 0.5).astype(int) == labels))


def pretrain_loop(dataset: Sequence[PreparedExample],
                  transformer: TransformerConfig,
                  train: TrainConfig,
                  checkpoint_dir: PathLike,
                  resume: bool = False,
                  stop_at: Optional[int] = None) -> PretrainResult:
    """
    Pré-treino: a cada passo monta um lote, faz a passada MAE nos positivos com máscaras
    novas e a passada de correspondência no lote inteiro, combina os gradientes com os
    pesos λ e aplica Adam com a taxa do cronograma.

    Args:
        dataset (Sequence[PreparedExample]): Exemplos preparados.
        transformer (TransformerConfig): Arquitetura.
        train (TrainConfig): Otimização e semente.
        checkpoint_dir (str | Path): Diretório do checkpoint (com loss_trace.csv).
        resume (bool): Retoma do checkpoint existente, se houver.
        stop_at (int | None): Interrompe após este passo (com checkpoint gravado).

    Returns:
        PretrainResult: Caminho do checkpoint, traço de perdas e acurácia de correspondência.

    Raises:
        NumericsError: Perda ou gradiente não finito; o último checkpoint válido é mantido.
    """
    checkpoint_dir = Path(checkpoint_dir)
    model = UBVMT(transformer)
    optimizer = build_optimizer(model, train)
    start = 0
    trace: List[LossRow] = []

    if resume and (checkpoint_dir / 'manifest.json').exists():
        loaded = load_checkpoint(checkpoint_dir, transformer)
        model = loaded.model
        optimizer = build_optimizer(model, train)
        if loaded.optimizer_state:
            restore_optimizer(optimizer, model, loaded.optimizer_state)
        start = loaded.step
        trace = [row for row in read_loss_trace(checkpoint_dir / LOSS_TRACE) if row.step <= start]
        logger.info(f'resuming pretraining at step {start}')

    last = train.total_steps if stop_at is None else min(stop_at, train.total_steps)
    mask_seed = train.seed if train.fixed_masks else None
    for step in range(start + 1, last + 1):
        lr = lr_schedule(step - 1, train.total_steps, train.base_lr, train.lr_floor_ratio)
        batch = make_pretrain_batch(dataset, train.batch_size, step_seed(train.seed, step),
                                    transformer.mask_ratio, mask_seed)
        try:
            store = compute_gradients(LossKind.PRETRAIN, batch, model, transformer)
            adam_update(model, store.grads, optimizer, lr)
        except NumericsError:
            logger.error(f'pretraining aborted at step {step}; last checkpoint kept in {checkpoint_dir}')
            raise

        row = LossRow(step=step, l_m=store.losses['l_m'], l_c=store.losses['l_c'],
                      total=store.losses['total'], lr=lr)
        trace.append(row)
        logger.debug(f'step {step}: l_m={row.l_m:.5f} l_c={row.l_c:.5f} total={row.total:.5f} lr={lr:.3g}')

        if step % train.checkpoint_every == 0 or step == last:
            save_checkpoint(checkpoint_dir, model, step, optimizer)
            write_loss_trace(checkpoint_dir / LOSS_TRACE, trace)

    # lote do último passo, com os pesos finais
    final_batch = make_pretrain_batch(dataset, train.batch_size, step_seed(train.seed, last),
                                      transformer.mask_ratio, mask_seed)
    accuracy = matching_accuracy(model, final_batch.examples)
    logger.info(f'pretraining finished at step {last}; training matching accuracy {accuracy:.3f}')
    return PretrainResult(checkpoint_dir=checkpoint_dir, trace=trace, final_step=last,
                          training_match_accuracy=accuracy)


def _fold_model(transformer: TransformerConfig,
                checkpoint: Optional[PathLike],
                n_classes: int,
                seed: int) -> UBVMT:
    if checkpoint is None:
        model = UBVMT(transformer.model_copy(update={'init_seed': seed}))
    else:
        model = load_checkpoint(checkpoint, transformer).model
    model.attach_classifier(n_classes, seed=seed + 1)
    return model


def train_classifier(model: UBVMT,
                     examples: Sequence[PreparedExample],
                     axis: EmotionAxis,
                     train: TrainConfig,
                     seed: int,
                     use_face: bool = True) -> UBVMT:
    """Ajuste fino do encoder + MLP com entropia cruzada, em épocas embaralhadas."""
    if train.freeze_encoder:
        model.freeze_encoder()
    optimizer = build_optimizer(model, train)
    steps_per_epoch = math.ceil(len(examples) / train.batch_size)
    total = train.finetune_epochs * steps_per_epoch
    rng = np.random.default_rng(seed)

    step = 0
    for epoch in range(train.finetune_epochs):
        order = rng.permutation(len(examples))
        for chunk in _chunks(order.tolist(), train.batch_size):
            batch = finetune_batch([examples[i] for i in chunk], axis, use_face)
            lr = lr_schedule(step, total, train.base_lr, train.lr_floor_ratio)
            store = compute_gradients(LossKind.FINETUNE, batch, model)
            adam_update(model, store.grads, optimizer, lr)
            step += 1
        logger.debug(f'fine-tune epoch {epoch + 1}: last ce={store.losses["ce"]:.5f}')
    return model


def finetune_loop(dataset: Sequence[PreparedExample],
                  transformer: TransformerConfig,
                  train: TrainConfig,
                  axis: EmotionAxis,
                  fold_plan: FoldPlan,
                  n_classes: int,
                  checkpoint: Optional[PathLike] = None,
                  use_face: bool = True,
                  save_model_to: Optional[PathLike] = None) -> FoldReport:
    """
    Validação cruzada independente de sujeito: para cada fold, ajusta encoder + MLP nos
    sujeitos de treino e avalia nos de teste.

    Args:
        checkpoint (str | Path | None): Checkpoint pré-treinado; None treina do zero.
        use_face (bool): False usa só a representação do biossensor.
        save_model_to (str | Path | None): Grava o modelo do último fold.

    Raises:
        ConfigError: Manifesto do checkpoint incompatível com a configuração.
        DataError: Fold sem exemplos de treino ou teste.
    """
    axis = EmotionAxis(axis)
    for example in dataset:
        if example.label(axis) >= n_classes:
            raise DataError(f'label {example.label(axis)} outside {n_classes} classes')

    per_fold = []
    model = None
    for fold in range(fold_plan.k):
        test_subjects = fold_plan.test_subjects(fold)
        train_set = [e for e in dataset if e.subject_id not in test_subjects]
        test_set = [e for e in dataset if e.subject_id in test_subjects]
        if not train_set or not test_set:
            raise DataError(f'fold {fold} has an empty train or test split')

        fold_seed = step_seed(train.seed, fold)
        model = _fold_model(transformer, checkpoint, n_classes, train.seed + fold)
        model = train_classifier(model, train_set, axis, train, fold_seed, use_face)
        metrics = evaluate(model, test_set, n_classes, axis, use_face)
        per_fold.append(FoldMetrics(fold=fold, test_subjects=test_subjects, **metrics.model_dump()))
        logger.info(f'fold {fold}: accuracy {metrics.accuracy:.3f}, macro-F1 {metrics.f1:.3f}')

    mean = MeanMetrics(accuracy=float(np.mean([m.accuracy for m in per_fold])),
                       f1=float(np.mean([m.f1 for m in per_fold])))
    if save_model_to is not None and model is not None:
        save_checkpoint(save_model_to, model)
    return FoldReport(axis=str(axis), n_classes=n_classes, per_fold=per_fold, mean=mean)


def compare_representations(raw_examples: Sequence[RawExample],
                            settings: TransformSettings,
                            transformer: TransformerConfig,
                            train: TrainConfig,
                            axis: EmotionAxis,
                            fold_plan: FoldPlan,
                            n_classes: int,
                            methods: Sequence[TransformMethod] = tuple(TransformMethod)) -> Dict[str, MeanMetrics]:
    """Ajuste fino unimodal (só biossensor) para cada representação 2D, nos mesmos folds."""
    results = {}
    for method in methods:
        prepared = prepare_examples(raw_examples, settings.model_copy(update={'method': method}), transformer)
        report = finetune_loop(prepared, transformer, train, axis, fold_plan, n_classes, use_face=False)
        results[str(method)] = report.mean
        logger.info(f'{method}: mean accuracy {report.mean.accuracy:.3f}, mean F1 {report.mean.f1:.3f}')
    return results
