from .._compat import StrEnum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict
from torch import nn

from ..errors import ConfigError, DataError, NumericsError
from ..models import (EncodedSequence, FinetuneBatch, MaskPlan, PatchGrid, PretrainBatch,
                      TokenModality, TokenSequence, TransformerConfig)
from ..utils import Logger
from .patch_embed import GridPositions, ModalityEmbedding, apply_mask, embed_tokens, stack_grids

logger = Logger(app_name=__name__)

PROBABILITY_CLAMP = 1e-7
INIT_STD = 0.02

PlanBatch = Union[MaskPlan, Sequence[MaskPlan]]


class LossKind(StrEnum):
    PRETRAIN = 'Pretrain'
    MAE = 'MAE'
    CONTRASTIVE = 'Contrastive'
    FINETUNE = 'Finetune'


class Attention(nn.Module):
    def __init__(self, dim: int, n_heads: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.scale = (dim // n_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.n_heads, c // self.n_heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Bloco pré-norma: x + Attn(LN(x)), depois x + MLP(LN(x)). Sem dropout."""

    def __init__(self, dim: int, n_heads: int, mlp_ratio: float = 4.0) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class UBVMT(nn.Module):
    """
    Transformer unificado visão-biossensor.

    Encoder compartilhado sobre os tokens concatenados das duas modalidades, decoder com
    tokens [MASK] e tabelas posicionais próprias por modalidade, cabeça de correspondência
    sobre o [CLS] e, opcionalmente, o classificador MLP de duas camadas do ajuste fino.

    Args:
        config (TransformerConfig): Dimensões e pesos das perdas.
        n_classes (int | None): Se informado, anexa o classificador.
    """

    def __init__(self, config: TransformerConfig, n_classes: Optional[int] = None) -> None:
        super().__init__()
        self.config = config
        d, d_dec, grid = config.d_model, config.d_decoder, config.grid_size

        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.embeddings = nn.ModuleDict({
            str(m): ModalityEmbedding(config.patch_dim, d, grid, grid) for m in TokenModality
        })
        self.blocks = nn.ModuleList(
            [Block(d, config.n_heads_enc, config.mlp_ratio) for _ in range(config.enc_layers)]
        )
        self.norm = nn.LayerNorm(d) if config.encoder_final_norm else nn.Identity()

        self.decoder_embed = nn.Linear(d, d_dec)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, d_dec))
        self.decoder_positions = nn.ModuleDict({
            str(m): GridPositions(grid, grid, d_dec) for m in TokenModality
        })
        self.decoder_blocks = nn.ModuleList(
            [Block(d_dec, config.n_heads_dec, config.mlp_ratio) for _ in range(config.dec_layers)]
        )
        self.decoder_norm = nn.LayerNorm(d_dec)
        self.decoder_pred = nn.Linear(d_dec, config.patch_dim)

        self.matching_head = nn.Linear(d, 1)
        self.classifier: Optional[nn.Sequential] = None
        self.n_classes: Optional[int] = None

        initialize_weights(self, config.init_seed)
        if n_classes is not None:
            self.attach_classifier(n_classes, seed=config.init_seed + 1)

    def attach_classifier(self, n_classes: int, seed: int = 1) -> None:
        """Anexa (ou substitui) o MLP Linear → GELU → Linear sobre o [CLS]."""
        if n_classes < 2:
            raise ConfigError(f'classifier needs at least 2 classes, got {n_classes}')
        hidden = self.config.hidden_classifier
        self.classifier = nn.Sequential(
            nn.Linear(self.config.d_model, hidden),
            nn.GELU(),
            nn.Linear(hidden, n_classes),
        ).to(self.cls_token.dtype)
        self.n_classes = n_classes
        initialize_weights(self.classifier, seed)

    def encoder_parameters(self) -> List[Tuple[str, nn.Parameter]]:
        prefixes = ('cls_token', 'embeddings.', 'blocks.', 'norm.')
        return [(n, p) for n, p in self.named_parameters() if n.startswith(prefixes)]

    def freeze_encoder(self, frozen: bool = True) -> None:
        for _, parameter in self.encoder_parameters():
            parameter.requires_grad_(not frozen)

    def forward(self,
                loss_kind: LossKind,
                batch: Union[PretrainBatch, FinetuneBatch],
                config: Optional[TransformerConfig] = None) -> Dict[str, torch.Tensor]:
        return objective(self, LossKind(loss_kind), batch, config or self.config)


def initialize_weights(module: nn.Module, seed: int) -> None:
    """
    Inicialização semeada: normal truncada (σ = 0.02, ±2σ) para pesos, tabelas e tokens;
    zeros para vieses; LayerNorm com ganho 1 e deslocamento 0.
    """
    generator = torch.Generator().manual_seed(seed)
    norm_params = set()
    for sub in module.modules():
        if isinstance(sub, nn.LayerNorm):
            norm_params.add(id(sub.weight))
            norm_params.add(id(sub.bias))
            with torch.no_grad():
                sub.weight.fill_(1.0)
                sub.bias.zero_()

    with torch.no_grad():
        for name, parameter in module.named_parameters():
            if id(parameter) in norm_params:
                continue
            if name.endswith('bias'):
                parameter.zero_()
            else:
                nn.init.trunc_normal_(parameter, mean=0.0, std=INIT_STD,
                                      a=-2 * INIT_STD, b=2 * INIT_STD, generator=generator)


def param_manifest(params: nn.Module) -> List[Tuple[str, Tuple[int, ...]]]:
    """Nome e forma de cada tensor treinável, na ordem de registro."""
    return [(name, tuple(p.shape)) for name, p in params.named_parameters()]


def encoder_forward(face_visible: Optional[TokenSequence],
                    bio_visible: TokenSequence,
                    params: UBVMT,
                    config: Optional[TransformerConfig] = None) -> EncodedSequence:
    """
    Encoder compartilhado sobre [CLS] + tokens de face + tokens de biossensor.

    O [CLS] vem da primeira sequência informada; o [CLS] do biossensor é descartado quando
    há face. Com `face_visible=None` o encoder opera só sobre o biossensor.

    Raises:
        ConfigError: Dimensão dos tokens diferente de d_model.
    """
    config = config or params.config
    sequences = [s for s in (face_visible, bio_visible) if s is not None]
    for seq in sequences:
        if seq.tokens.shape[-1] != config.d_model:
            raise ConfigError(f'{seq.modality} tokens have width {seq.tokens.shape[-1]}, '
                              f'encoder expects d_model={config.d_model}')
    if face_visible is not None and face_visible.tokens.shape[0] != bio_visible.tokens.shape[0]:
        raise DataError('face and biosensor batches differ in size')

    first = sequences[0]
    if first.has_cls:
        cls = first.tokens[:, :1]
    else:
        cls = params.cls_token.expand(first.tokens.shape[0], 1, -1)

    parts = [cls]
    cursor = 1
    face_span = (1, 1)
    if face_visible is not None:
        face_patches = face_visible.patch_tokens
        parts.append(face_patches)
        face_span = (cursor, cursor + face_patches.shape[1])
        cursor = face_span[1]
    bio_patches = bio_visible.patch_tokens
    parts.append(bio_patches)
    bio_span = (cursor, cursor + bio_patches.shape[1])

    x = torch.cat(parts, dim=1)
    for block in params.blocks:
        x = block(x)
    x = params.norm(x)

    return EncodedSequence(
        hidden=x,
        face_span=face_span,
        bio_span=bio_span,
        face_positions=face_visible.patch_positions if face_visible is not None else None,
        bio_positions=bio_visible.patch_positions,
    )


def _as_plan_list(plans: PlanBatch, batch: int) -> List[MaskPlan]:
    if isinstance(plans, MaskPlan):
        return [plans] * batch
    plans = list(plans)
    if len(plans) != batch:
        raise DataError(f'{len(plans)} mask plans for a batch of {batch}')
    return plans


def assemble_decoder_input(encoded_visible: torch.Tensor,
                           plans: PlanBatch,
                           modality: TokenModality,
                           params: UBVMT,
                           positions: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Reconstrói a sequência completa do decoder para uma modalidade.

    Slots visíveis recebem a projeção d_model → d_decoder da saída do encoder; slots
    mascarados recebem o vetor [MASK]. As tabelas posicionais do decoder da modalidade
    são somadas a todos os slots.

    Args:
        encoded_visible (torch.Tensor): (B, n_visíveis, d_model), sem o [CLS].
        plans (MaskPlan | Sequence[MaskPlan]): Plano de cada exemplo do lote.
        modality (TokenModality): Seleciona as tabelas posicionais do decoder.
        params (UBVMT): Parâmetros do modelo.
        positions (torch.Tensor | None): position_ids dos tokens visíveis, conferidos contra o plano.

    Returns:
        torch.Tensor: (B, n_patches, d_decoder).

    Raises:
        DataError: Plano inconsistente com a grade ou com os tokens recebidos.
    """
    batch, n_visible, _ = encoded_visible.shape
    plans = _as_plan_list(plans, batch)
    table = params.decoder_positions[str(TokenModality(modality))]
    n_patches = table.grid_h * table.grid_w

    visible = []
    for plan in plans:
        if plan.n_patches != n_patches:
            raise DataError(f'mask plan covers {plan.n_patches} patches, grid has {n_patches}')
        if n_patches - plan.n_masked != n_visible:
            raise DataError(f'plan leaves {n_patches - plan.n_masked} visible patches, '
                            f'encoder returned {n_visible}')
        visible.append(list(plan.visible_indices))
    index = torch.tensor(visible, dtype=torch.long).reshape(batch, n_visible)

    if positions is not None and not torch.equal(positions.to(torch.long), index):
        raise DataError('visible token positions do not match the mask plan')

    projected = params.decoder_embed(encoded_visible)
    d_dec = projected.shape[-1]
    slots = params.mask_token.expand(batch, n_patches, d_dec)
    slots = slots.scatter(1, index[:, :, None].expand(-1, -1, d_dec), projected)
    return slots + table()[None]


def decoder_forward(decoder_tokens: torch.Tensor,
                    params: UBVMT,
                    config: Optional[TransformerConfig] = None) -> torch.Tensor:
    """Blocos do decoder, LayerNorm e cabeça linear d_decoder → patch_dim, por posição."""
    config = config or params.config
    if decoder_tokens.shape[-1] != config.d_decoder:
        raise ConfigError(f'decoder tokens have width {decoder_tokens.shape[-1]}, '
                          f'expected d_decoder={config.d_decoder}')
    x = decoder_tokens
    for block in params.decoder_blocks:
        x = block(x)
    return params.decoder_pred(params.decoder_norm(x))


def _targets(target: Union[torch.Tensor, Sequence[PatchGrid], PatchGrid], like: torch.Tensor) -> torch.Tensor:
    if isinstance(target, torch.Tensor):
        return target.to(like.dtype)
    return stack_grids(target, dtype=like.dtype)


def _masked_term(recon: torch.Tensor, target: torch.Tensor, plans: PlanBatch) -> torch.Tensor:
    if recon.dim() == 2:
        recon, target = recon[None], target[None]
    plans = _as_plan_list(plans, recon.shape[0])
    if recon.shape != target.shape:
        raise DataError(f'reconstruction {tuple(recon.shape)} and target {tuple(target.shape)} differ')
    for plan in plans:
        if plan.n_masked == 0:
            raise DataError('masked-autoencoding loss needs at least one masked patch per modality')
        if plan.n_patches != recon.shape[1]:
            raise DataError(f'mask plan covers {plan.n_patches} patches, reconstruction has {recon.shape[1]}')

    mask = torch.from_numpy(np.stack([p.mask_vector() for p in plans]))
    counts = torch.tensor([p.n_masked for p in plans], dtype=recon.dtype)
    squared = ((recon - target) ** 2).sum(dim=-1)
    per_example = torch.where(mask, squared, torch.zeros_like(squared)).sum(dim=1) / counts
    return per_example.mean()


def mae_loss(recon_face: torch.Tensor,
             recon_bio: torch.Tensor,
             target_face,
             target_bio,
             plan_face: PlanBatch,
             plan_bio: PlanBatch) -> torch.Tensor:
    """
    Perda de autocodificação mascarada, só nas posições mascaradas.

    Para cada exemplo: (1/N_m^B)·Σ ‖x^B − x̂^B‖² + (1/N_m^F)·Σ ‖x^F − x̂^F‖², com a soma
    do erro quadrático sobre o vetor do patch; média sobre o lote.

    Raises:
        DataError: Plano vazio em qualquer modalidade.
    """
    face = _masked_term(recon_face, _targets(target_face, recon_face), plan_face)
    bio = _masked_term(recon_bio, _targets(target_bio, recon_bio), plan_bio)
    return bio + face


def matching_probability(cls_hidden: torch.Tensor, params: UBVMT) -> torch.Tensor:
    """p = sigmoid(w·h + b) sobre o [CLS]."""
    return torch.sigmoid(params.matching_head(cls_hidden)).squeeze(-1)


def contrastive_loss(p, y, strict: bool = False) -> torch.Tensor:
    """
    Entropia cruzada binária com p limitado a [1e-7, 1 − 1e-7], média sobre o lote.

    Com `strict=True` só o termo positivo −y·log p é usado.
    """
    p = torch.as_tensor(p, dtype=torch.float64) if not isinstance(p, torch.Tensor) else p
    y = torch.as_tensor(y, dtype=p.dtype)
    p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    loss = -y * torch.log(p)
    if not strict:
        loss = loss - (1.0 - y) * torch.log1p(-p)
    return loss.mean()


def pretrain_loss(l_m, l_c, config: TransformerConfig):
    """λ_M·L_M + λ_C·L_C."""
    return config.lambda_m * l_m + config.lambda_c * l_c


def classifier_forward(cls_hidden: torch.Tensor, params: UBVMT, n_classes: Optional[int] = None) -> torch.Tensor:
    if params.classifier is None:
        raise ConfigError('model has no classifier head attached')
    if n_classes is not None and n_classes != params.n_classes:
        raise ConfigError(f'classifier has {params.n_classes} classes, {n_classes} requested')
    return params.classifier(cls_hidden)


def mae_reconstruct(params: UBVMT,
                    face_grids: Sequence[PatchGrid],
                    bio_grids: Sequence[PatchGrid],
                    face_plans: Sequence[MaskPlan],
                    bio_plans: Sequence[MaskPlan]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Passo MAE: mascara, codifica e reconstrói as duas modalidades."""
    face = apply_mask(embed_tokens(face_grids, TokenModality.FACE, params), face_plans)
    bio = apply_mask(embed_tokens(bio_grids, TokenModality.BIOSENSOR, params), bio_plans)
    encoded = encoder_forward(face, bio, params)

    face_in = assemble_decoder_input(encoded.face_hidden, face_plans, TokenModality.FACE,
                                     params, encoded.face_positions)
    bio_in = assemble_decoder_input(encoded.bio_hidden, bio_plans, TokenModality.BIOSENSOR,
                                    params, encoded.bio_positions)
    return decoder_forward(face_in, params), decoder_forward(bio_in, params)


def encode_pairs(params: UBVMT,
                 face_grids: Optional[Sequence[PatchGrid]],
                 bio_grids: Sequence[PatchGrid]) -> EncodedSequence:
    """Codifica sequências completas (sem máscara); face é opcional."""
    face = embed_tokens(face_grids, TokenModality.FACE, params) if face_grids is not None else None
    bio = embed_tokens(bio_grids, TokenModality.BIOSENSOR, params)
    return encoder_forward(face, bio, params)


def objective(params: UBVMT,
              loss_kind: LossKind,
              batch: Union[PretrainBatch, FinetuneBatch],
              config: TransformerConfig) -> Dict[str, torch.Tensor]:
    """Perdas nomeadas de uma passada; a chave 'total' é a que recebe o gradiente."""
    if loss_kind is LossKind.FINETUNE:
        if not isinstance(batch, FinetuneBatch):
            raise DataError('fine-tuning needs a FinetuneBatch')
        encoded = encode_pairs(params, batch.face, batch.bio)
        logits = classifier_forward(encoded.cls_hidden, params)
        labels = torch.tensor(batch.labels, dtype=torch.long)
        ce = F.cross_entropy(logits, labels)
        return {'ce': ce, 'total': ce}

    if not isinstance(batch, PretrainBatch):
        raise DataError(f'{loss_kind} loss needs a PretrainBatch')

    losses: Dict[str, torch.Tensor] = {}
    if loss_kind in (LossKind.PRETRAIN, LossKind.MAE):
        positives = batch.positives
        if not positives:
            raise DataError('masked autoencoding needs at least one aligned pair')
        recon_face, recon_bio = mae_reconstruct(params,
                                                [e.face for e in positives],
                                                [e.bio for e in positives],
                                                batch.face_plans, batch.bio_plans)
        losses['l_m'] = mae_loss(recon_face, recon_bio,
                                 [e.face for e in positives], [e.bio for e in positives],
                                 batch.face_plans, batch.bio_plans)

    if loss_kind in (LossKind.PRETRAIN, LossKind.CONTRASTIVE):
        # passada separada, sequências completas
        encoded = encode_pairs(params, [e.face for e in batch.examples], [e.bio for e in batch.examples])
        p = matching_probability(encoded.cls_hidden, params)
        y = torch.tensor(batch.labels, dtype=p.dtype)
        losses['l_c'] = contrastive_loss(p, y, strict=config.positive_term_only)
        losses['p'] = p.detach()

    if loss_kind is LossKind.PRETRAIN:
        losses['total'] = pretrain_loss(losses['l_m'], losses['l_c'], config)
    elif loss_kind is LossKind.MAE:
        losses['total'] = losses['l_m']
    else:
        losses['total'] = losses['l_c']
    return losses


class GradientStore(BaseModel):
    """Gradientes por nome de parâmetro (manifesto completo) e valores das perdas."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grads: Dict[str, torch.Tensor]
    losses: Dict[str, float]
    probabilities: Optional[torch.Tensor] = None

    @property
    def total(self) -> float:
        return self.losses['total']


def compute_gradients(loss_kind: LossKind,
                      batch: Union[PretrainBatch, FinetuneBatch],
                      params: UBVMT,
                      config: Optional[TransformerConfig] = None) -> GradientStore:
    """
    Gradiente da perda escolhida para cada tensor do manifesto.

    L_M e L_C vêm de passadas separadas e seus gradientes se somam com os pesos λ.
    Parâmetros fora do grafo (ou congelados) recebem gradiente zero.

    Raises:
        NumericsError: Perda ou gradiente não finito, com o nome do tensor.
    """
    config = config or params.config
    losses = params(LossKind(loss_kind), batch, config)

    values = {}
    for name, value in losses.items():
        if name == 'p':
            continue
        if not bool(torch.isfinite(value).all()):
            logger.error(f'non-finite {name} during {loss_kind} pass')
            raise NumericsError(name, f'non-finite loss \'{name}\' ({value.item()})')
        values[name] = float(value.item())

    named = list(params.named_parameters())
    trainable = [(n, p) for n, p in named if p.requires_grad]
    raw = torch.autograd.grad(losses['total'], [p for _, p in trainable], allow_unused=True)
    computed = {n: g for (n, _), g in zip(trainable, raw)}

    grads = {}
    for name, parameter in named:
        grad = computed.get(name)
        if grad is None:
            grad = torch.zeros_like(parameter)
        elif not bool(torch.isfinite(grad).all()):
            logger.error(f'non-finite gradient for {name}')
            raise NumericsError(name)
        grads[name] = grad.detach()

    return GradientStore(grads=grads, losses=values, probabilities=losses.get('p'))


def predict_classes(params: UBVMT, batch: FinetuneBatch) -> np.ndarray:
    """Argmax dos logits do classificador (sem gradiente)."""
    with torch.no_grad():
        encoded = encode_pairs(params, batch.face, batch.bio)
        logits = classifier_forward(encoded.cls_hidden, params)
    return logits.argmax(dim=-1).numpy()

