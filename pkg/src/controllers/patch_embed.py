from typing import List, Sequence, Union

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError, DataError
from ..models import ImageTensor, MaskPlan, PatchGrid, TokenModality, TokenSequence

VARIANCE_FLOOR = 1e-6
CLS_POSITION = -1

GridBatch = Union[PatchGrid, Sequence[PatchGrid]]


def raw_patches(image: ImageTensor, patch_size: int) -> np.ndarray:
    """Patches em ordem de grade (linha a linha), cada um achatado com canal por último."""
    values = image.values
    height, width, channels = values.shape
    if height % patch_size or width % patch_size:
        raise DataError(f'{height}×{width} image is not divisible into {patch_size}×{patch_size} patches')
    gh, gw = height // patch_size, width // patch_size
    blocks = values.reshape(gh, patch_size, gw, patch_size, channels).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(gh * gw, patch_size * patch_size * channels)


def patchify(image: ImageTensor, patch_size: int = 16) -> PatchGrid:
    """
    Divide a imagem em patches patch_size × patch_size e padroniza cada patch.

    Args:
        image (ImageTensor): Imagem H×W×3 (224×224×3 no modelo completo).
        patch_size (int): Lado do patch (16 por padrão).

    Returns:
        PatchGrid: (H/p)·(W/p) linhas de p·p·3 valores com média zero e variância unitária
            (piso de variância 1e-6).

    Raises:
        DataError: Imagem não divisível em patches.
    """
    patches = raw_patches(image, patch_size)
    mean = patches.mean(axis=1, keepdims=True)
    var = patches.var(axis=1, keepdims=True)
    standardized = (patches - mean) / np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    grid = image.height // patch_size
    return PatchGrid(patches=standardized, grid_h=grid, grid_w=image.width // patch_size,
                     patch_size=patch_size)


def unpatchify(patches: np.ndarray, grid_h: int, grid_w: int, patch_size: int) -> np.ndarray:
    """Inverso de `raw_patches`: remonta a imagem H×W×C a partir das linhas da grade."""
    patches = np.asarray(patches, dtype=np.float64)
    channels = patches.shape[1] // (patch_size * patch_size)
    if patches.shape != (grid_h * grid_w, patch_size * patch_size * channels):
        raise DataError(f'patch matrix {patches.shape} does not match a {grid_h}×{grid_w} grid')
    blocks = patches.reshape(grid_h, grid_w, patch_size, patch_size, channels).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(grid_h * patch_size, grid_w * patch_size, channels)


class GridPositions(nn.Module):
    """Tabelas treináveis de linha e coluna somadas por célula da grade."""

    def __init__(self, grid_h: int, grid_w: int, dim: int) -> None:
        super().__init__()
        self.grid_h = grid_h
        self.grid_w = grid_w
        self.row_embed = nn.Parameter(torch.zeros(grid_h, dim))
        self.col_embed = nn.Parameter(torch.zeros(grid_w, dim))

    def forward(self) -> torch.Tensor:
        """(grid_h·grid_w, dim) com row_embed[r] + col_embed[c] em ordem de grade."""
        grid = self.row_embed[:, None, :] + self.col_embed[None, :, :]
        return grid.reshape(self.grid_h * self.grid_w, -1)


class ModalityEmbedding(nn.Module):
    """
    Projeção linear dos patches mais embeddings aditivos de linha, coluna e modalidade.

    Para o biossensor, linhas são o eixo de frequência (ou atraso) e colunas o eixo temporal.
    """

    def __init__(self, patch_dim: int, d_model: int, grid_h: int, grid_w: int) -> None:
        super().__init__()
        self.grid_h = grid_h
        self.grid_w = grid_w
        self.proj = nn.Linear(patch_dim, d_model)
        self.positions = GridPositions(grid_h, grid_w, d_model)
        self.type_embed = nn.Parameter(torch.zeros(d_model))

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        return self.proj(patches) + self.positions()[None] + self.type_embed


def stack_grids(grids: GridBatch, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Empilha grades em um tensor (B, n_patches, patch_dim)."""
    if isinstance(grids, PatchGrid):
        grids = [grids]
    if not grids:
        raise DataError('empty batch of patch grids')
    shapes = {g.patches.shape for g in grids}
    if len(shapes) != 1:
        raise DataError(f'patch grids in a batch must share one shape, got {sorted(shapes)}')
    return torch.from_numpy(np.stack([g.patches for g in grids])).to(dtype)


def embed_tokens(grids: GridBatch, modality: TokenModality, params: nn.Module) -> TokenSequence:
    """
    Transforma grades de patches em tokens com o [CLS] treinável na posição 0.

    token_i = proj(patch_i) + row_embed[r(i)] + col_embed[c(i)] + type_embed[modalidade]

    Args:
        grids (PatchGrid | Sequence[PatchGrid]): Uma grade ou um lote de grades.
        modality (TokenModality): Face ou biossensor.
        params (nn.Module): Modelo com `embeddings[modality]` e `cls_token`.

    Returns:
        TokenSequence: Tokens (B, 1 + n_patches, d_model).

    Raises:
        ConfigError: Parâmetro ausente ou com forma incompatível.
    """
    modality = TokenModality(modality)
    embeddings = getattr(params, 'embeddings', None)
    if embeddings is None or str(modality) not in embeddings:
        raise ConfigError(f'missing embedding parameters for modality \'{modality}\'')
    if getattr(params, 'cls_token', None) is None:
        raise ConfigError('missing parameter \'cls_token\'')
    embedding: ModalityEmbedding = embeddings[str(modality)]

    patches = stack_grids(grids, dtype=params.cls_token.dtype)
    batch, n_patches, patch_dim = patches.shape
    if patch_dim != embedding.proj.in_features:
        raise ConfigError(
            f'{modality} projection expects patch_dim {embedding.proj.in_features}, got {patch_dim}'
        )
    if n_patches != embedding.grid_h * embedding.grid_w:
        raise ConfigError(
            f'{modality} embeddings cover {embedding.grid_h * embedding.grid_w} patches, got {n_patches}'
        )

    tokens = embedding(patches)
    cls = params.cls_token.expand(batch, 1, -1)
    positions = torch.arange(-1, n_patches).expand(batch, -1)
    return TokenSequence(tokens=torch.cat([cls, tokens], dim=1),
                         position_ids=positions.clone(),
                         modality=modality,
                         has_cls=True,
                         grid_w=embedding.grid_w)


def masked_count(n_patches: int, ratio: float) -> int:
    # round half up
    return int(np.floor(ratio * n_patches + 0.5))


def plan_mask(n_patches: int, ratio: float, seed: int) -> MaskPlan:
    """
    Sorteia sem reposição round(ratio · n) índices de patch a mascarar.

    O [CLS] nunca entra no plano: os índices referem-se só a patches.
    """
    if not 0.0 < ratio < 1.0:
        raise DataError(f'mask ratio must lie in (0, 1), got {ratio}')
    k = masked_count(n_patches, ratio)
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(n_patches, size=k, replace=False))
    return MaskPlan(masked_indices=tuple(int(i) for i in indices), n_masked=k,
                    n_patches=n_patches, seed=seed)


def _as_plans(plans: Union[MaskPlan, Sequence[MaskPlan]], batch: int) -> List[MaskPlan]:
    if isinstance(plans, MaskPlan):
        return [plans] * batch
    plans = list(plans)
    if len(plans) != batch:
        raise DataError(f'{len(plans)} mask plans for a batch of {batch}')
    return plans


def apply_mask(tokens: TokenSequence, plans: Union[MaskPlan, Sequence[MaskPlan]]) -> TokenSequence:
    """
    Mantém apenas os tokens visíveis, na ordem original, preservando position_ids.

    Raises:
        DataError: Índice fora da grade ou planos com contagens diferentes no lote.
    """
    batch = tokens.tokens.shape[0]
    n_patches = tokens.patch_tokens.shape[1]
    plans = _as_plans(plans, batch)

    if len({p.n_masked for p in plans}) > 1:
        raise DataError('mask plans in one batch must mask the same number of patches')
    for plan in plans:
        if plan.n_patches != n_patches:
            raise DataError(f'mask plan covers {plan.n_patches} patches, sequence has {n_patches}')

    offset = 1 if tokens.has_cls else 0
    keep = [([0] if tokens.has_cls else []) + [i + offset for i in p.visible_indices] for p in plans]
    index = torch.tensor(keep, dtype=torch.long)

    visible = torch.gather(tokens.tokens, 1,
                           index[:, :, None].expand(-1, -1, tokens.tokens.shape[-1]))
    positions = torch.gather(tokens.position_ids, 1, index)
    return TokenSequence(tokens=visible, position_ids=positions, modality=tokens.modality,
                         has_cls=tokens.has_cls, grid_w=tokens.grid_w)
