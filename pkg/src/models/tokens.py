from .._compat import StrEnum
from typing import List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import DataError
from .maps import ImageTensor
from .signals import Segment


class TokenModality(StrEnum):
    FACE = 'face'
    BIOSENSOR = 'bio'


class PatchGrid(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    patches: np.ndarray
    grid_h: int = Field(gt=0)
    grid_w: int = Field(gt=0)
    patch_size: int = Field(gt=0)

    @field_validator('patches', mode='before')
    @classmethod
    def check_patches(cls, value) -> np.ndarray:
        patches = np.asarray(value, dtype=np.float64)
        if patches.ndim != 2 or not np.all(np.isfinite(patches)):
            raise DataError('patch grid must be a finite 2D matrix')
        return patches

    @model_validator(mode='after')
    def check_grid(self) -> "PatchGrid":
        if self.patches.shape[0] != self.grid_h * self.grid_w:
            raise DataError(
                f'{self.patches.shape[0]} patches do not fill a {self.grid_h}×{self.grid_w} grid'
            )
        return self

    @property
    def n_patches(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def patch_dim(self) -> int:
        return int(self.patches.shape[1])


class MaskPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    masked_indices: Tuple[int, ...]
    n_masked: int = Field(ge=0)
    n_patches: int = Field(gt=0)
    seed: int

    @model_validator(mode='after')
    def check_plan(self) -> "MaskPlan":
        indices = self.masked_indices
        if len(indices) != self.n_masked:
            raise DataError(f'plan lists {len(indices)} indices but n_masked is {self.n_masked}')
        if list(indices) != sorted(set(indices)):
            raise DataError('masked indices must be sorted and unique')
        if indices and (indices[0] < 0 or indices[-1] >= self.n_patches):
            raise DataError(f'masked index out of range for {self.n_patches} patches')
        return self

    @property
    def visible_indices(self) -> Tuple[int, ...]:
        masked = set(self.masked_indices)
        return tuple(i for i in range(self.n_patches) if i not in masked)

    def mask_vector(self) -> np.ndarray:
        """Vetor booleano (n_patches,) com True nas posições mascaradas."""
        mask = np.zeros(self.n_patches, dtype=bool)
        mask[list(self.masked_indices)] = True
        return mask

    @staticmethod
    def empty(n_patches: int) -> "MaskPlan":
        return MaskPlan(masked_indices=(), n_masked=0, n_patches=n_patches, seed=0)

    @staticmethod
    def full(n_patches: int) -> "MaskPlan":
        return MaskPlan(masked_indices=tuple(range(n_patches)), n_masked=n_patches,
                        n_patches=n_patches, seed=0)


class TokenSequence(BaseModel):
    """
    Sequência de tokens de uma modalidade para um lote.

    tokens tem forma (B, n_tokens, d). position_ids tem forma (B, n_tokens) com o índice
    linear da célula da grade de cada token; o slot [CLS] usa -1.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    tokens: torch.Tensor
    position_ids: torch.Tensor
    modality: TokenModality
    has_cls: bool
    grid_w: int = Field(gt=0)

    @model_validator(mode='after')
    def check_layout(self) -> "TokenSequence":
        if self.tokens.dim() != 3:
            raise DataError(f'tokens must be (B, n, d), got {tuple(self.tokens.shape)}')
        if tuple(self.position_ids.shape) != tuple(self.tokens.shape[:2]):
            raise DataError('position_ids must match the (B, n) token layout')
        if self.has_cls and bool((self.position_ids[:, 0] != -1).any()):
            raise DataError('the [CLS] slot must sit at token 0')
        return self

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def patch_tokens(self) -> torch.Tensor:
        return self.tokens[:, 1:] if self.has_cls else self.tokens

    @property
    def patch_positions(self) -> torch.Tensor:
        return self.position_ids[:, 1:] if self.has_cls else self.position_ids

    def grid_coordinates(self) -> torch.Tensor:
        """Coordenadas (linha, coluna) de cada token; [CLS] fica em (-1, -1)."""
        rows = torch.div(self.position_ids, self.grid_w, rounding_mode='floor')
        cols = self.position_ids % self.grid_w
        coords = torch.stack([rows, cols], dim=-1)
        coords[self.position_ids < 0] = -1
        return coords


class RawExample(BaseModel):
    """Exemplo bruto: imagem de face, segmento de biossensor e rótulos de classe."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int = Field(ge=0)
    subject_id: str
    face: ImageTensor
    bio: Segment
    valence: int = Field(ge=0)
    arousal: int = Field(ge=0)

    def label(self, axis: str) -> int:
        return self.valence if axis == 'valence' else self.arousal


class PreparedExample(BaseModel):
    """Exemplo pronto para o modelo: grades de patches das duas modalidades e rótulos."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    subject_id: str
    face: PatchGrid
    bio: PatchGrid
    valence: int = Field(ge=0)
    arousal: int = Field(ge=0)

    def label(self, axis: str) -> int:
        return self.valence if axis == 'valence' else self.arousal


class MatchExample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    face: PatchGrid
    bio: PatchGrid
    y: int = Field(ge=0, le=1)
    face_source: int
    bio_source: int

    @model_validator(mode='after')
    def check_pairing(self) -> "MatchExample":
        if (self.y == 1) != (self.face_source == self.bio_source):
            raise DataError('y must be 1 exactly when face and biosensor come from the same example')
        return self


class EncodedSequence(BaseModel):
    """
    Saída do encoder: [CLS], depois os tokens de face e os de biossensor.

    face_span e bio_span são intervalos [início, fim) sobre o eixo de tokens.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    hidden: torch.Tensor
    face_span: Tuple[int, int]
    bio_span: Tuple[int, int]
    face_positions: Optional[torch.Tensor] = None
    bio_positions: torch.Tensor

    @property
    def cls_hidden(self) -> torch.Tensor:
        return self.hidden[:, 0]

    @property
    def face_hidden(self) -> torch.Tensor:
        return self.hidden[:, self.face_span[0]:self.face_span[1]]

    @property
    def bio_hidden(self) -> torch.Tensor:
        return self.hidden[:, self.bio_span[0]:self.bio_span[1]]


class PretrainBatch(BaseModel):
    """Lote de pré-treino; os planos de máscara correspondem, em ordem, aos pares positivos."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    examples: List[MatchExample]
    face_plans: List[MaskPlan]
    bio_plans: List[MaskPlan]

    @model_validator(mode='after')
    def check_plans(self) -> "PretrainBatch":
        n_positive = len(self.positives)
        if len(self.face_plans) != n_positive or len(self.bio_plans) != n_positive:
            raise DataError(f'expected one face and one biosensor plan per positive pair ({n_positive})')
        return self

    @property
    def positives(self) -> List[MatchExample]:
        return [e for e in self.examples if e.y == 1]

    @property
    def labels(self) -> List[int]:
        return [e.y for e in self.examples]


class FinetuneBatch(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    face: Optional[List[PatchGrid]] = None
    bio: List[PatchGrid]
    labels: List[int]
