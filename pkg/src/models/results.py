from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DataError


class FoldPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(ge=2)
    seed: int = 0
    assignments: Dict[str, int]

    @model_validator(mode='after')
    def check_partition(self) -> "FoldPlan":
        sizes = self.fold_sizes()
        if any(f < 0 or f >= self.k for f in self.assignments.values()):
            raise DataError('fold index out of range')
        if max(sizes) - min(sizes) > 1:
            raise DataError(f'fold sizes differ by more than one subject: {sizes}')
        return self

    def fold_sizes(self) -> List[int]:
        sizes = [0] * self.k
        for fold in self.assignments.values():
            sizes[fold] += 1
        return sizes

    def test_subjects(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignments.items() if f == fold)

    def train_subjects(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignments.items() if f != fold)


class Metrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    confusion: List[List[int]]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)


class MeanMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float
    f1: float


class FoldMetrics(Metrics):
    fold: int
    test_subjects: List[str]


class FoldReport(BaseModel):
    """Relatório de validação cruzada: métricas por fold e média."""
    model_config = ConfigDict(frozen=True)

    axis: str
    n_classes: int
    per_fold: List[FoldMetrics]
    mean: MeanMetrics

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


class LossRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    l_m: float
    l_c: float
    total: float
    lr: float

    def csv_line(self) -> str:
        return f'{self.step},{self.l_m!r},{self.l_c!r},{self.total!r},{self.lr!r}'


class PretrainResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    checkpoint_dir: Path
    trace: List[LossRow]
    final_step: int
    training_match_accuracy: Optional[float] = None
