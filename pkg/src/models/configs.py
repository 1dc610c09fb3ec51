from .._compat import StrEnum
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .maps import TransformMethod, TransformSettings


class ClassScheme(StrEnum):
    BINARY = 'binary'
    TERNARY = 'ternary'

    @property
    def n_classes(self) -> int:
        return 2 if self is ClassScheme.BINARY else 3


class EmotionAxis(StrEnum):
    VALENCE = 'valence'
    AROUSAL = 'arousal'


class TransformerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    d_model: int = Field(default=768, gt=0)
    enc_layers: int = Field(default=12, ge=0)
    dec_layers: int = Field(default=8, ge=0)
    d_decoder: int = Field(default=512, gt=0)
    n_heads_enc: int = Field(default=12, gt=0)
    n_heads_dec: int = Field(default=8, gt=0)
    mlp_ratio: float = Field(default=4.0, gt=0)
    image_size: int = Field(default=224, gt=0)
    patch_size: int = Field(default=16, gt=0)
    channels: int = Field(default=3, gt=0)
    mask_ratio: float = Field(default=0.75, gt=0, lt=1)
    lambda_m: float = Field(default=0.4, ge=0)
    lambda_c: float = Field(default=1.0, ge=0)
    encoder_final_norm: bool = True
    classifier_hidden: Optional[int] = Field(default=None, gt=0)
    positive_term_only: bool = False
    init_seed: int = 0

    @model_validator(mode='after')
    def check_dims(self) -> "TransformerConfig":
        if self.d_model % self.n_heads_enc:
            raise ValueError('d_model must be divisible by n_heads_enc')
        if self.d_decoder % self.n_heads_dec:
            raise ValueError('d_decoder must be divisible by n_heads_dec')
        if self.image_size % self.patch_size:
            raise ValueError('image_size must be a multiple of patch_size')
        return self

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def hidden_classifier(self) -> int:
        return self.classifier_hidden or self.d_model

    @staticmethod
    def desk() -> "TransformerConfig":
        """Configuração de bancada: 32×32 px, patches 8×8 (16 patches), d_model 64."""
        return TransformerConfig(d_model=64, enc_layers=2, dec_layers=1, d_decoder=64,
                                 n_heads_enc=4, n_heads_dec=4, image_size=32, patch_size=8)

    @staticmethod
    def from_json(json_obj: Dict[str, Any]) -> "TransformerConfig":
        return TransformerConfig.model_validate(json_obj)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    batch_size: int = Field(default=4, ge=2)
    base_lr: float = Field(default=1e-4, gt=0)
    weight_decay: float = Field(default=0.001, ge=0)
    lr_floor_ratio: float = Field(default=0.0, ge=0, le=1)
    total_steps: int = Field(default=200, ge=1)
    seed: int = 0
    fixed_masks: bool = False
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = Field(default=1e-8, gt=0)
    finetune_epochs: int = Field(default=10, ge=1)
    freeze_encoder: bool = False
    checkpoint_every: int = Field(default=50, ge=1)
    folds: int = Field(default=10, ge=2)


class SynthSpec(BaseModel):
    """Configuração do gerador de dados sintéticos."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    n_subjects: int = Field(default=4, ge=1)
    per_subject: int = Field(default=8, ge=1)
    class_scheme: ClassScheme = ClassScheme.BINARY
    sample_rate_hz: float = Field(default=128.0, gt=0)
    duration_s: float = Field(default=5.0, gt=0)
    image_size: int = Field(default=32, ge=8)
    noise: float = Field(default=0.05, ge=0)


class RunConfig(BaseModel):
    """Configuração plana de uma execução da CLI (chaves desconhecidas são rejeitadas)."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    # modelo
    d_model: int = 768
    enc_layers: int = 12
    dec_layers: int = 8
    d_decoder: int = 512
    n_heads_enc: int = 12
    n_heads_dec: int = 8
    mlp_ratio: float = 4.0
    image_size: int = 224
    patch_size: int = 16
    mask_ratio: float = Field(default=0.75, gt=0, lt=1)
    lambda_m: float = Field(default=0.4, ge=0)
    lambda_c: float = Field(default=1.0, ge=0)
    classifier_hidden: Optional[int] = None
    positive_term_only: bool = False

    # treino
    batch_size: int = 4
    base_lr: float = 1e-4
    weight_decay: float = 0.001
    lr_floor_ratio: float = 0.0
    total_steps: int = 200
    seed: int = 0
    fixed_masks: bool = False
    finetune_epochs: int = 10
    freeze_encoder: bool = False
    checkpoint_every: int = 50
    folds: int = 10

    # representação 2D
    method: TransformMethod = TransformMethod.SCALOGRAM
    kaiser_beta: float = 8.6
    n_freq_bins: int = 256
    voices_per_octave: int = 10
    gamma: float = 3.0
    time_bandwidth: float = 60.0
    alpha: float = 1000.0
    pseudocolor: bool = False

    # caminhos
    data_dir: Optional[str] = None
    checkpoint_dir: Optional[str] = None
    output: Optional[str] = None

    @model_validator(mode='after')
    def check_sections(self) -> "RunConfig":
        # valida cada seção contra os invariantes do seu módulo
        self.transformer_config()
        self.train_config()
        self.transform_settings()
        return self

    def transformer_config(self) -> TransformerConfig:
        return TransformerConfig(
            d_model=self.d_model, enc_layers=self.enc_layers, dec_layers=self.dec_layers,
            d_decoder=self.d_decoder, n_heads_enc=self.n_heads_enc, n_heads_dec=self.n_heads_dec,
            mlp_ratio=self.mlp_ratio, image_size=self.image_size, patch_size=self.patch_size,
            mask_ratio=self.mask_ratio, lambda_m=self.lambda_m, lambda_c=self.lambda_c,
            classifier_hidden=self.classifier_hidden, positive_term_only=self.positive_term_only,
            init_seed=self.seed
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, base_lr=self.base_lr, weight_decay=self.weight_decay,
            lr_floor_ratio=self.lr_floor_ratio, total_steps=self.total_steps, seed=self.seed,
            fixed_masks=self.fixed_masks,
            finetune_epochs=self.finetune_epochs, freeze_encoder=self.freeze_encoder,
            checkpoint_every=self.checkpoint_every, folds=self.folds
        )

    def transform_settings(self) -> TransformSettings:
        return TransformSettings(
            method=self.method, kaiser_beta=self.kaiser_beta, n_freq_bins=self.n_freq_bins,
            voices_per_octave=self.voices_per_octave, gamma=self.gamma,
            time_bandwidth=self.time_bandwidth, alpha=self.alpha, pseudocolor=self.pseudocolor
        )

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Aplica flags da linha de comando (valores None são ignorados; flags vencem)."""
        update = {key: value for key, value in overrides.items() if value is not None}
        return RunConfig.model_validate({**self.model_dump(), **update})

    @staticmethod
    def from_json(json_obj: Dict[str, Any]) -> "RunConfig":
        return RunConfig.model_validate(json_obj)
