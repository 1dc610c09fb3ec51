import json
import os
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, ValidationError

from ..errors import ConfigError, DataError
from ..models import TransformerConfig
from ..utils import Logger
from .ubvmt_model import UBVMT, param_manifest

logger = Logger(app_name=__name__)

PathLike = Union[str, Path]

MANIFEST = 'manifest.json'
WEIGHTS = 'weights.bin'
CONFIG = 'config.json'
TRAINER_STATE = 'trainer_state.json'
OPTIMIZER_MANIFEST = 'optimizer.json'
OPTIMIZER_WEIGHTS = 'optimizer.bin'
ADAM_SLOTS = ('step', 'exp_avg', 'exp_avg_sq')


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    name: str
    shape: List[int]
    dtype: str = 'f32'
    byte_offset: int


class LoadedCheckpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: UBVMT
    step: int = 0
    optimizer_state: Optional[Dict[str, np.ndarray]] = None


def write_tensors(directory: Path, manifest_name: str, bin_name: str,
                  tensors: List[Tuple[str, np.ndarray]]) -> None:
    """Grava tensores contíguos em little-endian f32, na ordem do manifesto."""
    entries = []
    offset = 0
    with (directory / bin_name).open('wb') as handle:
        for name, values in tensors:
            data = np.ascontiguousarray(values, dtype='<f4')
            entries.append(ManifestEntry(name=name, shape=list(data.shape), byte_offset=offset))
            handle.write(data.tobytes())
            offset += data.nbytes
    manifest = [entry.model_dump() for entry in entries]
    (directory / manifest_name).write_text(json.dumps(manifest, indent=2), encoding='utf-8')


def read_tensors(directory: Path, manifest_name: str, bin_name: str) -> Dict[str, np.ndarray]:
    """
    Lê um par manifesto/binário.

    Raises:
        ConfigError: Manifesto ausente, malformado, com nomes repetidos ou fora do binário.
    """
    try:
        raw = json.loads((directory / manifest_name).read_text(encoding='utf-8'))
        entries = [ManifestEntry.model_validate(item) for item in raw]
        blob = (directory / bin_name).read_bytes()
    except FileNotFoundError as e:
        raise ConfigError(f'checkpoint file missing in {directory}: {e.filename}', error=e)
    except (json.JSONDecodeError, ValidationError, TypeError) as e:
        raise ConfigError(f'malformed {manifest_name} in {directory}', error=e)

    tensors: Dict[str, np.ndarray] = {}
    for entry in entries:
        if entry.dtype != 'f32':
            raise ConfigError(f'unsupported dtype \'{entry.dtype}\' for \'{entry.name}\'')
        if entry.name in tensors:
            raise ConfigError(f'duplicate tensor \'{entry.name}\' in {manifest_name}')
        count = int(np.prod(entry.shape, dtype=np.int64))
        stop = entry.byte_offset + 4 * count
        if entry.byte_offset < 0 or stop > len(blob):
            raise ConfigError(f'tensor \'{entry.name}\' lies outside {bin_name}')
        values = np.frombuffer(blob, dtype='<f4', count=count, offset=entry.byte_offset)
        tensors[entry.name] = values.reshape(entry.shape).astype(np.float32)
    return tensors


def optimizer_tensors(model: UBVMT, optimizer: torch.optim.Optimizer) -> List[Tuple[str, np.ndarray]]:
    tensors = []
    for name, parameter in model.named_parameters():
        state = optimizer.state.get(parameter)
        if not state:
            continue
        for slot in ADAM_SLOTS:
            value = state[slot]
            value = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
            tensors.append((f'{name}:{slot}', value))
    return tensors


def save_checkpoint(directory: PathLike,
                    model: UBVMT,
                    step: int = 0,
                    optimizer: Optional[torch.optim.Optimizer] = None) -> Path:
    """
    Grava o checkpoint (manifest.json + weights.bin, config, passo e estado do otimizador).

    A escrita é feita num diretório temporário e depois trocada, então o último
    checkpoint válido continua no lugar se algo falhar no meio.
    """
    directory = Path(directory)
    staging = directory.with_name(directory.name + '.tmp')
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)

    tensors = [(name, p.detach().cpu().numpy()) for name, p in model.named_parameters()]
    write_tensors(staging, MANIFEST, WEIGHTS, tensors)
    config = {'transformer': model.config.model_dump(), 'n_classes': model.n_classes}
    (staging / CONFIG).write_text(json.dumps(config, indent=2), encoding='utf-8')
    (staging / TRAINER_STATE).write_text(json.dumps({'step': step}), encoding='utf-8')
    if optimizer is not None:
        write_tensors(staging, OPTIMIZER_MANIFEST, OPTIMIZER_WEIGHTS, optimizer_tensors(model, optimizer))

    if directory.exists():
        shutil.rmtree(directory)
    os.replace(staging, directory)
    logger.info(f'checkpoint written to {directory} (step {step})')
    return directory


def load_checkpoint(directory: PathLike, config: Optional[TransformerConfig] = None) -> LoadedCheckpoint:
    """
    Carrega um checkpoint validando cada forma contra a configuração.

    Args:
        directory (str | Path): Diretório do checkpoint.
        config (TransformerConfig | None): Configuração esperada; sem ela usa config.json.

    Returns:
        LoadedCheckpoint: Modelo, passo e estado do otimizador (se houver).

    Raises:
        ConfigError: Manifesto incompatível com a configuração.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f'checkpoint directory \'{directory}\' not found')

    try:
        stored = json.loads((directory / CONFIG).read_text(encoding='utf-8'))
        stored_config = TransformerConfig.from_json(stored['transformer'])
        n_classes = stored.get('n_classes')
    except FileNotFoundError as e:
        raise ConfigError(f'{CONFIG} missing in {directory}', error=e)
    except (json.JSONDecodeError, KeyError, ValidationError) as e:
        raise ConfigError(f'malformed {CONFIG} in {directory}', error=e)

    model = UBVMT(config or stored_config, n_classes=n_classes)
    tensors = read_tensors(directory, MANIFEST, WEIGHTS)
    check_manifest(model, tensors)

    with torch.no_grad():
        for name, parameter in model.named_parameters():
            parameter.copy_(torch.from_numpy(tensors[name]).to(parameter.dtype))

    step = 0
    state_path = directory / TRAINER_STATE
    if state_path.exists():
        step = int(json.loads(state_path.read_text(encoding='utf-8')).get('step', 0))

    optimizer_state = None
    if (directory / OPTIMIZER_MANIFEST).exists():
        optimizer_state = read_tensors(directory, OPTIMIZER_MANIFEST, OPTIMIZER_WEIGHTS)

    logger.info(f'checkpoint loaded from {directory} (step {step})')
    return LoadedCheckpoint(model=model, step=step, optimizer_state=optimizer_state)


def check_manifest(model: UBVMT, tensors: Dict[str, np.ndarray]) -> None:
    expected = dict(param_manifest(model))
    missing = [name for name in expected if name not in tensors]
    extra = [name for name in tensors if name not in expected]
    if missing or extra:
        name = (missing or extra)[0]
        raise ConfigError(f'checkpoint manifest does not match configuration at \'{name}\'',
                          missing=missing, unexpected=extra)
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise ConfigError(
                f'checkpoint tensor \'{name}\' has shape {tuple(tensors[name].shape)}, '
                f'configuration expects {shape}'
            )


def restore_optimizer(optimizer: torch.optim.Optimizer, model: UBVMT, state: Dict[str, np.ndarray]) -> None:
    """Reinstala os momentos de Adam gravados por `save_checkpoint`."""
    for name, parameter in model.named_parameters():
        slots = {slot: state.get(f'{name}:{slot}') for slot in ADAM_SLOTS}
        if all(v is None for v in slots.values()):
            continue
        if any(v is None for v in slots.values()):
            raise DataError(f'incomplete optimizer state for \'{name}\'')
        optimizer.state[parameter] = {
            'step': torch.tensor(float(slots['step'])),
            'exp_avg': torch.from_numpy(slots['exp_avg'].copy()).to(parameter.dtype),
            'exp_avg_sq': torch.from_numpy(slots['exp_avg_sq'].copy()).to(parameter.dtype),
        }
