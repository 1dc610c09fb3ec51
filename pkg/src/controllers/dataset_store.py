import csv
from pathlib import Path
from typing import List, Optional, Sequence, Union

from ..errors import DataError, ParseError
from ..models import ClassScheme, ImageTensor, Modality, RawExample, Segment
from ..utils import ImageFile, Logger
from .signal_core import SignalFormat, load_signal, save_signal
from .train_harness import ratings_to_classes

logger = Logger(app_name=__name__)

PathLike = Union[str, Path]

LABELS = 'labels.csv'
LABEL_FIELDS = ['index', 'valence', 'arousal']


def face_name(index: int) -> str:
    return f'face_{index:04d}.ppm'


def bio_name(index: int) -> str:
    return f'bio_{index:04d}.txt'


def save_dataset(directory: PathLike, examples: Sequence[RawExample], modality: Modality = Modality.PPG) -> Path:
    """
    Grava o conjunto no layout em disco: um diretório por sujeito com pares
    face_####.ppm / bio_####.txt e labels.csv (index,valence,arousal).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    by_subject = {}
    for example in examples:
        by_subject.setdefault(example.subject_id, []).append(example)

    for subject_id, items in by_subject.items():
        subject_dir = directory / subject_id
        subject_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for local, example in enumerate(items):
            ImageFile.write(subject_dir / face_name(local), example.face.values)
            save_signal(subject_dir / bio_name(local), example.bio, modality)
            rows.append({'index': local, 'valence': example.valence, 'arousal': example.arousal})
        with (subject_dir / LABELS).open('w', newline='', encoding='utf-8') as handle:
            writer = csv.DictWriter(handle, fieldnames=LABEL_FIELDS, lineterminator='\n')
            writer.writeheader()
            writer.writerows(rows)

    logger.info(f'wrote {len(examples)} examples for {len(by_subject)} subjects to {directory}')
    return directory


def _label(value: str, ratings: Optional[ClassScheme], path: Path, row: int) -> int:
    try:
        if ratings is not None:
            return ratings_to_classes([float(value)], ratings)[0]
        return int(value)
    except ValueError as e:
        raise ParseError(f'{path}:{row}: invalid label \'{value}\'', error=e)


def load_dataset(directory: PathLike, ratings: Optional[ClassScheme] = None) -> List[RawExample]:
    """
    Lê um conjunto gravado por `save_dataset`, em ordem de sujeito e de índice.

    Args:
        directory (str | Path): Raiz do conjunto.
        ratings (ClassScheme | None): Se informado, labels.csv traz notas 1–9 que são
            convertidas para classes com esse esquema.

    Raises:
        DataError: Diretório vazio ou par de arquivos ausente.
        ParseError: labels.csv ou arquivos de sinal malformados.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f'dataset directory \'{directory}\' not found')

    examples = []
    for subject_dir in sorted(p for p in directory.iterdir() if (p / LABELS).is_file()):
        labels_path = subject_dir / LABELS
        with labels_path.open(encoding='utf-8', newline='') as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != LABEL_FIELDS:
                raise ParseError(f'{labels_path}: header must be {",".join(LABEL_FIELDS)}')
            rows = list(reader)

        for row_number, row in enumerate(rows, start=2):
            local = _label(row['index'], None, labels_path, row_number)
            face_path, bio_path = subject_dir / face_name(local), subject_dir / bio_name(local)
            if not face_path.is_file() or not bio_path.is_file():
                raise DataError(f'{subject_dir}: missing files for example {local}')

            signal = load_signal(bio_path, SignalFormat.HEADERED_TEXT)
            signal = signal.model_copy(update={'subject_id': subject_dir.name})
            examples.append(RawExample(
                index=len(examples),
                subject_id=subject_dir.name,
                face=ImageTensor(values=ImageFile.read(face_path)),
                bio=Segment.from_signal(signal),
                valence=_label(row['valence'], ratings, labels_path, row_number),
                arousal=_label(row['arousal'], ratings, labels_path, row_number),
            ))

    if not examples:
        raise DataError(f'no subject directories with {LABELS} under \'{directory}\'')
    logger.info(f'loaded {len(examples)} examples from {directory}')
    return examples
