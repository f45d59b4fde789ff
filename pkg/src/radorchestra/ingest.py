"""
Dataset ingestion

Manifest loading and writing, image resolution, precomputed embedding
sidecars, retrieval-database construction from the training split, and the
synthetic fixture corpus used for hermetic runs.

Manifest: JSONL of {study_id, image_path, report_text, split}. Relative
image paths resolve against the manifest's directory.

Sidecar: JSONL of {study_id, modality: "report" | "image", embedding: [...]}.
Report vectors populate the retrieval index; image vectors are the
retrieval queries of a run.
"""

import io
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import httpx
import numpy as np
from PIL import Image

from .backends.base import Backend, ImagePayload
from .backends.phrase_bank import REPORT_FAMILIES
from .common.errors import (
    DataError,
    DimensionMismatch,
    DuplicateId,
    EmptyCorpus,
    ImageUnavailable,
    IoError,
    SchemaViolation,
)
from .common.jsonl import iter_jsonl, write_jsonl
from .common.types import EmbeddingVector, ReportText, Split, Study
from .retrieval import IndexEntry, RetrievalIndex, build_index

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ("study_id", "image_path", "report_text", "split")
MODALITIES = ("report", "image")
URL_SCHEMES = ("http://", "https://")
IMAGE_FETCH_TIMEOUT_S = 30.0

FIXTURE_IMAGE_SIZE = 32
FIXTURE_DIMS = 64
FIXTURE_NOISE = 0.3
FIXTURE_MAX_FAMILIES = 4

PathLike = Union[str, Path]


def _is_url(image_ref: str) -> bool:
    return image_ref.startswith(URL_SCHEMES)


def split_counts(studies: Iterable[Study]) -> Tuple[int, int]:
    """(train, test) counts"""
    counts = Counter(study.split for study in studies)
    return counts[Split.TRAIN], counts[Split.TEST]


def _parse_study(record: Dict[str, Any], line_no: int, path: Path) -> Study:
    for key in ("study_id", "image_path", "split"):
        if key not in record:
            raise SchemaViolation(line_no, f"missing field {key!r}", path)
    study_id = record["study_id"]
    image_path = record["image_path"]
    if not isinstance(study_id, str) or not study_id:
        raise SchemaViolation(line_no, "study_id must be a non-empty string", path)
    if not isinstance(image_path, str) or not image_path:
        raise SchemaViolation(line_no, "image_path must be a non-empty string", path)
    try:
        split = Split(record["split"])
    except ValueError:
        raise SchemaViolation(line_no, f"split must be 'train' or 'test', got {record['split']!r}", path) from None

    report_text = record.get("report_text")
    if report_text is not None and not isinstance(report_text, str):
        raise SchemaViolation(line_no, "report_text must be a string", path)
    if split is Split.TRAIN and not (report_text and report_text.strip()):
        raise SchemaViolation(line_no, "train studies feed the retrieval database and need report_text", path)

    if not _is_url(image_path) and not os.path.isabs(image_path):
        image_path = str(path.parent / image_path)
    return Study(study_id=study_id, image_ref=image_path, reference_report=report_text or None, split=split)


def load_manifest(path: PathLike) -> List[Study]:
    """Load and validate a manifest; malformed lines are fatal"""
    path = Path(path)
    if not path.exists():
        raise IoError(path, FileNotFoundError("no such file"))

    studies: List[Study] = []
    seen = set()
    for line_no, record, error in iter_jsonl(path):
        if error is not None:
            raise SchemaViolation(line_no, error, path)
        assert record is not None
        study = _parse_study(record, line_no, path)
        if study.study_id in seen:
            raise DuplicateId(study.study_id, f"in {path}:{line_no}")
        seen.add(study.study_id)
        studies.append(study)

    train, test = split_counts(studies)
    logger.info(f"Loaded {len(studies)} studies from {path} (train={train}, test={test})")
    return studies


def write_manifest(path: PathLike, studies: Sequence[Study]) -> None:
    """Write studies as a manifest; image paths under its directory become relative"""
    path = Path(path)
    base = path.parent.resolve()
    records = []
    for study in studies:
        image_path = study.image_ref
        if not _is_url(image_path):
            resolved = Path(image_path).resolve()
            if resolved.is_relative_to(base):
                image_path = resolved.relative_to(base).as_posix()
        records.append(
            {
                "study_id": study.study_id,
                "image_path": image_path,
                "report_text": study.reference_report,
                "split": study.split.value,
            }
        )
    write_jsonl(path, records)


def read_image(image_ref: str, client: Optional[httpx.Client] = None) -> ImagePayload:
    """Resolve an image reference (file path or http(s) URL) to a verified payload"""
    if _is_url(image_ref):
        try:
            if client is not None:
                response = client.get(image_ref)
            else:
                response = httpx.get(image_ref, timeout=IMAGE_FETCH_TIMEOUT_S, follow_redirects=True)
            response.raise_for_status()
            data = response.content
        except httpx.HTTPError as e:
            raise ImageUnavailable(image_ref, str(e)) from e
    else:
        try:
            data = Path(image_ref).read_bytes()
        except OSError as e:
            raise ImageUnavailable(image_ref, e.strerror or str(e)) from e
    return ImagePayload.from_bytes(data)


@dataclass
class EmbeddingSidecar:
    """Precomputed vectors keyed by study_id, one map per modality"""

    reports: Dict[str, EmbeddingVector] = field(default_factory=dict)
    images: Dict[str, EmbeddingVector] = field(default_factory=dict)

    @property
    def dims(self) -> Optional[int]:
        for vector in (*self.reports.values(), *self.images.values()):
            return vector.dims
        return None

    def vectors(self, modality: str) -> Dict[str, EmbeddingVector]:
        return self.reports if modality == "report" else self.images


def read_sidecar(path: PathLike, dims: Optional[int] = None) -> EmbeddingSidecar:
    """Load a sidecar; every vector must share one dimensionality"""
    path = Path(path)
    if not path.exists():
        raise IoError(path, FileNotFoundError("no such file"))
    sidecar = EmbeddingSidecar()
    for line_no, record, error in iter_jsonl(path):
        if error is not None:
            raise SchemaViolation(line_no, error, path)
        assert record is not None
        study_id = record.get("study_id")
        modality = record.get("modality", "report")
        values = record.get("embedding")
        if not isinstance(study_id, str) or not study_id:
            raise SchemaViolation(line_no, "study_id must be a non-empty string", path)
        if modality not in MODALITIES:
            raise SchemaViolation(line_no, f"modality must be one of {list(MODALITIES)}", path)
        if not isinstance(values, list) or not values:
            raise SchemaViolation(line_no, "embedding must be a non-empty list", path)

        expected = dims if dims is not None else sidecar.dims
        if expected is not None and len(values) != expected:
            raise DimensionMismatch(expected, len(values), f"sidecar vector for study {study_id}")
        try:
            vector = EmbeddingVector.of([float(v) for v in values])
        except (TypeError, ValueError) as e:
            raise SchemaViolation(line_no, f"embedding values must be numbers: {e}", path) from e

        target = sidecar.vectors(modality)
        if study_id in target:
            raise DuplicateId(study_id, f"({modality}) in {path}:{line_no}")
        target[study_id] = vector
    logger.info(f"Loaded sidecar {path}: {len(sidecar.reports)} report, {len(sidecar.images)} image vectors")
    return sidecar


def write_sidecar(path: PathLike, sidecar: EmbeddingSidecar) -> None:
    records = []
    for modality in MODALITIES:
        for study_id, vector in sidecar.vectors(modality).items():
            records.append({"study_id": study_id, "modality": modality, "embedding": list(vector.values)})
    write_jsonl(path, records)


def build_retrieval_db(
    train_studies: Sequence[Study],
    embedding_backend: Optional[Backend] = None,
    sidecar: Optional[EmbeddingSidecar] = None,
    workers: int = 4,
) -> RetrievalIndex:
    """Index the training reports, from the sidecar when given, else by embedding"""
    if not train_studies:
        raise EmptyCorpus("no training studies to build the retrieval database from")
    for study in train_studies:
        if study.split is not Split.TRAIN:
            raise DataError(f"study {study.study_id} is in the {study.split.value} split; only train reports may enter the index")
        if not study.reference_report:
            raise DataError(f"training study {study.study_id} has no report text")
    if sidecar is None and embedding_backend is None:
        raise DataError("build_retrieval_db needs a sidecar or an embedding backend")

    if sidecar is not None:
        missing = [s.study_id for s in train_studies if s.study_id not in sidecar.reports]
        if missing:
            raise DataError(f"sidecar has no report vector for {len(missing)} studies, e.g. {missing[0]}")
        vectors = [sidecar.reports[s.study_id] for s in train_studies]
    else:
        assert embedding_backend is not None
        logger.info(f"Embedding {len(train_studies)} training reports with {embedding_backend.backend_id}")
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            vectors = list(pool.map(lambda s: embedding_backend.embed(s.reference_report), train_studies))

    dims = vectors[0].dims
    for study, vector in zip(train_studies, vectors):
        if vector.dims != dims:
            raise DimensionMismatch(dims, vector.dims, f"embedding for study {study.study_id}")

    entries = [
        IndexEntry(report_id=s.study_id, embedding=v, report=ReportText(s.reference_report or ""))
        for s, v in zip(train_studies, vectors)
    ]
    return build_index(entries)


def check_index_isolation(index: RetrievalIndex, studies: Iterable[Study]) -> None:
    """Fail if any test-split study's report is part of the index"""
    leaked = sorted(s.study_id for s in studies if s.split is Split.TEST and s.study_id in index)
    if leaked:
        raise DataError(f"test-split studies found in the retrieval index: {', '.join(leaked)}")


@dataclass(frozen=True)
class FixtureCorpus:
    directory: Path
    manifest: Path
    sidecar: Path
    studies: Tuple[Study, ...]
    families: Dict[str, str]


def _family_vector(rng: np.random.Generator, family: int, n_families: int, dims: int) -> List[float]:
    """Unit family axis plus noise of norm <= FIXTURE_NOISE outside the family axes"""
    vector = np.zeros(dims)
    vector[family] = 1.0
    noise = rng.standard_normal(dims - n_families)
    noise *= FIXTURE_NOISE * rng.uniform(0.0, 1.0) / np.linalg.norm(noise)
    vector[n_families:] = noise
    return [round(float(v), 12) for v in vector]


def _fixture_image(rng: np.random.Generator, family: int) -> bytes:
    size = FIXTURE_IMAGE_SIZE
    base = np.linspace(40, 200, size, dtype=np.float64)[None, :].repeat(size, axis=0)
    base[:, (family * size) // 4 : ((family + 1) * size) // 4] += 30.0
    pixels = np.clip(base + rng.normal(0.0, 12.0, (size, size)), 0, 255).astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PNG")
    return buffer.getvalue()


def generate_fixture_corpus(seed: int, n: int, out_dir: PathLike, dims: int = FIXTURE_DIMS) -> FixtureCorpus:
    """Deterministic synthetic corpus with rigged retrieval relevance

    The last max(1, n // 5) studies form the test split. Families are
    assigned round robin; a study's report is its family's core sentences
    plus one variant, and its report and image vectors point along the
    family axis, so nearest training reports share the family.
    """
    if n < 2:
        raise DataError(f"a fixture corpus needs n >= 2, got {n}")
    n_test = max(1, n // 5)
    n_train = n - n_test
    n_families = min(FIXTURE_MAX_FAMILIES, n_train)
    if dims <= n_families:
        raise DataError(f"fixture dims must exceed {n_families}, got {dims}")

    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(image_dir, e) from e

    rng = np.random.default_rng(seed)
    studies: List[Study] = []
    families: Dict[str, str] = {}
    sidecar = EmbeddingSidecar()
    for i in range(n):
        split = Split.TRAIN if i < n_train else Split.TEST
        family_index = (i if split is Split.TRAIN else i - n_train) % n_families
        family = REPORT_FAMILIES[family_index]
        study_id = f"fx-{i:04d}"
        report = family.report(int(rng.integers(len(family.variants))))

        image_path = image_dir / f"{study_id}.png"
        try:
            image_path.write_bytes(_fixture_image(rng, family_index))
        except OSError as e:
            raise IoError(image_path, e) from e

        if split is Split.TRAIN:
            sidecar.reports[study_id] = EmbeddingVector.of(_family_vector(rng, family_index, n_families, dims))
        sidecar.images[study_id] = EmbeddingVector.of(_family_vector(rng, family_index, n_families, dims))
        studies.append(Study(study_id=study_id, image_ref=str(image_path), reference_report=report, split=split))
        families[study_id] = family.name

    manifest = out_dir / "manifest.jsonl"
    sidecar_path = out_dir / "embeddings.jsonl"
    write_manifest(manifest, studies)
    write_sidecar(sidecar_path, sidecar)
    logger.info(f"Generated fixture corpus in {out_dir}: {n_train} train, {n_test} test, {n_families} families")
    return FixtureCorpus(out_dir, manifest, sidecar_path, tuple(studies), families)
