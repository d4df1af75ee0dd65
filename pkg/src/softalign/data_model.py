"""Dataset representation, on-disk formats, splitting, synthetic generation.

On-disk layout (all little-endian, shared with every other tool in the
pipeline):

* Manifest: JSON object with keys ``name``, ``num_classes``, ``class_names``,
  ``embedding_dim``, ``embeddings_path``, ``annotations_path``. Relative
  paths resolve against the manifest's directory.
* Embedding file: magic ``EALN``, format version u32 = 1, num_samples u64,
  embedding_dim u32, then one record per sample:
  ``id_length u16 | id UTF-8 bytes | embedding_dim * float32``.
* Annotation file: newline-delimited JSON, one ``{"id": ..., "counts": [...]}``
  object per sample. Sample order of a loaded Dataset is annotation-file
  order; embeddings are matched by id.
* Split file: JSON with keys ``train``, ``val``, ``test`` holding sample ids.

Embeddings are stored as float32 but promoted to float64 for all
computation. Every constructor in this module quantizes embeddings to
float32-representable values, so ``load(write(ds))`` round-trips
bit-identically; a hand-built Dataset with full float64 embeddings is
truncated on write.

Datasets and SplitIndices are immutable after construction and safe to
share across concurrent readers.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

EMBEDDING_MAGIC = b"EALN"
EMBEDDING_FORMAT_VERSION = 1

_MANIFEST_KEYS = (
    "name",
    "num_classes",
    "class_names",
    "embedding_dim",
    "embeddings_path",
    "annotations_path",
)


@dataclass(frozen=True, eq=False)
class Sample:
    """One data point: id, frozen embedding, per-class annotation tallies."""

    id: str
    embedding: np.ndarray  # (D,) float64
    counts: np.ndarray  # (C,) int64


@dataclass(eq=False)
class Dataset:
    """An ordered, validated collection of samples with class metadata."""

    name: str
    num_classes: int
    class_names: tuple
    embedding_dim: int
    samples: tuple

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        self.samples = tuple(self.samples)
        if self.num_classes < 1:
            raise ValidationError("num_classes must be positive")
        if self.embedding_dim < 1:
            raise ValidationError("embedding_dim must be positive")
        if len(self.class_names) != self.num_classes:
            raise ValidationError(
                f"{len(self.class_names)} class names for {self.num_classes} classes"
            )
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ValidationError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if s.embedding.shape != (self.embedding_dim,):
                raise ValidationError(
                    f"sample {s.id!r}: embedding shape {s.embedding.shape}, expected ({self.embedding_dim},)"
                )
            if not np.all(np.isfinite(s.embedding)):
                raise ValidationError(f"sample {s.id!r}: non-finite embedding entries")
            if s.counts.shape != (self.num_classes,):
                raise ValidationError(
                    f"sample {s.id!r}: counts length {s.counts.shape[0]}, expected {self.num_classes}"
                )
            if np.any(s.counts < 0):
                raise ValidationError(f"sample {s.id!r}: negative annotation count")
            if int(s.counts.sum()) == 0:
                raise ValidationError(f"sample {s.id!r}: all-zero annotation counts")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def embeddings(self) -> np.ndarray:
        """(N, D) float64 matrix, rows in sample order."""
        return np.stack([s.embedding for s in self.samples]).astype(np.float64)

    @cached_property
    def counts(self) -> np.ndarray:
        """(N, C) int64 matrix of annotation tallies, rows in sample order."""
        return np.stack([s.counts for s in self.samples])

    @cached_property
    def ids(self) -> tuple:
        return tuple(s.id for s in self.samples)

    def subset(self, indices, name: str | None = None) -> "Dataset":
        """New Dataset holding the given sample positions, order preserved."""
        return Dataset(
            name=name if name is not None else self.name,
            num_classes=self.num_classes,
            class_names=self.class_names,
            embedding_dim=self.embedding_dim,
            samples=tuple(self.samples[i] for i in indices),
        )


@dataclass(frozen=True, eq=False)
class SplitIndices:
    """Disjoint train/val/test index sets covering a dataset exactly."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, np.sort(arr))
        merged = np.concatenate([self.train, self.val, self.test])
        if merged.size and not np.array_equal(np.sort(merged), np.arange(merged.size)):
            raise ValidationError("splits must partition 0..N-1 without overlap")

    @property
    def n_total(self) -> int:
        return self.train.size + self.val.size + self.test.size


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a deterministic synthetic dataset.

    ``ambiguity`` controls both the fraction of mixed-class samples and how
    strongly they blend; 0 makes every annotation unanimous.
    """

    num_samples: int
    num_classes: int
    embedding_dim: int
    annotations_per_sample: int
    ambiguity: float = 0.5
    noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1 or self.num_classes < 1 or self.embedding_dim < 1:
            raise ValidationError("num_samples, num_classes, embedding_dim must be positive")
        if self.annotations_per_sample < 1:
            raise ValidationError("annotations_per_sample must be positive")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ValidationError("ambiguity must lie in [0, 1]")
        if self.noise_scale < 0.0:
            raise ValidationError("noise_scale must be non-negative")


# ---------------------------------------------------------------------------
# binary embedding file


def write_embeddings(path, ids, embeddings) -> None:
    """Write the binary embedding file; float64 input is truncated to float32."""
    emb = np.asarray(embeddings, dtype=np.float32)
    if emb.ndim != 2 or emb.shape[0] != len(ids):
        raise ValidationError("embeddings must be (num_ids, dim)")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IQI", EMBEDDING_FORMAT_VERSION, emb.shape[0], emb.shape[1]))
        for sample_id, row in zip(ids, emb):
            raw = sample_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValidationError(f"sample id too long: {sample_id[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def read_embeddings(path):
    """Read the binary embedding file into (ids, (N, D) float64 matrix)."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 20:
        raise FormatError(f"{path}: truncated embedding file header")
    if data[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic bytes {data[:4]!r}")
    version, n, dim = struct.unpack_from("<IQI", data, 4)
    if version != EMBEDDING_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    offset = 20
    ids = []
    seen = set()
    rows = np.empty((n, dim), dtype=np.float32)
    for i in range(n):
        if offset + 2 > len(data):
            raise FormatError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        end = offset + id_len + 4 * dim
        if end > len(data):
            raise FormatError(f"{path}: truncated at record {i}")
        sample_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        if sample_id in seen:
            raise FormatError(f"{path}: duplicate embedding id {sample_id!r}")
        seen.add(sample_id)
        ids.append(sample_id)
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return ids, rows.astype(np.float64)


# ---------------------------------------------------------------------------
# annotations + manifest


def write_annotations(path, ids, counts) -> None:
    """Write the newline-delimited JSON annotation file."""
    counts = np.asarray(counts)
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample_id, row in zip(ids, counts):
            fh.write(json.dumps({"id": sample_id, "counts": [int(c) for c in row]}))
            fh.write("\n")


def read_annotations(path):
    """Read the annotation file into an ordered list of (id, counts) pairs."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "counts" not in obj:
                raise FormatError(f"{path}:{lineno}: expected object with 'id' and 'counts'")
            counts = obj["counts"]
            if not isinstance(counts, list) or not all(
                isinstance(c, int) and not isinstance(c, bool) for c in counts
            ):
                raise FormatError(f"{path}:{lineno}: counts must be a list of integers")
            out.append((str(obj["id"]), np.asarray(counts, dtype=np.int64)))
    return out


def load_dataset(manifest_path) -> Dataset:
    """Load and validate a dataset from its manifest file."""
    manifest_path = Path(manifest_path)
    with manifest_path.open("r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    missing = [k for k in _MANIFEST_KEYS if k not in manifest]
    if missing:
        raise FormatError(f"{manifest_path}: missing manifest keys {missing}")
    base = manifest_path.parent
    num_classes = int(manifest["num_classes"])
    dim = int(manifest["embedding_dim"])

    emb_ids, emb = read_embeddings(base / manifest["embeddings_path"])
    if emb.shape[1] != dim:
        raise FormatError(
            f"embedding file dimension {emb.shape[1]} != manifest embedding_dim {dim}"
        )
    by_id = {sample_id: emb[i] for i, sample_id in enumerate(emb_ids)}

    samples = []
    for sample_id, counts in read_annotations(base / manifest["annotations_path"]):
        if sample_id not in by_id:
            raise ValidationError(f"annotation id {sample_id!r} absent from embedding file")
        if counts.shape[0] != num_classes:
            raise ValidationError(
                f"sample {sample_id!r}: counts length {counts.shape[0]}, expected {num_classes}"
            )
        samples.append(Sample(id=sample_id, embedding=by_id[sample_id], counts=counts))
    return Dataset(
        name=str(manifest["name"]),
        num_classes=num_classes,
        class_names=tuple(str(c) for c in manifest["class_names"]),
        embedding_dim=dim,
        samples=tuple(samples),
    )


def write_dataset(dataset: Dataset, out_dir, manifest_name: str = "manifest.json") -> Path:
    """Write manifest + embedding + annotation files; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_embeddings(out_dir / "embeddings.bin", dataset.ids, dataset.embeddings)
    write_annotations(out_dir / "annotations.jsonl", dataset.ids, dataset.counts)
    manifest = {
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "class_names": list(dataset.class_names),
        "embedding_dim": dataset.embedding_dim,
        "embeddings_path": "embeddings.bin",
        "annotations_path": "annotations.jsonl",
    }
    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def save_split(path, dataset: Dataset, splits: SplitIndices) -> None:
    """Write a split file holding sample ids per subset."""
    payload = {
        part: [dataset.ids[i] for i in getattr(splits, part)]
        for part in ("train", "val", "test")
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_split(path, dataset: Dataset) -> SplitIndices:
    """Read a split file back into indices for the given dataset."""
    with Path(path).open("r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    pos = {sample_id: i for i, sample_id in enumerate(dataset.ids)}
    parts = {}
    for part in ("train", "val", "test"):
        if part not in payload:
            raise FormatError(f"{path}: missing split key {part!r}")
        try:
            parts[part] = np.asarray([pos[s] for s in payload[part]], dtype=np.int64)
        except KeyError as exc:
            raise ValidationError(f"{path}: unknown sample id {exc.args[0]!r}") from exc
    return SplitIndices(**parts)


# ---------------------------------------------------------------------------
# splitting


def _apportion(total: int, weights, caps) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` across bins with caps."""
    weights = np.asarray(weights, dtype=np.float64)
    caps = np.asarray(caps, dtype=np.int64)
    quota = total * weights / weights.sum()
    alloc = np.minimum(np.floor(quota).astype(np.int64), caps)
    remaining = total - int(alloc.sum())
    # hand out leftovers by descending fractional part, lowest index first on ties
    frac = quota - np.floor(quota)
    order = np.lexsort((np.arange(len(weights)), -frac))
    while remaining > 0:
        progressed = False
        for i in order:
            if remaining == 0:
                break
            if alloc[i] < caps[i]:
                alloc[i] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise ValidationError("apportionment infeasible: caps too small")
    return alloc


def make_splits(dataset: Dataset, ratios, seed: int) -> SplitIndices:
    """Deterministic stratified train/val/test split.

    Global sizes follow the documented rounding rule: val and test get
    floor(ratio*N + 0.5) samples each, train gets the remainder. Within
    that, samples are apportioned per majority-vote class so each class is
    represented proportionally.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot split an empty dataset")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValidationError("ratios must be three non-negative reals")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios sum to {sum(ratios)}, expected 1")

    n = len(dataset)
    n_val = int(math.floor(ratios[1] * n + 0.5))
    n_test = int(math.floor(ratios[2] * n + 0.5))
    n_train = n - n_val - n_test
    if n_train < 0:
        raise ValidationError("rounded val+test sizes exceed the dataset")

    majority = np.argmax(dataset.counts, axis=1)
    classes = np.unique(majority)
    members = [np.flatnonzero(majority == c) for c in classes]
    sizes = np.asarray([m.size for m in members], dtype=np.int64)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    shuffled = [m[rng.permutation(m.size)] for m in members]

    val_alloc = _apportion(n_val, sizes, sizes)
    test_alloc = _apportion(n_test, sizes, sizes - val_alloc)

    train_parts, val_parts, test_parts = [], [], []
    for idx, m in enumerate(shuffled):
        a, b = val_alloc[idx], val_alloc[idx] + test_alloc[idx]
        val_parts.append(m[:a])
        test_parts.append(m[a:b])
        train_parts.append(m[b:])
    return SplitIndices(
        train=np.concatenate(train_parts) if train_parts else np.empty(0, np.int64),
        val=np.concatenate(val_parts) if val_parts else np.empty(0, np.int64),
        test=np.concatenate(test_parts) if test_parts else np.empty(0, np.int64),
    )


# ---------------------------------------------------------------------------
# synthetic generation


def generate_synthetic(spec: SynthSpec, return_latents: bool = False):
    """Deterministic synthetic dataset with entropy-coupled embeddings.

    Each sample draws a latent mixture weight vector w over classes: a pure
    one-class vector with probability 1-ambiguity, otherwise a blend of 2-3
    classes whose strength also scales with ambiguity. The embedding is the
    w-weighted combination of fixed unit-norm class prototypes plus Gaussian
    noise, renormalized to unit length so that sample norm carries no
    information about ambiguity; counts ~ Multinomial(n, w).

    With ``return_latents=True`` also returns the (N, C) latent w matrix.
    """
    c, d = spec.num_classes, spec.embedding_dim
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed))
    protos = rng.normal(size=(c, d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)

    samples = []
    latents = np.zeros((spec.num_samples, c))
    for i in range(spec.num_samples):
        primary = int(rng.integers(c))
        w = np.zeros(c)
        mixed = rng.random() < spec.ambiguity and c >= 2
        if not mixed:
            w[primary] = 1.0
        else:
            k = 2
            if c >= 3 and rng.random() < 0.25 * spec.ambiguity:
                k = 3
            others = rng.choice(
                np.delete(np.arange(c), primary), size=k - 1, replace=False
            )
            # blend strength range scales with ambiguity; at 1 a mixed
            # sample can be fully uniform over its k classes
            strength = rng.uniform(0.0, min(1.0, 2.0 * spec.ambiguity))
            w[primary] = 1.0 - strength + strength / k
            w[others] = strength / k
            w /= w.sum()  # guard rng.multinomial's strict sum check
        latents[i] = w

        emb = w @ protos + rng.normal(size=d) * spec.noise_scale
        emb /= np.linalg.norm(emb)
        emb = emb.astype(np.float32).astype(np.float64)  # float32-exact for round-trips
        counts = rng.multinomial(spec.annotations_per_sample, w)
        samples.append(Sample(id=f"synth-{i:06d}", embedding=emb, counts=counts))

    dataset = Dataset(
        name=f"synth_s{spec.num_samples}_c{c}_d{d}_seed{spec.seed}",
        num_classes=c,
        class_names=tuple(f"class_{j}" for j in range(c)),
        embedding_dim=d,
        samples=tuple(samples),
    )
    if return_latents:
        return dataset, latents
    return dataset
