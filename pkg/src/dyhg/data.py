"""Feature bags, manifests, the synthetic co-occurrence task and splitting.

Bag file layout (little-endian)::

    8s   magic b"DYHGBAG" followed by the one-byte format version b"1"
    u32  id length, then the id (utf-8)
    u32  N, u32 d, u32 label
    u8   has_coords
    N*2  i32 coords (row, col), only if has_coords
    N*d  f32 features, row-major

Manifest layout: a header ``classes: name0,name1,...`` then one line per bag,
``id<TAB>relative_path<TAB>label_index<TAB>split``.
"""
from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    ManifestError,
    TruncatedFileError,
    VersionMismatchError,
)
from .numerics import Rng

BAG_MAGIC = b"DYHGBAG"
BAG_VERSION = b"1"
SPLITS = ("train", "val", "test")
UNASSIGNED = "unassigned"
DEFAULT_RATIOS = (0.5, 0.2, 0.3)


@dataclass
class FeatureBag:
    id: str
    features: np.ndarray  # N x d float32
    label: int
    coords: np.ndarray | None = None  # N x 2 int32

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ConfigError(f"bag {self.id!r}: features must be N x d with N >= 1, got {self.features.shape}")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.int32)
            if self.coords.shape != (self.n, 2):
                raise ConfigError(f"bag {self.id!r}: coords must be {(self.n, 2)}, got {self.coords.shape}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def bag_to_bytes(bag: FeatureBag) -> bytes:
    raw_id = bag.id.encode()
    parts = [
        BAG_MAGIC + BAG_VERSION,
        struct.pack("<I", len(raw_id)),
        raw_id,
        struct.pack("<IIIB", bag.n, bag.d, bag.label, bag.coords is not None),
    ]
    if bag.coords is not None:
        parts.append(np.ascontiguousarray(bag.coords, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(bag.features, dtype="<f4").tobytes())
    return b"".join(parts)


def bag_from_bytes(blob: bytes, source: str = "<bytes>") -> FeatureBag:
    head = blob[:len(BAG_MAGIC)]
    if head != BAG_MAGIC[:len(head)] or not head:
        raise BadMagicError(f"{source}: not a bag file (magic {blob[:8]!r})")
    if len(blob) < 8:
        raise TruncatedFileError(f"{source}: truncated in header")
    if blob[7:8] != BAG_VERSION:
        raise VersionMismatchError(f"{source}: bag format version {blob[7:8]!r}, expected {BAG_VERSION!r}")

    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedFileError(f"{source}: truncated at byte {pos} (need {n} more, have {len(blob) - pos})")
        out = blob[pos:pos + n]
        pos += n
        return out

    (id_len,) = struct.unpack("<I", take(4))
    bag_id = take(id_len).decode()
    n, d, label, has_coords = struct.unpack("<IIIB", take(13))
    coords = None
    if has_coords:
        coords = np.frombuffer(take(8 * n), "<i4").reshape(n, 2).astype(np.int32)
    features = np.frombuffer(take(4 * n * d), "<f4").reshape(n, d).astype(np.float32)
    if pos != len(blob):
        raise TruncatedFileError(f"{source}: {len(blob) - pos} unexpected trailing bytes")
    return FeatureBag(bag_id, features, label, coords)


def write_bag(path, bag: FeatureBag) -> None:
    Path(path).write_bytes(bag_to_bytes(bag))


def read_bag(path) -> FeatureBag:
    path = Path(path)
    return bag_from_bytes(path.read_bytes(), str(path))


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BagEntry:
    id: str
    path: str
    label: int
    split: str = UNASSIGNED


@dataclass
class Manifest:
    classes: list[str]
    entries: list[BagEntry]
    root: Path = field(default_factory=Path)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def split(self, name: str) -> list[BagEntry]:
        return [e for e in self.entries if e.split == name]

    def load(self, name: str | None = None) -> list[FeatureBag]:
        entries = self.entries if name is None else self.split(name)
        return [read_bag(self.root / e.path) for e in entries]

    def to_text(self) -> str:
        lines = ["classes: " + ",".join(self.classes)]
        lines += [f"{e.id}\t{e.path}\t{e.label}\t{e.split}" for e in self.entries]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or not lines[0].startswith("classes:"):
            raise ManifestError(f"{path}: missing 'classes:' header")
        classes = [c.strip() for c in lines[0][len("classes:"):].split(",") if c.strip()]
        entries = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields")
            bag_id, rel, label, split = parts
            if not label.isdigit() or int(label) >= len(classes):
                raise ManifestError(f"{path}:{lineno}: bad label {label!r}")
            entries.append(BagEntry(bag_id, rel, int(label), split))
        return cls(classes, entries, path.parent)


# --------------------------------------------------------------------------
# Splitting
# --------------------------------------------------------------------------

def largest_remainder(n: int, ratios) -> list[int]:
    quotas = [n * r for r in ratios]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split_dataset(manifest: Manifest, ratios=DEFAULT_RATIOS, seed: int = 0) -> Manifest:
    """Stratified, seeded train/val/test assignment."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != len(SPLITS) or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ConfigError(f"split ratios must be 3 non-negative numbers summing to 1, got {ratios}")
    rng = Rng(seed, (0x5917,))
    tags: dict[int, str] = {}
    for c in range(manifest.num_classes):
        members = [i for i, e in enumerate(manifest.entries) if e.label == c]
        if not members:
            continue
        if len(members) < 3:
            warnings.warn(
                f"class {manifest.classes[c]!r} has {len(members)} bag(s); "
                "some splits will have none of it",
                stacklevel=2,
            )
        order = rng.spawn(c).permutation(len(members))
        counts = largest_remainder(len(members), ratios)
        pos = 0
        for split, count in zip(SPLITS, counts):
            for j in order[pos:pos + count]:
                tags[members[j]] = split
            pos += count
    entries = [replace(e, split=tags.get(i, UNASSIGNED)) for i, e in enumerate(manifest.entries)]
    return Manifest(list(manifest.classes), entries, manifest.root)


# --------------------------------------------------------------------------
# Synthetic co-occurrence task
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Bags whose label is the pair of sparse motifs they contain.

    Prototypes ``0..C`` are signal motifs; class ``c`` plants motifs ``c``
    and ``c+1``, so any single motif (other than the first and last) is
    shared by two classes and only the pair identifies the label. Remaining
    prototypes ``C+1..K-1`` fill the rest of the bag.
    """

    classes: int = 4
    bags_per_class: int = 60
    n_min: int = 64
    n_max: int = 512
    d: int = 64
    prototypes: int = 12
    noise: float = 0.1
    seed: int = 0
    signal_min: float = 0.02
    signal_max: float = 0.10

    def validate(self) -> None:
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.prototypes < self.classes + 1:
            raise ConfigError(
                f"infeasible spec: {self.prototypes} prototypes < classes + 1 = {self.classes + 1}"
            )
        if not 1 <= self.n_min <= self.n_max:
            raise ConfigError(f"bad patch-count range [{self.n_min}, {self.n_max}]")
        if self.bags_per_class < 1 or self.d < 1 or self.noise < 0:
            raise ConfigError("bags_per_class and d must be >= 1, noise >= 0")
        if not 0 < self.signal_min <= self.signal_max < 0.5:
            raise ConfigError(f"bad signal fraction range [{self.signal_min}, {self.signal_max}]")

    def signal_pair(self, c: int) -> tuple[int, int]:
        return c, (c + 1) % self.prototypes


def make_prototypes(spec: SyntheticSpec) -> np.ndarray:
    p = Rng(spec.seed, (0,)).normal((spec.prototypes, spec.d))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def grid_coords(n: int) -> np.ndarray:
    width = math.ceil(math.sqrt(n))
    idx = np.arange(n)
    return np.stack([idx // width, idx % width], axis=1).astype(np.int32)


def synth_bag(spec: SyntheticSpec, protos: np.ndarray, index: int, label: int) -> tuple[FeatureBag, np.ndarray]:
    """One bag and the prototype index behind each patch (-1 = pure noise)."""
    rng = Rng(spec.seed, (1, index))
    n = spec.n_min + rng.integers(spec.n_max - spec.n_min + 1)
    lo = max(1, math.ceil(spec.signal_min * n))
    hi = max(lo, math.floor(spec.signal_max * n))
    background = np.arange(spec.classes + 1, spec.prototypes)
    source = np.full(n, -1, dtype=np.int64)
    if background.size:
        source[:] = background[rng.integers(background.size, n)]
    order = rng.permutation(n)
    pos = 0
    for motif in spec.signal_pair(label):
        count = int(np.clip(round(rng.uniform(1, spec.signal_min, spec.signal_max)[0] * n), lo, hi))
        source[order[pos:pos + count]] = motif
        pos += count
    centers = np.where(source[:, None] >= 0, protos[np.maximum(source, 0)], 0.0)
    feats = centers + spec.noise * rng.normal((n, spec.d))
    bag = FeatureBag(f"bag{index:04d}", feats.astype(np.float32), label, grid_coords(n))
    return bag, source


def oracle_decode(features: np.ndarray, protos: np.ndarray, spec: SyntheticSpec) -> int:
    """Nearest-prototype labelling followed by the motif-pair rule; -1 if ambiguous."""
    centers = np.vstack([protos, np.zeros((1, protos.shape[1]))])  # last row = null center
    x = np.asarray(features, dtype=np.float64)
    d2 = (x * x).sum(1)[:, None] + (centers * centers).sum(1)[None] - 2 * x @ centers.T
    seen = set(np.unique(d2.argmin(axis=1)).tolist())
    hits = [c for c in range(spec.classes) if set(spec.signal_pair(c)) <= seen]
    return hits[0] if len(hits) == 1 else -1


def generate_synthetic(
    spec: SyntheticSpec,
    out_dir,
    ratios=DEFAULT_RATIOS,
    split_seed: int | None = None,
) -> tuple[Manifest, float]:
    """Write bag files plus ``manifest.tsv`` and ``dataset.json`` into ``out_dir``.

    Returns the split manifest and the oracle decoder's accuracy over all bags.
    """
    spec.validate()
    out = Path(out_dir)
    (out / "bags").mkdir(parents=True, exist_ok=True)
    protos = make_prototypes(spec)
    entries, correct, index = [], 0, 0
    for c in range(spec.classes):
        for _ in range(spec.bags_per_class):
            bag, _ = synth_bag(spec, protos, index, c)
            rel = f"bags/{bag.id}.bag"
            write_bag(out / rel, bag)
            entries.append(BagEntry(bag.id, rel, c))
            correct += oracle_decode(bag.features, protos, spec) == c
            index += 1
    manifest = Manifest([f"class{c}" for c in range(spec.classes)], entries, out)
    manifest = split_dataset(manifest, ratios, spec.seed if split_seed is None else split_seed)
    manifest.write(out / "manifest.tsv")
    certificate = correct / index
    meta = {"spec": asdict(spec), "ratios": list(ratios), "oracle_accuracy": certificate}
    (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return manifest, certificate
