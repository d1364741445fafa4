"""Dataset ingestion and the synthetic paired-dataset generator.

Feature files are the ingestion boundary: any exporter that writes the MCSF
binary format (region grids, word-vector matrices, global vectors) can feed
the models, so the package stays dataset-agnostic. The synthetic generator
produces geometrically clustered image/text pairs small enough for 64-bit
gradient checks and desk-scale training runs.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, CorruptFileError, FormatError, ManifestError

FEATURE_MAGIC = b"MCSF"
FEATURE_VERSION = 1

SPLITS = ("train", "val", "test")
MODALITIES = ("image", "text")


# ---------------------------------------------------------------------------
# core containers
# ---------------------------------------------------------------------------


@dataclass
class FeatureSequence:
    """Zero-padded feature rows: (rows, dim) float32 with the pre-padding length."""

    values: np.ndarray
    valid_len: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ContractError(f"feature sequence must be (rows, dim), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("feature sequence contains NaN or Inf")
        if not 1 <= self.valid_len <= self.values.shape[0]:
            raise ContractError(f"valid length {self.valid_len} outside 1..{self.values.shape[0]}")
        if self.valid_len < self.values.shape[0] and self.values[self.valid_len:].any():
            raise ContractError("padded rows must be exactly zero")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class Instance:
    id: str
    pair_id: str
    label: int
    modality: str
    sequence: FeatureSequence
    global_vec: np.ndarray


@dataclass
class PairedSplit:
    """Aligned arrays over the matched pairs of one split (sorted by pair id)."""

    pair_ids: list
    labels: np.ndarray        # (P,) int
    image_ids: list
    text_ids: list
    image_seqs: np.ndarray    # (P, T_img, d_region)
    image_valid: np.ndarray   # (P,) int
    image_globals: np.ndarray  # (P, d_img_global)
    text_words: np.ndarray    # (P, T_txt, word_dim), zero padded
    text_valid: np.ndarray    # (P,) int
    text_globals: np.ndarray  # (P, d_txt_global)

    def __len__(self) -> int:
        return len(self.pair_ids)


@dataclass
class Dataset:
    instances: list
    pair_splits: dict                       # pair_id -> split name
    splits: dict = field(default_factory=dict)  # split name -> PairedSplit

    def categories(self) -> np.ndarray:
        return np.unique([inst.label for inst in self.instances])


# ---------------------------------------------------------------------------
# binary feature files
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIII")  # magic, version, rows, cols


def save_feature_file(path, matrix) -> None:
    """Write a (rows, cols) matrix as little-endian float32 with the MCSF header."""
    arr = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if arr.ndim != 2:
        raise ContractError(f"feature files hold matrices, got shape {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def load_feature_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"{path}: shorter than the header")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = rows * cols * 4
    if expected > len(raw) - _HEADER.size:
        raise CorruptFileError(f"{path}: payload truncated ({len(raw) - _HEADER.size} of {expected} bytes)")
    if expected < len(raw) - _HEADER.size:
        raise CorruptFileError(f"{path}: trailing bytes after payload")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(rows, cols).copy()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = ("id", "pair_id", "label", "modality", "split", "sequence_path", "global_path")


def load_manifest(path) -> Dataset:
    """Parse and validate a manifest, load every referenced feature file.

    The manifest is a JSON array of records; paths are relative to its
    directory. Loading fails atomically: any dangling pair, duplicate id or
    unreadable file rejects the whole dataset, listing the offenders.
    """
    path = Path(path)
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(records, list):
        raise ManifestError(f"{path}: manifest must be a JSON array of records")

    offenders = []
    for i, rec in enumerate(records):
        missing = [k for k in _REQUIRED_KEYS if k not in rec]
        if missing:
            offenders.append(f"record {i}: missing {missing}")
        elif rec["modality"] not in MODALITIES or rec["split"] not in SPLITS:
            offenders.append(f"record {i} ({rec['id']}): bad modality/split")
        elif not isinstance(rec["label"], int) or rec["label"] < 0:
            offenders.append(f"record {i} ({rec['id']}): label must be a non-negative integer")
    if offenders:
        raise ManifestError(f"{path}: malformed records", offenders)

    seen = {}
    for rec in records:
        if rec["id"] in seen:
            offenders.append(rec["id"])
        seen[rec["id"]] = rec
    if offenders:
        raise ManifestError(f"{path}: duplicate instance ids", sorted(set(offenders)))

    pairs = {}
    for rec in records:
        pairs.setdefault(rec["pair_id"], []).append(rec)
    for pid in sorted(pairs):
        members = pairs[pid]
        mods = sorted(m["modality"] for m in members)
        if mods != ["image", "text"]:
            offenders.append(f"{pid}: has {mods or 'no members'}")
        elif members[0]["split"] != members[1]["split"]:
            offenders.append(f"{pid}: split mismatch")
        elif members[0]["label"] != members[1]["label"]:
            offenders.append(f"{pid}: label mismatch")
    if offenders:
        raise ManifestError(f"{path}: broken pairings", offenders)

    base = path.parent
    instances = []
    for rec in records:
        seq_path = base / rec["sequence_path"]
        glob_path = base / rec["global_path"]
        for p in (seq_path, glob_path):
            if not p.is_file():
                offenders.append(f"{rec['id']}: missing file {p}")
        if offenders:
            continue
        seq = load_feature_file(seq_path)
        glob = load_feature_file(glob_path)
        if glob.shape[0] != 1:
            offenders.append(f"{rec['id']}: global file must hold one row, has {glob.shape[0]}")
            continue
        instances.append(Instance(
            id=rec["id"], pair_id=rec["pair_id"], label=int(rec["label"]),
            modality=rec["modality"],
            sequence=FeatureSequence(values=seq, valid_len=seq.shape[0]),
            global_vec=glob[0],
        ))
    if offenders:
        raise ManifestError(f"{path}: unreadable feature files", offenders)

    ds = Dataset(instances=instances,
                 pair_splits={rec["pair_id"]: rec["split"] for rec in records})
    build_splits(ds)
    return ds


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write manifest.json plus one sequence and one global file per instance.

    Sequences are written unpadded (valid rows only); padding is reapplied on
    load, so save -> load round-trips bytes exactly.
    """
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    records = []
    for inst in dataset.instances:
        seq_rel = f"features/{inst.id}.seq.mcsf"
        glob_rel = f"features/{inst.id}.glob.mcsf"
        save_feature_file(out_dir / seq_rel, inst.sequence.values[: inst.sequence.valid_len])
        save_feature_file(out_dir / glob_rel, inst.global_vec[None, :])
        records.append({
            "id": inst.id, "pair_id": inst.pair_id, "label": int(inst.label),
            "modality": inst.modality, "split": dataset.pair_splits[inst.pair_id],
            "sequence_path": seq_rel, "global_path": glob_rel,
        })
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(records, indent=1))
    return manifest


# ---------------------------------------------------------------------------
# padding and split assembly
# ---------------------------------------------------------------------------


def pad_and_mask(sequences, target_len: int):
    """Append zero rows up to target_len, preserving each valid length."""
    out = []
    for seq in sequences:
        if not isinstance(seq, FeatureSequence):
            arr = np.asarray(seq, dtype=np.float32)
            seq = FeatureSequence(values=arr, valid_len=arr.shape[0])
        if seq.valid_len > target_len:
            raise ContractError(f"target length {target_len} < valid length {seq.valid_len}")
        padded = np.zeros((target_len, seq.dim), dtype=np.float32)
        padded[: seq.valid_len] = seq.values[: seq.valid_len]
        out.append(FeatureSequence(values=padded, valid_len=seq.valid_len))
    return out


def build_splits(dataset: Dataset) -> None:
    """Group instances into aligned per-split arrays, padding to dataset maxima.

    Pair integrity (exactly one image and one text per pair id) is guaranteed
    by load_manifest and the generator before this runs.
    """
    pair_members = {}
    for inst in dataset.instances:
        pair_members.setdefault(inst.pair_id, {})[inst.modality] = inst
    splits_map = dataset.pair_splits

    img_max = max(m["image"].sequence.valid_len for m in pair_members.values())
    txt_max = max(m["text"].sequence.valid_len for m in pair_members.values())

    for name in SPLITS:
        pids = sorted(p for p, s in splits_map.items() if s == name)
        if not pids:
            continue
        members = [pair_members[p] for p in pids]
        img_seqs = pad_and_mask([m["image"].sequence for m in members], img_max)
        txt_seqs = pad_and_mask([m["text"].sequence for m in members], txt_max)
        dataset.splits[name] = PairedSplit(
            pair_ids=pids,
            labels=np.array([m["image"].label for m in members], dtype=np.int64),
            image_ids=[m["image"].id for m in members],
            text_ids=[m["text"].id for m in members],
            image_seqs=np.stack([s.values for s in img_seqs]),
            image_valid=np.array([s.valid_len for s in img_seqs], dtype=np.int64),
            image_globals=np.stack([m["image"].global_vec for m in members]).astype(np.float32),
            text_words=np.stack([s.values for s in txt_seqs]),
            text_valid=np.array([s.valid_len for s in txt_seqs], dtype=np.int64),
            text_globals=np.stack([m["text"].global_vec for m in members]).astype(np.float32),
        )


# ---------------------------------------------------------------------------
# synthetic paired data
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    """Desk-scale synthetic dataset: clustered latents mapped into each modality."""

    categories: int = 10
    train_pairs: int = 50      # per category
    val_pairs: int = 10
    test_pairs: int = 10
    grid_size: int = 3         # image sequence length = grid_size**2
    region_dim: int = 16
    image_global_dim: int = 32
    word_dim: int = 16
    text_len_min: int = 8
    text_len_max: int = 12
    text_global_dim: int = 16
    latent_dim: int = 8
    center_scale: float = 30.0  # feature magnitude; sets the gradient scale seen by SGD
    noise: float = 3.0
    seed: int = 7


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Per category draw a latent center; every pair is a noisy linear image of it.

    Matched image/text instances share one per-pair latent, so pairs are the
    tightest clusters and categories the next tightest. noise=0 collapses each
    category onto a single point. Deterministic for a fixed seed.
    """
    if config.categories < 2:
        raise ContractError("synthetic dataset needs at least 2 categories")
    if not 1 <= config.text_len_min <= config.text_len_max:
        raise ContractError("bad text length range")

    rng = np.random.default_rng(config.seed)
    lat = config.latent_dim
    centers = rng.normal(0.0, config.center_scale, size=(config.categories, lat))
    n_regions = config.grid_size ** 2
    map_seq = rng.normal(0.0, 1.0 / np.sqrt(lat), size=(n_regions * config.region_dim, lat))
    map_img_global = rng.normal(0.0, 1.0 / np.sqrt(lat), size=(config.image_global_dim, lat))
    map_word = rng.normal(0.0, 1.0 / np.sqrt(lat), size=(config.word_dim, lat))
    map_txt_global = rng.normal(0.0, 1.0 / np.sqrt(lat), size=(config.text_global_dim, lat))

    counts = {"train": config.train_pairs, "val": config.val_pairs, "test": config.test_pairs}
    instances = []
    pair_splits = {}
    for cat in range(config.categories):
        for split in SPLITS:
            for i in range(counts[split]):
                latent = centers[cat] + config.noise * rng.normal(size=lat)
                text_len = int(rng.integers(config.text_len_min, config.text_len_max + 1))
                tag = f"{split}_{cat:02d}_{i:03d}"
                image_seq = (map_seq @ latent).reshape(n_regions, config.region_dim)
                # each word is an iid noisy view of the instance latent, so the
                # word mean is length-independent up to noise/sqrt(m)
                word_latents = latent[None, :] + config.noise * rng.normal(size=(text_len, lat))
                words = word_latents @ map_word.T
                instances.append(Instance(
                    id=f"img_{tag}", pair_id=f"pair_{tag}", label=cat, modality="image",
                    sequence=FeatureSequence(values=image_seq.astype(np.float32), valid_len=n_regions),
                    global_vec=(map_img_global @ latent).astype(np.float32),
                ))
                instances.append(Instance(
                    id=f"txt_{tag}", pair_id=f"pair_{tag}", label=cat, modality="text",
                    sequence=FeatureSequence(values=words.astype(np.float32), valid_len=text_len),
                    global_vec=(map_txt_global @ latent).astype(np.float32),
                ))
                pair_splits[f"pair_{tag}"] = split

    ds = Dataset(instances=instances, pair_splits=pair_splits)
    build_splits(ds)
    return ds
