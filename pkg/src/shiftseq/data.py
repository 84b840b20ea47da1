"""Feature-sequence file format, synthetic order task, and fold assignment.

The FSEQ container stores variable-length frame-feature records:

    magic   4 bytes, b"FSEQ"
    version u32 = 1
    k_cls   u32, number of classes; every label must be below it
    count   u32, number of records
    then per record:
        label u32, group u32, L u32, T u32, C u32,
        L*T*C little-endian float32 values

Every length is validated against the remaining byte count before anything
is allocated, and each malformed-input class raises its own error type so
callers can tell a wrong file apart from a damaged one.

The synthetic task probes exactly one capability: whether a model can tell
the order of two events apart. Each record carries two Gaussian bumps, one
early and one late, placed in one of two disjoint channel groups:

    class 0: group A early, group B late
    class 1: group B early, group A late
    class 2: group A twice
    class 3: group B twice

Bump-center pairs are drawn uniformly from all (early, late) positions
with a minimum gap, inside a margin. That candidate set is closed under
time reversal, so the class-1 distribution is exactly the time reversal of
class 0: any per-frame statistic pooled over time has identical
distributions for the two classes, and a model without cross-frame mixing
sits at chance on that pair. Classes 2 and 3 differ in channel content and
stay easy for any model, anchoring training.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .seeding import substream

FSEQ_MAGIC = b"FSEQ"
FSEQ_VERSION = 1


class FseqError(ValueError):
    """Base class for all feature-file format errors."""


class FseqMagicError(FseqError):
    """The file does not start with the FSEQ magic bytes."""


class FseqVersionError(FseqError):
    """The file declares an unsupported format version."""


class FseqTruncatedError(FseqError):
    """The file ends before its declared contents do."""


class FseqRecordError(FseqError):
    """A record header violates an invariant (label range, empty dims)."""


class FseqNonFiniteError(FseqError):
    """A record payload contains NaN or infinite values."""


@dataclass
class FeatureSequence:
    """One labeled sequence: `data` is (layers, frames, channels) float32."""

    label: int
    group: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise FseqRecordError(f"record data must be (L, T, C), got shape {self.data.shape}")


@dataclass
class FseqFile:
    k_cls: int
    records: list


# ---------------------------------------------------------------------------
# binary I/O
# ---------------------------------------------------------------------------

def write_fseq(path, records, k_cls: int, class_names=None, gen_config=None) -> None:
    """Write records plus a JSON manifest sidecar at `<path>.manifest.json`."""
    if k_cls < 1:
        raise FseqRecordError(f"k_cls must be at least 1, got {k_cls}")
    chunks = [FSEQ_MAGIC, struct.pack("<III", FSEQ_VERSION, k_cls, len(records))]
    offsets = []
    pos = 4 + 12
    for i, rec in enumerate(records):
        if not 0 <= rec.label < k_cls:
            raise FseqRecordError(f"record {i} label {rec.label} outside [0, {k_cls})")
        if rec.group < 0:
            raise FseqRecordError(f"record {i} group {rec.group} is negative")
        length, t, c = rec.data.shape
        if t < 1 or length < 1 or c < 1:
            raise FseqRecordError(f"record {i} has empty dimensions {rec.data.shape}")
        if not np.all(np.isfinite(rec.data)):
            raise FseqNonFiniteError(f"record {i} contains nonfinite values")
        offsets.append(pos)
        header = struct.pack("<5I", rec.label, rec.group, length, t, c)
        payload = np.ascontiguousarray(rec.data, dtype="<f4").tobytes()
        chunks.extend([header, payload])
        pos += len(header) + len(payload)
    with open(path, "wb") as f:
        f.write(b"".join(chunks))

    groups = sorted({rec.group for rec in records})
    manifest = {
        "k_cls": k_cls,
        "class_names": list(class_names) if class_names else
                       [f"class_{i}" for i in range(k_cls)],
        "num_groups": len(groups),
        "groups": groups,
        "record_count": len(records),
        "offsets": offsets,
        "gen_config": gen_config,
    }
    with open(str(path) + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FseqTruncatedError(
                f"file ends inside {what}: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_fseq(path, max_frames: int | None = None) -> FseqFile:
    """Parse an FSEQ file; optionally truncate every record to `max_frames`."""
    if max_frames is not None and max_frames < 1:
        raise ConfigError(f"max_frames must be at least 1, got {max_frames}")
    with open(path, "rb") as f:
        cur = _Cursor(f.read())
    if cur.take(4, "magic") != FSEQ_MAGIC:
        raise FseqMagicError("not an FSEQ file (bad magic)")
    version = cur.u32("version")
    if version != FSEQ_VERSION:
        raise FseqVersionError(f"unsupported FSEQ version {version}")
    k_cls = cur.u32("header")
    if k_cls < 1:
        raise FseqRecordError(f"k_cls must be at least 1, got {k_cls}")
    count = cur.u32("header")
    records = []
    for i in range(count):
        label, group, length, t, c = struct.unpack("<5I", cur.take(20, f"record {i} header"))
        if label >= k_cls:
            raise FseqRecordError(f"record {i} label {label} outside [0, {k_cls})")
        if length < 1 or t < 1 or c < 1:
            raise FseqRecordError(f"record {i} has empty dimensions ({length}, {t}, {c})")
        n_bytes = 4 * length * t * c
        payload = cur.take(n_bytes, f"record {i} payload")
        data = np.frombuffer(payload, dtype="<f4").reshape(length, t, c).astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise FseqNonFiniteError(f"record {i} contains nonfinite values")
        if max_frames is not None and t > max_frames:
            data = data[:, :max_frames, :]
        records.append(FeatureSequence(label=int(label), group=int(group), data=data))
    if cur.pos != len(cur.buf):
        raise FseqTruncatedError(f"{len(cur.buf) - cur.pos} trailing bytes after last record")
    return FseqFile(k_cls=k_cls, records=records)


# ---------------------------------------------------------------------------
# synthetic order task
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    num_classes: int = 4
    num_layers: int = 1
    channels: int = 64
    frames: int = 50
    groups: int = 5
    per_class_per_group: int = 40
    # Envelope/noise defaults are tuned so one frame of channel mingling
    # carries a learnable order signal at this sequence length: bumps wide
    # enough to overlap across the minimum gap, centers kept away from the
    # edges so typical gaps stay near that minimum.
    noise_sigma: float = 0.25
    amplitude: float = 3.0
    bump_width: float = 7.0
    min_gap: int = 8
    margin: int = 14
    group_a_start: int = 0
    group_b_start: int = 8
    group_width: int = 8

    def __post_init__(self):
        if self.num_classes != 4:
            raise ConfigError(f"the order task defines exactly 4 classes, got {self.num_classes}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be at least 1, got {self.num_layers}")
        if self.groups < 1 or self.per_class_per_group < 0:
            raise ConfigError("groups must be positive and per_class_per_group non-negative")
        if self.noise_sigma < 0 or self.bump_width <= 0:
            raise ConfigError("noise_sigma must be non-negative and bump_width positive")
        if self.group_width < 1:
            raise ConfigError(f"group_width must be at least 1, got {self.group_width}")
        a = range(self.group_a_start, self.group_a_start + self.group_width)
        b = range(self.group_b_start, self.group_b_start + self.group_width)
        if a.start < 0 or b.start < 0 or a.stop > self.channels or b.stop > self.channels:
            raise ConfigError(
                f"channel groups [{a.start}, {a.stop}) and [{b.start}, {b.stop}) "
                f"must lie within {self.channels} channels")
        if set(a) & set(b):
            raise ConfigError(f"channel groups [{a.start}, {a.stop}) and [{b.start}, {b.stop}) overlap")
        if self.min_gap < 1 or self.margin < 0:
            raise ConfigError("min_gap must be positive and margin non-negative")
        if not valid_bump_pairs(self):
            raise ConfigError(
                f"no valid bump placements: frames={self.frames} cannot hold two bumps "
                f"with margin {self.margin} and gap {self.min_gap}")


def gen_config_to_dict(gcfg: GenConfig) -> dict:
    return dataclasses.asdict(gcfg)


def gen_config_from_dict(raw: dict) -> GenConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"data config must be a mapping, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(GenConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown data config keys: {', '.join(unknown)}")
    return GenConfig(**raw)


def valid_bump_pairs(gcfg: GenConfig) -> list:
    """All (early, late) center pairs the generator samples from.

    The set is closed under time reversal (e, l) -> (T-1-l, T-1-e), which
    is what makes class 1 the exact time reversal of class 0.
    """
    lo, hi = gcfg.margin, gcfg.frames - 1 - gcfg.margin
    return [(e, l) for e in range(lo, hi + 1) for l in range(lo, hi + 1)
            if l - e >= gcfg.min_gap]


def _class_channel_groups(gcfg: GenConfig, label: int) -> tuple:
    a = (gcfg.group_a_start, gcfg.group_a_start + gcfg.group_width)
    b = (gcfg.group_b_start, gcfg.group_b_start + gcfg.group_width)
    return {0: (a, b), 1: (b, a), 2: (a, a), 3: (b, b)}[label]


def render_record(gcfg: GenConfig, label: int, t_early: int, t_late: int,
                  rng=None) -> np.ndarray:
    """Render one record's (L, T, C) array; `rng` adds background noise.

    The early bump goes in the class's first channel group, the late bump
    in its second. Envelopes are untruncated Gaussians, so swapping which
    group holds which bump preserves the multiset of frames whenever the
    two centers mirror each other about the sequence midpoint.
    """
    if not 0 <= label < 4:
        raise ConfigError(f"label must be in [0, 4), got {label}")
    if not (0 <= t_early < gcfg.frames and 0 <= t_late < gcfg.frames):
        raise ConfigError(f"bump centers ({t_early}, {t_late}) outside [0, {gcfg.frames})")
    out = np.zeros((gcfg.num_layers, gcfg.frames, gcfg.channels), dtype=np.float32)
    t_axis = np.arange(gcfg.frames, dtype=np.float64)
    (early_group, late_group) = _class_channel_groups(gcfg, label)
    for center, (start, stop) in ((t_early, early_group), (t_late, late_group)):
        envelope = gcfg.amplitude * np.exp(-0.5 * ((t_axis - center) / gcfg.bump_width) ** 2)
        out[:, :, start:stop] += envelope.astype(np.float32)[None, :, None]
    if rng is not None and gcfg.noise_sigma > 0:
        out += rng.normal(0.0, gcfg.noise_sigma, out.shape).astype(np.float32)
    return out


def gen_synthetic(gcfg: GenConfig, seed: int) -> FseqFile:
    """Generate the full dataset; each record has its own RNG substream."""
    pairs = valid_bump_pairs(gcfg)
    records = []
    for g in range(gcfg.groups):
        for cls in range(gcfg.num_classes):
            for j in range(gcfg.per_class_per_group):
                rng = substream(seed, "datagen", g, cls, j)
                t_early, t_late = pairs[int(rng.integers(len(pairs)))]
                data = render_record(gcfg, cls, t_early, t_late, rng=rng)
                records.append(FeatureSequence(label=cls, group=g, data=data))
    return FseqFile(k_cls=gcfg.num_classes, records=records)


# ---------------------------------------------------------------------------
# leave-one-group-out folds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    fold: int
    test_group: int
    train_indices: tuple
    test_indices: tuple


def assign_folds(records, n_folds: int | None = None) -> list:
    """One fold per group: fold i holds out the i-th smallest group id."""
    if not records:
        raise ConfigError("cannot assign folds over an empty record list")
    groups = sorted({rec.group for rec in records})
    if n_folds is None:
        n_folds = len(groups)
    if n_folds != len(groups):
        raise ConfigError(
            f"n_folds={n_folds} but the records contain {len(groups)} groups; "
            f"leave-one-group-out needs one fold per group")
    plans = []
    for fold, test_group in enumerate(groups):
        test = tuple(i for i, rec in enumerate(records) if rec.group == test_group)
        train = tuple(i for i, rec in enumerate(records) if rec.group != test_group)
        plans.append(FoldPlan(fold=fold, test_group=test_group,
                              train_indices=train, test_indices=test))
    return plans
