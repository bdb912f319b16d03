"""Domain tensors, the manifest dataset format, and bit-exact NPY v1.0 I/O.

The interchange format is a UTF-8 JSON manifest plus NPY v1.0 tensors.
Only little-endian C-order float32/float64 payloads are accepted; anything
else is rejected outright rather than transposed or cast silently.  Stimulus
alignment between EEG and feature tensors is by string id, never by row
order, so the manifest entries carry the id lists inline.

All loaded objects are treated as immutable after construction and are safe
to share read-only across workers.
"""

import ast
import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    FormatError,
    LoadError,
    ParameterError,
    TruncationError,
    UnsupportedFeatureError,
    ValidationError,
)

logger = logging.getLogger(__name__)

_NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCRS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}

REGIONS = ("Frontal", "Central", "Parietal", "Occipital", "Other")


# ---------------------------------------------------------------------------
# NPY v1.0
# ---------------------------------------------------------------------------

def load_npy(path) -> np.ndarray:
    """Read an NPY v1.0 file, bit-exactly.

    Accepts little-endian float32/float64, C order.  Raises FormatError on a
    malformed magic/header, UnsupportedFeatureError for fortran_order or any
    other dtype/version, TruncationError when the payload size disagrees
    with the header.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10 or raw[:6] != _NPY_MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise UnsupportedFeatureError(
            f"{path}: NPY version {major}.{minor} not supported (need 1.0)"
        )
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if header_end > len(raw):
        raise FormatError(f"{path}: declared header length {header_len} exceeds file")
    try:
        header_text = raw[10:header_end].decode("ascii")
        header = ast.literal_eval(header_text.strip())
    except (UnicodeDecodeError, ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparseable NPY header: {exc}") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: NPY header must have exactly descr/fortran_order/shape")

    descr = header["descr"]
    if descr not in _SUPPORTED_DESCRS:
        raise UnsupportedFeatureError(f"{path}: dtype {descr!r} not supported (<f4/<f8 only)")
    if header["fortran_order"] is not False:
        if header["fortran_order"] is True:
            raise UnsupportedFeatureError(f"{path}: fortran_order tensors are not supported")
        raise FormatError(f"{path}: fortran_order must be a bool")
    shape = header["shape"]
    if not (isinstance(shape, tuple) and all(isinstance(s, int) and s >= 0 for s in shape)):
        raise FormatError(f"{path}: bad shape {shape!r}")

    dtype = _SUPPORTED_DESCRS[descr]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[header_end:]
    if len(payload) != expected:
        raise TruncationError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def save_npy(tensor, path, dtype: str = "<f8") -> None:
    """Write `tensor` as NPY v1.0; round-trips bitwise through load_npy."""
    if dtype not in _SUPPORTED_DESCRS:
        raise ParameterError(f"dtype {dtype!r} not supported (<f4/<f8 only)")
    arr = np.asarray(tensor, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("tensor contains non-finite values")
    arr = np.ascontiguousarray(arr.astype(_SUPPORTED_DESCRS[dtype]))
    header = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (
        dtype,
        str(arr.shape) if arr.ndim != 1 else "(%d,)" % arr.shape[0],
    )
    # pad so magic + version + length field + header is a multiple of 64
    total = 10 + len(header) + 1
    header = header + " " * ((64 - total % 64) % 64) + "\n"
    with open(path, "wb") as fh:
        fh.write(_NPY_MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("ascii"))
        fh.write(arr.tobytes(order="C"))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EEGEpochs:
    """Stimulus-locked EEG epochs: trials x channels x time samples."""

    data: np.ndarray
    channel_names: tuple
    sfreq: float
    t_start_ms: float
    t_end_ms: float
    stimulus_ids: tuple
    repetition_index: tuple

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "stimulus_ids", tuple(self.stimulus_ids))
        object.__setattr__(self, "repetition_index", tuple(int(r) for r in self.repetition_index))
        if self.data.ndim != 3:
            raise ValidationError("EEG data must be trials x channels x times")
        n_trials, n_channels, n_times = self.data.shape
        if len(self.channel_names) != n_channels:
            raise ValidationError("channel_names length != n_channels")
        if len(self.stimulus_ids) != n_trials or len(self.repetition_index) != n_trials:
            raise ValidationError("stimulus_ids/repetition_index length != n_trials")
        if any(r < 0 for r in self.repetition_index):
            raise ValidationError("repetition_index must be non-negative")
        expected = int(round((self.t_end_ms - self.t_start_ms) / 1000.0 * self.sfreq))
        if n_times != expected:
            raise ValidationError(
                f"n_times={n_times} inconsistent with epoch bounds and sfreq "
                f"(expected {expected})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("EEG data contains non-finite values")

    @property
    def n_trials(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def n_times(self):
        return self.data.shape[2]

    def times_ms(self) -> np.ndarray:
        """Sample times relative to stimulus onset."""
        return self.t_start_ms + np.arange(self.n_times) * 1000.0 / self.sfreq


@dataclass(frozen=True)
class FeatureTensor:
    """Layer-wise model features: stimuli x layers x embedding dim."""

    data: np.ndarray
    model_id: str
    layer_names: tuple
    stimulus_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        object.__setattr__(self, "stimulus_ids", tuple(self.stimulus_ids))
        if self.data.ndim != 3:
            raise ValidationError("feature data must be stimuli x layers x dim")
        n_stimuli, n_layers, _ = self.data.shape
        if n_layers < 1:
            raise ValidationError("need at least one layer")
        if len(self.layer_names) != n_layers:
            raise ValidationError("layer_names length != n_layers")
        if len(self.stimulus_ids) != n_stimuli:
            raise ValidationError("stimulus_ids length != n_stimuli")
        if len(set(self.stimulus_ids)) != n_stimuli:
            raise ValidationError("stimulus_ids must be unique")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("feature data contains non-finite values")

    @property
    def n_stimuli(self):
        return self.data.shape[0]

    @property
    def n_layers(self):
        return self.data.shape[1]

    @property
    def dim(self):
        return self.data.shape[2]

    def layer_index(self, selector) -> int:
        """Resolve a layer by integer index or name; 'final' is the last layer."""
        if selector == "final":
            return self.n_layers - 1
        if isinstance(selector, int):
            if not -self.n_layers <= selector < self.n_layers:
                raise ParameterError(f"layer index {selector} out of range")
            return selector % self.n_layers
        if selector in self.layer_names:
            return self.layer_names.index(selector)
        raise ParameterError(f"unknown layer {selector!r} for model {self.model_id}")

    def layer_matrix(self, selector) -> np.ndarray:
        return self.data[:, self.layer_index(selector), :]

    def rows_for(self, stimulus_ids) -> np.ndarray:
        """Feature rows aligned to the given stimulus ids (by id, not order)."""
        lookup = {sid: i for i, sid in enumerate(self.stimulus_ids)}
        missing = [sid for sid in stimulus_ids if sid not in lookup]
        if missing:
            raise AlignmentError(
                f"model {self.model_id} is missing stimulus ids: {missing[:5]}"
                + ("..." if len(missing) > 5 else "")
            )
        return np.array([lookup[sid] for sid in stimulus_ids])


@dataclass(frozen=True)
class MontageEntry:
    x: float
    y: float
    region: str


@dataclass(frozen=True)
class Montage:
    """Channel -> schematic scalp position in [-1, 1]^2 plus functional region."""

    entries: dict

    def __post_init__(self):
        for name, ent in self.entries.items():
            if not (-1.0 <= ent.x <= 1.0 and -1.0 <= ent.y <= 1.0):
                raise ValidationError(f"montage position for {name} outside [-1, 1]^2")
            if ent.region not in REGIONS:
                raise ValidationError(f"montage region {ent.region!r} for {name} unknown")

    def region_of(self, channel: str) -> str:
        ent = self.entries.get(channel)
        return ent.region if ent is not None else "Other"

    def channels(self):
        return tuple(self.entries)


def region_for_channel(name: str) -> str:
    """Functional region from a 10-20 style channel name.

    Fp*/AF*/F* -> Frontal; FC*/C* -> Central; CP*/P* -> Parietal;
    PO*/O* -> Occipital; temporal rows (T*/FT*/TP*) and anything
    unrecognized -> Other.  Longest prefix wins.
    """
    upper = name.upper()
    for prefix, region in (
        ("FT", "Other"), ("TP", "Other"), ("FC", "Central"), ("CP", "Parietal"),
        ("PO", "Occipital"), ("FP", "Frontal"), ("AF", "Frontal"),
        ("T", "Other"), ("F", "Frontal"), ("C", "Central"),
        ("P", "Parietal"), ("O", "Occipital"),
    ):
        if upper.startswith(prefix):
            return region
    return "Other"


def load_montage(path) -> Montage:
    """Read a montage JSON file: {"channels": {name: {x, y, region}}}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: montage is not valid JSON: {exc}") from exc
    channels = doc.get("channels")
    if not isinstance(channels, dict):
        raise FormatError(f"{path}: montage JSON needs a 'channels' object")
    entries = {}
    for name, ent in channels.items():
        try:
            entries[name] = MontageEntry(float(ent["x"]), float(ent["y"]), str(ent["region"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad montage entry for {name}: {exc}") from exc
    return Montage(entries)


def default_montage() -> Montage:
    """The packaged standard 10-20/10-10 montage."""
    with resources.files("eegalign.data").joinpath("montage_10_20.json").open("r") as fh:
        doc = json.load(fh)
    entries = {
        name: MontageEntry(ent["x"], ent["y"], ent["region"])
        for name, ent in doc["channels"].items()
    }
    return Montage(entries)


@dataclass(frozen=True)
class CategoryLabels:
    """stimulus_id -> category, with the declared category set."""

    labels: dict
    categories: tuple

    def __post_init__(self):
        bad = {c for c in self.labels.values() if c not in self.categories}
        if bad:
            raise ValidationError(f"categories not in declared set: {sorted(bad)}")

    @classmethod
    def from_csv(cls, path) -> "CategoryLabels":
        """Read `stimulus_id,category` CSV; declared set = categories present."""
        labels = {}
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["stimulus_id", "category"]:
                raise FormatError(f"{path}: expected header 'stimulus_id,category'")
            for row in reader:
                if not row:
                    continue
                if len(row) < 2:
                    raise FormatError(f"{path}: short row {row!r}")
                labels[row[0]] = row[1]
        return cls(labels=labels, categories=tuple(sorted(set(labels.values()))))


# ---------------------------------------------------------------------------
# Manifest + dataset assembly
# ---------------------------------------------------------------------------

_MANIFEST_KNOWN_KEYS = {
    "version", "subjects", "features", "montage_path", "categories_path",
    "sfreq", "t_start_ms", "t_end_ms", "dtype", "synth_spec", "provenance",
}
_SUBJECT_KNOWN_KEYS = {"subject_id", "eeg_path", "channel_names", "stimulus_ids",
                       "repetition_index"}
_FEATURE_KNOWN_KEYS = {"model_id", "path", "layer_names", "stimulus_ids"}


@dataclass(frozen=True)
class Manifest:
    version: str
    subjects: tuple        # of dicts with subject_id, eeg_path, metadata lists
    features: tuple        # of dicts with model_id, path, metadata lists
    sfreq: float
    t_start_ms: float
    t_end_ms: float
    dtype: str
    montage_path: str | None = None
    categories_path: str | None = None


@dataclass(frozen=True)
class Issue:
    """One machine-readable validation finding."""

    code: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class Dataset:
    """A fully cross-checked dataset: per-subject epochs, per-model features."""

    manifest: Manifest
    subjects: dict         # subject_id -> EEGEpochs
    features: dict         # model_id -> FeatureTensor
    montage: Montage | None = None
    categories: CategoryLabels | None = None

    def subject_ids(self):
        return tuple(self.subjects)

    def model_ids(self):
        return tuple(self.features)


def _parse_manifest(path, issues: list) -> Manifest | None:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        issues.append(Issue("BAD_JSON", f"{path}: {exc}"))
        return None
    if not isinstance(doc, dict):
        issues.append(Issue("BAD_SCHEMA", f"{path}: manifest must be a JSON object"))
        return None
    for key in set(doc) - _MANIFEST_KNOWN_KEYS:
        logger.warning("manifest %s: ignoring unknown key %r", path, key)

    ok = True
    for key, typ in (("subjects", list), ("features", list), ("sfreq", (int, float)),
                     ("t_start_ms", (int, float)), ("t_end_ms", (int, float)),
                     ("dtype", str)):
        if key not in doc or not isinstance(doc[key], typ):
            issues.append(Issue("BAD_SCHEMA", f"manifest field {key!r} missing or mistyped"))
            ok = False
    if not ok:
        return None
    if doc["dtype"] not in _SUPPORTED_DESCRS:
        issues.append(Issue("UNSUPPORTED_DTYPE",
                            f"manifest dtype {doc['dtype']!r} (need <f4 or <f8)"))
        return None

    def check_entries(entries, known, id_key, path_key, kind):
        out = []
        for i, ent in enumerate(entries):
            if not isinstance(ent, dict) or id_key not in ent or path_key not in ent:
                issues.append(Issue("BAD_SCHEMA",
                                    f"{kind} entry {i} needs {id_key!r} and {path_key!r}"))
                continue
            for key in set(ent) - known:
                logger.warning("manifest %s entry %s: ignoring unknown key %r",
                               kind, ent.get(id_key), key)
            out.append(ent)
        return tuple(out)

    subjects = check_entries(doc["subjects"], _SUBJECT_KNOWN_KEYS,
                             "subject_id", "eeg_path", "subject")
    features = check_entries(doc["features"], _FEATURE_KNOWN_KEYS,
                             "model_id", "path", "feature")
    return Manifest(
        version=str(doc.get("version", "1")),
        subjects=subjects,
        features=features,
        sfreq=float(doc["sfreq"]),
        t_start_ms=float(doc["t_start_ms"]),
        t_end_ms=float(doc["t_end_ms"]),
        dtype=doc["dtype"],
        montage_path=doc.get("montage_path"),
        categories_path=doc.get("categories_path"),
    )


def _load_tensor(base: Path, rel_path: str, want_dtype: str, where: str, issues: list):
    full = base / rel_path
    if not full.exists():
        issues.append(Issue("MISSING_FILE", f"{where}: file not found: {full}"))
        return None
    try:
        arr = load_npy(full)
    except UnsupportedFeatureError as exc:
        issues.append(Issue("UNSUPPORTED_DTYPE", f"{where}: {exc}"))
        return None
    except (FormatError, TruncationError) as exc:
        issues.append(Issue("NPY_FORMAT", f"{where}: {exc}"))
        return None
    if arr.dtype != _SUPPORTED_DESCRS[want_dtype]:
        issues.append(Issue("DTYPE_MISMATCH",
                            f"{where}: tensor dtype {arr.dtype.str} != manifest {want_dtype}"))
        return None
    return arr


def _assemble(manifest_path):
    issues: list[Issue] = []
    manifest_path = Path(manifest_path)
    manifest = _parse_manifest(manifest_path, issues)
    if manifest is None:
        return None, issues
    base = manifest_path.parent

    subjects = {}
    for ent in manifest.subjects:
        sid = ent["subject_id"]
        where = f"subject {sid}"
        arr = _load_tensor(base, ent["eeg_path"], manifest.dtype, where, issues)
        if arr is None:
            continue
        try:
            epochs = EEGEpochs(
                data=arr.astype(np.float64),
                channel_names=ent.get("channel_names", ()),
                sfreq=manifest.sfreq,
                t_start_ms=manifest.t_start_ms,
                t_end_ms=manifest.t_end_ms,
                stimulus_ids=ent.get("stimulus_ids", ()),
                repetition_index=ent.get("repetition_index", ()),
            )
        except ValidationError as exc:
            code = "INCONSISTENT_SFREQ" if "sfreq" in str(exc) else "SHAPE_MISMATCH"
            issues.append(Issue(code, f"{where}: {exc}"))
            continue
        subjects[sid] = epochs

    features = {}
    for ent in manifest.features:
        mid = ent["model_id"]
        where = f"model {mid}"
        arr = _load_tensor(base, ent["path"], manifest.dtype, where, issues)
        if arr is None:
            continue
        ids = ent.get("stimulus_ids", ())
        if len(set(ids)) != len(ids):
            dupes = sorted({s for s in ids if list(ids).count(s) > 1})
            issues.append(Issue("DUPLICATE_ID",
                                f"{where}: duplicate stimulus_ids {dupes[:5]}"))
            continue
        try:
            features[mid] = FeatureTensor(
                data=arr.astype(np.float64),
                model_id=mid,
                layer_names=ent.get("layer_names",
                                    tuple(f"layer{i}" for i in range(arr.shape[1]))
                                    if arr.ndim == 3 else ()),
                stimulus_ids=ids,
            )
        except ValidationError as exc:
            issues.append(Issue("SHAPE_MISMATCH", f"{where}: {exc}"))
            continue

    # every EEG stimulus id must resolve to a feature row, per model
    for mid, feat in features.items():
        have = set(feat.stimulus_ids)
        for sid, epochs in subjects.items():
            missing = sorted(set(epochs.stimulus_ids) - have)
            if missing:
                issues.append(Issue(
                    "ID_MISMATCH",
                    f"model {mid} is missing stimulus ids present in subject {sid}: "
                    f"{missing[:5]}" + ("..." if len(missing) > 5 else ""),
                ))

    montage = None
    if manifest.montage_path is not None:
        mpath = base / manifest.montage_path
        if not mpath.exists():
            issues.append(Issue("MISSING_FILE", f"montage_path not found: {mpath}"))
        else:
            try:
                montage = load_montage(mpath)
            except (FormatError, ValidationError) as exc:
                issues.append(Issue("BAD_MONTAGE", str(exc)))

    categories = None
    if manifest.categories_path is not None:
        cpath = base / manifest.categories_path
        if not cpath.exists():
            issues.append(Issue("MISSING_FILE", f"categories_path not found: {cpath}"))
        else:
            try:
                categories = CategoryLabels.from_csv(cpath)
            except (FormatError, ValidationError) as exc:
                issues.append(Issue("BAD_CATEGORY", str(exc)))

    if issues:
        return None, issues
    dataset = Dataset(manifest=manifest, subjects=subjects, features=features,
                      montage=montage, categories=categories)
    return dataset, issues


def validate_manifest(manifest_path) -> list:
    """All problems that would make load_dataset fail; empty list means loadable."""
    _, issues = _assemble(manifest_path)
    return issues


def load_dataset(manifest_path) -> Dataset:
    """Load and cross-check a manifest dataset; raises LoadError on any issue."""
    dataset, issues = _assemble(manifest_path)
    if issues:
        summary = "; ".join(str(i) for i in issues[:10])
        raise LoadError(f"{manifest_path}: {summary}")
    return dataset
