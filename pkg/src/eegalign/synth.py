"""Synthetic datasets with known ground truth, plus brute-force rank oracles.

Substitutes for the non-redistributable recordings at desk scale: signals
are planted at a known (layer, window, channel set) so recovery can be
asserted, and every draw comes from the documented counter-based stream, in
a documented order, so datasets regenerate bit for bit anywhere.

Stream layout per seed: features use substream 2, the planted readout 3,
and subject s noise substream 100 + s.
"""

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_model
from .data_model import EEGEpochs, FeatureTensor
from .errors import ParameterError, ValidationError
from .metrics import pearson
from .rng import Stream, child_seed

_STREAM_FEATURES = 2
_STREAM_READOUT = 3
_STREAM_SUBJECT_BASE = 100

DEFAULT_SYNTH_CHANNELS = (
    "Fp1", "Fp2", "F3", "Fz", "F4", "FC1", "FC2", "C3", "Cz", "C4",
    "CP1", "CP2", "P3", "Pz", "P4", "PO3", "PO4", "O1", "Oz", "O2",
)

DEFAULT_CATEGORIES = (
    "mammal", "bird", "fish", "reptile", "amphibian", "vehicle", "furniture",
    "musical instrument", "geological formation", "tool", "flower", "fruit",
)


@dataclass(frozen=True)
class SynthSpec:
    """Ground-truth description of a generated dataset."""

    n_stimuli: int = 120
    n_channels: int = 20
    n_repetitions: int = 4
    n_subjects: int = 1
    sfreq: float = 100.0
    epoch_ms: float = 500.0
    n_layers: int = 4
    dim: int = 32
    snr: float = 2.0
    planted_layer: int = 2
    planted_window: tuple = (100.0, 200.0)
    planted_channels: tuple = ("O1", "Oz", "O2")
    seed: int = 0
    channel_names: tuple | None = None

    def __post_init__(self):
        names = self.channel_names
        if names is None:
            if self.n_channels > len(DEFAULT_SYNTH_CHANNELS):
                raise ParameterError(
                    f"n_channels > {len(DEFAULT_SYNTH_CHANNELS)} needs explicit channel_names"
                )
            names = DEFAULT_SYNTH_CHANNELS[: self.n_channels]
        object.__setattr__(self, "channel_names", tuple(names))
        object.__setattr__(self, "planted_channels", tuple(self.planted_channels))
        object.__setattr__(self, "planted_window",
                           (float(self.planted_window[0]), float(self.planted_window[1])))
        if len(self.channel_names) != self.n_channels:
            raise ParameterError("channel_names length != n_channels")
        if min(self.n_stimuli, self.n_repetitions, self.n_subjects,
               self.n_layers, self.dim) < 1:
            raise ParameterError("counts must be >= 1")
        if self.snr < 0:
            raise ParameterError("snr must be >= 0")
        if not 0 <= self.planted_layer < self.n_layers:
            raise ParameterError("planted_layer out of range")
        ws, we = self.planted_window
        if not (0 <= ws < we <= self.epoch_ms):
            raise ParameterError("planted_window outside [0, epoch_ms]")
        missing = set(self.planted_channels) - set(self.channel_names)
        if missing:
            raise ParameterError(f"planted channels not in channel set: {sorted(missing)}")

    @property
    def n_times(self):
        return int(round(self.epoch_ms / 1000.0 * self.sfreq))

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown synth spec keys: {sorted(unknown)}")
        for key in ("planted_window", "planted_channels", "channel_names"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["planted_window"] = list(self.planted_window)
        doc["planted_channels"] = list(self.planted_channels)
        doc["channel_names"] = list(self.channel_names)
        return doc


def gen_linear_dataset(n: int, d_in: int, d_out: int, snr: float, seed: int):
    """(X, Y, B_true) with Y = X B + noise at the requested power ratio.

    X and B are standard normal (B rescaled so each signal column has unit
    empirical variance); noise variance is 1/snr per column.  snr = 0 means
    pure unit noise with B = 0; snr = inf means noiseless.  Draw order:
    X, then B, then noise.
    """
    if min(n, d_in, d_out) < 1:
        raise ParameterError("n, d_in, d_out must be >= 1")
    if snr < 0:
        raise ParameterError("snr must be >= 0")
    stream = Stream(child_seed(seed, 1))
    x = stream.normal((n, d_in))
    b = stream.normal((d_in, d_out))
    noise = stream.normal((n, d_out))
    if snr == 0:
        return x, noise, np.zeros((d_in, d_out))
    signal = x @ b
    scale = signal.std(axis=0)
    scale[scale == 0] = 1.0
    b = b / scale
    signal = signal / scale
    y = signal if math.isinf(snr) else signal + noise / math.sqrt(snr)
    return x, y, b


def _window_indices(spec: SynthSpec):
    dt = 1000.0 / spec.sfreq
    t = np.arange(spec.n_times) * dt
    ws, we = spec.planted_window
    return np.flatnonzero((t >= ws - 1e-6) & (t < we - 1e-6))


def gen_structured_epochs(spec: SynthSpec, features: FeatureTensor | None = None,
                          subject_index: int = 0):
    """Epochs with a signal planted at (layer, window, channels), plus features.

    EEG is unit white noise everywhere; inside the planted window the
    planted channels additionally carry sqrt(snr) times a unit-variance
    linear readout of the planted layer's features.  Repetitions share the
    signal and draw independent noise.
    """
    if features is None:
        feat_data = Stream(child_seed(spec.seed, _STREAM_FEATURES)).normal(
            (spec.n_stimuli, spec.n_layers, spec.dim))
        features = FeatureTensor(
            data=feat_data,
            model_id="synth",
            layer_names=tuple(f"layer{i}" for i in range(spec.n_layers)),
            stimulus_ids=tuple(f"stim{i:05d}" for i in range(spec.n_stimuli)),
        )
    else:
        if features.n_stimuli != spec.n_stimuli or features.n_layers <= spec.planted_layer:
            raise ParameterError("provided features do not match the synth spec")

    layer = features.data[:, spec.planted_layer, :]
    readout = Stream(child_seed(spec.seed, _STREAM_READOUT)).normal((layer.shape[1],
                                                                     len(spec.planted_channels)))
    signal = layer @ readout
    signal = signal - signal.mean(axis=0)
    scale = signal.std(axis=0)
    scale[scale == 0] = 1.0
    signal = signal / scale

    n_trials = spec.n_stimuli * spec.n_repetitions
    noise_stream = Stream(child_seed(spec.seed, _STREAM_SUBJECT_BASE + subject_index))
    data = noise_stream.normal((n_trials, spec.n_channels, spec.n_times))
    idx = _window_indices(spec)
    chan_pos = [spec.channel_names.index(c) for c in spec.planted_channels]
    amp = math.sqrt(spec.snr)
    stim_of_trial = []
    rep_of_trial = []
    for rep in range(spec.n_repetitions):
        for s in range(spec.n_stimuli):
            stim_of_trial.append(s)
            rep_of_trial.append(rep)
    for t, s in enumerate(stim_of_trial):
        for j, c in enumerate(chan_pos):
            data[t, c, idx] += amp * signal[s, j]

    epochs = EEGEpochs(
        data=data,
        channel_names=spec.channel_names,
        sfreq=spec.sfreq,
        t_start_ms=0.0,
        t_end_ms=spec.epoch_ms,
        stimulus_ids=tuple(features.stimulus_ids[s] for s in stim_of_trial),
        repetition_index=tuple(rep_of_trial),
    )
    return epochs, features


def rank_oracle(x, y):
    """(spearman, kendall tau-b) by exhaustive definition; inputs capped at 12.

    Mid-ranks are counted pairwise; tau enumerates all pairs with explicit
    concordant/discordant/tie bookkeeping.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ParameterError("length mismatch")
    n = x.shape[0]
    if n > 12:
        raise ParameterError("oracle capped at length 12")
    if n < 2:
        raise ParameterError("need at least 2 observations")

    def explicit_midranks(v):
        ranks = np.empty(n)
        for i in range(n):
            less = sum(1 for j in range(n) if v[j] < v[i])
            equal = sum(1 for j in range(n) if v[j] == v[i])
            ranks[i] = less + (equal + 1) / 2.0
        return ranks

    rho = pearson(explicit_midranks(x), explicit_midranks(y))

    conc = disc = tie_x = tie_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tie_x += 1
            elif dy == 0:
                tie_y += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    denom = (conc + disc + tie_x) * (conc + disc + tie_y)
    if denom == 0:
        from .errors import UndefinedStatError

        raise UndefinedStatError("tau undefined: all pairs tied in one vector")
    tau = (conc - disc) / math.sqrt(denom)
    return rho, tau


# ---------------------------------------------------------------------------
# on-disk dataset writer (CLI `synth`)
# ---------------------------------------------------------------------------

def write_synth_dataset(spec: SynthSpec, out_dir, dtype: str = "<f8",
                        with_categories: bool = True) -> Path:
    """Write a complete manifest dataset (EEG per subject, features, montage,
    categories) to a directory; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    epochs0, features = gen_structured_epochs(spec, subject_index=0)
    data_model.save_npy(features.data, out / "features_synth.npy", dtype=dtype)

    subjects = []
    for s in range(spec.n_subjects):
        epochs = epochs0 if s == 0 else gen_structured_epochs(spec, features=features,
                                                              subject_index=s)[0]
        name = f"eeg_subj{s + 1:02d}.npy"
        data_model.save_npy(epochs.data, out / name, dtype=dtype)
        subjects.append({
            "subject_id": f"subj{s + 1:02d}",
            "eeg_path": name,
            "channel_names": list(epochs.channel_names),
            "stimulus_ids": list(epochs.stimulus_ids),
            "repetition_index": list(epochs.repetition_index),
        })

    montage = data_model.default_montage()
    montage_doc = {"version": "1", "channels": {
        name: {"x": e.x, "y": e.y, "region": e.region}
        for name, e in montage.entries.items() if name in spec.channel_names
    }}
    with open(out / "montage.json", "w", encoding="utf-8") as fh:
        json.dump(montage_doc, fh, indent=1, sort_keys=True)

    categories_path = None
    if with_categories:
        categories_path = "categories.csv"
        with open(out / categories_path, "w", encoding="utf-8") as fh:
            fh.write("stimulus_id,category\n")
            for i, sid in enumerate(features.stimulus_ids):
                fh.write(f"{sid},{DEFAULT_CATEGORIES[i % len(DEFAULT_CATEGORIES)]}\n")

    manifest = {
        "version": "1",
        "subjects": subjects,
        "features": [{
            "model_id": features.model_id,
            "path": "features_synth.npy",
            "layer_names": list(features.layer_names),
            "stimulus_ids": list(features.stimulus_ids),
        }],
        "montage_path": "montage.json",
        "sfreq": spec.sfreq,
        "t_start_ms": 0.0,
        "t_end_ms": spec.epoch_ms,
        "dtype": dtype,
        "synth_spec": spec.to_json(),
    }
    if categories_path:
        manifest["categories_path"] = categories_path
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest_path
