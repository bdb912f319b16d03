"""Epoch and feature conditioning: repetition averaging, baseline correction,
z-scoring, PCA, and time-window flattening.

Everything here is a pure function over immutable inputs; fold-aware
composition (fit on training rows only vs. globally) happens in the encoder.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .data_model import EEGEpochs
from .errors import ParameterError, RangeError

logger = logging.getLogger(__name__)

_TIME_TOL_MS = 1e-6


def window_sample_indices(epochs: EEGEpochs, start_ms: float, end_ms: float) -> np.ndarray:
    """Sample indices whose times fall in the half-open window [start, end)."""
    if start_ms < epochs.t_start_ms - _TIME_TOL_MS or end_ms > epochs.t_end_ms + _TIME_TOL_MS:
        raise RangeError(
            f"window [{start_ms}, {end_ms}) ms outside epoch "
            f"[{epochs.t_start_ms}, {epochs.t_end_ms}] ms"
        )
    t = epochs.times_ms()
    idx = np.flatnonzero((t >= start_ms - _TIME_TOL_MS) & (t < end_ms - _TIME_TOL_MS))
    if idx.size == 0:
        raise RangeError(f"window [{start_ms}, {end_ms}) ms contains no samples")
    return idx


def average_repetitions(epochs: EEGEpochs) -> EEGEpochs:
    """Mean over repetitions; one output trial per stimulus, in first-appearance order."""
    order = []
    groups = {}
    for i, sid in enumerate(epochs.stimulus_ids):
        if sid not in groups:
            groups[sid] = []
            order.append(sid)
        groups[sid].append(i)
    out = np.empty((len(order), epochs.n_channels, epochs.n_times))
    for row, sid in enumerate(order):
        out[row] = epochs.data[groups[sid]].mean(axis=0)
    return EEGEpochs(
        data=out,
        channel_names=epochs.channel_names,
        sfreq=epochs.sfreq,
        t_start_ms=epochs.t_start_ms,
        t_end_ms=epochs.t_end_ms,
        stimulus_ids=tuple(order),
        repetition_index=tuple(0 for _ in order),
    )


def baseline_correct(epochs: EEGEpochs, baseline_start_ms: float,
                     baseline_end_ms: float) -> EEGEpochs:
    """Subtract the per-trial, per-channel mean over the baseline window."""
    idx = window_sample_indices(epochs, baseline_start_ms, baseline_end_ms)
    baseline = epochs.data[:, :, idx].mean(axis=2, keepdims=True)
    return EEGEpochs(
        data=epochs.data - baseline,
        channel_names=epochs.channel_names,
        sfreq=epochs.sfreq,
        t_start_ms=epochs.t_start_ms,
        t_end_ms=epochs.t_end_ms,
        stimulus_ids=epochs.stimulus_ids,
        repetition_index=epochs.repetition_index,
    )


@dataclass(frozen=True)
class StandardizerState:
    """Column means/stds; zero-variance columns keep std 1 so they map to 0."""

    mean: np.ndarray
    std: np.ndarray
    fitted_on: str = ""


def standardize_fit(x, fitted_on: str = "") -> StandardizerState:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ParameterError("standardize_fit needs a 2-D matrix with >= 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return StandardizerState(mean=mean, std=std, fitted_on=fitted_on)


def standardize_apply(state: StandardizerState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != state.mean.shape[0]:
        raise ParameterError("column count does not match the fitted state")
    return (x - state.mean) / state.std


@dataclass(frozen=True)
class PCAState:
    components: np.ndarray            # d x k, orthonormal columns
    mean: np.ndarray
    explained_variance_ratio: np.ndarray
    fitted_on: str = ""


def pca_fit(x, k: int, fitted_on: str = "") -> PCAState:
    """Top-k right singular vectors of the mean-centered data.

    Component signs are fixed so each column's largest-magnitude loading is
    positive, making the decomposition deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError("pca_fit needs a 2-D matrix")
    n, d = x.shape
    if not 1 <= k <= min(n - 1, d):
        raise ParameterError(f"k={k} outside [1, min(n-1, d)] = [1, {min(n - 1, d)}]")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    comps = vt[:k]
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    flip[flip == 0] = 1.0
    comps = comps * flip[:, None]
    total = float(np.sum(s**2))
    ratio = (s[:k] ** 2) / total if total > 0 else np.zeros(k)
    return PCAState(components=comps.T, mean=mean,
                    explained_variance_ratio=ratio, fitted_on=fitted_on)


def pca_transform(state: PCAState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != state.mean.shape[0]:
        raise ParameterError("column count does not match the fitted state")
    return (x - state.mean) @ state.components


_clamp_warned = set()


def clamp_pca_dim(k: int, n_fit_rows: int, d: int) -> int:
    """Clamp a requested PCA dimensionality to what the data supports."""
    limit = min(n_fit_rows - 1, d)
    if k > limit:
        if (k, limit) not in _clamp_warned:
            _clamp_warned.add((k, limit))
            logger.warning("PCA dimensionality %d clamped to %d (n=%d, d=%d)",
                           k, limit, n_fit_rows, d)
        return limit
    return k


def window_flatten(epochs: EEGEpochs, win_start_ms: float, win_end_ms: float) -> np.ndarray:
    """Trials x (channels * window samples), channel-major then time.

    Row layout for channels c0..cK and window samples t0..tW:
    c0t0..c0tW, c1t0..c1tW, ...
    """
    idx = window_sample_indices(epochs, win_start_ms, win_end_ms)
    return epochs.data[:, :, idx].reshape(epochs.n_trials, -1).copy()
