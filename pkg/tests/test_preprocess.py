import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eegalign.data_model import EEGEpochs
from eegalign.errors import ParameterError, RangeError
from eegalign.preprocess import (
    average_repetitions,
    baseline_correct,
    pca_fit,
    pca_transform,
    standardize_apply,
    standardize_fit,
    window_flatten,
    window_sample_indices,
)
from eegalign.rng import Stream


def make_epochs(data, sfreq=100.0, t_start=0.0, ids=None, reps=None):
    data = np.asarray(data, dtype=np.float64)
    n_trials, _, n_times = data.shape
    return EEGEpochs(
        data=data,
        channel_names=tuple(f"C{i}" for i in range(data.shape[1])),
        sfreq=sfreq,
        t_start_ms=t_start,
        t_end_ms=t_start + n_times / sfreq * 1000.0,
        stimulus_ids=tuple(ids) if ids else tuple(f"s{i}" for i in range(n_trials)),
        repetition_index=tuple(reps) if reps else tuple(0 for _ in range(n_trials)),
    )


# ---------------------------------------------------------------------------
# average_repetitions
# ---------------------------------------------------------------------------

def test_average_identical_repetitions_is_identity():
    trial = Stream(1).normal((1, 3, 20))
    data = np.repeat(trial, 4, axis=0)
    ep = make_epochs(data, ids=["a"] * 4, reps=range(4))
    out = average_repetitions(ep)
    assert out.n_trials == 1
    assert np.allclose(out.data[0], trial[0])
    assert out.repetition_index == (0,)


def test_average_two_values():
    data = np.stack([np.ones((2, 10)), 3 * np.ones((2, 10))])
    ep = make_epochs(data, ids=["a", "a"], reps=[0, 1])
    out = average_repetitions(ep)
    assert np.all(out.data == 2.0)


def test_average_first_appearance_order_and_counts():
    n_stim, n_rep = 37, 4
    data = Stream(2).normal((n_stim * n_rep, 2, 10))
    ids = [f"s{i:03d}" for i in range(n_stim)] * n_rep      # repetition-major
    ep = make_epochs(data, ids=ids, reps=[r for r in range(n_rep) for _ in range(n_stim)])
    out = average_repetitions(ep)
    assert out.n_trials == n_stim
    assert out.stimulus_ids == tuple(f"s{i:03d}" for i in range(n_stim))
    # oracle: group-mean by id
    want = np.zeros((n_stim, 2, 10))
    for r in range(n_rep):
        want += data[r * n_stim:(r + 1) * n_stim]
    assert np.allclose(out.data, want / n_rep)


def test_average_idempotent():
    data = Stream(3).normal((8, 2, 10))
    ep = make_epochs(data, ids=[f"s{i % 4}" for i in range(8)],
                     reps=[i // 4 for i in range(8)])
    once = average_repetitions(ep)
    twice = average_repetitions(once)
    assert np.array_equal(once.data, twice.data)
    assert once.stimulus_ids == twice.stimulus_ids


# ---------------------------------------------------------------------------
# baseline_correct
# ---------------------------------------------------------------------------

def test_baseline_constant_signal_zeroed():
    ep = make_epochs(5.0 * np.ones((2, 3, 50)), t_start=-200.0)
    out = baseline_correct(ep, -200.0, 0.0)
    assert np.allclose(out.data, 0.0)


def test_baseline_zero_mean_baseline_no_change():
    data = np.zeros((1, 1, 100))
    data[0, 0, 20:] = 5.0                      # post-stimulus only
    ep = make_epochs(data, t_start=-200.0)     # baseline [-200, 0) = first 20 samples
    out = baseline_correct(ep, -200.0, 0.0)
    assert np.array_equal(out.data, data)


def test_baseline_outside_epoch_raises():
    ep = make_epochs(np.zeros((1, 1, 100)), t_start=0.0)
    with pytest.raises(RangeError):
        baseline_correct(ep, -200.0, 0.0)


def test_baseline_shifts_all_samples_by_constant():
    data = Stream(4).normal((3, 2, 60))
    ep = make_epochs(data, t_start=-100.0)
    out = baseline_correct(ep, -100.0, 0.0)
    shift = data[:, :, :10].mean(axis=2, keepdims=True)
    assert np.allclose(out.data, data - shift)


# ---------------------------------------------------------------------------
# standardize
# ---------------------------------------------------------------------------

def test_standardize_basic():
    x = np.array([[1.0], [2.0], [3.0]])
    z = standardize_apply(standardize_fit(x), x)
    assert abs(z.mean()) < 1e-10
    assert abs(z.std() - 1.0) < 1e-8


def test_standardize_constant_column_to_zero():
    x = np.column_stack([np.ones(5), np.arange(5.0)])
    z = standardize_apply(standardize_fit(x), x)
    assert np.all(z[:, 0] == 0.0)
    assert abs(z[:, 1].std() - 1.0) < 1e-8


def test_standardize_heldout_mean_nonzero():
    x = Stream(5).normal((100, 4))
    state = standardize_fit(x[:50])
    held = standardize_apply(state, x[50:])
    m = np.abs(held.mean(axis=0))
    assert np.all(m > 0)       # generically nonzero
    assert np.all(m < 1.0)     # but bounded: same distribution


@given(st.floats(0.1, 10), st.floats(-5, 5))
def test_standardize_affine_property(a, b):
    x = Stream(6).normal((30, 3))
    state = standardize_fit(x)
    z1 = standardize_apply(state, a * x + b)
    z0 = standardize_apply(state, x)
    # affine input maps to an affine transform of the output with same state
    expected = a * z0 + (b + (a - 1) * state.mean) / state.std
    assert np.allclose(z1, expected, atol=1e-10)


def test_standardize_fit_needs_two_rows():
    with pytest.raises(ParameterError):
        standardize_fit(np.ones((1, 2)))


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def test_pca_two_dim_subspace():
    basis = Stream(7).normal((2, 5))
    coefs = Stream(8).normal((40, 2))
    x = coefs @ basis
    state = pca_fit(x, 2)
    assert state.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-10)


def test_pca_full_rank_reconstruction():
    x = Stream(9).normal((20, 6))
    state = pca_fit(x, 6)
    z = pca_transform(state, x)
    recon = z @ state.components.T + state.mean
    assert np.allclose(recon, x, atol=1e-8)


def test_pca_matches_covariance_eigendecomposition():
    x = Stream(10).normal((100, 50))
    state = pca_fit(x, 10)
    # oracle: dense eigendecomposition of the covariance matrix
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc
    evals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    ratios = evals / evals.sum()
    assert np.allclose(state.explained_variance_ratio, ratios[:10], atol=1e-8)
    assert np.all(np.diff(state.explained_variance_ratio) <= 1e-12)


def test_pca_orthonormal_components():
    x = Stream(11).normal((30, 8))
    state = pca_fit(x, 5)
    gram = state.components.T @ state.components
    assert np.allclose(gram, np.eye(5), atol=1e-8)


def test_pca_transform_diagonal_covariance():
    x = Stream(12).normal((60, 10))
    state = pca_fit(x, 6)
    z = pca_transform(state, x)
    cov = (z - z.mean(axis=0)).T @ (z - z.mean(axis=0))
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) < 1e-8


def test_pca_k_out_of_range():
    x = Stream(13).normal((10, 4))
    with pytest.raises(ParameterError):
        pca_fit(x, 0)
    with pytest.raises(ParameterError):
        pca_fit(x, 5)
    with pytest.raises(ParameterError):
        pca_fit(Stream(14).normal((3, 10)), 3)   # k > n-1


# ---------------------------------------------------------------------------
# window_flatten
# ---------------------------------------------------------------------------

def test_window_flatten_layout():
    data = np.arange(2 * 2 * 5, dtype=np.float64).reshape(2, 2, 5)
    ep = make_epochs(data, sfreq=1000.0)
    out = window_flatten(ep, 0.0, 3.0)
    # channel-major then time: c0t0..c0t2, c1t0..c1t2
    assert out.shape == (2, 6)
    assert out[0].tolist() == [0, 1, 2, 5, 6, 7]


def test_window_flatten_full_epoch():
    data = Stream(15).normal((3, 4, 25))
    ep = make_epochs(data, sfreq=50.0)
    out = window_flatten(ep, ep.t_start_ms, ep.t_end_ms)
    assert out.shape == (3, 4 * 25)


def test_window_100ms_at_100hz_has_10_samples():
    ep = make_epochs(Stream(16).normal((2, 3, 50)), sfreq=100.0)
    idx = window_sample_indices(ep, 0.0, 100.0)
    assert idx.size == 10
    out = window_flatten(ep, 0.0, 100.0)
    assert out.shape == (2, 30)


def test_window_prefix_consistency():
    ep = make_epochs(Stream(17).normal((2, 2, 40)), sfreq=100.0)
    wide = window_flatten(ep, 0.0, 200.0)
    narrow = window_flatten(ep, 0.0, 100.0)
    # first-window columns of the wide call equal the narrow call
    w = 10
    cols = np.concatenate([np.arange(w), 20 + np.arange(w)])
    assert np.array_equal(wide[:, cols], narrow)


def test_window_empty_raises():
    ep = make_epochs(Stream(18).normal((1, 1, 40)), sfreq=100.0)
    with pytest.raises(RangeError):
        window_flatten(ep, 55.0, 58.0)     # between samples
    with pytest.raises(RangeError):
        window_flatten(ep, 0.0, 500.0)     # beyond epoch
