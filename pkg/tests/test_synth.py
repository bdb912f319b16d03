import json

import numpy as np
import pytest

from eegalign.encoder import CVConfig, cv_encode
from eegalign.errors import ParameterError, UndefinedStatError
from eegalign.preprocess import average_repetitions
from eegalign.synth import (
    SynthSpec,
    gen_linear_dataset,
    gen_structured_epochs,
    rank_oracle,
    write_synth_dataset,
)


# ---------------------------------------------------------------------------
# gen_linear_dataset
# ---------------------------------------------------------------------------

def test_linear_dataset_deterministic():
    a = gen_linear_dataset(30, 4, 2, 1.0, seed=1)
    b = gen_linear_dataset(30, 4, 2, 1.0, seed=1)
    for m, n in zip(a, b):
        assert np.array_equal(m, n)
    c = gen_linear_dataset(30, 4, 2, 1.0, seed=2)
    assert not np.array_equal(a[0], c[0])


def test_linear_dataset_signal_variance_unit():
    x, y, b = gen_linear_dataset(500, 8, 5, 2.0, seed=3)
    signal_std = (x @ b).std(axis=0)
    assert np.all(np.abs(signal_std - 1.0) < 0.05)


def test_linear_dataset_snr_extremes():
    cfg = CVConfig(rng_seed=0, alpha_grid=(0.01, 1.0))
    x, y, _ = gen_linear_dataset(100, 6, 4, float("inf"), seed=4)
    assert cv_encode(x, y, cfg).rho > 0.999
    x0, y0, b0 = gen_linear_dataset(100, 6, 4, 0.0, seed=5)
    assert np.all(b0 == 0.0)
    assert abs(cv_encode(x0, y0, cfg).rho) < 0.15


def test_linear_dataset_noise_scale():
    _, y1, b1 = gen_linear_dataset(4000, 4, 2, 4.0, seed=6)
    x1, _, _ = gen_linear_dataset(4000, 4, 2, 4.0, seed=6)
    resid = y1 - x1 @ b1
    assert np.all(np.abs(resid.std(axis=0) - 0.5) < 0.05)   # var 1/snr = 0.25


def test_linear_dataset_rejects_bad_args():
    with pytest.raises(ParameterError):
        gen_linear_dataset(0, 3, 2, 1.0, seed=0)
    with pytest.raises(ParameterError):
        gen_linear_dataset(10, 3, 2, -1.0, seed=0)


# ---------------------------------------------------------------------------
# SynthSpec + gen_structured_epochs
# ---------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ParameterError):
        SynthSpec(planted_layer=9, n_layers=2)
    with pytest.raises(ParameterError):
        SynthSpec(planted_window=(400.0, 300.0))
    with pytest.raises(ParameterError):
        SynthSpec(planted_channels=("NOPE",))
    with pytest.raises(ParameterError):
        SynthSpec(n_channels=4, planted_channels=("O1",))  # O1 not in first 4


def test_spec_json_round_trip(tmp_path):
    spec = SynthSpec(n_stimuli=17, snr=3.5, seed=9)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_json()))
    assert SynthSpec.from_json(path) == spec


def test_structured_epochs_shapes_and_determinism():
    spec = SynthSpec(n_stimuli=10, n_channels=20, n_repetitions=3, sfreq=100.0,
                     epoch_ms=400.0, n_layers=2, dim=6, planted_layer=0,
                     planted_window=(100.0, 200.0), seed=4)
    ep1, ft1 = gen_structured_epochs(spec)
    ep2, ft2 = gen_structured_epochs(spec)
    assert np.array_equal(ep1.data, ep2.data)
    assert np.array_equal(ft1.data, ft2.data)
    assert ep1.n_trials == 30 and ep1.n_channels == 20 and ep1.n_times == 40
    assert ft1.data.shape == (10, 2, 6)
    assert ep1.stimulus_ids[:10] == ft1.stimulus_ids


def test_structured_epochs_signal_location():
    spec = SynthSpec(n_stimuli=60, n_channels=20, n_repetitions=8, sfreq=100.0,
                     epoch_ms=400.0, n_layers=2, dim=8, snr=9.0, planted_layer=1,
                     planted_window=(100.0, 200.0),
                     planted_channels=("O1", "Oz", "O2"), seed=5)
    epochs, _ = gen_structured_epochs(spec)
    avg = average_repetitions(epochs)
    planted = [spec.channel_names.index(c) for c in spec.planted_channels]
    others = [i for i in range(20) if i not in planted]
    window = slice(10, 20)
    # averaged noise var ~ 1/8; planted window var ~ snr + 1/8
    var_planted = avg.data[:, planted, window].var()
    var_other = avg.data[:, others, window].var()
    var_outside = avg.data[:, planted, 25:].var()
    assert var_planted > 5 * var_other
    assert var_outside < 0.5


def test_repetition_averaging_raises_effective_snr():
    cfg = CVConfig(rng_seed=0, alpha_grid=(0.1, 10.0))
    scores = {}
    for reps in (1, 4):
        spec = SynthSpec(n_stimuli=80, n_channels=6, n_repetitions=reps,
                         sfreq=50.0, epoch_ms=200.0, n_layers=2, dim=8, snr=0.5,
                         planted_layer=1, planted_window=(0.0, 200.0),
                         planted_channels=("O1", "Oz"),
                         channel_names=("Fz", "Cz", "Pz", "P3", "O1", "Oz"),
                         seed=6)
        epochs, feats = gen_structured_epochs(spec)
        avg = average_repetitions(epochs)
        x = feats.layer_matrix(1)[feats.rows_for(avg.stimulus_ids)]
        y = avg.data.reshape(80, -1)
        scores[reps] = cv_encode(x, y, cfg).rho
    assert scores[4] > scores[1] * 1.2


def test_subject_streams_differ_but_share_signal():
    spec = SynthSpec(n_stimuli=20, n_channels=6, n_repetitions=2, sfreq=50.0,
                     epoch_ms=200.0, n_layers=2, dim=6, snr=100.0,
                     planted_layer=1, planted_window=(0.0, 200.0),
                     planted_channels=("O1",),
                     channel_names=("Fz", "Cz", "Pz", "P3", "O1", "Oz"), seed=7)
    ep1, ft = gen_structured_epochs(spec, subject_index=0)
    ep2, _ = gen_structured_epochs(spec, features=ft, subject_index=1)
    assert not np.array_equal(ep1.data, ep2.data)
    # signal dominates at snr 100: averaged planted channels nearly agree
    a1 = average_repetitions(ep1).data[:, 4, :]
    a2 = average_repetitions(ep2).data[:, 4, :]
    assert np.corrcoef(a1.ravel(), a2.ravel())[0, 1] > 0.95


# ---------------------------------------------------------------------------
# rank_oracle
# ---------------------------------------------------------------------------

def test_rank_oracle_basics():
    rho, tau = rank_oracle([1, 2, 3], [1, 3, 2])
    assert tau == pytest.approx(1 / 3)
    with pytest.raises(ParameterError):
        rank_oracle(np.arange(13), np.arange(13))
    with pytest.raises(UndefinedStatError):
        rank_oracle([1, 1, 1], [1, 2, 3])


def test_rank_oracle_tied_case():
    from eegalign.metrics import kendall_tau, spearman

    x, y = [1.0, 1.0, 2.0], [1.0, 2.0, 2.0]
    rho_o, tau_o = rank_oracle(x, y)
    assert spearman(x, y) == rho_o
    assert kendall_tau(x, y) == tau_o


# ---------------------------------------------------------------------------
# on-disk writer
# ---------------------------------------------------------------------------

def test_write_synth_dataset_loads(tmp_path):
    spec = SynthSpec(n_stimuli=8, n_channels=6, n_repetitions=2, n_subjects=2,
                     sfreq=50.0, epoch_ms=200.0, n_layers=2, dim=4,
                     planted_layer=1, planted_window=(40.0, 120.0),
                     planted_channels=("O1",),
                     channel_names=("Fz", "Cz", "Pz", "P3", "O1", "Oz"), seed=8)
    manifest = write_synth_dataset(spec, tmp_path)
    from eegalign.data_model import load_dataset, validate_manifest

    assert validate_manifest(manifest) == []
    ds = load_dataset(manifest)
    assert ds.subject_ids() == ("subj01", "subj02")
    assert ds.montage is not None
    assert set(ds.categories.labels) == set(ds.features["synth"].stimulus_ids)
    # identical spec regenerates identical files
    manifest2 = write_synth_dataset(spec, tmp_path / "again")
    a = (tmp_path / "eeg_subj01.npy").read_bytes()
    b = (tmp_path / "again" / "eeg_subj01.npy").read_bytes()
    assert a == b
