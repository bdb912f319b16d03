"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines;
every check is also a hard assert at its stated tolerance.
"""

import itertools
import json
import math
import sys
import time

import numpy as np
import pytest

from eegalign import analyses
from eegalign.analyses import BatteryConfig, run_topo
from eegalign.cli import main as cli_main
from eegalign.data_model import (
    Dataset,
    Manifest,
    default_montage,
    load_npy,
    save_npy,
)
from eegalign.encoder import CVConfig, PreprocessPlan, cv_encode, layer_time_grid, ridge_solve
from eegalign.metrics import kendall_tau, linear_cka, pearson, spearman
from eegalign.preprocess import average_repetitions
from eegalign.rng import Stream
from eegalign.stats import ols_fit, permutation_null, significance_test
from eegalign.synth import (
    SynthSpec,
    gen_linear_dataset,
    gen_structured_epochs,
    rank_oracle,
    write_synth_dataset,
)

from npy_corpus import CASES, valid_file_bytes


def _verdict(name, ok, detail=""):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip(),
          file=sys.stderr)
    assert ok, f"{name} failed: {detail}"


# ---------------------------------------------------------------------------
# Ridge correctness
# ---------------------------------------------------------------------------

def test_acceptance_ridge_correctness():
    t0 = time.time()
    stream = Stream(1001)
    worst_oracle = 0.0
    worst_paths = 0.0
    for trial in range(100):
        n = 3 + int(stream.uniform(1)[0] * 18)           # n <= 20
        d = 1 + int(stream.uniform(1)[0] * 8)            # d <= 8
        alpha = 10.0 ** (stream.uniform(1)[0] * 5 - 3)   # 1e-3 .. 1e2
        x = stream.normal((n, d))
        y = stream.normal((n, 2))
        fit = ridge_solve(x, y, alpha)

        xc = x - x.mean(axis=0)
        yc = y - y.mean(axis=0)
        beta_oracle = np.linalg.inv(xc.T @ xc + alpha * np.eye(d)) @ (xc.T @ yc)
        rel = np.linalg.norm(fit.beta - beta_oracle) / max(np.linalg.norm(beta_oracle),
                                                           1e-300)
        worst_oracle = max(worst_oracle, rel)

        beta_dual = xc.T @ np.linalg.solve(xc @ xc.T + alpha * np.eye(n), yc)
        rel2 = np.linalg.norm(beta_oracle - beta_dual) / max(
            np.linalg.norm(beta_oracle), 1e-300)
        worst_paths = max(worst_paths, rel2)
    elapsed = time.time() - t0
    ok = worst_oracle < 1e-10 and worst_paths < 1e-8 and elapsed < 5.0
    _verdict("ridge-correctness", ok,
             f"(oracle rel {worst_oracle:.2e}, primal/dual rel {worst_paths:.2e}, "
             f"{elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Metric oracles
# ---------------------------------------------------------------------------

def test_acceptance_metric_oracles():
    t0 = time.time()
    # all 5040 permutations of n = 7: exact agreement
    base = np.arange(7, dtype=np.float64)
    exact = True
    for perm in itertools.permutations(range(7)):
        y = base[list(perm)]
        rho_o, tau_o = rank_oracle(base, y)
        if spearman(base, y) != rho_o or kendall_tau(base, y) != tau_o:
            exact = False
            break

    # 1000 tied-input cases
    stream = Stream(1002)
    tied_ok = 0
    n_tied = 0
    while n_tied < 1000:
        n = 4 + int(stream.uniform(1)[0] * 7)
        x = np.floor(stream.uniform(n) * 3)
        y = np.floor(stream.uniform(n) * 3)
        from eegalign.errors import UndefinedStatError

        try:
            rho_o, tau_o = rank_oracle(x, y)
        except UndefinedStatError:
            continue
        n_tied += 1
        try:
            s = spearman(x, y)
        except UndefinedStatError:
            continue
        if s == rho_o and kendall_tau(x, y) == tau_o:
            tied_ok += 1

    # CKA vs naive double-loop on 100 random pairs
    def naive_cka(a, b):
        n = a.shape[0]
        h = np.eye(n) - np.ones((n, n)) / n
        kc = h @ (a @ a.T) @ h
        lc = h @ (b @ b.T) @ h
        num = sum(kc[i, j] * lc[i, j] for i in range(n) for j in range(n))
        nk = math.sqrt(sum(kc[i, j] ** 2 for i in range(n) for j in range(n)))
        nl = math.sqrt(sum(lc[i, j] ** 2 for i in range(n) for j in range(n)))
        return num / (nk * nl)

    cka_worst = 0.0
    for _ in range(100):
        a = stream.normal((8, 3))
        b = stream.normal((8, 5))
        cka_worst = max(cka_worst, abs(linear_cka(a, b) - naive_cka(a, b)))

    a = stream.normal((12, 6))
    self_err = abs(linear_cka(a, a) - 1.0)
    q, _ = np.linalg.qr(stream.normal((6, 6)))
    inv_err = max(abs(linear_cka(a, a @ q) - 1.0),
                  abs(linear_cka(a, 2.5 * a) - 1.0))

    elapsed = time.time() - t0
    ok = (exact and tied_ok == n_tied == 1000 and cka_worst < 1e-12
          and self_err < 1e-10 and inv_err < 1e-8 and elapsed < 30.0)
    _verdict("metric-oracles", ok,
             f"(perms exact={exact}, tied {tied_ok}/1000, cka {cka_worst:.1e}, "
             f"self {self_err:.1e}, invariance {inv_err:.1e}, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# SNR law
# ---------------------------------------------------------------------------

def test_acceptance_snr_law():
    t0 = time.time()
    cfg = CVConfig(rng_seed=0)
    rhos = []
    for seed in range(50):
        x, y, _ = gen_linear_dataset(500, 16, 8, 1.0, seed=seed)
        rhos.append(cv_encode(x, y, cfg).rho)
    mean_rho = float(np.mean(rhos))
    target = math.sqrt(0.5)
    elapsed = time.time() - t0
    ok = abs(mean_rho - target) <= 0.03 and elapsed < 60.0
    _verdict("snr-law", ok,
             f"(mean rho {mean_rho:.4f} vs {target:.4f}, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Null calibration
# ---------------------------------------------------------------------------

def test_acceptance_null_calibration():
    t0 = time.time()
    cfg = CVConfig(rng_seed=0, alpha_grid=tuple(np.logspace(-2, 3, 4)))
    n, d_in, d_out = 60, 6, 8
    n_rep, n_perm = 200, 200
    rejections = 0
    observed = []
    for rep in range(n_rep):
        x, y, _ = gen_linear_dataset(n, d_in, d_out, 0.0, seed=2000 + rep)
        res = cv_encode(x, y, cfg)
        null = permutation_null(x, y, cfg, n_perm=n_perm, seed=3000 + rep,
                                folds=res.fold_of)
        sig = significance_test(res.fold_scores, null)
        observed.append(res.rho)
        if sig.empirical_p < 0.05:
            rejections += 1
    rate = rejections / n_rep
    mean_obs = float(np.mean(observed))
    elapsed = time.time() - t0
    ok = 0.01 <= rate <= 0.10 and abs(mean_obs) < 0.01 and elapsed < 600.0
    _verdict("null-calibration", ok,
             f"(rejection rate {rate:.3f}, |mean score| {abs(mean_obs):.4f}, "
             f"{elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Planted-structure recovery
# ---------------------------------------------------------------------------

CHANNELS_12 = ("Fp1", "Fp2", "Fz", "Cz", "C3", "C4", "CP1", "CP2", "Pz",
               "O1", "Oz", "O2")


def test_acceptance_planted_recovery():
    t0 = time.time()
    cfg = CVConfig(rng_seed=0, alpha_grid=tuple(np.logspace(-2, 3, 4)))
    plan = PreprocessPlan(standardize_x=True, standardize_y=True)
    montage = default_montage()
    n_seeds = 40
    grid_hits = 0
    topo_hits = 0
    for seed in range(n_seeds):
        spec = SynthSpec(n_stimuli=96, n_channels=12, n_repetitions=4,
                         sfreq=50.0, epoch_ms=300.0, n_layers=3, dim=16,
                         snr=2.0, planted_layer=seed % 3,
                         planted_window=(100.0, 200.0),
                         planted_channels=("O1", "Oz", "O2"),
                         channel_names=CHANNELS_12, seed=4000 + seed)
        epochs, feats = gen_structured_epochs(spec)
        avg = average_repetitions(epochs)
        grid, windows = layer_time_grid(feats, avg, cfg, window_ms=100.0, plan=plan)
        am = np.unravel_index(np.argmax(grid), grid.shape)
        if am == (spec.planted_layer, 1):
            grid_hits += 1

        manifest = Manifest(version="1", subjects=(), features=(),
                            sfreq=spec.sfreq, t_start_ms=0.0,
                            t_end_ms=spec.epoch_ms, dtype="<f8")
        ds = Dataset(manifest=manifest, subjects={"s01": epochs},
                     features={"synth": feats}, montage=montage)
        topo = run_topo(ds, "synth", cfg, BatteryConfig(n_perm=0),
                        window_ms=100.0, montage=montage,
                        layer_selector=spec.planted_layer)
        if topo.region_ranking()[0] == "Occipital":
            topo_hits += 1
    elapsed = time.time() - t0
    ok = (grid_hits >= 0.95 * n_seeds and topo_hits >= 0.95 * n_seeds
          and elapsed < 600.0)
    _verdict("planted-recovery", ok,
             f"(grid {grid_hits}/{n_seeds}, topo {topo_hits}/{n_seeds}, "
             f"{elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------

def _numeric_leaves(doc, out):
    if isinstance(doc, dict):
        for v in doc.values():
            _numeric_leaves(v, out)
    elif isinstance(doc, list):
        for v in doc:
            _numeric_leaves(v, out)
    elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
        out.append(float(doc))


def test_acceptance_determinism(tmp_path):
    spec = SynthSpec(n_stimuli=40, n_channels=12, n_repetitions=2, n_subjects=2,
                     sfreq=50.0, epoch_ms=200.0, n_layers=2, dim=8, snr=4.0,
                     planted_layer=1, planted_window=(40.0, 120.0),
                     planted_channels=("O1", "Oz", "O2"),
                     channel_names=CHANNELS_12, seed=60)
    manifest = write_synth_dataset(spec, tmp_path / "data")
    base_args = ["align", "--manifest", str(manifest), "--model", "synth",
                 "--alpha-points", "3", "--n-perm", "10", "--pca", "16"]
    assert cli_main([*base_args, "--jobs", "1", "--out", str(tmp_path / "a")]) == 0
    assert cli_main([*base_args, "--jobs", "1", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "alignment_synth.json").read_bytes()
    b = (tmp_path / "b" / "alignment_synth.json").read_bytes()
    bitwise = a == b

    assert cli_main([*base_args, "--jobs", "2", "--out", str(tmp_path / "c")]) == 0
    doc_a = json.loads(a)
    doc_c = json.loads((tmp_path / "c" / "alignment_synth.json").read_text())
    # worker count is recorded configuration, not a result
    doc_a["config"].pop("jobs")
    doc_c["config"].pop("jobs")
    va, vc = [], []
    _numeric_leaves(doc_a, va)
    _numeric_leaves(doc_c, vc)
    rel = max((abs(x - y) / max(abs(x), 1e-12) for x, y in zip(va, vc)),
              default=0.0)
    ok = bitwise and len(va) == len(vc) and rel < 1e-10
    _verdict("determinism", ok, f"(bitwise={bitwise}, jobs-2 rel diff {rel:.1e})")


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------

def test_acceptance_ols():
    x = np.linspace(-2, 5, 40)
    fit = ols_fit(x, 2.0 * x + 1.0)
    exact_ok = (abs(fit.slope - 2.0) < 1e-12 and abs(fit.r_squared - 1.0) < 1e-12)

    stream = Stream(1003)
    ident_worst = 0.0
    for _ in range(100):
        xs = stream.normal(25)
        ys = 0.4 * xs + stream.normal(25)
        f = ols_fit(xs, ys)
        ident_worst = max(ident_worst, abs(f.r_squared - pearson(xs, ys) ** 2))
    ok = exact_ok and ident_worst < 1e-12
    _verdict("ols", ok, f"(exact line ok={exact_ok}, R2-identity err {ident_worst:.1e})")


# ---------------------------------------------------------------------------
# Format
# ---------------------------------------------------------------------------

def test_acceptance_format(tmp_path):
    arr = Stream(1004).normal((7, 5))
    p1, p2 = tmp_path / "r1.npy", tmp_path / "r2.npy"
    save_npy(arr, p1, dtype="<f8")
    save_npy(load_npy(p1), p2, dtype="<f8")
    round_trip = p1.read_bytes() == p2.read_bytes()

    base = valid_file_bytes()
    corpus_ok = 0
    for name, mangle, exc in CASES:
        path = tmp_path / f"{name}.npy"
        path.write_bytes(mangle(base))
        try:
            load_npy(path)
        except exc:
            corpus_ok += 1
        except Exception:
            pass
    ok = round_trip and corpus_ok == len(CASES)
    _verdict("format", ok,
             f"(round-trip bitwise={round_trip}, corpus {corpus_ok}/{len(CASES)})")
