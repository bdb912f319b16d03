"""Ridge-regression encoding models with nested cross-validation.

The outer K folds come from a seeded Fisher-Yates shuffle followed by
contiguous splits.  Within each training split the penalty is chosen by an
inner cross-validation over the alpha grid; the inner split is derived from
a canonical, row-order-independent ordering of the training rows so that
permuting stimuli (together with their fold labels) cannot change scores.

Solves are closed form: Cholesky on the regularized Gram matrix, primal
(d x d) when features are narrow, dual (n x n) otherwise, with an SVD
fallback if factorization fails.  The intercept is handled by centering so
the penalty never touches the mean.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data_model import EEGEpochs, FeatureTensor
from .errors import NumericalError, ParameterError
from .preprocess import (
    clamp_pca_dim,
    pca_fit,
    pca_transform,
    standardize_apply,
    standardize_fit,
    window_flatten,
)
from .rng import Stream, child_seed

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = tuple(float(a) for a in np.logspace(-2, 3, 20))

# substream indices (see rng module): keep these stable, they are part of
# the reproducibility contract
_STREAM_OUTER_FOLDS = 1
_STREAM_INNER_BASE = 1000
_STREAM_CANONICAL_KEY = 2
_STREAM_INNER_SHUFFLE = 3


@dataclass(frozen=True)
class CVConfig:
    k_folds: int = 5
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    rng_seed: int = 0
    fit_scope: str = "train_fold"        # or "global"

    def __post_init__(self):
        if self.k_folds < 2:
            raise ParameterError("k_folds must be >= 2")
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid or any(a <= 0 for a in grid) or list(grid) != sorted(grid):
            raise ParameterError("alpha_grid must be positive and sorted ascending")
        object.__setattr__(self, "alpha_grid", grid)
        if self.fit_scope not in ("train_fold", "global"):
            raise ParameterError("fit_scope must be 'train_fold' or 'global'")


@dataclass(frozen=True)
class PreprocessPlan:
    """What to fit (per fold or globally, per CVConfig.fit_scope) before solving."""

    standardize_x: bool = False
    standardize_y: bool = False
    pca_x: int | None = None
    pca_y: int | None = None


@dataclass(frozen=True)
class RidgeFit:
    beta: np.ndarray                      # d_in x d_out
    alpha: float
    intercept: np.ndarray                 # d_out


def ridge_solve(x, y, alpha: float) -> RidgeFit:
    """Closed-form ridge solution (X^T X + alpha I)^-1 X^T Y.

    Uses the primal Gram when d_in <= n and the mathematically identical
    dual path beta = X^T (X X^T + alpha I)^-1 Y when d_in > n.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ParameterError("X and Y must have the same number of rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ParameterError("X and Y must be finite")
    if alpha < 0:
        raise ParameterError("alpha must be >= 0")
    n, d = x.shape
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean

    if alpha == 0.0:
        s = np.linalg.svd(xc, compute_uv=False)
        if d > n or s.size == 0 or s[-1] <= s[0] * 1e-12:
            raise NumericalError("X^T X is singular at alpha=0; use a positive alpha")

    if d <= n:
        gram = xc.T @ xc
        gram[np.diag_indices(d)] += alpha
        rhs = xc.T @ yc
        try:
            beta = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram, lower=True), rhs)
        except scipy.linalg.LinAlgError:
            beta = _svd_solve(xc, yc, alpha)
    else:
        gram = xc @ xc.T
        gram[np.diag_indices(n)] += alpha
        try:
            dual = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram, lower=True), yc)
        except scipy.linalg.LinAlgError:
            beta = _svd_solve(xc, yc, alpha)
        else:
            beta = xc.T @ dual

    intercept = y_mean - x_mean @ beta
    return RidgeFit(beta=beta, alpha=float(alpha), intercept=intercept)


def _svd_solve(xc, yc, alpha):
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    shrink = s / (s * s + alpha)
    return vt.T @ (shrink[:, None] * (u.T @ yc))


def predict(fit: RidgeFit, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != fit.beta.shape[0]:
        raise ParameterError(
            f"X has {x.shape[1]} columns but the fit expects {fit.beta.shape[0]}"
        )
    return x @ fit.beta + fit.intercept


def _column_pearson(yhat, y):
    """Per-column correlation plus a mask of undefined (zero variance) columns."""
    yc = y - y.mean(axis=0)
    pc = yhat - yhat.mean(axis=0)
    syy = np.sum(yc * yc, axis=0)
    spp = np.sum(pc * pc, axis=0)
    undefined = (syy == 0.0) | (spp == 0.0)
    denom = np.sqrt(np.where(undefined, 1.0, syy * spp))
    r = np.where(undefined, 0.0, np.sum(yc * pc, axis=0) / denom)
    return r, undefined


def _column_pearson_batched(yhat_stack, y):
    """Per-column correlations for a stack of predictions [A, n, q] vs y [n, q]."""
    yc = y - y.mean(axis=0)
    pc = yhat_stack - yhat_stack.mean(axis=1, keepdims=True)
    syy = np.sum(yc * yc, axis=0)                              # q
    spp = np.sum(pc * pc, axis=1)                              # A x q
    undefined = (syy[None, :] == 0.0) | (spp == 0.0)
    denom = np.sqrt(np.where(undefined, 1.0, spp * syy[None, :]))
    num = np.einsum("anq,nq->aq", pc, yc)
    return np.where(undefined, 0.0, num / denom)


def score_pearson_columns(yhat, y, mode: str = "mean_columns") -> float:
    """Mean over target columns of the per-column Pearson correlation.

    Zero-variance columns contribute 0 and stay in the denominator.  The
    'flattened' mode correlates the raveled matrices instead (sensitivity
    check for the matrix-correlation ambiguity).
    """
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.ndim == 1:
        yhat = yhat[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if yhat.shape != y.shape:
        raise ParameterError(f"shape mismatch {yhat.shape} vs {y.shape}")
    if y.shape[0] < 3:
        raise ParameterError("need at least 3 rows to correlate")
    if mode == "flattened":
        r, _ = _column_pearson(yhat.reshape(-1, 1), y.reshape(-1, 1))
        return float(r[0])
    if mode != "mean_columns":
        raise ParameterError(f"unknown score mode {mode!r}")
    r, undefined = _column_pearson(yhat, y)
    if np.any(undefined):
        logger.debug("score: %d zero-variance columns scored 0", int(undefined.sum()))
    return float(r.mean())


def make_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Fold index per row: seeded uniform shuffle, then contiguous splits."""
    if n < k:
        raise ParameterError(f"cannot make {k} folds from {n} rows")
    perm = Stream(child_seed(seed, _STREAM_OUTER_FOLDS)).shuffle_index(n)
    fold_of = np.empty(n, dtype=np.int64)
    base, rem = divmod(n, k)
    start = 0
    for f in range(k):
        size = base + (1 if f < rem else 0)
        fold_of[perm[start:start + size]] = f
        start += size
    return fold_of


@dataclass(frozen=True)
class FittedTransform:
    standardizer: object = None
    pca: object = None

    def apply(self, x):
        if self.standardizer is not None:
            x = standardize_apply(self.standardizer, x)
        if self.pca is not None:
            x = pca_transform(self.pca, x)
        return x


def _fit_transform(x_fit, standardize: bool, pca_k, fitted_on: str) -> FittedTransform:
    std = standardize_fit(x_fit, fitted_on=fitted_on) if standardize else None
    pca = None
    if pca_k is not None:
        base = standardize_apply(std, x_fit) if std is not None else x_fit
        pca = pca_fit(base, pca_k, fitted_on=fitted_on)
    return FittedTransform(standardizer=std, pca=pca)


def _effective_pca_dims(plan: PreprocessPlan, n_min_train, d_x, d_y):
    kx = clamp_pca_dim(plan.pca_x, n_min_train, d_x) if plan.pca_x is not None else None
    ky = clamp_pca_dim(plan.pca_y, n_min_train, d_y) if plan.pca_y is not None else None
    return kx, ky


def select_alpha(x_train, y_train, cfg: CVConfig, stream_seed: int | None = None,
                 score_mode: str = "mean_columns") -> float:
    """Grid value maximizing the mean inner-fold score; ties take the smallest.

    The inner split shuffles a canonical ordering of the training rows (rows
    sorted by projection onto a seeded direction), so the choice does not
    depend on row order.  One eigendecomposition per inner fold serves the
    whole grid.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if y_train.ndim == 1:
        y_train = y_train[:, None]
    if not cfg.alpha_grid:
        raise ParameterError("alpha grid is empty")
    if stream_seed is None:
        stream_seed = cfg.rng_seed
    m = x_train.shape[0]
    inner_k = min(cfg.k_folds, m // 3)
    if inner_k < 2:
        return cfg.alpha_grid[0]

    inner_fold_of = _canonical_folds(x_train, m, inner_k, stream_seed)
    scores = np.zeros((len(cfg.alpha_grid), inner_k))
    for f in range(inner_k):
        tr = inner_fold_of != f
        te = ~tr
        preds = _grid_predictions(x_train[tr], y_train[tr], x_train[te], cfg.alpha_grid)
        yte = y_train[te]
        if score_mode == "mean_columns":
            scores[:, f] = _column_pearson_batched(preds, yte).mean(axis=1)
        else:
            flat = preds.reshape(preds.shape[0], -1, 1)
            scores[:, f] = _column_pearson_batched(flat, yte.reshape(-1, 1))[:, 0]
    mean_scores = scores.mean(axis=1)
    return cfg.alpha_grid[int(np.argmax(mean_scores))]


def _canonical_folds(x, m, k, stream_seed):
    key = x @ Stream(child_seed(stream_seed, _STREAM_CANONICAL_KEY)).normal(x.shape[1])
    canon = np.argsort(key, kind="mergesort")
    perm = Stream(child_seed(stream_seed, _STREAM_INNER_SHUFFLE)).shuffle_index(m)
    fold_of = np.empty(m, dtype=np.int64)
    base, rem = divmod(m, k)
    block = np.empty(m, dtype=np.int64)
    start = 0
    for f in range(k):
        size = base + (1 if f < rem else 0)
        block[perm[start:start + size]] = f
        start += size
    fold_of[canon] = block[np.arange(m)]
    return fold_of


def _grid_predictions(xtr, ytr, xte, alpha_grid):
    """Ridge predictions on xte for every alpha, sharing one factorization.

    Returns an array [n_alphas, n_test, d_out]; all alphas go through one
    eigendecomposition and batched products.
    """
    alphas = np.asarray(alpha_grid, dtype=np.float64)
    x_mean = xtr.mean(axis=0)
    y_mean = ytr.mean(axis=0)
    xc = xtr - x_mean
    yc = ytr - y_mean
    xte_c = xte - x_mean
    n, d = xc.shape
    if d <= n:
        w, v = np.linalg.eigh(xc.T @ xc)
        p = v.T @ (xc.T @ yc)                                   # d x q
        scaled = p[None, :, :] / (w[None, :, None] + alphas[:, None, None])
        beta = np.einsum("ij,ajq->aiq", v, scaled)
        pred = np.einsum("ni,aiq->anq", xte_c, beta)
    else:
        w, v = np.linalg.eigh(xc @ xc.T)
        p = v.T @ yc                                            # n x q
        scaled = p[None, :, :] / (w[None, :, None] + alphas[:, None, None])
        coef = np.einsum("ij,ajq->aiq", v, scaled)
        pred = np.einsum("ni,aiq->anq", xte_c @ xc.T, coef)
    return pred + y_mean[None, None, :]


@dataclass(frozen=True)
class CVResult:
    """One cross-validated encoding run (single design matrix)."""

    rho: float
    fold_scores: np.ndarray               # k
    alphas: np.ndarray                    # chosen alpha per fold
    oof_pred: np.ndarray                  # n x d_out, original row order
    oof_true: np.ndarray                  # targets in the same (transformed) space
    fold_of: np.ndarray                   # fold index per row
    seed: int
    score_undefined_columns: int = 0


def cv_encode(x, y, cfg: CVConfig, plan: PreprocessPlan | None = None,
              folds: np.ndarray | None = None,
              score_mode: str = "mean_columns") -> CVResult:
    """K-fold encoding score: mean over folds of the held-out Pearson score.

    Out-of-fold predictions (and the correspondingly transformed targets)
    come back in original row order for the downstream similarity metrics.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ParameterError("X and Y must be 2-D with matching rows")
    n = x.shape[0]
    if n < cfg.k_folds:
        raise ParameterError(f"n={n} smaller than k_folds={cfg.k_folds}")
    plan = plan or PreprocessPlan()

    if folds is None:
        fold_of = make_folds(n, cfg.k_folds, cfg.rng_seed)
    else:
        fold_of = np.asarray(folds, dtype=np.int64)
        if fold_of.shape != (n,) or set(fold_of.tolist()) != set(range(cfg.k_folds)):
            raise ParameterError("folds must assign every row to one of k folds")

    min_train = min(int(np.sum(fold_of != f)) for f in range(cfg.k_folds))
    kx, ky = _effective_pca_dims(plan, min_train if cfg.fit_scope == "train_fold" else n,
                                 x.shape[1], y.shape[1])

    if cfg.fit_scope == "global":
        tx = _fit_transform(x, plan.standardize_x, kx, "global")
        ty = _fit_transform(y, plan.standardize_y, ky, "global")
        x_all, y_all = tx.apply(x), ty.apply(y)

    d_out = ky if ky is not None else y.shape[1]
    oof_pred = np.zeros((n, d_out))
    oof_true = np.zeros((n, d_out))
    fold_scores = np.zeros(cfg.k_folds)
    alphas = np.zeros(cfg.k_folds)
    undefined_total = 0

    for f in range(cfg.k_folds):
        tr = fold_of != f
        te = ~tr
        if cfg.fit_scope == "global":
            xtr, ytr, xte, yte = x_all[tr], y_all[tr], x_all[te], y_all[te]
        else:
            tx = _fit_transform(x[tr], plan.standardize_x, kx, f"fold{f}-train")
            ty = _fit_transform(y[tr], plan.standardize_y, ky, f"fold{f}-train")
            xtr, ytr = tx.apply(x[tr]), ty.apply(y[tr])
            xte, yte = tx.apply(x[te]), ty.apply(y[te])
        alpha = select_alpha(xtr, ytr, cfg,
                             stream_seed=child_seed(cfg.rng_seed, _STREAM_INNER_BASE + f),
                             score_mode=score_mode)
        fit = ridge_solve(xtr, ytr, alpha)
        yhat = predict(fit, xte)
        if score_mode == "mean_columns":
            r, undefined = _column_pearson(yhat, yte)
            if yte.shape[0] < 3:
                raise ParameterError("need at least 3 rows per test fold")
            fold_scores[f] = float(r.mean())
            undefined_total += int(undefined.sum())
        else:
            fold_scores[f] = score_pearson_columns(yhat, yte, mode=score_mode)
        alphas[f] = alpha
        oof_pred[te] = yhat
        oof_true[te] = yte

    return CVResult(
        rho=float(fold_scores.mean()),
        fold_scores=fold_scores,
        alphas=alphas,
        oof_pred=oof_pred,
        oof_true=oof_true,
        fold_of=fold_of,
        seed=cfg.rng_seed,
        score_undefined_columns=undefined_total,
    )


@dataclass(frozen=True)
class LayerScores:
    """Per-layer cross-validated scores for one feature tensor."""

    layer_names: tuple
    rho: np.ndarray                       # L
    fold_scores: np.ndarray               # L x k
    alphas: np.ndarray                    # L x k

    def __post_init__(self):
        if not np.allclose(self.rho, self.fold_scores.mean(axis=1), atol=1e-12):
            raise ParameterError("rho must equal the mean of its fold scores")


def encode_layers(features: FeatureTensor, y, cfg: CVConfig,
                  plan: PreprocessPlan | None = None,
                  folds: np.ndarray | None = None) -> LayerScores:
    """cv_encode per layer against a fixed target matrix."""
    results = [cv_encode(features.data[:, l, :], y, cfg, plan=plan, folds=folds)
               for l in range(features.n_layers)]
    return LayerScores(
        layer_names=features.layer_names,
        rho=np.array([r.rho for r in results]),
        fold_scores=np.stack([r.fold_scores for r in results]),
        alphas=np.stack([r.alphas for r in results]),
    )


# ---------------------------------------------------------------------------
# channel x window and layer x time analyses
# ---------------------------------------------------------------------------

def _batched_cv_scores(x, targets, cfg: CVConfig, standardize_x: bool,
                       folds: np.ndarray | None = None) -> np.ndarray:
    """Cross-validated Pearson r for many scalar targets sharing one design.

    Equivalent to running cv_encode per target column (d_out = 1) with the
    same folds and alpha-selection protocol, but factorizations are shared:
    per-target alphas come from one eigendecomposition per inner fold.
    """
    n, n_targets = targets.shape
    fold_of = make_folds(n, cfg.k_folds, cfg.rng_seed) if folds is None else folds
    grid = np.array(cfg.alpha_grid)
    fold_r = np.zeros((cfg.k_folds, n_targets))

    for f in range(cfg.k_folds):
        tr = fold_of != f
        te = ~tr
        if cfg.fit_scope == "global":
            tx = _fit_transform(x, standardize_x, None, "global")
        else:
            tx = _fit_transform(x[tr], standardize_x, None, f"fold{f}-train")
        xtr, xte = tx.apply(x[tr]), tx.apply(x[te])
        ytr, yte = targets[tr], targets[te]

        m = xtr.shape[0]
        inner_k = min(cfg.k_folds, m // 3)
        if inner_k < 2:
            chosen = np.zeros(n_targets, dtype=np.int64)
        else:
            seed = child_seed(cfg.rng_seed, _STREAM_INNER_BASE + f)
            inner_fold_of = _canonical_folds(xtr, m, inner_k, seed)
            inner_scores = np.zeros((len(grid), inner_k, n_targets))
            for g in range(inner_k):
                itr = inner_fold_of != g
                ite = ~itr
                preds = _grid_predictions(xtr[itr], ytr[itr], xtr[ite], grid)
                inner_scores[:, g, :] = _column_pearson_batched(preds, ytr[ite])
            chosen = np.argmax(inner_scores.mean(axis=1), axis=0)

        for ai in np.unique(chosen):
            cols = np.flatnonzero(chosen == ai)
            fit = ridge_solve(xtr, ytr[:, cols], grid[ai])
            r, _ = _column_pearson(predict(fit, xte), yte[:, cols])
            fold_r[f, cols] = r

    return fold_r.mean(axis=0)


def channel_window_encode(x, epochs: EEGEpochs, windows, cfg: CVConfig,
                          standardize_x: bool = True,
                          target_mode: str = "window_mean") -> np.ndarray:
    """Cross-validated r per (channel, window).

    The default target is the channel's mean amplitude in the window; the
    'flattened' mode keeps the window time course and averages the
    per-sample correlations.
    """
    if target_mode not in ("window_mean", "flattened"):
        raise ParameterError(f"unknown target mode {target_mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != epochs.n_trials:
        raise ParameterError("X rows must align with epochs trials")
    from .preprocess import window_sample_indices

    n_channels = epochs.n_channels
    out = np.zeros((n_channels, len(windows)))
    fold_of = make_folds(epochs.n_trials, cfg.k_folds, cfg.rng_seed)
    for wi, (ws, we) in enumerate(windows):
        idx = window_sample_indices(epochs, ws, we)
        if target_mode == "window_mean":
            targets = epochs.data[:, :, idx].mean(axis=2)          # n x channels
            out[:, wi] = _batched_cv_scores(x, targets, cfg, standardize_x, folds=fold_of)
        else:
            block = epochs.data[:, :, idx]                          # n x C x W
            flat = block.reshape(epochs.n_trials, -1)
            r = _batched_cv_scores(x, flat, cfg, standardize_x, folds=fold_of)
            out[:, wi] = r.reshape(n_channels, idx.size).mean(axis=1)
    return out


def tile_windows(t_end_ms: float, window_ms: float):
    """Non-overlapping [0, t_end] tiling; a partial final window is dropped."""
    if window_ms <= 0:
        raise ParameterError("window_ms must be positive")
    windows = []
    start = 0.0
    while start + window_ms <= t_end_ms + 1e-9:
        windows.append((start, start + window_ms))
        start += window_ms
    if not windows:
        raise ParameterError(f"epoch too short for a {window_ms} ms window")
    if start < t_end_ms - 1e-9:
        logger.warning("dropping partial final window [%g, %g] ms", start, t_end_ms)
    return windows


def layer_time_grid(features: FeatureTensor, epochs: EEGEpochs, cfg: CVConfig,
                    window_ms: float = 100.0,
                    plan: PreprocessPlan | None = None):
    """Encoding score per (layer, time window).

    Windows tile [0, t_end] without overlap; each cell is a full cv_encode
    of that layer's features against the flattened window, with per-window
    standardization/PCA refit per the plan.
    """
    rows = features.rows_for(epochs.stimulus_ids)
    windows = tile_windows(epochs.t_end_ms, window_ms)
    fold_of = make_folds(epochs.n_trials, cfg.k_folds, cfg.rng_seed)
    grid = np.zeros((features.n_layers, len(windows)))
    for wi, (ws, we) in enumerate(windows):
        y = window_flatten(epochs, ws, we)
        for l in range(features.n_layers):
            x = features.data[rows, l, :]
            grid[l, wi] = cv_encode(x, y, cfg, plan=plan, folds=fold_of).rho
    return grid, windows
