"""Inferential statistics: permutation nulls, significance tests, subject
aggregation, and simple least-squares regression with confidence bands.

Student-t tail probabilities and quantiles go through the regularized
incomplete beta function; quantiles are inverted by bracketed root finding.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc

from .encoder import CVConfig, PreprocessPlan, cv_encode
from .errors import ParameterError
from .rng import Stream, child_seed

_STREAM_PERMUTATION_BASE = 10_000


def t_sf(t: float, df: float) -> float:
    """Upper-tail P(T > t) of Student's t via the incomplete beta function."""
    if df <= 0:
        raise ParameterError("df must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


def t_quantile(p: float, df: float) -> float:
    """Inverse CDF of Student's t (accurate to ~1e-12)."""
    if not 0.0 < p < 1.0:
        raise ParameterError("p must be in (0, 1)")
    if p == 0.5:
        return 0.0

    def cdf_minus_p(t):
        return (1.0 - t_sf(t, df)) - p

    hi = 1.0
    while cdf_minus_p(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise ParameterError("quantile bracket failed")
    lo = -1.0
    while cdf_minus_p(lo) > 0:
        lo *= 2.0
        if lo < -1e12:
            raise ParameterError("quantile bracket failed")
    return float(brentq(cdf_minus_p, lo, hi, xtol=1e-14, rtol=8.9e-16))


@dataclass(frozen=True)
class NullDistribution:
    values: np.ndarray
    seed: int
    statistic_name: str

    def __post_init__(self):
        if self.values.size < 1:
            raise ParameterError("null distribution needs at least one value")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("null values must be finite")

    @property
    def n_perm(self):
        return int(self.values.size)


def permutation_null(x, y, cfg: CVConfig, n_perm: int = 200,
                     seed: int | None = None,
                     plan: PreprocessPlan | None = None,
                     folds: np.ndarray | None = None,
                     score_mode: str = "mean_columns") -> NullDistribution:
    """Encoding scores after shuffling target rows against the design.

    Each permutation shuffles Y with its own substream of `seed`, then
    reruns cv_encode with the same folds and alpha-selection protocol, so
    the null reflects everything the observed score was allowed to do.
    """
    if n_perm < 1:
        raise ParameterError("n_perm must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if seed is None:
        seed = cfg.rng_seed
    n = x.shape[0]
    values = np.empty(n_perm)
    for i in range(n_perm):
        perm = Stream(child_seed(seed, _STREAM_PERMUTATION_BASE + i)).shuffle_index(n)
        values[i] = cv_encode(x, y[perm], cfg, plan=plan, folds=folds,
                              score_mode=score_mode).rho
    return NullDistribution(values=values, seed=seed, statistic_name="cv_encode_rho")


@dataclass(frozen=True)
class SignificanceResult:
    t: float | None
    p: float | None
    empirical_p: float
    df: int
    n_perm: int
    degenerate: bool = False


def significance_test(observed_fold_scores, null: NullDistribution) -> SignificanceResult:
    """Fold scores against the null mean (one-sample t) plus an empirical p.

    empirical p = (1 + #{null >= observed mean}) / (1 + n_perm); its floor is
    1/(n_perm + 1).  Zero-variance fold scores make the t-test degenerate;
    the empirical p is still reported.
    """
    scores = np.asarray(observed_fold_scores, dtype=np.float64).ravel()
    if scores.size < 2:
        raise ParameterError("need at least 2 fold scores")
    k = scores.size
    obs_mean = float(scores.mean())
    null_mean = float(null.values.mean())
    empirical_p = (1 + int(np.sum(null.values >= obs_mean))) / (1 + null.n_perm)

    sd = float(scores.std(ddof=1))
    if sd == 0.0:
        return SignificanceResult(t=None, p=None, empirical_p=empirical_p,
                                  df=k - 1, n_perm=null.n_perm, degenerate=True)
    t = (obs_mean - null_mean) / (sd / math.sqrt(k))
    p = 2.0 * t_sf(abs(t), k - 1)
    p = min(max(p, np.finfo(float).tiny), 1.0)
    return SignificanceResult(t=float(t), p=float(p), empirical_p=empirical_p,
                              df=k - 1, n_perm=null.n_perm)


def aggregate_subjects(per_subject_values):
    """(mean, sample std); std is None for a single subject."""
    values = np.asarray(per_subject_values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ParameterError("no subject values to aggregate")
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size >= 2 else None
    return mean, std


@dataclass(frozen=True)
class RegressionResult:
    """Simple OLS fit with everything needed to draw a 95% mean-response band."""

    slope: float
    intercept: float
    r_squared: float
    p_value: float
    n: int
    x_mean: float
    sxx: float
    residual_var: float                   # SS_res / (n - 2)
    t_crit: float                         # t_{0.975, n-2}

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=np.float64)

    def ci_halfwidth(self, x):
        """Half-width of the 95% CI for the conditional mean at x."""
        x = np.asarray(x, dtype=np.float64)
        se = np.sqrt(self.residual_var * (1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx))
        return self.t_crit * se


def ols_fit(x, y) -> RegressionResult:
    """Least squares y = a + b x with slope t-test (n-2 df)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ParameterError("x and y must have the same length")
    n = x.size
    if n < 3:
        raise ParameterError("need at least 3 points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise ParameterError("x is constant; slope undefined")
    yc = y - y.mean()
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(yc @ yc)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    residual_var = ss_res / (n - 2)
    if residual_var == 0.0:
        t = math.inf
    else:
        t = slope / math.sqrt(residual_var / sxx)
    p = 2.0 * t_sf(abs(t), n - 2)
    p = min(max(p, np.finfo(float).tiny), 1.0)
    return RegressionResult(
        slope=slope, intercept=intercept, r_squared=float(r_squared),
        p_value=float(p), n=n, x_mean=float(x.mean()), sxx=sxx,
        residual_var=residual_var, t_crit=t_quantile(0.975, n - 2),
    )
