"""Similarity statistic and generalized-normal tail machinery.

The null similarity distribution is modelled as a generalized normal with
density proportional to ``exp(-(|x - mu| / gamma)^beta)``. Tail masses as
small as 2^-200 must stay representable, so the upper tail is evaluated in
the log domain through a regularized incomplete gamma implemented here
(lower series below ``a + 1``, Lentz continued fraction above); double
precision CDF subtraction would be useless at those magnitudes.
"""

import math
from dataclasses import dataclass

import numpy as np

from poa.errors import (
    DegenerateSample,
    DomainError,
    InvalidParams,
    NonConvergence,
    ShapeMismatch,
)

LN2 = math.log(2.0)
_EPS = 1e-16
_MAX_ITER = 600

BETA_MIN = 0.3
BETA_MAX = 10.0


def similarity(x, y) -> float:
    """Normalized inner product ``(1/d) sum_i x_i y_i``."""
    xv = np.asarray(getattr(x, "data", x), dtype=np.float64).reshape(-1)
    yv = np.asarray(getattr(y, "data", y), dtype=np.float64).reshape(-1)
    if xv.size != yv.size:
        raise ShapeMismatch(f"similarity operands differ in length: {xv.size} vs {yv.size}")
    return float(np.dot(xv, yv) / xv.size)


def required_samples(alpha: float, delta: float) -> int:
    """Monte-Carlo sample count ``ceil(ln^2(1/alpha) * ln(1/delta))``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    return math.ceil(math.log(1.0 / alpha) ** 2 * math.log(1.0 / delta))


@dataclass(frozen=True)
class GenNormParams:
    """Location / scale / shape of the fitted similarity distribution."""

    mu: float
    gamma: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.gamma) and math.isfinite(self.beta)):
            raise InvalidParams("parameters must be finite")
        if self.gamma <= 0 or self.beta <= 0:
            raise InvalidParams("gamma and beta must be positive")

    def to_dict(self) -> dict:
        return {"mu": self.mu, "gamma": self.gamma, "beta": self.beta}

    @classmethod
    def from_dict(cls, d: dict) -> "GenNormParams":
        return cls(mu=float(d["mu"]), gamma=float(d["gamma"]), beta=float(d["beta"]))


# ---------------------------------------------------------------------------
# Regularized incomplete gamma, upper tail Q(a, x) = Gamma(a, x) / Gamma(a).
# Split at x = a + 1: lower series for small x, continued fraction otherwise.


def _lower_series_sum(a: float, x: float) -> float:
    total = 1.0 / a
    term = total
    for k in range(1, _MAX_ITER):
        term *= x / (a + k)
        total += term
        if abs(term) < abs(total) * _EPS:
            return total
    raise NonConvergence(f"incomplete gamma series stalled at a={a}, x={x}")


def _upper_cf(a: float, x: float) -> float:
    """Lentz evaluation of the continued fraction for Gamma(a, x) * e^x * x^-a."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / (b if b != 0 else tiny)
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NonConvergence(f"incomplete gamma fraction stalled at a={a}, x={x}")


def log_gammainc_upper(a: float, x: float) -> float:
    """``ln Q(a, x)`` without underflow for large ``x``."""
    if a <= 0:
        raise InvalidParams("a must be positive")
    if x < 0:
        raise InvalidParams("x must be nonnegative")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        p = _lower_series_sum(a, x) * math.exp(-x + a * math.log(x) - math.lgamma(a))
        p = min(p, 1.0)
        if p >= 1.0:
            return -math.inf
        return math.log1p(-p)
    return -x + a * math.log(x) - math.lgamma(a) + math.log(_upper_cf(a, x))


def gammainc_upper(a: float, x) -> np.ndarray:
    """Vectorized ``Q(a, x)`` in the linear domain (bulk accuracy path)."""
    xs = np.asarray(x, dtype=np.float64)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if np.any(xs < 0):
        raise InvalidParams("x must be nonnegative")
    out = np.zeros_like(xs)
    inf_mask = np.isinf(xs)
    xs = np.where(inf_mask, 1.0, xs)

    lo = (xs < a + 1.0) & ~inf_mask
    if np.any(lo):
        xv = xs[lo]
        total = np.full_like(xv, 1.0 / a)
        term = total.copy()
        for k in range(1, _MAX_ITER):
            term = term * (xv / (a + k))
            total += term
            if np.all(np.abs(term) < np.abs(total) * _EPS):
                break
        p = total * np.exp(-xv + a * np.log(np.where(xv > 0, xv, 1.0)) - math.lgamma(a))
        p = np.where(xv == 0.0, 0.0, p)
        out[lo] = 1.0 - np.clip(p, 0.0, 1.0)

    hi = ~lo & ~inf_mask
    if np.any(hi):
        xv = xs[hi]
        tiny = 1e-300
        b = xv + 1.0 - a
        c = np.full_like(xv, 1.0 / tiny)
        d = 1.0 / np.where(b != 0, b, tiny)
        h = d.copy()
        for i in range(1, _MAX_ITER):
            an = -i * (i - a)
            b = b + 2.0
            d = an * d + b
            d = np.where(np.abs(d) < tiny, tiny, d)
            c = b + an / c
            c = np.where(np.abs(c) < tiny, tiny, c)
            d = 1.0 / d
            delta = d * c
            h *= delta
            if np.all(np.abs(delta - 1.0) < _EPS):
                break
        out[hi] = np.exp(-xv + a * np.log(xv) - math.lgamma(a)) * h

    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Density, CDF and tails.


def gennorm_logpdf(params: GenNormParams, x):
    """``ln beta - ln(2 gamma) - ln Gamma(1/beta) - (|x - mu| / gamma)^beta``."""
    xs = np.asarray(x, dtype=np.float64)
    z = np.abs(xs - params.mu) / params.gamma
    const = math.log(params.beta) - math.log(2.0 * params.gamma) - math.lgamma(1.0 / params.beta)
    out = const - z ** params.beta
    return float(out) if np.ndim(x) == 0 else out


def gennorm_cdf(params: GenNormParams, x):
    """CDF via the regularized incomplete gamma, symmetric about ``mu``."""
    xs = np.asarray(x, dtype=np.float64)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    a = 1.0 / params.beta
    z = (xs - params.mu) / params.gamma
    q = gammainc_upper(a, np.abs(z) ** params.beta)
    out = np.where(z >= 0, 1.0 - 0.5 * q, 0.5 * q)
    return float(out[0]) if scalar else out


def tail_prob(params: GenNormParams, threshold: float) -> float:
    """``P[X >= threshold]`` in the linear domain (may underflow to 0)."""
    if math.isinf(threshold):
        return 0.0 if threshold > 0 else 1.0
    z = (threshold - params.mu) / params.gamma
    a = 1.0 / params.beta
    if z >= 0:
        return 0.5 * float(gammainc_upper(a, z ** params.beta))
    return 1.0 - 0.5 * float(gammainc_upper(a, (-z) ** params.beta))


def tail_log2(params: GenNormParams, threshold: float) -> float:
    """``log2 P[X >= threshold]``, exact deep into the tail."""
    if math.isinf(threshold):
        return -math.inf if threshold > 0 else 0.0
    z = (threshold - params.mu) / params.gamma
    a = 1.0 / params.beta
    if z >= 0:
        if math.isinf(z):
            return -math.inf
        ln_q = math.log(0.5) + log_gammainc_upper(a, z ** params.beta)
        return ln_q / LN2
    p = tail_prob(params, threshold)
    return math.log2(p) if p > 0 else -math.inf


def gennorm_quantile(params: GenNormParams, prob: float) -> float:
    """Value ``x`` with ``P[X >= x] = prob`` (upper-tail quantile)."""
    if not 0.0 < prob < 1.0:
        raise DomainError("prob must lie in (0, 1)")
    if prob == 0.5:
        return params.mu
    # Reduce to the upper half by symmetry.
    if prob > 0.5:
        return 2.0 * params.mu - gennorm_quantile(params, 1.0 - prob)
    target = math.log2(prob)
    lo, hi = 0.0, params.gamma
    while tail_log2(params, params.mu + hi) > target:
        hi *= 2.0
        if hi > 1e300:
            raise NonConvergence("quantile bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tail_log2(params, params.mu + mid) > target:
            lo = mid
        else:
            hi = mid
    return params.mu + 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Maximum likelihood fit (derivative-free simplex with a pinned contract).


def _neg_loglik(samples: np.ndarray, mu: float, gamma: float, beta: float) -> float:
    if not (math.isfinite(mu) and math.isfinite(gamma) and math.isfinite(beta)):
        return math.inf
    if gamma <= 0:
        return math.inf
    b = min(max(beta, BETA_MIN), BETA_MAX)
    z = np.abs(samples - mu) / gamma
    const = math.log(b) - math.log(2.0 * gamma) - math.lgamma(1.0 / b)
    return float(np.sum(z ** b) - samples.size * const)


def _nelder_mead(func, x0, fatol: float, maxfev: int):
    """Minimal Nelder-Mead: stop when the simplex's value spread < fatol.

    Likelihoods with shape < 1 have cusps at every sample, where the value
    spread cannot reach fatol; a simplex collapsed to parameter resolution
    is therefore also accepted (no further evaluation can move it).
    """
    n = len(x0)
    sim = [np.array(x0, dtype=np.float64)]
    for i in range(n):
        y = sim[0].copy()
        y[i] = y[i] * 1.05 if y[i] != 0 else 0.00025
        sim.append(y)
    fvals = [func(p) for p in sim]
    nfev = n + 1
    while True:
        order = np.argsort(fvals, kind="stable")
        sim = [sim[i] for i in order]
        fvals = [fvals[i] for i in order]
        if abs(fvals[-1] - fvals[0]) < fatol:
            return sim[0], fvals[0], nfev
        scale = 1.0 + float(np.max(np.abs(sim[0])))
        edge = max(float(np.max(np.abs(sim[i] - sim[0]))) for i in range(1, n + 1))
        # Far below the statistical resolution of any fit; smooth problems
        # meet the fatol stop long before edges get anywhere near this.
        if edge <= 1e-9 * scale:
            return sim[0], fvals[0], nfev
        if nfev >= maxfev:
            raise NonConvergence(f"simplex search exhausted {maxfev} evaluations")
        centroid = np.mean(sim[:-1], axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = func(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = func(xe)
            nfev += 1
            sim[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fvals[-2]:
            sim[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = func(xc)
            nfev += 1
            if fc < fvals[-1]:
                sim[-1], fvals[-1] = xc, fc
            else:
                best = sim[0]
                for i in range(1, n + 1):
                    sim[i] = best + 0.5 * (sim[i] - best)
                    fvals[i] = func(sim[i])
                nfev += n


def fit_gennorm(samples) -> GenNormParams:
    """MLE over (mu, gamma, beta) by simplex search.

    Initialized at the sample median, ``gamma = sqrt(2) * std``, ``beta = 2``;
    converges when the simplex's log-likelihood spread drops below 1e-10;
    ``beta`` is clamped to [0.3, 10].
    """
    xs = np.asarray(samples, dtype=np.float64).reshape(-1)
    if xs.size < 8:
        raise DomainError("need at least 8 samples")
    if not np.all(np.isfinite(xs)):
        raise DomainError("samples must be finite")
    if np.min(xs) == np.max(xs):
        raise DegenerateSample("all samples equal")
    xs = np.sort(xs)  # canonical order: the fit never depends on sample order
    mu0 = float(np.median(xs))
    gamma0 = math.sqrt(2.0) * float(np.std(xs))
    x0 = np.array([mu0, gamma0, 2.0])
    best, _, _ = _nelder_mead(
        lambda p: _neg_loglik(xs, p[0], p[1], p[2]), x0, fatol=1e-10, maxfev=100000
    )
    mu, gamma, beta = float(best[0]), float(best[1]), float(best[2])
    beta = min(max(beta, BETA_MIN), BETA_MAX)
    if gamma <= 0 or not math.isfinite(gamma):
        raise NonConvergence("simplex search left the parameter domain")
    return GenNormParams(mu=mu, gamma=gamma, beta=beta)


def ks_distance(samples, params: GenNormParams) -> float:
    """Worst-case gap between the empirical CDF and the fitted CDF."""
    xs = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    if xs.size < 1:
        raise DomainError("need at least one sample")
    n = xs.size
    cdf = gennorm_cdf(params, xs)
    steps = np.arange(1, n + 1) / n
    return float(max(np.max(np.abs(steps - cdf)), np.max(np.abs(steps - 1.0 / n - cdf))))


def ump_decision(score: float, quantile_threshold: float) -> bool:
    """Thresholded statistic ``max(0, score) >= threshold`` (closed region)."""
    return max(0.0, float(score)) >= quantile_threshold


def dump_scores(path, values) -> None:
    """Score dump: one decimal per line, 17 significant digits."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    with open(path, "w", encoding="ascii") as fh:
        for v in arr:
            fh.write(f"{v:.17g}\n")


def load_scores(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return np.array([float(line) for line in fh if line.strip()], dtype=np.float64)
