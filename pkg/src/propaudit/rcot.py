"""Approximate kernel conditional independence test via random Fourier features.

Feature maps for x, y, and z are built with per-variable median-heuristic
bandwidths, the x- and y-features are ridge-residualized on the z-features, and
the statistic is n times the squared Frobenius norm of the empirical
cross-covariance of the residuals.  The default null is a weighted-chi-square
tail approximated by a cumulant-matched gamma; a permutation fallback covers
small samples.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import gamma as gamma_dist

from .errors import InsufficientDataError, NumericalError
from .kernels import _safe_bandwidth
from .nulls import TestOutcome, permutation_pvalue
from .utils import derive_seed

PERMUTATION_FALLBACK_N = 100


@dataclass(frozen=True)
class FourierFeatureMap:
    features: np.ndarray  # n x D
    frequencies: np.ndarray  # D x d
    phases: np.ndarray  # D
    bandwidth: float
    seed: int


@dataclass(frozen=True)
class RcotConfig:
    d_x: int = 5
    d_y: int = 5
    d_z: int = 25
    ridge: float = 1e-5
    null_method: str = "hbe"  # "hbe" | "permutation"
    B: int = 500
    seed: int = 0

    def __post_init__(self):
        if min(self.d_x, self.d_y, self.d_z) < 1:
            raise ValueError("feature counts must be >= 1")
        if self.ridge <= 0:
            raise ValueError("ridge must be positive")
        if self.null_method not in ("hbe", "permutation"):
            raise ValueError(f"unknown null_method {self.null_method!r}")


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def random_fourier_features(points, bandwidth: float, D: int, seed: int) -> FourierFeatureMap:
    """features[i, j] = sqrt(2/D) cos(w_j . x_i / bandwidth + b_j)."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if D < 1:
        raise ValueError(f"D must be >= 1, got {D}")
    pts = _as_2d(points)
    rng = np.random.default_rng(seed)
    freq = rng.standard_normal((D, pts.shape[1]))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=D)
    feats = np.sqrt(2.0 / D) * np.cos(pts @ freq.T / bandwidth + phases)
    return FourierFeatureMap(
        features=feats, frequencies=freq, phases=phases, bandwidth=float(bandwidth), seed=seed
    )


def residualize(F_target, F_cond, ridge: float) -> np.ndarray:
    """Center both feature blocks, then remove the ridge projection of the
    target onto the conditioning features."""
    Ft = np.asarray(F_target, dtype=float)
    Ft = Ft - Ft.mean(axis=0, keepdims=True)
    Fc = np.asarray(F_cond, dtype=float) if F_cond is not None else np.empty((Ft.shape[0], 0))
    if Fc.shape[1] == 0:
        return Ft
    if Fc.shape[0] != Ft.shape[0]:
        raise ValueError("feature blocks have different row counts")
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    Fc = Fc - Fc.mean(axis=0, keepdims=True)
    gram = Fc.T @ Fc + ridge * np.eye(Fc.shape[1])
    try:
        beta = np.linalg.solve(gram, Fc.T @ Ft)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"residualization solve failed ({exc}); try a larger ridge") from None
    return Ft - Fc @ beta


def rcot_statistic(R_x, R_y) -> float:
    """n * || (1/n) R_x^T R_y ||_F^2."""
    Rx, Ry = np.asarray(R_x, dtype=float), np.asarray(R_y, dtype=float)
    if Rx.shape[0] != Ry.shape[0]:
        raise ValueError("row counts disagree")
    n = Rx.shape[0]
    cross = Rx.T @ Ry / n
    return float(n * np.sum(cross**2))


def hbe_pvalue(weights, statistic: float) -> float:
    """Upper tail of sum_i w_i chi2_1 via a gamma matched to the first two
    cumulants (mean sum w, variance 2 sum w^2)."""
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    if w.size == 0:
        raise ValueError("need at least one positive weight")
    mean = w.sum()
    var = 2.0 * np.sum(w**2)
    shape = mean**2 / var
    scale = var / mean
    if statistic <= 0:
        return 1.0
    return float(np.clip(gamma_dist.sf(statistic, a=shape, scale=scale), 0.0, 1.0))


def rcot_test(x, y, z=None, config: RcotConfig = RcotConfig()) -> TestOutcome:
    """RCoT conditional independence test; expects standardized inputs."""
    x2, y2 = _as_2d(x), _as_2d(y)
    z2 = _as_2d(z) if z is not None else np.empty((x2.shape[0], 0))
    n = x2.shape[0]
    if n < 4:
        raise InsufficientDataError(f"n={n} too small for RCoT")
    has_z = z2.shape[1] > 0

    fx = random_fourier_features(
        x2, _safe_bandwidth(x2), config.d_x, derive_seed(config.seed, "fx")
    ).features
    fy = random_fourier_features(
        y2, _safe_bandwidth(y2), config.d_y, derive_seed(config.seed, "fy")
    ).features
    fz = (
        random_fourier_features(
            z2, _safe_bandwidth(z2), config.d_z, derive_seed(config.seed, "fz")
        ).features
        if has_z
        else None
    )

    Rx = residualize(fx, fz, config.ridge)
    Ry = residualize(fy, fz, config.ridge)
    observed = rcot_statistic(Rx, Ry)

    use_permutation = config.null_method == "permutation" or n < PERMUTATION_FALLBACK_N
    if use_permutation:
        rng = np.random.default_rng(derive_seed(config.seed, "perm"))
        surrogate = [
            rcot_statistic(Rx[rng.permutation(n)], Ry) for _ in range(config.B)
        ]
        p = permutation_pvalue(observed, surrogate)
        null_echo = f"permutation,B={config.B}"
    else:
        # per-sample cross-products; their covariance eigenvalues weight the null
        u = np.einsum("ni,nj->nij", Rx, Ry).reshape(n, -1)
        cov = np.cov(u, rowvar=False)
        cov = np.atleast_2d(cov)
        weights = np.linalg.eigvalsh(cov)
        weights = weights[weights > 1e-12 * max(weights.max(), 1.0)]
        if weights.size == 0:
            p = 1.0
        else:
            p = hbe_pvalue(weights, observed)
        null_echo = "hbe"

    return TestOutcome(
        test_id="rcot",
        statistic=observed,
        p_value=p,
        n_used=n,
        seed=config.seed,
        config_echo=(
            f"d_x={config.d_x},d_y={config.d_y},d_z={config.d_z},"
            f"ridge={config.ridge},null={null_echo}"
        ),
    )
