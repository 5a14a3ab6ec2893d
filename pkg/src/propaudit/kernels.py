"""Kernel machinery and the (conditional) HSIC committee member.

The conditional statistic uses extended variables xz = (x, z), yz = (y, z):
with centered Grams G and R = G (G + n*eps*I)^-1,

    stat = Tr[R_xz R_yz] - 2 Tr[R_xz R_yz R_z] + Tr[R_xz R_z R_yz R_z]

which reduces to Tr[R_x R_y] for an empty conditioning set.  The null model is
a local permutation of x within z-neighborhoods (uniform when z is empty).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist, squareform

from .cmiknn import draw_local_permutation, neighbor_table
from .errors import DegenerateInputError, InsufficientDataError, NumericalError
from .nulls import TestOutcome, permutation_pvalue
from .utils import derive_seed


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    bandwidth: float


@dataclass(frozen=True)
class ChsicConfig:
    B: int = 500
    epsilon: float = 1e-3
    k_perm: int = 5
    seed: int = 0
    min_n: int = 25

    def __post_init__(self):
        if self.B < 1 or self.epsilon <= 0 or self.k_perm < 1:
            raise ValueError("B, k_perm must be >= 1 and epsilon > 0")


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def median_heuristic_bandwidth(points) -> float:
    """Median pairwise Euclidean distance over distinct index pairs."""
    pts = _as_2d(points)
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    dists = pdist(pts)
    if not np.any(dists > 0):
        raise DegenerateInputError("all points are identical; bandwidth undefined")
    return float(np.median(dists))


def _safe_bandwidth(points) -> float:
    """Median heuristic, falling back to the mean positive distance when the
    median is zero (heavily tied data such as binary properties)."""
    pts = _as_2d(points)
    dists = pdist(pts)
    positive = dists[dists > 0]
    if positive.size == 0:
        raise DegenerateInputError("all points are identical; bandwidth undefined")
    med = float(np.median(dists))
    return med if med > 0 else float(positive.mean())


def rbf_gram(points, bandwidth: float) -> GramMatrix:
    """Squared-exponential Gram matrix k(x,y) = exp(-||x-y||^2 / (2 bw^2))."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    pts = _as_2d(points)
    sq = squareform(pdist(pts, metric="sqeuclidean"))
    return GramMatrix(entries=np.exp(-sq / (2.0 * bandwidth**2)), bandwidth=float(bandwidth))


def _entries(gram):
    return gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=float)


def _center(K):
    """H K H without materializing H."""
    row = K.mean(axis=0, keepdims=True)
    col = K.mean(axis=1, keepdims=True)
    return K - row - col + K.mean()


def hsic_statistic(Kx, Ky) -> float:
    """(1/n^2) Tr(HKxH HKyH); non-negative up to numerical slack."""
    Kx, Ky = _entries(Kx), _entries(Ky)
    if Kx.shape != Ky.shape:
        raise ValueError(f"Gram size mismatch: {Kx.shape} vs {Ky.shape}")
    n = Kx.shape[0]
    return float(np.sum(_center(Kx) * _center(Ky)) / n**2)


def _regularized_projector(points, bandwidth, epsilon, dtype=np.float64):
    """R = G (G + n*eps*I)^-1 for the centered RBF Gram of ``points``.

    ``dtype=float32`` halves the solve cost; used for permutation surrogates
    where a few significant digits suffice.
    """
    G = _center(rbf_gram(points, bandwidth).entries).astype(dtype, copy=False)
    n = G.shape[0]
    try:
        # G is PSD, so the shifted matrix is positive definite
        shifted = G + np.asarray(n * epsilon, dtype=dtype) * np.eye(n, dtype=dtype)
        return scipy.linalg.solve(shifted, G, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(
            f"regularized Gram solve failed ({exc}); try a larger epsilon"
        ) from None


def chsic_statistic(x, y, z=None, epsilon: float = 1e-3, bandwidths=None) -> float:
    """Conditional HSIC statistic; expects standardized inputs."""
    x, y = _as_2d(x), _as_2d(y)
    z = _as_2d(z) if z is not None else np.empty((x.shape[0], 0))
    has_z = z.shape[1] > 0
    xz = np.hstack([x, z]) if has_z else x
    yz = np.hstack([y, z]) if has_z else y
    if bandwidths is None:
        bandwidths = (
            _safe_bandwidth(xz),
            _safe_bandwidth(yz),
            _safe_bandwidth(z) if has_z else 1.0,
        )
    bx, by, bz = bandwidths
    Rx = _regularized_projector(xz, bx, epsilon)
    Ry = _regularized_projector(yz, by, epsilon)
    if not has_z:
        return float(np.sum(Rx * Ry.T))
    Rz = _regularized_projector(z, bz, epsilon)
    M = Ry - 2.0 * Ry @ Rz + Rz @ Ry @ Rz
    return float(np.sum(Rx * M.T))


def chsic_test(x, y, z=None, config: ChsicConfig = ChsicConfig()) -> TestOutcome:
    """Conditional HSIC test with a local-permutation null; deterministic per seed."""
    x, y = _as_2d(x), _as_2d(y)
    z = _as_2d(z) if z is not None else np.empty((x.shape[0], 0))
    n = x.shape[0]
    if n < config.min_n:
        raise InsufficientDataError(f"n={n} below minimum {config.min_n}")
    has_z = z.shape[1] > 0
    xz = np.hstack([x, z]) if has_z else x
    yz = np.hstack([y, z]) if has_z else y
    bx, by = _safe_bandwidth(xz), _safe_bandwidth(yz)

    eps = config.epsilon
    Ry = _regularized_projector(yz, by, eps)
    if has_z:
        bz = _safe_bandwidth(z)
        Rz = _regularized_projector(z, bz, eps)
        M = Ry - 2.0 * Ry @ Rz + Rz @ Ry @ Rz
    else:
        M = Ry
    # observed and surrogates run through the identical reduced-precision path,
    # so the permutation comparison is exchangeable
    Mt = np.ascontiguousarray(M.T, dtype=np.float32)

    def stat_for(x_current):
        joint = np.hstack([x_current, z]) if has_z else x_current
        Rx = _regularized_projector(joint, bx, eps, dtype=np.float32)
        return float(np.sum(Rx * Mt))

    observed = stat_for(x)
    neighbors = neighbor_table(z, config.k_perm) if has_z else None
    surrogate = []
    for b in range(config.B):
        perm_seed = derive_seed(config.seed, "perm", b)
        if has_z:
            perm = draw_local_permutation(neighbors, perm_seed)
        else:
            perm = np.random.default_rng(perm_seed).permutation(n)
        surrogate.append(stat_for(x[perm]))

    p = permutation_pvalue(observed, surrogate)
    return TestOutcome(
        test_id="chsic",
        statistic=observed,
        p_value=p,
        n_used=n,
        seed=config.seed,
        config_echo=f"B={config.B},epsilon={eps},k_perm={config.k_perm}",
    )
