"""Nearest-neighbor conditional mutual information test (CMIknn).

Estimator: psi(k) + <psi(n_z+1)> - <psi(n_xz+1)> - <psi(n_yz+1)> with max-norm
neighborhoods; with an empty conditioning set n_z = n-1 for every point and the
formula reduces to the classic KSG mutual-information estimator.

This module also provides the z-neighborhood-restricted permutation scheme used
as the null model by the other permutation-based committee members.
"""

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma
from sklearn.neighbors import KDTree

from .errors import InsufficientDataError
from .nulls import TestOutcome, permutation_pvalue
from .utils import derive_seed

BRUTE_FORCE_MAX_N = 512
JITTER_SCALE = 1e-10


def default_k_cmi(n: int) -> int:
    return max(5, n // 10)


@dataclass(frozen=True)
class CmiknnConfig:
    k_cmi: int | None = None  # None: max(5, n // 10)
    k_perm: int = 5
    B: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.k_cmi is not None and self.k_cmi < 1:
            raise ValueError("k_cmi must be >= 1")
        if self.k_perm < 1 or self.B < 1:
            raise ValueError("k_perm and B must be >= 1")


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def _content_jitter(arr, seed):
    """Tie-breaking noise keyed to the array's content, not its argument slot.

    Content keying makes the estimator exactly symmetric under swapping x and y
    even when both contain heavy ties (binary properties).
    """
    arr = _as_2d(arr)
    key = derive_seed(seed, zlib.crc32(arr.tobytes()))
    rng = np.random.default_rng(key)
    return arr + JITTER_SCALE * rng.standard_normal(arr.shape)


def _chebyshev_matrix(pts):
    """Dense pairwise max-norm distances, n x n."""
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    return diff.max(axis=2)


class _BruteWorkspace:
    """Caches per-variable distance matrices so surrogate estimates only pay
    for elementwise maxima and counts."""

    def __init__(self, x, y, z, k):
        self.k = k
        self.n = x.shape[0]
        self.dx = _chebyshev_matrix(x)
        self.dy = _chebyshev_matrix(y)
        self.dz = _chebyshev_matrix(z) if z.shape[1] else None

    def estimate(self, perm=None):
        dx = self.dx if perm is None else self.dx[np.ix_(perm, perm)]
        n, k = self.n, self.k
        if self.dz is None:
            dxz, dyz = dx, self.dy
            djoint = np.maximum(dx, self.dy)
            psi_nz = digamma(n)
        else:
            dxz = np.maximum(dx, self.dz)
            dyz = np.maximum(self.dy, self.dz)
            djoint = np.maximum(dxz, self.dy)
        work = djoint.copy()
        np.fill_diagonal(work, np.inf)
        rho = np.partition(work, k - 1, axis=1)[:, k - 1][:, None]
        # strict inequality: counts exclude the k-th neighbor itself; self
        # (distance 0) is inside, subtract it
        n_xz = (dxz < rho).sum(axis=1) - 1
        n_yz = (dyz < rho).sum(axis=1) - 1
        if self.dz is not None:
            n_z = (self.dz < rho).sum(axis=1) - 1
            psi_nz = digamma(n_z + 1).mean()
        return float(
            digamma(k) + psi_nz - digamma(n_xz + 1).mean() - digamma(n_yz + 1).mean()
        )


def _tree_estimate(x, y, z, k):
    n = x.shape[0]
    joint = np.hstack([x, y, z])
    tree = KDTree(joint, metric="chebyshev")
    dist, _ = tree.query(joint, k=k + 1)
    rho = dist[:, -1]
    # shrink so radius counts are strictly inside the k-NN ball
    radius = np.nextafter(rho, 0)

    def count(sub):
        t = KDTree(sub, metric="chebyshev")
        return t.query_radius(sub, r=radius, count_only=True) - 1

    dx, dy = x.shape[1], y.shape[1]
    n_xz = count(np.hstack([x, z]) if z.shape[1] else x)
    n_yz = count(np.hstack([y, z]) if z.shape[1] else y)
    if z.shape[1]:
        n_z = count(z)
        psi_nz = digamma(n_z + 1).mean()
    else:
        psi_nz = digamma(n)
    return float(digamma(k) + psi_nz - digamma(n_xz + 1).mean() - digamma(n_yz + 1).mean())


def cmi_knn_estimate(x, y, z=None, k=5, jitter_seed=0):
    """Estimate CMI(x; y | z) in nats. May be slightly negative (finite-sample bias)."""
    x = _content_jitter(x, jitter_seed)
    y = _content_jitter(y, jitter_seed)
    z = _content_jitter(z, jitter_seed) if z is not None else np.empty((x.shape[0], 0))
    n = x.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the sample count n={n}")
    if n <= BRUTE_FORCE_MAX_N:
        return _BruteWorkspace(x, y, z, k).estimate()
    return _tree_estimate(x, y, z, k)


def neighbor_table(z, k_perm: int) -> np.ndarray:
    """k_perm nearest z-neighbors per index (max-norm, self included), n x k_perm.

    Precompute this once when drawing many local permutations for the same z.
    """
    z = _as_2d(z)
    n = z.shape[0]
    k_perm = min(k_perm, n)
    if n <= BRUTE_FORCE_MAX_N:
        dz = _chebyshev_matrix(z)
        return np.argpartition(dz, k_perm - 1, axis=1)[:, :k_perm]
    tree = KDTree(z, metric="chebyshev")
    return tree.query(z, k=k_perm, return_distance=False)


def draw_local_permutation(neighbors: np.ndarray, seed: int) -> np.ndarray:
    """One bijection where each index maps to an unused entry of its neighbor
    row; exhausted neighborhoods fall back to the remaining unused indices."""
    n = neighbors.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = rng.permuted(neighbors[order], axis=1)

    perm = np.full(n, -1, dtype=np.int64)
    used = np.zeros(n, dtype=bool)
    deferred = []
    for row, i in enumerate(order):
        for j in shuffled[row]:
            if not used[j]:
                perm[i] = j
                used[j] = True
                break
        else:
            deferred.append(i)
    if deferred:
        leftovers = np.nonzero(~used)[0]
        rng.shuffle(leftovers)
        for i, j in zip(deferred, leftovers):
            perm[i] = j
    return perm


def local_permutation(z, k_perm: int, seed: int) -> np.ndarray:
    """Permutation of 0..n-1 where each index draws from its k_perm nearest
    z-neighbors (max-norm, self included) without replacement.

    With an empty conditioning set this is an unrestricted uniform permutation.
    """
    z = _as_2d(z) if z is not None else np.empty((0, 0))
    n = z.shape[0]
    if n == 0:
        raise ValueError("empty conditioning matrix with unknown sample count")
    if z.shape[1] == 0:
        return np.random.default_rng(seed).permutation(n)
    return draw_local_permutation(neighbor_table(z, k_perm), seed)


def cmiknn_test(x, y, z=None, config: CmiknnConfig = CmiknnConfig()) -> TestOutcome:
    """CMIknn conditional independence test with a local-permutation null."""
    x2, y2 = _as_2d(x), _as_2d(y)
    z2 = _as_2d(z) if z is not None else np.empty((x2.shape[0], 0))
    n = x2.shape[0]
    k = config.k_cmi if config.k_cmi is not None else default_k_cmi(n)
    if k >= n:
        raise InsufficientDataError(f"n={n} too small for k_cmi={k}")

    xj = _content_jitter(x2, config.seed)
    yj = _content_jitter(y2, config.seed)
    zj = _content_jitter(z2, config.seed) if z2.shape[1] else z2

    if zj.shape[1]:
        neighbors = neighbor_table(zj, config.k_perm)
        draw = lambda b: draw_local_permutation(neighbors, derive_seed(config.seed, "perm", b))
    else:
        draw = lambda b: np.random.default_rng(derive_seed(config.seed, "perm", b)).permutation(n)

    if n <= BRUTE_FORCE_MAX_N:
        ws = _BruteWorkspace(xj, yj, zj, k)
        observed = ws.estimate()
        surrogate = [ws.estimate(draw(b)) for b in range(config.B)]
    else:
        observed = _tree_estimate(xj, yj, zj, k)
        surrogate = [_tree_estimate(xj[draw(b)], yj, zj, k) for b in range(config.B)]

    p = permutation_pvalue(observed, surrogate)
    return TestOutcome(
        test_id="cmiknn",
        statistic=observed,
        p_value=p,
        n_used=n,
        seed=config.seed,
        config_echo=f"k_cmi={k},k_perm={config.k_perm},B={config.B}",
    )
