"""Random instance generators for the linear-algebra property checks."""

import math

import numpy as np

from oracles import frame_matrix, pdist, svd_dirs


def random_frame(rng, lo, hi):
    return frame_matrix(rng.uniform(0, np.pi), rng.uniform(0, np.pi), rng.uniform(lo, hi))


def unit(theta):
    return np.array([math.cos(theta), math.sin(theta)])


def aligned_chain(rng, n, log_norm=(7.0, 9.0), spread=1.0):
    """Chain A_0..A_{n-1} whose consecutive singular directions stay aligned.

    Each v1(A_j) sits within ``spread`` radians of v1*(A_{j-1}), which keeps
    |A_j A_{j-1}| / (|A_j| |A_{j-1}|) >= cos(spread).
    """
    mats = []
    phi = rng.uniform(0, np.pi)
    theta = rng.uniform(0, np.pi)
    for j in range(n):
        if j:
            theta = phi + rng.uniform(-spread, spread)
        phi = rng.uniform(0, np.pi)
        mats.append(frame_matrix(theta, phi, rng.uniform(*log_norm)))
    return mats


def growth_chain(rng, n, lam=5.0, gamma=1.0, t=0.2, tries=400):
    """Chain A_1..A_n with directions v, w satisfying the six hypotheses.

    Returns ``(mats, v, w)`` (``mats[0]`` is A_1) or None if rejection
    sampling fails.
    """
    spread = math.acos(math.exp(-gamma)) * 0.95
    bound = math.exp(-t)
    for _ in range(tries):
        mats = aligned_chain(rng, n, (lam, lam + 1.5), spread)
        A1, An = mats[0], mats[-1]
        if min(np.linalg.norm(A, 2) for A in mats) < math.exp(lam):
            continue
        ok = all(np.linalg.norm(mats[j] @ mats[j - 1], 2)
                 / (np.linalg.norm(mats[j], 2) * np.linalg.norm(mats[j - 1], 2))
                 >= math.exp(-gamma) for j in range(1, n))
        if not ok:
            continue
        # v near v1(A_1), w near v2*(A_n): the natural far-from-degenerate choice
        v = unit(math.atan2(*svd_dirs(A1)[1][::-1]) + rng.uniform(-0.6, 0.6))
        w = unit(math.atan2(*svd_dirs(An)[4][::-1]) + rng.uniform(-0.6, 0.6))
        A1i, Ani = np.linalg.inv(A1), np.linalg.inv(An)
        checks = (pdist(A1 @ v, w), pdist(A1i @ w, v), pdist(An @ v, w),
                  pdist(Ani @ w, v), pdist(An @ v, A1i @ w))
        if min(checks) >= bound:
            return mats, v, w
    return None
