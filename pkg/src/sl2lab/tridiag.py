"""Truncated Schrodinger operators ``H = -Delta + diag(potential)``.

``H`` is symmetric tridiagonal with off-diagonal ``-1``.  Everything is built
on Sturm (inertia) counting: the LDL^T pivots of ``H - t`` are

    d_0 = a_0 - t,   d_i = (a_i - t) - 1 / d_{i-1},

and the number of negative pivots equals the number of eigenvalues below
``t``.  An exactly zero pivot is replaced by ``+PIVMIN`` (and tiny pivots are
pushed away from zero with their sign), the usual guard against division by
zero; with this convention an eigenvalue sitting exactly at ``t`` is not
counted as negative, so ``count_below(H, t)`` counts eigenvalues ``<= t``
only up to rounding at exact coincidences.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from ._jit import jit
from .walk import trial_rng
from .errors import PreconditionFailed

PIVMIN = 1e-290


@jit
def _count(diag, t):
    count = 0
    d = 1.0
    for i in range(diag.shape[0]):
        if i == 0:
            d = diag[0] - t
        else:
            d = (diag[i] - t) - 1.0 / d
        if d == 0.0:
            d = PIVMIN
        elif abs(d) < PIVMIN:
            d = PIVMIN if d > 0 else -PIVMIN
        if d < 0.0:
            count += 1
    return count


@jit
def _count_many(diag, ts):
    out = np.empty(ts.shape[0], dtype=np.int64)
    for k in range(ts.shape[0]):
        out[k] = _count(diag, ts[k])
    return out


@jit
def _bisect_all(diag, tol):
    n = diag.shape[0]
    lo0 = diag.min() - 2.0 - tol
    hi0 = diag.max() + 2.0 + tol
    lo = np.full(n, lo0)
    hi = np.full(n, hi0)
    out = np.empty(n)
    for k in range(n):
        if k > 0 and lo[k] < out[k - 1] - tol:
            lo[k] = out[k - 1] - tol
        a = lo[k]
        b = hi[k]
        while b - a > tol:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            c = _count(diag, mid)
            if c > k:
                b = mid
                # mid is also an upper bound for eigenvalues k+1 .. c-1
                for j in range(k + 1, min(c, n)):
                    if hi[j] > mid:
                        hi[j] = mid
            else:
                a = mid
        out[k] = 0.5 * (a + b)
    return out


@jit
def _log_transfer(diag, E):
    # log-norm of S(a_{n-1} - E) ... S(a_0 - E), renormalized every step
    p11 = 1.0
    p12 = 0.0
    p21 = 0.0
    p22 = 1.0
    acc = 0.0
    for i in range(diag.shape[0]):
        t = diag[i] - E
        q11 = t * p11 - p21
        q12 = t * p12 - p22
        p21 = p11
        p22 = p12
        p11 = q11
        p12 = q12
        s = abs(p11) + abs(p12) + abs(p21) + abs(p22)
        p11 /= s
        p12 /= s
        p21 /= s
        p22 /= s
        acc += np.log(s)
    return acc + np.log(_norm2(p11, p12, p21, p22))


@jit
def _norm2(a, b, c, d):
    f = a * a + b * b + c * c + d * d
    det = a * d - b * c
    return np.sqrt(0.5 * (f + np.sqrt(max(f * f - 4.0 * det * det, 0.0))))


def log_transfer_norm(potentials, E):
    """log |S(p[n-1] - E) ... S(p[0] - E)|."""
    return float(_log_transfer(np.ascontiguousarray(potentials, dtype=float), float(E)))


@dataclass(frozen=True, eq=False)
class Tridiag:
    """``H`` with ``diag`` on the diagonal and ``-1`` off the diagonal."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.diag, dtype=float).ravel()
        if d.size < 1:
            raise ValueError("Tridiag needs n >= 1")
        object.__setattr__(self, "diag", d)

    @property
    def n(self):
        return self.diag.size

    def gershgorin(self):
        return float(self.diag.min()) - 2.0, float(self.diag.max()) + 2.0

    def matvec(self, v):
        out = self.diag * v
        out[:-1] -= v[1:]
        out[1:] -= v[:-1]
        return out

    def dense(self):
        n = self.n
        return np.diag(self.diag) - np.eye(n, k=1) - np.eye(n, k=-1)


def count_below(H, t):
    """Number of eigenvalues of ``H`` below ``t`` (Sturm count)."""
    return int(_count(H.diag, float(t)))


def count_below_many(H, ts):
    return _count_many(H.diag, np.ascontiguousarray(ts, dtype=float))


def eigenvalues(H, tol=1e-12):
    """All eigenvalues, ascending, by bisection on the Sturm count."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _bisect_all(H.diag, float(tol))


@dataclass(frozen=True, eq=False)
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    n: int
    samples: int
    seed: int
    stderr: np.ndarray = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["energy", "ids", "n", "samples", "seed"])
            for e, v in zip(self.energies, self.values):
                w.writerow([format(e, ".17g"), format(v, ".17g"), self.n, self.samples, self.seed])


def sample_counts(family, n, energies, samples, seed):
    """Sturm counts ``(samples, len(energies))`` for sampled truncations."""
    energies = np.ascontiguousarray(energies, dtype=float)
    out = np.empty((samples, energies.size), dtype=np.int64)
    for s in range(samples):
        pot, _ = family.sample(trial_rng(seed, s), n)
        out[s] = _count_many(np.ascontiguousarray(pot), energies)
    return out


def finite_ids(family, n, energies, samples, seed):
    """Monte-Carlo finite-volume IDS ``(1/n) #{eigenvalues <= t}``.

    Sample ``s`` is the potential window drawn by
    ``family.sample(trial_rng(seed, s), n)``; every energy uses the same
    windows, so the curve is exactly monotone.
    """
    energies = np.asarray(energies, dtype=float)
    if n < 4:
        raise ValueError("n must be >= 4")
    if np.any(np.diff(energies) < 0):
        raise ValueError("energies must be sorted")
    frac = sample_counts(family, n, energies, samples, seed) / n
    err = frac.std(axis=0, ddof=1) / np.sqrt(samples) if samples > 1 else np.zeros(len(energies))
    return IdsCurve(energies, frac.mean(axis=0), n, samples, int(seed), err)


@dataclass(frozen=True)
class ThoulessResult:
    L_transfer: float
    L_thouless: float
    gap: float
    transfer_stderr: float
    thouless_stderr: float


def thouless_gap(family, E, n, samples, seed, clip=1e-12):
    """Compare the transfer-matrix exponent with the spectral log-potential.

    Both sides use the same sampled potential windows (``n`` Schrodinger
    steps, so the exponent is per step):
    ``(1/n) log |A_E^n|`` against ``(1/n) sum_j max(log|E - lambda_j|, log clip)``.
    The spectrum comes from LAPACK (``eigh_tridiagonal``), which keeps the
    two sides computationally independent and is much faster than bisection
    at n in the thousands.
    """
    if clip <= 0:
        raise ValueError("clip must be positive")
    tr = np.empty(samples)
    th = np.empty(samples)
    for s in range(samples):
        pot, _ = family.sample(trial_rng(seed, s), n)
        pot = np.ascontiguousarray(pot)
        tr[s] = _log_transfer(pot, float(E)) / n
        lam = eigh_tridiagonal(pot, np.full(n - 1, -1.0), eigvals_only=True)
        th[s] = np.mean(np.maximum(np.log(np.abs(E - lam)), np.log(clip)))
    se = (lambda x: float(x.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0)
    lt, lh = float(tr.mean()), float(th.mean())
    return ThoulessResult(lt, lh, abs(lt - lh), se(tr), se(th))


def temple_verify(H, vectors, lam0, delta, tol_orth=1e-10, tol_cross=1e-8):
    """Temple's lemma: ``k`` suitable almost-eigenvectors force ``k`` eigenvalues.

    Checks the hypotheses (raising PreconditionFailed naming the broken one)
    and returns whether ``H`` indeed has at least ``k`` eigenvalues in
    ``(lam0 - delta, lam0 + delta)``.
    """
    U = np.atleast_2d(np.asarray(vectors, dtype=float))
    k = U.shape[0]
    gram = U @ U.T
    if np.max(np.abs(gram - np.eye(k))) > tol_orth:
        raise PreconditionFailed("orthonormal", "vectors are not orthonormal")
    HU = np.array([H.matvec(u) for u in U])
    off = ~np.eye(k, dtype=bool)
    if k > 1:
        if np.max(np.abs((HU @ U.T)[off])) > tol_cross:
            raise PreconditionFailed("cross", "<H u_i, u_j> != 0 for some i != j")
        if np.max(np.abs((HU @ HU.T)[off])) > tol_cross:
            raise PreconditionFailed("cross", "<H u_i, H u_j> != 0 for some i != j")
    res = np.linalg.norm(HU - lam0 * U, axis=1)
    if np.max(res) > delta:
        raise PreconditionFailed("residual", f"max |H u - lam0 u| = {np.max(res):.3g} > delta")
    inside = count_below(H, lam0 + delta) - count_below(H, lam0 - delta)
    return inside >= k


@dataclass(frozen=True)
class OscillationReport:
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    margin: float
    ok: bool


def ids_oscillation(family, interval, delta, k, n, samples, seed):
    """Lower bound of IDS mass near ``interval`` by matching frequency.

    ``lhs`` is the finite-volume IDS increment over ``interval`` widened by
    ``delta``; ``rhs`` is ``1/(k+2)`` times the estimated probability of a
    ``delta``-matching of size ``k`` with energy in ``interval``.  Matching
    samples use the stream ``seed + 1`` so the two estimates are independent.
    """
    from .matching import find_matchings

    if delta <= 0 or k < 2:
        raise ValueError("need delta > 0 and k >= 2")
    if n % ((k + 2) * family.block_len):
        raise ValueError("n must be a multiple of (k + 2) * block length")
    a, b = interval
    counts = sample_counts(family, n, np.array([a - delta, b + delta]), samples, seed)
    inc = (counts[:, 1] - counts[:, 0]) / n
    lhs = float(inc.mean())
    lhs_se = float(inc.std(ddof=1) / np.sqrt(samples))
    found = find_matchings(family, k, delta, interval, samples, seed + 1)
    rhs = found.measure_estimate / (k + 2)
    rhs_se = found.stderr / (k + 2)
    margin = lhs - rhs
    pooled = float(np.hypot(lhs_se, rhs_se))
    return OscillationReport(lhs, rhs, lhs_se, rhs_se, margin, margin >= -3.0 * pooled)


def shift_lyapunov(family, E, steps, samples, seed):
    """Per-step exponent ``(1/steps) log |A_E^steps(zeta)|`` on the Markov shift.

    Windows are drawn as in :func:`finite_ids` (random phase, then blocks),
    so this estimates ``L(A_E) = L(mu_E) / block_len``.
    """
    from .walk import Estimate

    vals = np.empty(samples)
    for s in range(samples):
        pot, _ = family.sample(trial_rng(seed, s), steps)
        vals[s] = _log_transfer(np.ascontiguousarray(pot), float(E)) / steps
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)))
