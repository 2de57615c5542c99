"""SL(2,R) matrices and the projective line.

Matrices are plain ``(2, 2)`` float64 numpy arrays; projective points are unit
vectors of shape ``(2,)`` with canonical sign (first nonzero coordinate
positive).  The helpers here never mutate their inputs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNorm, InvalidMatrix, NotHyperbolic

TOL_TR = 1e-9
TOL_NORM = 1e-9
TOL_DET = 1e-9

J = np.array([[0.0, -1.0], [1.0, 0.0]])
E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def mat2(a, b, c, d, check=True):
    """Build a 2x2 matrix from row-major entries, validating det = 1."""
    m = np.array([[a, b], [c, d]], dtype=float)
    if check:
        validate(m)
    return m


def validate(A, tol=TOL_DET):
    """Raise InvalidMatrix unless A is a finite 2x2 matrix with det = 1.

    The determinant tolerance is relative to ``max(1, |A|_F^2)`` so that
    long products (whose rounding error scales with the norm squared) are not
    rejected.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2):
        raise InvalidMatrix(f"expected shape (2, 2), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix has non-finite entries")
    scale = max(1.0, float(np.sum(A * A)))
    if abs(det(A) - 1.0) > tol * scale:
        raise InvalidMatrix(f"determinant {det(A)!r} is not 1")
    return A


def det(A):
    return A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]


def trace(A):
    return A[0, 0] + A[1, 1]


def inverse(A):
    """Inverse of an SL2 matrix (adjugate, no division)."""
    return np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])


def wedge(v, w):
    return v[0] * w[1] - v[1] * w[0]


def op_norm(A):
    """Operator (spectral) norm of a 2x2 matrix."""
    return float(np.linalg.norm(A, 2))


def proj(v):
    """Canonical unit representative of the direction of ``v``."""
    v = np.asarray(v, dtype=float)
    n = np.hypot(v[0], v[1])
    if n == 0.0:
        raise ValueError("zero vector has no projective class")
    u = v / n
    if u[0] < 0.0 or (u[0] == 0.0 and u[1] < 0.0):
        u = -u
    return u


def proj_distance(v, w):
    """d(v, w) = |v ^ w| for unit representatives; lies in [0, 1]."""
    nv = np.hypot(v[0], v[1])
    nw = np.hypot(w[0], w[1])
    return float(min(1.0, abs(wedge(v, w)) / (nv * nw)))


def act(A, v):
    """Projective action of A on the direction v."""
    return proj(A @ v)


def angle(v):
    """Angle of a projective point in [0, pi)."""
    return float(np.arctan2(v[1], v[0]) % np.pi)


def unstable_eigenvalue(A):
    """lambda(A) = (|tr| + sqrt(tr^2 - 4)) / 2, or 1 when |tr| <= 2."""
    t = abs(trace(A))
    if t <= 2.0:
        return 1.0
    return 0.5 * (t + np.sqrt((t - 2.0) * (t + 2.0)))


def classify(A, tol_tr=TOL_TR):
    """Return 'elliptic', 'parabolic' or 'hyperbolic' from the trace."""
    t = abs(trace(A))
    if t < 2.0 - tol_tr:
        return "elliptic"
    if t > 2.0 + tol_tr:
        return "hyperbolic"
    return "parabolic"


@dataclass(frozen=True)
class SingularFrame:
    """Singular bases of A: ``A v1 = +-s v1s`` and ``A v2 = +-v2s / s``."""

    v1: np.ndarray
    v2: np.ndarray
    v1s: np.ndarray
    v2s: np.ndarray
    s: float


def top_singular(A):
    """Largest singular value with right/left singular directions.

    Works for any nonzero 2x2 matrix, including renormalized products whose
    determinant has underflowed; directions are exact up to rounding.
    """
    u, sv, vt = np.linalg.svd(A)
    return float(sv[0]), proj(vt[0]), proj(u[:, 0])


def singular_frame(A, tol_norm=TOL_NORM):
    u, sv, vt = np.linalg.svd(A)
    s = float(sv[0])
    if s <= 1.0 + tol_norm:
        raise DegenerateNorm(f"operator norm {s!r} has no singular gap")
    v1 = proj(vt[0])
    v1s = proj(u[:, 0])
    return SingularFrame(v1=v1, v2=proj(J @ v1), v1s=v1s, v2s=proj(J @ v1s), s=s)


def _eigvec(A, mu):
    # kernel of A - mu I, using the better-conditioned of the two rows
    r1 = np.array([A[0, 1], mu - A[0, 0]])
    r2 = np.array([mu - A[1, 1], A[1, 0]])
    return proj(r1 if np.hypot(*r1) >= np.hypot(*r2) else r2)


def fixed_directions(A, tol_tr=TOL_TR):
    """Unstable and stable directions of a hyperbolic matrix.

    Returns ``(u, s, lam)`` with ``A u = +-lam u`` and ``A s = +-s / lam``.
    The stable direction is computed as the unstable one of ``A^-1`` so both
    are obtained from the large eigenvalue, which is well conditioned.
    """
    if classify(A, tol_tr) != "hyperbolic":
        raise NotHyperbolic(f"trace {trace(A)!r} is not hyperbolic")
    lam = unstable_eigenvalue(A)
    sign = 1.0 if trace(A) > 0 else -1.0
    return _eigvec(A, sign * lam), _eigvec(inverse(A), sign * lam), lam


def chain_product(mats):
    """Product ``A_{n-1} ... A_0`` as ``(P, lognorm)`` with ``|P| = 1``.

    The running product is renormalized after every factor.
    """
    P = np.eye(2)
    lognorm = 0.0
    for A in mats:
        P = A @ P
        s = op_norm(P)
        P = P / s
        lognorm += np.log(s)
    return P, lognorm


@dataclass(frozen=True)
class AvalancheReport:
    """Hypotheses and conclusions of the avalanche principle for one chain.

    ``direction_errors`` are d(v1*(A^n), v1*(A_{n-1})) and
    d(v2(A^n), v2(A_0)); compare them with ``c1 * kappa / eps``.
    ``norm_ratio_log`` is log of ``|A^n| prod_{1<=j<=n-2} |A_j|`` over
    ``prod_{1<=j<=n-1} |A_j A_{j-1}|``; compare with ``c2 * kappa * n / eps``.
    """

    gaps_ok: bool
    failed: tuple
    min_norm_sq: float
    min_angle_ratio: float
    direction_errors: tuple
    norm_ratio_log: float
    kappa: float
    eps: float
    n: int

    def direction_ratio(self):
        return max(self.direction_errors) / (self.kappa / self.eps)

    def norm_ratio(self):
        return abs(self.norm_ratio_log) / (self.kappa * self.n / self.eps)


def avalanche_report(chain, kappa, eps):
    """Evaluate the avalanche principle hypotheses and conclusions.

    A violated hypothesis is reported in ``failed`` (and ``gaps_ok`` is
    False); the conclusion quantities are still computed.
    """
    chain = [np.asarray(A, dtype=float) for A in chain]
    n = len(chain)
    if n < 2:
        raise ValueError("chain length must be at least 2")
    norms = np.array([op_norm(A) for A in chain])
    pair_norms = np.array([op_norm(chain[j] @ chain[j - 1]) for j in range(1, n)])
    ratios = pair_norms / (norms[1:] * norms[:-1])
    failed = []
    if np.min(norms**2) < 1.0 / kappa:
        failed.append("norm")
    if np.min(ratios) < eps:
        failed.append("angle")

    P, lognorm = chain_product(chain)
    _, v1_full, v1s_full = top_singular(P)
    _, v1_first, _ = top_singular(chain[0])
    _, _, v1s_last = top_singular(chain[-1])
    v2_full = proj(J @ v1_full)
    v2_first = proj(J @ v1_first)
    errs = (proj_distance(v1s_full, v1s_last), proj_distance(v2_full, v2_first))
    ratio_log = (lognorm + np.sum(np.log(norms[1:-1]))
                 - np.sum(np.log(pair_norms)))
    return AvalancheReport(
        gaps_ok=not failed, failed=tuple(failed),
        min_norm_sq=float(np.min(norms**2)), min_angle_ratio=float(np.min(ratios)),
        direction_errors=errs, norm_ratio_log=float(ratio_log),
        kappa=float(kappa), eps=float(eps), n=n)


def random_sl2(rng, scale=1.0):
    """Random SL2 matrix ``R(a) diag(e^x, e^-x) R(b)`` with ``|x| <= scale``."""
    a, b = rng.uniform(0.0, np.pi, size=2)
    x = rng.uniform(-scale, scale)
    return rotation(a) @ np.diag([np.exp(x), np.exp(-x)]) @ rotation(b)


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])
