"""Matchings, trace curves, winding speeds and heteroclinic tangencies.

Conventions: a potential sequence ``p`` defines the Schrodinger products
``A_E^j = S(p[j-1] - E) ... S(p[0] - E)``.  Projective angles are measured
counterclockwise; with ``dS(t - E)/dE = [[-1, 0], [0, 0]]`` every forward
orbit ``A_E^n v`` winds counterclockwise as ``E`` increases.
"""

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import core
from .embed import schrodinger_product
from .errors import CapExceeded, NoneFound, NotHyperbolic, RootCountMismatch
from .tridiag import Tridiag, eigenvalues
from .walk import ENUMERATION_CAP, trial_rng

RECORD_VERSION = 1
DSDE = np.array([[-1.0, 0.0], [0.0, 0.0]])


def _potentials(family, word, n=None):
    pot = np.asarray(word, dtype=float) if family is None else family.expand(word)
    return pot if n is None else pot[:n]


# --------------------------------------------------------------------------
# matchings

def orbit(potentials, E, v=core.E1):
    """Normalized forward orbit of ``v`` and its log-norms.

    Returns ``(dirs, lognorms)`` where ``dirs[j]`` is the unit vector of
    ``A_E^j v`` (not sign-canonicalized) and ``lognorms[j] = log|A_E^j v|``,
    for ``j = 0..n``.
    """
    n = len(potentials)
    dirs = np.empty((n + 1, 2))
    logs = np.empty(n + 1)
    x = np.asarray(v, dtype=float)
    r = np.hypot(x[0], x[1])
    x = x / r
    acc = np.log(r)
    dirs[0], logs[0] = x, acc
    for j, p in enumerate(potentials):
        x = np.array([(p - E) * x[0] - x[1], x[0]])
        r = np.hypot(x[0], x[1])
        x = x / r
        acc += np.log(r)
        dirs[j + 1], logs[j + 1] = x, acc
    return dirs, logs


def matching_tau(potentials, E):
    """``tau = |A^k e1| / max_{j<k} |A^j e1|`` and the argmax index."""
    _, logs = orbit(potentials, E)
    j = int(np.argmax(logs[:-1]))
    return float(np.exp(logs[-1] - logs[j])), j


def matching_residual(potentials, E):
    """d(A_E^k e1, e2), the defect of the Dirichlet condition at the end."""
    dirs, _ = orbit(potentials, E)
    return proj_distance_e2(dirs[-1])


def proj_distance_e2(x):
    return float(abs(x[0]) / np.hypot(x[0], x[1]))


def matching_energies(potentials, k, tol=1e-13):
    """Energies where ``A_E^k e1`` is vertical, with their tau values.

    These are exactly the eigenvalues of the Dirichlet truncation to the
    first ``k`` sites.
    """
    potentials = np.asarray(potentials, dtype=float)
    if len(potentials) < k:
        raise ValueError("word is shorter than k")
    pot = potentials[:k]
    return [(float(E), matching_tau(pot, E)[0]) for E in eigenvalues(Tridiag(pot), tol)]


@dataclass(frozen=True)
class MatchingRecord:
    word: tuple
    potentials: tuple
    E: float
    tau: float
    max_growth_index: int
    norms_log: tuple
    residual: float

    def to_json(self):
        return json.dumps({"v": RECORD_VERSION, "kind": "matching", **asdict(self)})


def matching_record(potentials, E, word=None):
    pot = np.asarray(potentials, dtype=float)
    dirs, logs = orbit(pot, E)
    j = int(np.argmax(logs[:-1]))
    return MatchingRecord(
        word=tuple(int(s) for s in (word if word is not None else range(len(pot)))),
        potentials=tuple(float(p) for p in pot), E=float(E),
        tau=float(np.exp(logs[-1] - logs[j])), max_growth_index=j,
        norms_log=tuple(float(x) for x in logs), residual=proj_distance_e2(dirs[-1]))


@dataclass(frozen=True)
class MatchingSearch:
    records: list
    measure_estimate: float
    stderr: float
    samples: int


def find_matchings(family, k, delta, interval, samples, seed):
    """Monte-Carlo frequency of delta-matchings of size ``k`` with E in ``interval``.

    Sample ``s`` is the window ``family.sample(trial_rng(seed, s), k)``.
    Records are sorted by (sample order, E).
    """
    if k < 4 or not 0 < delta <= 1:
        raise ValueError("need k >= 4 and 0 < delta <= 1")
    a, b = interval
    records = []
    hits = 0
    for s in range(samples):
        pot, states = family.sample(trial_rng(seed, s), k)
        H = Tridiag(pot)
        hit = False
        for E in eigenvalues(H, 1e-13):
            if a <= E <= b:
                tau, _ = matching_tau(pot, E)
                if tau < delta:
                    records.append(matching_record(pot, E, states))
                    hit = True
        hits += hit
    p = hits / samples
    return MatchingSearch(records, p, float(np.sqrt(p * (1 - p) / samples)), samples)


def matching_vector(potentials, E):
    """Unit Dirichlet solution ``psi_1..psi_k`` with ``psi_0 = 0, psi_1 = 1``."""
    k = len(potentials)
    psi = np.empty(k + 2)
    psi[0], psi[1] = 0.0, 1.0
    for j in range(1, k + 1):
        psi[j + 1] = (potentials[j - 1] - E) * psi[j] - psi[j - 1]
    u = psi[1:k + 1]
    return u / np.linalg.norm(u)


def slot_operator(slot_potentials, gap_potentials=(0.0, 0.0)):
    """Concatenate slots separated by two gap sites.

    Returns ``(H, starts)``: the operator on ``m (k + 2)`` sites and the
    first index of each slot.
    """
    diag, starts = [], []
    for pot in slot_potentials:
        starts.append(len(diag))
        diag.extend(pot)
        diag.extend(gap_potentials)
    return Tridiag(np.array(diag)), starts


def slot_vectors(H, starts, slot_potentials, E):
    """Matching solutions embedded in their slots (disjoint supports)."""
    out = []
    for start, pot in zip(starts, slot_potentials):
        u = np.zeros(H.n)
        u[start:start + len(pot)] = matching_vector(np.asarray(pot), E)
        out.append(u)
    return np.array(out)


# --------------------------------------------------------------------------
# trace curves

def trace_curve(potentials, energies):
    """``tr(A_E^n)`` and its E-derivative, vectorized over ``energies``."""
    E = np.asarray(energies, dtype=float)
    one, zero = np.ones_like(E), np.zeros_like(E)
    a, b, c, d = one, zero, zero, one
    da, db, dc, dd = zero, zero, zero, zero
    for p in potentials:
        t = p - E
        # [[t, -1], [1, 0]] @ [[a, b], [c, d]], derivative by the product rule
        na, nb, nc, nd = t * a - c, t * b - d, a, b
        da, db, dc, dd = -a + t * da - dc, -b + t * db - dd, da, db
        a, b, c, d = na, nb, nc, nd
    return a + d, da + dd


def floquet_energies(potentials, rho):
    """Energies with ``tr(A_E^n) = rho`` (|rho| < 2) from a Hermitian eigenproblem.

    These are the eigenvalues of the periodic operator with Bloch phase
    ``theta`` where ``2 cos(theta) = rho``; used as a dense cross-check.
    """
    p = np.asarray(potentials, dtype=float)
    n = len(p)
    z = np.exp(1j * np.arccos(rho / 2.0))
    H = np.diag(p).astype(complex)
    if n == 1:
        return np.array([p[0] - rho])
    for j in range(n - 1):
        H[j, j + 1] -= 1.0
        H[j + 1, j] -= 1.0
    H[0, n - 1] -= np.conj(z)
    H[n - 1, 0] -= z
    return np.linalg.eigvalsh(H)


@dataclass(frozen=True)
class TraceDiagnostics:
    roots: dict
    critical_points: np.ndarray
    critical_values: np.ndarray
    morse_ok: bool
    interval: tuple
    grid: int


def trace_curve_diagnostics(family, word, n=None, E_interval=None, grid=None):
    """Roots of ``tr - rho`` (rho = -1, 0, 1) and critical values of the trace.

    With ``family=None`` the word is taken as the potential sequence itself.
    The default interval is the Gershgorin band of the potentials, slightly
    widened, which contains every root with ``|rho| <= 2``.  Raises
    RootCountMismatch when the grid misses roots (refine and retry).
    """
    pot = _potentials(family, word, n)
    n = len(pot)
    if grid is None:
        grid = max(8 * n, 256)
    if grid < 8 * n:
        raise ValueError("grid must be at least 8 n")
    if E_interval is None:
        E_interval = (float(pot.min()) - 2.05, float(pot.max()) + 2.05)
    Es = np.linspace(E_interval[0], E_interval[1], grid)
    tr, dtr = trace_curve(pot, Es)

    def tr_at(E, rho=0.0):
        return float(trace_curve(pot, np.array([E]))[0][0]) - rho

    def dtr_at(E):
        return float(trace_curve(pot, np.array([E]))[1][0])

    roots = {}
    for rho in (-1.0, 0.0, 1.0):
        f = tr - rho
        idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
        found = [Es[i] for i in np.nonzero(f == 0)[0]]
        found += [brentq(tr_at, Es[i], Es[i + 1], args=(rho,), xtol=1e-15, rtol=1e-15)
                  for i in idx]
        found = np.sort(np.array(found))
        if len(found) != n:
            raise RootCountMismatch(rho, len(found), n)
        roots[rho] = found

    idx = np.nonzero(np.sign(dtr[:-1]) * np.sign(dtr[1:]) < 0)[0]
    crit = np.array([brentq(dtr_at, Es[i], Es[i + 1], xtol=1e-15, rtol=1e-15) for i in idx])
    crit_vals = trace_curve(pot, crit)[0] if len(crit) else np.array([])
    morse = bool(len(crit) == n - 1 and np.all(np.abs(crit_vals) >= 2.0 - 1e-6))
    return TraceDiagnostics(roots, crit, crit_vals, morse, tuple(E_interval), grid)


# --------------------------------------------------------------------------
# winding

def projective_angle(x):
    """Angle of the line through ``x``, in [0, pi)."""
    return float(np.arctan2(x[1], x[0]) % np.pi)


def winding_derivative(family, word, n, E, v, direction="forward"):
    """E-derivative of the angle of ``A_E^n v`` (forward) or ``A_E^-n v`` (backward).

    Forward: ``sum_{j<n} (A^j v)_1^2 / |A^n v|^2`` (strictly positive).
    Backward: ``-sum_{j<n} (A^j w)_1^2 / |w|^2`` with ``w = A^-n v``.
    Both are evaluated from normalized orbits with log-norm bookkeeping.
    """
    pot = _potentials(family, word, n)
    if len(pot) < 1:
        raise ValueError("need at least one factor")
    v = np.asarray(v, dtype=float)
    if direction == "forward":
        dirs, logs = orbit(pot, E, v)
        return float(np.sum(dirs[:-1, 0] ** 2 * np.exp(2.0 * (logs[:-1] - logs[-1]))))
    if direction == "backward":
        w = backward_image(pot, E, v)
        dirs, logs = orbit(pot, E, w)
        return float(-np.sum(dirs[:-1, 0] ** 2 * np.exp(2.0 * (logs[:-1] - logs[0]))))
    raise ValueError("direction must be 'forward' or 'backward'")


def backward_image(potentials, E, v):
    """Unit vector along ``A_E^-n v``, applying ``S(t)^-1 = [[0, 1], [-1, t]]``."""
    x = np.asarray(v, dtype=float) / np.hypot(v[0], v[1])
    for p in potentials[::-1]:
        x = np.array([x[1], -x[0] + (p - E) * x[1]])
        x /= np.hypot(x[0], x[1])
    return x


def product_with_derivative(potentials, E):
    """``(M, dM/dE, lognorm)`` with ``M, dM`` scaled by ``exp(-lognorm)``."""
    M = np.eye(2)
    dM = np.zeros((2, 2))
    acc = 0.0
    for p in potentials:
        S = np.array([[p - E, -1.0], [1.0, 0.0]])
        M, dM = S @ M, DSDE @ M + S @ dM
        s = core.op_norm(M)
        M, dM = M / s, dM / s
        acc += np.log(s)
    return M, dM, acc


def _eigvec(M, mu):
    r1 = np.array([M[0, 1], mu - M[0, 0]])
    r2 = np.array([mu - M[1, 1], M[1, 0]])
    v = r1 if np.hypot(*r1) >= np.hypot(*r2) else r2
    return v / np.hypot(v[0], v[1])


def hyperbolic_data(M, lognorm=0.0):
    """Signed unstable eigenvalue and unit eigenvectors of ``exp(lognorm) M``.

    ``M`` may be renormalized (``det M = exp(-2 lognorm)``).  Returns
    ``(mu, u, s, lam)`` where ``mu`` is the scaled signed eigenvalue of M and
    ``lam = |mu| exp(lognorm)`` the true ``lambda``.
    """
    t = M[0, 0] + M[1, 1]
    D = np.exp(-2.0 * lognorm)
    disc = t * t - 4.0 * D
    if disc <= 0:
        return None
    sgn = 1.0 if t >= 0 else -1.0
    mu = 0.5 * (t + sgn * np.sqrt(disc))
    u = _eigvec(M, mu)
    s = _eigvec(M, D / mu)
    return mu, u, s, abs(mu) * np.exp(lognorm)


@dataclass(frozen=True)
class Velocities:
    du: float
    ds: float
    lam: float


def stable_unstable_velocity(potentials, E):
    """Angular speeds of the unstable and stable directions of ``A_E^n``.

    With ``mu`` the signed unstable eigenvalue,
    ``du = mu (u ^ M' u) / (mu^2 - 1)`` and ``ds = -mu (s ^ M' s) / (mu^2 - 1)``
    (the second is ``mu (s ^ (M^-1)' s) / (mu^2 - 1)``).
    """
    pot = np.asarray(potentials, dtype=float)
    M, dM, ell = product_with_derivative(pot, E)
    data = hyperbolic_data(M, ell)
    if data is None or data[3] < 1.0 + 1e-6:
        raise NotHyperbolic(f"product is not hyperbolic enough at E={E!r}")
    mu, u, s, lam = data
    # everything is scaled by exp(-ell): mu^2 - 1 becomes mu^2 - exp(-2 ell)
    denom = mu * mu - np.exp(-2.0 * ell)
    du = mu * core.wedge(u, dM @ u) / denom
    ds = -mu * core.wedge(s, dM @ s) / denom
    return Velocities(float(du), float(ds), float(lam))


# --------------------------------------------------------------------------
# elliptic words and tangencies

def _word_products(family, words, energies):
    """Products of every word at every energy, shape ``(len(words), G, 2, 2)``.

    Each product is renormalized to unit Frobenius norm; the log of the
    removed scale is returned alongside, shape ``(len(words), G)``.
    """
    G = len(energies)
    E = np.asarray(energies, dtype=float)
    atoms = np.empty((family.kappa, G, 2, 2))
    for i, row in enumerate(family.table):
        P = np.broadcast_to(np.eye(2), (G, 2, 2)).copy()
        for p in row:
            S = np.zeros((G, 2, 2))
            S[:, 0, 0] = p - E
            S[:, 0, 1] = -1.0
            S[:, 1, 0] = 1.0
            P = S @ P
        atoms[i] = P
    out = np.empty((len(words), G, 2, 2))
    logs = np.zeros((len(words), G))
    for w, word in enumerate(words):
        P = np.broadcast_to(np.eye(2), (G, 2, 2)).copy()
        acc = np.zeros(G)
        for sym in word:
            P = atoms[sym] @ P
            sc = np.sqrt(np.sum(P * P, axis=(1, 2)))
            P /= sc[:, None, None]
            acc += np.log(sc)
        out[w] = P
        logs[w] = acc
    return out, logs


def enumerate_words(family, max_len, E0, cap=ENUMERATION_CAP, dedup_tol=1e-9):
    """All words up to ``max_len`` with distinct products at ``E0``.

    Words are visited by length, then lexicographically; a word whose product
    at ``E0`` agrees entrywise within ``dedup_tol`` (relative) with an
    earlier one is dropped.
    """
    kappa = family.kappa
    total = sum(kappa**L for L in range(1, max_len + 1))
    if max_len * kappa**max_len > cap:
        raise CapExceeded(f"enumeration of {total} words exceeds cap {cap}")
    atoms = family.atoms(E0)
    kept, mats = [], []
    for L in range(1, max_len + 1):
        for word in itertools.product(range(kappa), repeat=L):
            P, _ = core.chain_product(atoms[list(word)])
            P = P * np.sign(P.flat[np.argmax(np.abs(P))])
            if any(np.max(np.abs(P - Q)) <= dedup_tol for Q in mats):
                continue
            kept.append(word)
            mats.append(P)
    return kept


@dataclass(frozen=True)
class EllipticRecord:
    word: tuple
    E: float
    trace: float

    def to_json(self):
        return json.dumps({"v": RECORD_VERSION, "kind": "elliptic", **asdict(self)})


def find_elliptic(family, E0, max_len, E_radius, grid=401, margin=1e-3,
                  cap=ENUMERATION_CAP):
    """Words whose product is elliptic (|tr| <= 2 - margin) somewhere near E0.

    For each word the reported energy is the grid point with elliptic trace
    closest to E0 (E0 itself when the word is elliptic there).
    """
    words = enumerate_words(family, max_len, E0, cap)
    Es = np.linspace(E0 - E_radius, E0 + E_radius, grid)
    Es = np.union1d(Es, [E0])
    out = []
    for word in words:
        pot = family.expand(word)
        tr, _ = trace_curve(pot, Es)
        ok = np.nonzero(np.abs(tr) <= 2.0 - margin)[0]
        if len(ok):
            i = ok[np.argmin(np.abs(Es[ok] - E0))]
            out.append(EllipticRecord(tuple(int(s) for s in word), float(Es[i]), float(tr[i])))
    if not out:
        raise NoneFound("no elliptic word near E0")
    out.sort(key=lambda r: (abs(r.E - E0), len(r.word), r.word))
    return out


@dataclass(frozen=True)
class TangencyRecord:
    """A heteroclinic tangency ``C û(B) = ŝ(A)`` and its control parameters.

    ``gamma = log min(lambda(A), lambda(B))``, ``rho = log |C|`` and
    ``t = -log min(d(v1*(A), v2(A)), d(v1*(B), v2(B)))``, all at ``E``.
    """

    source_word: tuple
    transition_word: tuple
    target_word: tuple
    E: float
    residual: float
    gamma: float
    rho: float
    t: float

    def to_json(self):
        return json.dumps({"v": RECORD_VERSION, "kind": "tangency", **asdict(self)})


def tangency_from_matrices(B, C, A, E=0.0, words=((), (), ())):
    """Build a record (with achieved control parameters) from explicit matrices."""
    B, C, A = (np.asarray(X, dtype=float) for X in (B, C, A))
    u, _, lam_b = core.fixed_directions(B)
    _, s, lam_a = core.fixed_directions(A)
    residual = core.proj_distance(C @ u, s)
    gaps = []
    for X in (A, B):
        fr = core.singular_frame(X)
        gaps.append(core.proj_distance(fr.v1s, fr.v2))
    return TangencyRecord(
        tuple(words[0]), tuple(words[1]), tuple(words[2]), float(E), float(residual),
        float(np.log(min(lam_a, lam_b))), float(np.log(core.op_norm(C))),
        float(-np.log(min(gaps))))


def record_matrices(family, rec):
    """Products ``(B, C, A)`` of a record's words at the record's energy."""
    atoms = family.atoms(rec.E)

    def prod(word):
        P = np.eye(2)
        for sym in word:
            P = atoms[sym] @ P
        return P

    return prod(rec.source_word), prod(rec.transition_word), prod(rec.target_word)


def tangency_residual(family, rec):
    """Independent re-evaluation of d(C_E û(B_E), ŝ(A_E)) at ``rec.E``."""
    B, C, A = record_matrices(family, rec)
    u, _, _ = core.fixed_directions(B)
    _, s, _ = core.fixed_directions(A)
    return core.proj_distance(C @ u, s)


def is_controlled(rec, gamma, rho, t):
    return bool(rec.gamma >= gamma and rec.rho <= rho and rec.t <= t)


def _angles(V):
    return np.arctan2(V[..., 1], V[..., 0])


def _wrap(x):
    """Reduce an angle difference to [-pi/2, pi/2)."""
    return (x + np.pi / 2) % np.pi - np.pi / 2


def _unstable_stable(P, logs):
    """Vectorized unstable/stable unit vectors and lambda for renormalized products."""
    t = P[..., 0, 0] + P[..., 1, 1]
    D = P[..., 0, 0] * P[..., 1, 1] - P[..., 0, 1] * P[..., 1, 0]
    disc = t * t - 4.0 * D
    hyp = disc > 0
    root = np.sqrt(np.where(hyp, disc, 0.0))
    sgn = np.where(t >= 0, 1.0, -1.0)
    mu = 0.5 * (t + sgn * root)
    mu_s = np.where(mu != 0, D / np.where(mu != 0, mu, 1.0), 0.0)

    def vec(m):
        r1 = np.stack([P[..., 0, 1], m - P[..., 0, 0]], axis=-1)
        r2 = np.stack([m - P[..., 1, 1], P[..., 1, 0]], axis=-1)
        n1 = np.hypot(r1[..., 0], r1[..., 1])
        n2 = np.hypot(r2[..., 0], r2[..., 1])
        return np.where((n1 >= n2)[..., None], r1, r2)

    lam = np.abs(mu) * np.exp(logs)
    return vec(mu), vec(mu_s), np.where(hyp, lam, 1.0)


def find_tangency(family, E0, max_len, E_radius, min_lambda, grid=None,
                  powers=(2, 4, 8, 16, 32, 64), cap=ENUMERATION_CAP, max_refine=16):
    """Locate the heteroclinic tangency nearest to ``E0``.

    Candidate source/target words are the enumerated words with
    ``lambda >= min_lambda`` at ``E0``; transitions are all enumerated words
    plus powers of the elliptic ones.  The signed gap
    ``g(E) = angle(C û(B)) - angle(ŝ(A))`` (reduced mod pi) increases with E,
    so a root is bracketed by a grid sign change from negative to positive
    with both values small (a jump across the branch cut goes the other way).
    Brackets nearest to ``E0`` are refined by bisection to ``|g| <= 1e-10``.
    """
    words = enumerate_words(family, max_len, E0, cap)
    atoms0 = family.atoms(E0)
    hyper = []
    elliptic = []
    for w in words:
        P = np.eye(2)
        for sym in w:
            P = atoms0[sym] @ P
        if core.unstable_eigenvalue(P) >= min_lambda:
            hyper.append(w)
        if abs(core.trace(P)) < 2.0 - 1e-3:
            elliptic.append(w)
    if not hyper:
        raise NoneFound("no word reaches min_lambda at E0")
    transitions = list(words)
    for w in elliptic:
        transitions += [w * m for m in powers]

    if grid is None:
        grid = _tangency_grid(family, hyper, transitions, E0, E_radius)
    Es = np.linspace(E0 - E_radius, E0 + E_radius, grid)
    Ph, Lh = _word_products(family, hyper, Es)
    U, Sv, lam = _unstable_stable(Ph, Lh)
    ok = lam >= min_lambda
    th_s = _angles(Sv)                              # (H, G)
    Pt, _ = _word_products(family, transitions, Es)

    brackets = []
    for bi in range(len(hyper)):
        for ci in range(len(transitions)):
            CU = np.einsum("gij,gj->gi", Pt[ci], U[bi])
            g = _wrap(_angles(CU)[None, :] - th_s)  # (A, G)
            good = ok[bi][None, :] & ok
            cross = (g[:, :-1] < 0) & (g[:, 1:] >= 0) & (g[:, :-1] > -np.pi / 4) \
                & (g[:, 1:] < np.pi / 4) & good[:, :-1] & good[:, 1:]
            for ai, gi in zip(*np.nonzero(cross)):
                mid = 0.5 * (Es[gi] + Es[gi + 1])
                brackets.append((abs(mid - E0), len(hyper[bi]) + len(transitions[ci])
                                 + len(hyper[ai]), hyper[bi], transitions[ci], hyper[ai],
                                 Es[gi], Es[gi + 1]))
    if not brackets:
        raise NoneFound("no tangency bracket in the search window")
    brackets.sort(key=lambda b: b[:5])
    best = None
    for _, _, B, C, A, lo, hi in brackets[:max_refine]:
        rec = _refine_tangency(family, B, C, A, lo, hi)
        if rec is None:
            continue
        key = (abs(rec.E - E0), len(B) + len(C) + len(A), B, C, A)
        if best is None or key < best[0]:
            best = (key, rec)
    if best is None:
        raise NoneFound("brackets did not refine to a tangency")
    return best[1]


def _tangency_grid(family, hyper, transitions, E0, E_radius, per_unit=32, lo=257, hi=20001):
    """Grid size from the largest angular speed met at a few probe energies."""
    probes = np.linspace(E0 - E_radius, E0 + E_radius, 9)
    speed = 1.0
    for w in set(hyper) | set(transitions):
        pot = family.expand(w)
        for E in probes:
            speed = max(speed, winding_derivative(None, pot, None, E, core.E1))
    return int(min(hi, max(lo, np.ceil(per_unit * speed * 2 * E_radius))))


def _gap(family, B, C, A, E):
    atoms = family.atoms(E)

    def prod(word):
        P, ell = core.chain_product(atoms[list(word)])
        return P, ell

    PB, lb = prod(B)
    PC, _ = prod(C)
    PA, la = prod(A)
    hb = hyperbolic_data(PB, lb)
    ha = hyperbolic_data(PA, la)
    if hb is None or ha is None:
        return None
    x = PC @ hb[1]
    return float(_wrap(np.arctan2(x[1], x[0]) - np.arctan2(ha[2][1], ha[2][0])))


def _refine_tangency(family, B, C, A, lo, hi, tol=1e-10):
    glo, ghi = _gap(family, B, C, A, lo), _gap(family, B, C, A, hi)
    if glo is None or ghi is None or not (glo < 0 <= ghi):
        return None
    E, g = lo, glo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = _gap(family, B, C, A, mid)
        if g is None:
            return None
        E = mid
        if abs(g) <= tol or mid in (lo, hi):
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
    if abs(g) > 1e-7:
        return None
    atoms = family.atoms(E)

    def prod(word):
        P = np.eye(2)
        for sym in word:
            P = atoms[sym] @ P
        return P

    try:
        return tangency_from_matrices(prod(B), prod(C), prod(A), E, (B, C, A))
    except (NotHyperbolic, core.DegenerateNorm):
        return None
