"""Finitely supported measures on SL(2,R) and random products.

Randomness
----------
Every Monte-Carlo routine takes an integer ``seed``.  Trial ``i`` draws from
``numpy.random.Generator(PCG64(SeedSequence([seed, i])))``; symbols are
obtained by inverse-CDF lookup (``searchsorted`` of ``Generator.random``
against the cumulative probabilities).  PCG64 and SeedSequence are specified
bit-for-bit by numpy, so words are reproducible across platforms, and since
each trial owns its stream the results do not depend on evaluation order.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import core
from .errors import CapExceeded, DegenerateScales, InvalidMeasure, NotConverged

ENUMERATION_CAP = 10**6
MERGE_TOL = 1e-9


def trial_rng(seed, index):
    """Independent generator for trial ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def draw_symbols(rng, cumprobs, n):
    """``n`` i.i.d. symbols by inverse CDF of one uniform per symbol."""
    idx = np.searchsorted(cumprobs, rng.random(n), side="right")
    return np.minimum(idx, len(cumprobs) - 1)


def _cumprobs(probs):
    c = np.cumsum(probs)
    c[-1] = 1.0
    return c


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Probability measure ``sum_i probs[i] * delta_{atoms[i]}``."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 3 or atoms.shape[1:] != (2, 2):
            raise InvalidMeasure("atoms", f"expected a list of 2x2 matrices, got shape {atoms.shape}")
        if probs.shape != (atoms.shape[0],):
            raise InvalidMeasure("probs", "length must match the number of atoms")
        if len(probs) < 1:
            raise InvalidMeasure("atoms", "at least one atom is required")
        if not np.all(probs > 0):
            raise InvalidMeasure("probs", "probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidMeasure("probs", f"probabilities sum to {probs.sum()!r}, not 1")
        for i, A in enumerate(atoms):
            try:
                core.validate(A)
            except core.InvalidMatrix as exc:
                raise InvalidMeasure(f"atoms[{i}]", str(exc)) from None
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def kappa(self):
        return len(self.probs)

    @classmethod
    def uniform(cls, atoms):
        atoms = np.asarray(atoms, dtype=float)
        return cls(atoms, np.full(len(atoms), 1.0 / len(atoms)))

    def reverse(self):
        """The measure of inverses, ``sum_i p_i delta_{A_i^-1}``."""
        return FiniteMeasure(np.array([core.inverse(A) for A in self.atoms]), self.probs)

    def conjugate(self, P):
        Pi = core.inverse(P)
        return FiniteMeasure(np.array([P @ A @ Pi for A in self.atoms]), self.probs)

    def permuted(self, perm):
        perm = np.asarray(perm)
        return FiniteMeasure(self.atoms[perm], self.probs[perm])

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, obj):
        try:
            atoms, probs = obj["atoms"], obj["probs"]
        except (KeyError, TypeError) as exc:
            raise InvalidMeasure("measure", f"missing field {exc}") from None
        try:
            return cls(np.array(atoms, dtype=float), np.array(probs, dtype=float))
        except (ValueError, TypeError) as exc:
            if isinstance(exc, InvalidMeasure):
                raise
            raise InvalidMeasure("atoms", str(exc)) from None

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class WordSampler:
    """Reproducible i.i.d. symbol words for a probability vector."""

    def __init__(self, probs, seed):
        self.cumprobs = _cumprobs(np.asarray(probs, dtype=float))
        self.seed = int(seed)

    def word(self, n, trial=0):
        return draw_symbols(trial_rng(self.seed, trial), self.cumprobs, n)

    def words(self, n, trials):
        return np.array([self.word(n, t) for t in range(trials)], dtype=np.int64)


def shannon_entropy(mu):
    p = mu.probs
    return float(-np.sum(p * np.log(p)))


def _merge(atoms, probs, tol=MERGE_TOL):
    """Merge atoms whose entries agree within ``tol`` (relative to scale).

    Entries are snapped to a grid of spacing ``tol * 2^ceil(log2(scale))``;
    matrices landing on the same grid key are merged, so the first
    representative of each class is kept and masses add up.
    """
    scale = max(1.0, float(np.max(np.abs(atoms))))
    step = tol * 2.0 ** np.ceil(np.log2(scale))
    keys = np.round(atoms.reshape(len(atoms), 4) / step).astype(np.int64)
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    mass = np.bincount(inv, weights=probs)
    order = np.argsort(first)
    return atoms[first[order]], mass[order]


def convolve(mu, nu):
    """``mu * nu``: atoms ``g h`` with mass ``mu(g) nu(h)``, near-duplicates merged."""
    atoms = np.einsum("aij,bjk->abik", mu.atoms, nu.atoms).reshape(-1, 2, 2)
    probs = np.outer(mu.probs, nu.probs).ravel()
    atoms, probs = _merge(atoms, probs)
    return FiniteMeasure(atoms, probs / probs.sum())


def rw_entropy(mu, n, cap=ENUMERATION_CAP):
    """(1/n) H(mu^{*n}) by exact enumeration with merging."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if mu.kappa**n > cap:
        raise CapExceeded(f"kappa^n = {mu.kappa}^{n} exceeds enumeration cap {cap}")
    power = mu
    for _ in range(n - 1):
        power = convolve(power, mu)
    return shannon_entropy(power) / n


@dataclass(frozen=True)
class Estimate:
    estimate: float
    stderr: float


def log_norms(atoms, words):
    """log |A_{w[n-1]} ... A_{w[0]}| for each row of ``words`` (vectorized)."""
    trials, n = words.shape
    P = np.broadcast_to(np.eye(2), (trials, 2, 2)).copy()
    acc = np.zeros(trials)
    for step in range(n):
        P = atoms[words[:, step]] @ P
        s = np.sqrt(np.sum(P * P, axis=(1, 2)))
        P /= s[:, None, None]
        acc += np.log(s)
    return acc + np.log(np.linalg.norm(P, 2, axis=(1, 2)))


def lyapunov_mc(mu, n, trials, seed):
    """Mean and standard error of (1/n) log |A^n(omega)| over ``trials`` words."""
    if n < 1 or trials < 2:
        raise ValueError("need n >= 1 and trials >= 2")
    words = WordSampler(mu.probs, seed).words(n, trials)
    vals = log_norms(mu.atoms, words) / n
    return Estimate(float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(trials)))


@dataclass(frozen=True, eq=False)
class DiscretizedP1Measure:
    """Probability weights on ``bins`` uniform angular cells of [0, pi).

    Cell ``i`` is centered at angle ``(i + 1/2) * pi / bins``.
    """

    bins: int
    weights: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    @property
    def centers(self):
        return (np.arange(self.bins) + 0.5) * np.pi / self.bins

    def cdf(self):
        return np.cumsum(self.weights)

    def ball_mass(self, theta, radius):
        """Mass of the arc {phi : |phi - theta| <= radius (mod pi)}.

        The weights are treated as uniform within their cells, so the mass is
        a piecewise-linear function of the radius.
        """
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        width = np.pi / self.bins

        def mass_below(x):
            # mass of [0, x) for x in [0, pi], extended periodically
            k, frac = np.divmod(x, np.pi)
            pos = frac / width
            i = np.minimum(pos.astype(np.int64), self.bins - 1)
            return k + cum[i] + (pos - i) * self.weights[i]

        radius = np.minimum(radius, np.pi / 2)
        return mass_below(theta + radius) - mass_below(theta - radius)


def _transition(mu, bins, direction):
    atoms = mu.atoms if direction == "forward" else mu.reverse().atoms
    width = np.pi / bins
    centers = (np.arange(bins) + 0.5) * width
    vecs = np.stack([np.cos(centers), np.sin(centers)])
    rows, cols, vals = [], [], []
    for A, p in zip(atoms, mu.probs):
        img = A @ vecs
        ang = np.arctan2(img[1], img[0]) % np.pi
        pos = ang / width - 0.5
        lo = np.floor(pos)
        frac = pos - lo
        lo = lo.astype(np.int64) % bins
        hi = (lo + 1) % bins
        src = np.arange(bins)
        rows += [lo, hi]
        cols += [src, src]
        vals += [p * (1.0 - frac), p * frac]
    T = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(bins, bins))
    return T


def stationary_measure(mu, direction="forward", bins=1024, iters=20000, tol=1e-10,
                       initial=None):
    """Fixed point of the discretized Markov operator on P^1.

    The mass of each cell center is pushed through every atom (weighted by its
    probability) and split linearly between the two nearest centers.  The
    backward measure uses the inverse atoms.  Iteration starts from the
    uniform measure and stops when successive CDFs differ by less than
    ``tol`` in sup norm.  Raises NotConverged (carrying the last iterate)
    when ``iters`` is exhausted.
    """
    if bins < 16:
        raise ValueError("bins must be >= 16")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    T = _transition(mu, bins, direction)
    w = np.full(bins, 1.0 / bins) if initial is None else np.asarray(initial, float)
    residual = np.inf
    it = 0
    for it in range(1, iters + 1):
        nxt = T @ w
        nxt /= nxt.sum()
        residual = float(np.max(np.abs(np.cumsum(nxt - w))))
        w = nxt
        if residual < tol:
            break
    result = DiscretizedP1Measure(bins, w, residual, it)
    if residual >= tol:
        raise NotConverged("stationary measure iteration did not converge", residual, result)
    return result


def apply_operator(mu, eta, direction="forward"):
    """One application of the discretized Markov operator to ``eta``."""
    w = _transition(mu, eta.bins, direction) @ eta.weights
    return DiscretizedP1Measure(eta.bins, w / w.sum())


@dataclass(frozen=True)
class DeviationCheck:
    observed_freq: float
    hoeffding_bound: float
    stderr: float
    ok: bool


def entropy_deviation_check(mu, n, beta, trials, seed):
    """Empirical large-deviation frequency of -(1/n) log p_n against Hoeffding."""
    if n < 1 or beta <= 0:
        raise ValueError("need n >= 1 and beta > 0")
    logp = np.log(mu.probs)
    h = float(np.max(-logp))
    words = WordSampler(mu.probs, seed).words(n, trials)
    dev = np.abs(logp[words].sum(axis=1) / n + shannon_entropy(mu))
    # exact ties (e.g. equiprobable atoms) must not count as deviations
    freq = float(np.mean(dev > beta + 1e-12))
    bound = 0.0 if h == 0.0 else float(2.0 * np.exp(-2.0 * n * beta**2 / h**2))
    stderr = float(np.sqrt(max(freq * (1.0 - freq), 0.0) / trials))
    return DeviationCheck(freq, bound, stderr, freq <= bound + 3.0 * stderr)


@dataclass(frozen=True)
class DimensionEstimate:
    dim_estimate: float
    fit_r2: float


def fit_slope(x, y):
    """Least-squares slope and r^2 of y against x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss == 0 else 1.0 - np.sum(resid**2) / ss
    return float(slope), float(r2)


def local_dimension(eta, samples, scales, seed=0):
    """Average log-log slope of ball masses around eta-sampled points.

    ``scales`` are radii in the metric d = |sin(angle difference)|, i.e. a
    ball of radius delta is an arc of half-width arcsin(delta).
    """
    scales = np.asarray(scales, dtype=float)
    width = np.pi / eta.bins
    if len(scales) < 2 or np.any(np.diff(scales) >= 0):
        raise DegenerateScales("scales must be strictly decreasing with at least two entries")
    if scales[0] >= 1.0 or scales[-1] <= width:
        raise DegenerateScales(f"scales must lie in (bin width {width:.3g}, 1)")
    rng = trial_rng(seed, 0)
    cells = draw_symbols(rng, _cumprobs(eta.weights / eta.weights.sum()), samples)
    thetas = (cells + rng.random(samples)) * width
    radii = np.arcsin(scales)
    masses = np.array([eta.ball_mass(thetas, r) for r in radii])  # (scales, samples)
    logm = np.log(np.maximum(masses, 1e-300)).mean(axis=1)
    return DimensionEstimate(*fit_slope(np.log(scales), logm))
