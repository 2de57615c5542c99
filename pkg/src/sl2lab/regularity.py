"""Lyapunov and IDS curves over energy, and local Holder exponent estimates.

The Holder scan measures two-sided oscillation over ``[E0 - h, E0 + h]``,
i.e. local (not point-wise) regularity at ``E0``.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .embed import EnergyFamily, family_measure
from .errors import DegenerateGap, InsufficientSignal, ZeroExponent
from .tridiag import sample_counts
from .walk import fit_slope, lyapunov_mc, shannon_entropy

DEFAULT_SCALES = tuple(2.0**-j for j in range(4, 15))


@dataclass(frozen=True, eq=False)
class EnergyCurve:
    energies: np.ndarray
    values: np.ndarray
    value_stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        v = np.asarray(self.values, dtype=float)
        s = np.asarray(self.value_stderr, dtype=float)
        if not (e.shape == v.shape == s.shape):
            raise ValueError("energies, values and value_stderr must have equal lengths")
        if np.any(s < 0):
            raise ValueError("stderr must be nonnegative")
        if np.any(np.diff(e) < 0):
            raise ValueError("energies must be sorted")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "value_stderr", s)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["energy", "value", "stderr"])
            for row in zip(self.energies, self.values, self.value_stderr):
                w.writerow([format(x, ".17g") for x in row])

    @classmethod
    def read_csv(cls, path, meta=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        cols = {name: i for i, name in enumerate(header)}
        if "energy" not in cols or "value" not in cols:
            raise ValueError("curve CSV needs 'energy' and 'value' columns")
        e = [float(r[cols["energy"]]) for r in body]
        v = [float(r[cols["value"]]) for r in body]
        s = [float(r[cols["stderr"]]) for r in body] if "stderr" in cols else [0.0] * len(e)
        return cls(e, v, s, dict(meta or {}))

    def oscillation(self, E0, h):
        """max - min of the sampled values on [E0 - h, E0 + h], with its stderr."""
        tol = 1e-12 * max(1.0, abs(E0))
        mask = (self.energies >= E0 - h - tol) & (self.energies <= E0 + h + tol)
        if mask.sum() < 2:
            raise ValueError(f"curve has fewer than two points within {h:g} of {E0:g}")
        vals = self.values[mask]
        errs = self.value_stderr[mask]
        return float(vals.max() - vals.min()), float(np.hypot(errs[np.argmax(vals)], errs[np.argmin(vals)]))


def lyapunov_curve(family, energies, n, samples, seed):
    """``L(mu_E)`` per energy; every energy reuses the same words (same seed)."""
    energies = np.asarray(energies, dtype=float)
    est = [lyapunov_mc(family_measure(family, E), n, samples, seed) for E in energies]
    return EnergyCurve(energies, [e.estimate for e in est], [e.stderr for e in est],
                       {"kind": "lyapunov", "n": n, "samples": samples, "seed": seed})


@dataclass(frozen=True)
class IdsProbe:
    """Finite-volume IDS increments of a family, computed on demand.

    The increment over ``[E0 - h, E0 + h]`` uses the same potential windows
    at both endpoints; its stderr comes from the per-sample differences.
    """

    family: EnergyFamily
    n: int
    samples: int
    seed: int

    def oscillations(self, E0, scales):
        scales = np.asarray(scales, dtype=float)
        ends = np.concatenate([E0 - scales, E0 + scales])
        order = np.argsort(ends)
        counts = np.empty((self.samples, len(ends)), dtype=np.int64)
        counts[:, order] = sample_counts(self.family, self.n, ends[order], self.samples, self.seed)
        m = len(scales)
        inc = (counts[:, m:] - counts[:, :m]) / self.n
        err = inc.std(axis=0, ddof=1) / np.sqrt(self.samples)
        return inc.mean(axis=0), err


@dataclass(frozen=True)
class HolderEstimate:
    E0: float
    scales: tuple
    oscillations: tuple
    stderr: tuple
    alpha_hat: float
    fit_r2: float

    def to_json(self):
        return json.dumps(asdict(self))


def holder_scan(source, E0, scales=DEFAULT_SCALES):
    """Least-squares slope of log-oscillation against log-scale around ``E0``.

    ``source`` is an EnergyCurve (oscillation = max - min over the window)
    or an IdsProbe (oscillation = IDS increment over the window).  Raises
    InsufficientSignal when no oscillation exceeds 10 stderr, or when fewer
    than two scales have a positive oscillation.
    """
    scales = np.asarray(scales, dtype=float)
    if len(scales) < 4:
        raise ValueError("need at least 4 scales")
    if np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be strictly decreasing")
    if isinstance(source, EnergyCurve):
        if not source.energies[0] <= E0 <= source.energies[-1]:
            raise ValueError("E0 outside the curve range")
        pairs = [source.oscillation(E0, h) for h in scales]
        osc = np.array([p[0] for p in pairs])
        err = np.array([p[1] for p in pairs])
    else:
        osc, err = source.oscillations(E0, scales)
    if np.all(osc <= 10.0 * err):
        raise InsufficientSignal("oscillations are within noise at every scale", osc, err)
    pos = osc > 0
    if pos.sum() < 2:
        raise InsufficientSignal("fewer than two positive oscillations", osc, err)
    alpha, r2 = fit_slope(np.log(scales[pos]), np.log(osc[pos]))
    return HolderEstimate(float(E0), tuple(scales.tolist()), tuple(osc.tolist()),
                          tuple(err.tolist()), alpha, r2)


def halperin_threshold(a, b):
    """``2 log 2 / arccosh(1 + |a - b| / 2)``."""
    if a == b:
        raise DegenerateGap("a and b must differ")
    return float(2.0 * np.log(2.0) / np.arccosh(1.0 + abs(a - b) / 2.0))


def halperin_family(a, b):
    """Bernoulli potential ``a``/``b`` with probability 1/2 each.

    At energy ``E`` the two atoms are ``S(a - E)`` and ``S(b - E)``.
    """
    return EnergyFamily.from_potentials([a, b], [0.5, 0.5])


@dataclass(frozen=True)
class BoundReport:
    E0: float
    H: float
    L: float
    L_stderr: float
    ratio: float
    alpha_hat: float
    fit_r2: float
    verdict: str
    holder: HolderEstimate = None

    def to_json(self):
        d = asdict(self)
        return json.dumps(d)


def bound_report(family, E0, n, samples, seed, scales=DEFAULT_SCALES, ids_n=None,
                 ids_samples=None):
    """Compare the local Holder exponent of the IDS with ``H / L`` at ``E0``.

    ``L`` is estimated with ``n``-step products over ``samples`` words; the
    IDS scan uses windows of ``ids_n`` sites (default ``n``) and
    ``ids_samples`` samples (default ``samples``), on the stream ``seed + 1``.
    """
    mu = family_measure(family, E0)
    H = shannon_entropy(mu)
    est = lyapunov_mc(mu, n, samples, seed)
    if not est.estimate > 5.0 * est.stderr:
        raise ZeroExponent(est.estimate, est.stderr)
    ratio = H / est.estimate
    probe = IdsProbe(family, ids_n or n, ids_samples or samples, seed + 1)
    try:
        hol = holder_scan(probe, E0, scales)
    except InsufficientSignal:
        return BoundReport(float(E0), H, est.estimate, est.stderr, ratio, float("nan"),
                           float("nan"), "consistent (insufficient signal)")
    verdict = "consistent" if hol.alpha_hat <= ratio + 0.15 else "inconsistent"
    return BoundReport(float(E0), H, est.estimate, est.stderr, ratio, hol.alpha_hat,
                       hol.fit_r2, verdict, hol)
