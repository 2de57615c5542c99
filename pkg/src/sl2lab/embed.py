"""Schrodinger factorization of SL2 matrices and the induced energy families.

Every ``B`` in SL(2,R) factors as ``S(t3) S(t2) S(t1) S(t0)`` with
``S(t) = [[t, -1], [1, 0]]``.  Replacing each atom of a measure by its four
factors gives a Markov shift on ``kappa * 4`` states whose Schrodinger
cocycle ``S(phi - E)`` reproduces the original random product at ``E = 0``
and deforms it analytically (polynomially, in fact) in ``E``.

An :class:`EnergyFamily` is the general object: ``kappa`` blocks of
potentials, block ``i`` chosen with probability ``probs[i]``.  Block length 4
comes from the factorization; block length 1 is the ordinary i.i.d.
(Anderson-type) potential.
"""

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import core
from .walk import FiniteMeasure, _cumprobs, draw_symbols

COND_WARN = 1e-6


def schrodinger_matrix(t):
    return np.array([[t, -1.0], [1.0, 0.0]])


def schrodinger_product(potentials, E=0.0):
    """``S(p[n-1] - E) ... S(p[0] - E)`` without renormalization."""
    P = np.eye(2)
    for p in potentials:
        P = schrodinger_matrix(p - E) @ P
    return P


@dataclass(frozen=True, eq=False)
class SchrodingerDecomposition:
    t: tuple
    source: np.ndarray
    residual: float
    warning: str = None

    def product(self):
        return schrodinger_product(self.t)


def decompose(B):
    """Factor ``B = S(t3) S(t2) S(t1) S(t0)``.

    ``t0`` is the first of (0, 1, -1) maximizing ``|c + d t0|``; the rest
    follows in closed form from ``B S(t0)^-1``.  A warning is attached when
    the pivot is below 1e-6 in absolute value.
    """
    (a, b), (c, d) = np.asarray(B, dtype=float)
    t0 = max((0.0, 1.0, -1.0), key=lambda t: abs(c + d * t))
    # B S(t0)^-1 with S(t)^-1 = [[0, 1], [-1, t]]
    m12 = a + b * t0
    m21 = -d
    m22 = c + d * t0
    t2 = -m22
    t1 = -(m21 + 1.0) / m22
    t3 = (m12 - 1.0) / m22
    t = (float(t0), float(t1), float(t2), float(t3))
    src = np.array([[a, b], [c, d]])
    residual = float(np.max(np.abs(schrodinger_product(t) - src)))
    warning = None
    if abs(m22) < COND_WARN:
        warning = f"ill-conditioned pivot |m22| = {abs(m22):.3g}"
    return SchrodingerDecomposition(t, src, residual, warning)


@dataclass(frozen=True, eq=False)
class MarkovSystem:
    """Markov shift on states ``(i, j)``, encoded as ``i * m + j``.

    Inside a block the phase ``j`` advances deterministically; at the end of
    a block the next block is drawn from ``probs``.
    """

    table: np.ndarray
    probs: np.ndarray
    kernel: np.ndarray
    nu: np.ndarray

    @property
    def kappa(self):
        return self.table.shape[0]

    @property
    def block_len(self):
        return self.table.shape[1]

    def stationarity_residual(self):
        return float(np.max(np.abs(self.nu @ self.kernel - self.nu)))


def markov_system(table, probs):
    table = np.asarray(table, dtype=float)
    probs = np.asarray(probs, dtype=float)
    kappa, m = table.shape
    size = kappa * m
    K = np.zeros((size, size))
    for i in range(kappa):
        for j in range(m - 1):
            K[i * m + j, i * m + j + 1] = 1.0
        K[i * m + m - 1, np.arange(kappa) * m] = probs
    nu = np.repeat(probs / m, m)
    system = MarkovSystem(table, probs, K, nu)
    res = system.stationarity_residual()
    if res > 1e-14:
        raise AssertionError(f"stationary vector check failed: residual {res:.3g}")
    return system


@dataclass(frozen=True, eq=False)
class EnergyFamily:
    """Potential blocks ``table[i]`` drawn with probability ``probs[i]``.

    The energy-``E`` atom of block ``i`` is
    ``S(table[i, m-1] - E) ... S(table[i, 0] - E)``.  ``base`` is the measure
    the table was derived from, if any.
    """

    table: np.ndarray
    probs: np.ndarray
    base: FiniteMeasure = None
    decompositions: tuple = field(default=(), repr=False)

    def __post_init__(self):
        table = np.atleast_2d(np.asarray(self.table, dtype=float))
        probs = np.asarray(self.probs, dtype=float)
        if table.shape[0] != len(probs):
            raise ValueError("table rows must match probs")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_potentials(cls, values, probs=None):
        """i.i.d. potential taking ``values[i]`` with probability ``probs[i]``."""
        values = np.asarray(values, dtype=float).reshape(-1, 1)
        if probs is None:
            probs = np.full(len(values), 1.0 / len(values))
        return cls(values, probs)

    @property
    def kappa(self):
        return self.table.shape[0]

    @property
    def block_len(self):
        return self.table.shape[1]

    @cached_property
    def system(self):
        return markov_system(self.table, self.probs)

    @cached_property
    def cumprobs(self):
        return _cumprobs(self.probs)

    def atoms(self, E=0.0):
        """Block products at energy ``E``, shape ``(kappa, 2, 2)``."""
        return np.array([schrodinger_product(row, E) for row in self.table])

    def expand(self, word):
        """Potential sequence of a symbol word (symbols are 0-based)."""
        return self.table[np.asarray(word, dtype=np.int64)].ravel()

    def sample(self, rng, n):
        """A length-``n`` window of the stationary Markov shift.

        The phase is drawn first (``rng.integers(block_len)``, skipped when
        the block length is 1), then enough i.i.d. block symbols by inverse
        CDF.  Returns ``(potentials, states)`` with states ``i * m + j``.
        """
        m = self.block_len
        j0 = int(rng.integers(m)) if m > 1 else 0
        nblocks = -(-(n + j0) // m)
        symbols = draw_symbols(rng, self.cumprobs, nblocks)
        pot = self.table[symbols].ravel()[j0:j0 + n]
        states = (symbols[:, None] * m + np.arange(m)).ravel()[j0:j0 + n]
        return pot, states

    def band(self):
        """Gershgorin interval containing every truncated spectrum."""
        return float(self.table.min()) - 2.0, float(self.table.max()) + 2.0


def build_markov_system(mu):
    return embedding_family(mu).system


def embedding_family(mu):
    """Energy family whose ``E = 0`` atoms are (numerically) those of ``mu``."""
    decs = tuple(decompose(A) for A in mu.atoms)
    table = np.array([d.t for d in decs])
    return EnergyFamily(table, mu.probs, base=mu, decompositions=decs)


def family_measure(family, E):
    return FiniteMeasure(family.atoms(E), family.probs)


@dataclass(frozen=True)
class LoggedMatrix:
    """A product stored as ``exp(lognorm) * matrix`` with ``|matrix| = 1``."""

    matrix: np.ndarray
    lognorm: float

    def full(self):
        return self.matrix * np.exp(self.lognorm)


def embedded_product(family, E, word):
    """Product of the expanded word at energy ``E`` with a log-norm ledger.

    Each block is multiplied out first, then blocks are chained with
    renormalization; at ``E = 0`` this follows exactly the arithmetic of a
    plain product of ``family_measure(family, 0)`` atoms.
    """
    atoms = family.atoms(E)
    return LoggedMatrix(*core.chain_product(atoms[np.asarray(word, dtype=np.int64)]))


def write_decomposition_csv(family, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["atom_index", "t0", "t1", "t2", "t3", "residual"])
        for i, d in enumerate(family.decompositions):
            w.writerow([i] + [format(x, ".17g") for x in (*d.t, d.residual)])
