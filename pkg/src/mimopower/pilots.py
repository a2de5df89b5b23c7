"""Pilot books and the per-BS pilot correlation matrices."""

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import complex_normal, stream


class PilotKind(enum.Enum):
    ORTHOGONAL = "orthogonal"
    RANDOM = "random"
    NONORTHOGONAL = "nonorthogonal"
    EXTERNAL = "external"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"o": cls.ORTHOGONAL, "r": cls.RANDOM, "n": cls.NONORTHOGONAL,
                   "randomgaussian": cls.RANDOM, "nonorthogonalframe": cls.NONORTHOGONAL,
                   "frame": cls.NONORTHOGONAL}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def letter(self):
        return {"orthogonal": "O", "random": "R", "nonorthogonal": "N", "external": "X"}[self.value]


@dataclass(frozen=True, eq=False)
class PilotBook:
    """Pilot sequences of every user, stacked as columns of an ``L x N`` matrix.

    Columns are ordered cell-major like the users of the scenario.
    """

    sequences: np.ndarray
    users_per_cell: tuple
    kind: PilotKind
    energy: float  # per-symbol pilot power, so that |phi|^2 = L * energy

    def __post_init__(self):
        if self.sequences.ndim != 2 or self.sequences.shape[1] != sum(self.users_per_cell):
            raise ValueError("pilot matrix must be L x (total users)")
        self.sequences.setflags(write=False)

    @property
    def length(self):
        return self.sequences.shape[0]

    def per_cell(self):
        edges = np.cumsum((0,) + tuple(self.users_per_cell))
        return [self.sequences[:, a:b] for a, b in zip(edges[:-1], edges[1:])]


def welch_bound(n, length):
    """Lower bound on the maximal normalized cross-correlation of ``n`` unit vectors in C^L."""
    if n <= length:
        return 0.0
    return math.sqrt((n - length) / (length * (n - 1)))


def max_correlation(x):
    """Largest ``|<x_a, x_b>| / (|x_a| |x_b|)`` over distinct columns."""
    x = np.asarray(x)
    y = x / np.linalg.norm(x, axis=0)
    g = np.abs(y.conj().T @ y)
    np.fill_diagonal(g, 0.0)
    return float(g.max()) if g.size > 1 else 0.0


def _unit_columns(x):
    return x / np.linalg.norm(x, axis=0)


def grassmannian_frame(x0, rounds=500, shrink=0.9):
    """Approximate Grassmannian frame by alternating projection.

    Starting from the columns of ``x0`` (``L x N``), alternate between
    capping the off-diagonal Gram entries at a target correlation and the
    nearest rank-``L`` Gram matrix with unit diagonal.  The target starts at
    the current coherence and is pulled towards the Welch bound.  Returns
    the unit-norm columns of the best iterate seen, never worse than ``x0``.
    """
    length, n = x0.shape
    x = _unit_columns(np.asarray(x0, dtype=complex))
    best, best_mu = x, max_correlation(x)
    if n <= length:
        # an orthonormal set is optimal
        q, _ = np.linalg.qr(x)
        return q[:, :n] if max_correlation(q[:, :n]) < best_mu else best
    welch = welch_bound(n, length)
    cap = best_mu
    for _ in range(rounds):
        g = x.conj().T @ x
        cap = welch + shrink * (cap - welch)
        mag = np.abs(g)
        over = mag > cap
        g[over] *= cap / mag[over]
        np.fill_diagonal(g, 1.0)
        w, v = np.linalg.eigh(g)
        w, v = w[-length:], v[:, -length:]
        x = _unit_columns(np.sqrt(np.maximum(w, 0.0))[:, None] * v.conj().T)
        mu = max_correlation(x)
        if mu < best_mu:
            best, best_mu = x, mu
        else:
            cap = max(cap, 0.5 * (mu + cap))
    return best


def _scale(x, length, energy):
    return np.sqrt(length * energy) * _unit_columns(x)


def random_pilots(length, n, rng):
    return complex_normal(rng, (length, n))


def make_pilots(kind, length, scenario, seed=0, energy=None, path=None, rounds=500):
    """Build a pilot book for every user of ``scenario``.

    ``energy`` is the per-symbol pilot power (defaults to P_max); every
    sequence is scaled to squared norm ``length * energy``.
    """
    kind = PilotKind.parse(kind)
    length = int(length)
    if length < 1:
        raise ValueError("pilot length must be >= 1")
    k = tuple(scenario.config.users_per_cell)
    n = sum(k)
    energy = scenario.pmax if energy is None else float(energy)

    if kind is PilotKind.ORTHOGONAL:
        if length < max(k):
            raise ValueError(f"orthogonal pilots need L >= max users per cell ({max(k)}), got L={length}")
        dft = np.exp(-2j * np.pi * np.outer(np.arange(length), np.arange(length)) / length)
        x = np.hstack([dft[:, :ki] for ki in k])
    elif kind is PilotKind.RANDOM:
        x = random_pilots(length, n, stream(seed, "pilots", 0))
    elif kind is PilotKind.NONORTHOGONAL:
        x = grassmannian_frame(random_pilots(length, n, stream(seed, "pilots", 0)), rounds=rounds)
    else:
        if path is None:
            raise ValueError("external pilots require a file path")
        x = load_pilot_matrix(path)
        if x.shape != (length, n):
            raise ValueError(f"pilot file has shape {x.shape}, expected ({length}, {n})")
        if np.any(np.linalg.norm(x, axis=0) == 0):
            raise ValueError("pilot file contains an all-zero sequence")
    return PilotBook(_scale(x, length, energy), k, kind, energy)


def pilot_gram(book, scenario):
    """``U_i = sigma^2 I + sum_u v_{i,u} phi_u phi_u^H`` for every BS, shape ``(I, L, L)``."""
    phi = book.sequences
    v = scenario.large_scale
    u = np.einsum("lu,iu,mu->ilm", phi, v, phi.conj())
    u += scenario.noise_power * np.eye(book.length)
    return 0.5 * (u + np.conj(np.swapaxes(u, -1, -2)))


# Pilot files: CSV with one header line naming the columns "c<cell>u<user>",
# followed by 2L rows; row 2l holds Re(phi[l]) and row 2l+1 holds Im(phi[l]).
# ``.npy`` files hold the same (2L, N) real array.

def save_pilots(path, book):
    x = book.sequences
    rows = np.empty((2 * x.shape[0], x.shape[1]))
    rows[0::2], rows[1::2] = x.real, x.imag
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, rows)
        return
    names = [f"c{i}u{k}" for i, ki in enumerate(book.users_per_cell) for k in range(ki)]
    np.savetxt(path, rows, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def load_pilot_matrix(path):
    path = Path(path)
    if path.suffix == ".npy":
        rows = np.load(path)
    else:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[0] % 2:
        raise ValueError("pilot file must have an even number of rows (real/imag interleaved)")
    return rows[0::2] + 1j * rows[1::2]
