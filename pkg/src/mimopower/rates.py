"""Instantaneous MRC rates, the deterministic rate approximation and gradients.

All rates are in bits (log base 2).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .pilots import pilot_gram

LN2 = np.log(2.0)


def check_feasible(p, pmax):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > pmax) or not np.all(np.isfinite(p)):
        raise ValueError("power vector outside [0, P_max]")
    return p


@dataclass(frozen=True, eq=False)
class InstantRateContext:
    """One channel realization as seen by the MRC receivers.

    ``H`` has shape ``(..., I, N, M)`` and ``Hhat`` ``(..., N, M)``; leading
    dimensions index independent draws.
    """

    H: np.ndarray
    Hhat: np.ndarray
    noise_power: float
    user_cell: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones(len(self.user_cell)))
        if np.any(np.asarray(self.weights) < 0):
            raise ValueError("rate weights must be nonnegative")

    @classmethod
    def from_draw(cls, draw, estimate, scenario, weights=None):
        H = getattr(draw, "H", draw)
        Hhat = getattr(estimate, "Hhat", estimate)
        return cls(H, Hhat, scenario.noise_power, scenario.user_cell, weights)


@dataclass(frozen=True, eq=False)
class SinrTerms:
    """SINR pieces: ``gamma = signal * p / (cross @ p + noise)``.

    ``cross[u, w]`` is ``|hhat_u^H h_w|^2`` off the diagonal and the
    estimation-error leakage ``|hhat_u^H (h_u - hhat_u)|^2`` on it.
    """

    signal: np.ndarray
    cross: np.ndarray
    noise: np.ndarray


def sinr_terms(ctx):
    H, Hhat = ctx.H, ctx.Hhat
    n = Hhat.shape[-2]
    # inner[u, w] = hhat_u^H h_{i(u), w}, one matrix product per serving BS
    inner = np.empty(Hhat.shape[:-1] + (n,), dtype=np.result_type(H, Hhat))
    for i in np.unique(ctx.user_cell):
        sel = np.flatnonzero(ctx.user_cell == i)
        inner[..., sel, :] = Hhat[..., sel, :].conj() @ np.swapaxes(H[..., i, :, :], -1, -2)
    cross = np.abs(inner) ** 2
    energy = np.sum(np.abs(Hhat) ** 2, axis=-1)
    idx = np.arange(n)
    cross[..., idx, idx] = np.abs(inner[..., idx, idx] - energy) ** 2
    return SinrTerms(energy**2, cross, ctx.noise_power * energy)


def _sinr(p, t):
    interf = np.einsum("...uw,...w->...u", t.cross, p) + t.noise
    num = t.signal * p
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(num > 0, num / np.where(interf > 0, interf, 1.0), 0.0)
    return g


def instant_sinr(p, ctx, terms=None):
    """MRC SINR of every user for power vector ``p``; 0 where ``hhat = 0`` or ``p = 0``."""
    return _sinr(np.asarray(p, dtype=float), sinr_terms(ctx) if terms is None else terms)


def rate_from_sinr(g):
    return np.log2(1.0 + g)


def instant_rate(p, ctx, terms=None):
    return rate_from_sinr(instant_sinr(p, ctx, terms))


def instant_rate_grad(p, ctx, terms=None):
    """Jacobian ``J[v, u] = dR_v / dp_u`` of the instantaneous rates.

    With ``Q = cross @ p + noise`` and ``T = Q + signal * p`` the rate is
    ``log2(T / Q)``, so ``J = (C' / T - C / Q) / ln 2`` where ``C'`` adds
    the signal term to the diagonal of ``C``.
    """
    t = sinr_terms(ctx) if terms is None else terms
    p = np.asarray(p, dtype=float)
    q = np.einsum("...uw,...w->...u", t.cross, p) + t.noise
    total = q + t.signal * p
    n = q.shape[-1]
    idx = np.arange(n)
    cprime = t.cross.copy()
    cprime[..., idx, idx] += t.signal
    with np.errstate(invalid="ignore", divide="ignore"):
        jac = cprime / total[..., None] - t.cross / q[..., None]
    jac = np.where(np.isfinite(jac), jac, 0.0)
    return jac / LN2


@dataclass(frozen=True, eq=False)
class DetRateCoeffs:
    """Coefficients of the deterministic rate of every user.

    ``b[u, w]`` is the coefficient of ``p_w`` in user ``u``'s denominator
    (the self term ``b[u, u]`` included) and ``noise_term = M rho sigma^2``.
    """

    rho: np.ndarray
    a: np.ndarray
    b: np.ndarray
    noise_term: np.ndarray
    antennas: int
    pmax: float

    @property
    def num_users(self):
        return len(self.a)

    def rescaled(self, c):
        """Coefficients with every user's row multiplied by ``c[u]`` (rates unchanged)."""
        c = np.asarray(c, dtype=float)
        return DetRateCoeffs(self.rho, self.a * c, self.b * c[:, None], self.noise_term * c,
                             self.antennas, self.pmax)


def det_coeffs(book, scenario, antennas=None, gram=None):
    m = scenario.antennas if antennas is None else int(antennas)
    gram = pilot_gram(book, scenario) if gram is None else gram
    phi = book.sequences
    v = scenario.large_scale
    cells = scenario.user_cell
    own = scenario.own_gain
    n = scenario.num_users
    q = np.empty((n, n), dtype=complex)
    for i, sl in enumerate(scenario.cell_slices()):
        # q[u, w] = phi_u^H U_i^{-1} phi_w for u in cell i
        q[sl] = phi[:, sl].conj().T @ cho_solve(cho_factor(gram[i], lower=True), phi)
    diag = np.real(np.diag(q))
    q[np.arange(n), np.arange(n)] = diag
    rho = own**2 * diag
    vu = v[cells]  # vu[u, w] = v_{i(u), w}
    b = m * rho[:, None] * vu + m**2 * (own**2)[:, None] * vu**2 * np.abs(q) ** 2
    return DetRateCoeffs(rho, m**2 * rho**2, b, m * rho * scenario.noise_power, m, scenario.pmax)


def det_denominator(p, coeffs):
    return coeffs.b @ p + coeffs.noise_term


def det_sinr(p, coeffs):
    p = np.asarray(p, dtype=float)
    d = det_denominator(p, coeffs)
    rest = d - coeffs.a * p
    assert np.all(rest > 0), "deterministic SINR denominator must be positive"
    return coeffs.a * p / rest


def det_rate(p, coeffs):
    """Deterministic (use-and-then-forget) rate of every user in bits."""
    return rate_from_sinr(det_sinr(p, coeffs))


def weighted_det_rate(p, coeffs, weights=None):
    r = det_rate(p, coeffs)
    return float(np.sum(r if weights is None else weights * r))


def det_rate_grad(p, coeffs, weights=None):
    """Gradient of the weighted deterministic sum rate with respect to ``p``."""
    p = np.asarray(p, dtype=float)
    w = np.ones(coeffs.num_users) if weights is None else np.asarray(weights, dtype=float)
    d = det_denominator(p, coeffs)
    rest = d - coeffs.a * p
    # R_u = log2(d_u) - log2(rest_u)
    g = (w / d) @ coeffs.b - (w / rest) @ coeffs.b + w * coeffs.a / rest
    return g / LN2


def det_rate_hessian(p, coeffs, weights=None):
    """Hessian of the weighted deterministic sum rate.

    Each rate is ``log2(D) - log2(E)`` with ``D`` and ``E`` affine in ``p``,
    so the Hessian is a weighted sum of rank-one terms.
    """
    p = np.asarray(p, dtype=float)
    n = coeffs.num_users
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    d = det_denominator(p, coeffs)
    e = d - coeffs.a * p
    c = coeffs.b.copy()
    c[np.arange(n), np.arange(n)] -= coeffs.a
    h = (c * (w / e**2)[:, None]).T @ c - (coeffs.b * (w / d**2)[:, None]).T @ coeffs.b
    return h / LN2
