"""Small-scale fading, the pilot phase and MMSE channel estimation.

Array conventions (leading batch dimensions are allowed everywhere):

* ``H[j, u]``  channel from user ``u`` to BS ``j``, shape ``(I, N, M)``
* ``Y[i]``     pilot-phase observation at BS ``i``, shape ``(I, M, L)``
* ``Hhat[u]``  estimate of ``h_{i,u}`` at the serving BS ``i`` of ``u``,
  shape ``(N, M)``
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .pilots import pilot_gram
from .rng import complex_normal, stream


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    H: np.ndarray
    seed_index: int = 0


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    Hhat: np.ndarray
    rho: np.ndarray  # expected |hhat|^2 / M per user


def sample_channel(scenario, rng, antennas=None, seed_index=0):
    """One realization ``h_{j,u} = sqrt(v_{j,u}) g`` with ``g ~ CN(0, I_M)``."""
    m = scenario.antennas if antennas is None else int(antennas)
    g = complex_normal(rng, (scenario.num_cells, scenario.num_users, m))
    return ChannelDraw(np.sqrt(scenario.large_scale)[..., None] * g, seed_index)


def pilot_phase_rx(draw, book, scenario, rng=None):
    """Received pilot signal ``Y_i = sum_u h_{i,u} phi_u^T + Z_i`` at every BS.

    ``rng=None`` gives the noiseless observation.
    """
    H = draw.H if isinstance(draw, ChannelDraw) else draw
    y = np.swapaxes(H, -1, -2) @ book.sequences.T
    if rng is not None:
        y = y + complex_normal(rng, y.shape, scenario.noise_power)
    return y


class EstimatorCache:
    """Per-BS combining matrices ``conj(U_i)^{-1} conj(Phi_i) V_ii`` reused across draws."""

    def __init__(self, book, scenario):
        gram = pilot_gram(book, scenario)
        own = scenario.own_gain
        cells = scenario.user_cell
        phi = book.sequences
        w = np.empty(phi.shape, dtype=complex)
        qf = np.empty(scenario.num_users)
        for i, sl in enumerate(scenario.cell_slices()):
            # Hhat_ii = Y_i U_i^{-T} conj(Phi_i) V_ii and U_i^T = conj(U_i)
            factor = cho_factor(np.conj(gram[i]), lower=True)
            w[:, sl] = cho_solve(factor, np.conj(phi[:, sl])) * own[sl]
            qf[sl] = np.real(np.sum(phi[:, sl].conj() * np.conj(w[:, sl]), axis=0)) / own[sl]
        self.gram = gram
        self.weights = w
        self.cells = cells
        # rho_u = v^2 phi^H U^{-1} phi
        self.rho = own**2 * qf

    def estimate(self, y):
        # y[..., i, M, L] -> Hhat[..., u, M] using the BS serving u
        yu = y[..., self.cells, :, :]
        return np.einsum("...uml,lu->...um", yu, self.weights)


def mmse_estimate(Y, book, scenario, cache=None):
    """MMSE estimate of every user's channel at its own BS."""
    cache = EstimatorCache(book, scenario) if cache is None else cache
    return ChannelEstimate(cache.estimate(Y), cache.rho)


def draw_batch(scenario, book, seed, indices, tag="eval", cache=None, antennas=None):
    """Channels and MMSE estimates for a batch of keyed draws.

    Draw ``t`` is generated from the stream ``(seed, tag, t)`` alone, so the
    result does not depend on batch composition or on the pilot book (other
    than through the estimate).
    """
    cache = EstimatorCache(book, scenario) if cache is None else cache
    hs, ys = [], []
    for t in indices:
        rng = stream(seed, tag, t)
        d = sample_channel(scenario, rng, antennas=antennas, seed_index=t)
        hs.append(d.H)
        ys.append(pilot_phase_rx(d, book, scenario, rng))
    H = np.stack(hs)
    return H, cache.estimate(np.stack(ys))
