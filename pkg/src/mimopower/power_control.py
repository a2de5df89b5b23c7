"""Deterministic WMMSE power control and the stochastic SCA benchmark."""

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import EstimatorCache, pilot_phase_rx, sample_channel
from .rates import (
    InstantRateContext,
    det_denominator,
    det_rate_grad,
    det_rate_hessian,
    instant_rate_grad,
    rate_from_sinr,
    sinr_terms,
    _sinr,
    weighted_det_rate,
)
from .rng import stream

MONOTONE_TOL = 1e-9


class NumericalAbort(RuntimeError):
    """An optimizer detected a state that indicates corrupted inputs or a bug."""


class ScheduleError(ValueError):
    pass


@dataclass
class TraceRow:
    iter: int
    objective_bits: float
    max_power_w: float
    min_power_w: float
    wall_ms: float


TRACE_COLUMNS = ("iter", "objective_bits", "max_power_w", "min_power_w", "wall_ms")


def write_trace_csv(path, trace, comment=None, timing=True):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([r.iter, repr(r.objective_bits), repr(r.max_power_w),
                        repr(r.min_power_w), f"{r.wall_ms if timing else 0.0:.3f}"])


# ---------------------------------------------------------------------------
# Deterministic power control (WMMSE)
# ---------------------------------------------------------------------------

@dataclass
class WmmseState:
    p: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    gain: np.ndarray
    objective: float
    iterations: int = 0
    converged: bool = False


def wmmse_gain(p, coeffs):
    """Scalar MMSE receive gain ``sqrt(a p) / D`` of every virtual link."""
    return np.sqrt(coeffs.a * p) / det_denominator(p, coeffs)


def wmmse_eta(p, coeffs, gain=None):
    """MSE of every virtual link.

    ``eta = u^2 (sum_w b p + M rho sigma^2) - 2 u sqrt(a p) + 1``; with the
    default receive gain ``u = 1`` this is the plain expression
    ``sum_w b p + M rho sigma^2 + 1 - 2 sqrt(a p)``.
    """
    p = np.asarray(p, dtype=float)
    u = 1.0 if gain is None else np.asarray(gain, dtype=float)
    return u**2 * det_denominator(p, coeffs) + 1.0 - 2.0 * u * np.sqrt(coeffs.a * p)


def wmmse_mu(eta):
    """MSE weights ``mu = 1 / eta``, the minimizer of ``mu * eta - ln(mu)``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(~(eta > 0)):
        bad = np.flatnonzero(~(eta > 0))
        raise NumericalAbort(f"nonpositive MSE for users {bad.tolist()}: {eta[bad]}")
    return 1.0 / eta


def wmmse_power(mu, coeffs, weights=None, pmax=None, gain=None):
    """Closed-form power update ``[w^2 mu^2 u^2 a / (sum_v w_v mu_v u_v^2 b_{v,u})^2]_0^Pmax``."""
    pmax = coeffs.pmax if pmax is None else pmax
    w = np.ones(coeffs.num_users) if weights is None else np.asarray(weights, dtype=float)
    u = np.ones(coeffs.num_users) if gain is None else np.asarray(gain, dtype=float)
    den = (w * mu * u**2) @ coeffs.b
    if np.any(den <= 0):
        raise NumericalAbort("zero denominator in the power update")
    p = (w * mu * u) ** 2 * coeffs.a / den**2
    return np.clip(p, 0.0, pmax)


def wmmse_objective(mu, eta, weights=None):
    """``sum w (mu eta - ln mu)``; minimized by the WMMSE iteration."""
    w = 1.0 if weights is None else weights
    return float(np.sum(w * (mu * eta - np.log(mu))))


def wmmse_sweep(p, coeffs, weights, pmax):
    """One pass of gain, MSE, weight and power updates starting from ``p``."""
    gain = wmmse_gain(p, coeffs)
    eta = wmmse_eta(p, coeffs, gain)
    mu = wmmse_mu(eta)
    return wmmse_power(mu, coeffs, weights, pmax, gain), mu, eta, gain


def newton_refine(p, coeffs, weights, pmax, floor=1e-8):
    """Safeguarded Newton step on log-powers of the free users.

    Users below ``floor * pmax`` or pinned at ``pmax`` by a positive
    gradient are held fixed.  Negative curvature is enforced by flipping
    the Hessian spectrum.  Returns the best point found along the
    backtracking path, which may be worse than ``p``; the caller compares.
    """
    g = det_rate_grad(p, coeffs, weights)
    h = det_rate_hessian(p, coeffs, weights)
    gy = p * g
    hy = p[:, None] * h * p[None, :] + np.diag(gy)
    free = np.flatnonzero((p > floor * pmax) & ((p < pmax) | (gy < 0)))
    if free.size == 0:
        return p
    lam, vec = np.linalg.eigh(hy[np.ix_(free, free)])
    lam = -np.maximum(np.abs(lam), 1e-12 * max(np.abs(lam).max(), 1e-300))
    step = -(vec @ ((vec.T @ gy[free]) / lam))
    y = np.log(np.maximum(p, np.finfo(float).tiny))
    base = weighted_det_rate(p, coeffs, weights)
    best, fbest = p, -np.inf
    for s in (1.0, 0.5, 0.25, 0.125):
        yn = y.copy()
        yn[free] = np.minimum(y[free] + s * step, math.log(pmax))
        z = np.minimum(np.exp(yn), pmax)
        fz = weighted_det_rate(z, coeffs, weights)
        if fz > fbest:
            best, fbest = z, fz
        if fz > base:
            break
    return best


def escape_step(p, coeffs, weights, pmax, floor=1e-8):
    """Best single-user switch-off or revival of ``p``.

    WMMSE keeps a switched-off user off forever (its receive gain is zero),
    and it cannot cross the cliff that opens when a contaminating user goes
    silent.  Candidates: every active user set to zero, and every silent
    user with positive gradient brought back at one of a geometric ladder
    of powers.  Returns ``(point, objective)`` of the best candidate.
    """
    g = det_rate_grad(p, coeffs, weights)
    best, fbest = p, weighted_det_rate(p, coeffs, weights)
    ladder = pmax * np.logspace(0, -8, 17)
    for u in range(len(p)):
        if p[u] >= floor * pmax:
            trials = [0.0]
        elif g[u] > 0:
            trials = ladder
        else:
            continue
        for x in trials:
            z = p.copy()
            z[u] = x
            fz = weighted_det_rate(z, coeffs, weights)
            if fz > fbest:
                best, fbest = z, fz
    return best, fbest


def algorithm1(coeffs, weights=None, pmax=None, eps1=1e-4, max_iter=100, p0=None, refine=True,
               escape=True):
    """Deterministic power control by block-coordinate WMMSE.

    Each iteration updates the receive gains, the MSEs ``eta``, the weights
    ``mu`` and then the powers.  Every block update is an exact minimizer of
    ``sum w (mu eta - ln mu)``, so the weighted deterministic sum rate never
    decreases; a decrease beyond ``MONOTONE_TOL`` raises ``NumericalAbort``.

    With ``refine`` the sweep is followed by a Newton step on the
    deterministic sum rate, kept only if it beats the sweep.  At high SNR
    the objective has nearly flat valleys where the plain sweep needs
    hundreds of iterations; fixed points are the same either way.

    Stops once an iteration improves the weighted sum rate by less than
    ``eps1`` bits, unless ``escape`` finds a single-user switch-off or
    revival that gains more than ``eps1``; the loop then resumes from
    there.  Returns ``(state, trace)`` with one trace row per
    iteration.
    """
    if not eps1 > 0:
        raise ValueError("eps1 must be > 0")
    pmax = coeffs.pmax if pmax is None else pmax
    n = coeffs.num_users
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    p = np.full(n, pmax) if p0 is None else np.array(p0, dtype=float)
    obj = weighted_det_rate(p, coeffs, w)
    trace = []
    t0 = time.perf_counter()
    state = None
    for it in range(1, max_iter + 1):
        p, mu, eta, gain = wmmse_sweep(p, coeffs, w, pmax)
        new = weighted_det_rate(p, coeffs, w)
        if refine:
            z = newton_refine(p, coeffs, w, pmax)
            fz = weighted_det_rate(z, coeffs, w)
            if fz > new:
                p, new = z, fz
        if escape and new - obj < eps1:
            z, fz = escape_step(p, coeffs, w, pmax)
            if fz > new + eps1:
                p, new = z, fz
        if new - obj < -MONOTONE_TOL:
            raise NumericalAbort(f"objective decreased by {obj - new:.3e} bits at iteration {it}")
        trace.append(TraceRow(it, new, float(p.max()), float(p.min()),
                              1e3 * (time.perf_counter() - t0)))
        done = new - obj < eps1
        obj = new
        state = WmmseState(p, mu, eta, gain, obj, it, done)
        if done:
            break
    return state, trace


# ---------------------------------------------------------------------------
# Stochastic SCA benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSchedule:
    """Step factors ``alpha^t = t^-kappa_alpha`` and ``beta^t = t^-kappa_beta``.

    Explicit sequences (indexed from t = 1) override the power laws.
    """

    kappa_alpha: float = 0.6
    kappa_beta: float = 0.7
    alpha_seq: tuple = None
    beta_seq: tuple = None

    def alpha(self, t):
        if self.alpha_seq is not None:
            return float(self.alpha_seq[min(t, len(self.alpha_seq)) - 1])
        return float(t) ** -self.kappa_alpha

    def beta(self, t):
        if self.beta_seq is not None:
            return float(self.beta_seq[min(t, len(self.beta_seq)) - 1])
        return float(t) ** -self.kappa_beta

    def violations(self, horizon=None):
        """Convergence conditions on the step factors that this schedule breaks.

        Power laws are checked exactly on the exponents; explicit sequences
        only for range and monotonicity over their length.  The Lipschitz
        condition is not checkable and is not covered.
        """
        out = []
        if self.alpha_seq is None and self.beta_seq is None:
            ka, kb = self.kappa_alpha, self.kappa_beta
            if not 0.5 < ka < 1:
                out.append("alpha: need 1/2 < kappa_alpha < 1 (alpha->0, 1/alpha=O(t^k) with k<1, sum alpha^2 < inf)")
            if not 0.5 < kb <= 1:
                out.append("beta: need 1/2 < kappa_beta <= 1 (sum beta = inf, sum beta^2 < inf)")
            if not kb > ka:
                out.append("beta/alpha -> 0 requires kappa_beta > kappa_alpha")
            return out
        n = horizon or max(len(self.alpha_seq or ()), len(self.beta_seq or ()), 1)
        a = np.array([self.alpha(t) for t in range(1, n + 1)])
        b = np.array([self.beta(t) for t in range(1, n + 1)])
        if np.any((a <= 0) | (a > 1)):
            out.append("alpha must lie in (0, 1]")
        if np.any((b <= 0) | (b > 1)):
            out.append("beta must lie in (0, 1]")
        if np.any(np.diff(a) > 0):
            out.append("alpha must be nonincreasing")
        if np.any(np.diff(b) > 0):
            out.append("beta must be nonincreasing")
        with np.errstate(divide="ignore", invalid="ignore"):
            r = b / a
        if np.any(np.diff(r) > 1e-15):
            out.append("beta/alpha must be nonincreasing")
        return out

    def validate(self, horizon=None):
        v = self.violations(horizon)
        if v:
            raise ScheduleError("; ".join(v))
        return self


def default_schedule():
    return StepSchedule(0.6, 0.7)


@dataclass
class SsaState:
    p: np.ndarray
    xi: np.ndarray
    t: int
    alpha_t: float
    beta_t: float
    tau: np.ndarray
    objective: float = math.nan
    converged: bool = False
    rate_avg: float = math.nan


def surrogate_xi(xi_prev, jac, weights, alpha_t):
    """``xi_u = alpha * sum_v w_v dR_v/dp_u + (1 - alpha) * xi_prev_u``."""
    return alpha_t * (np.asarray(weights) @ jac) + (1.0 - alpha_t) * np.asarray(xi_prev)


def sca_q(p, p_prev, xi, tau, alpha_t, weights, r_prev):
    """Per-user surrogate ``alpha w R(p_prev) + p xi - tau/2 (p - p_prev)^2``."""
    return alpha_t * weights * r_prev + p * xi - 0.5 * tau * (p - p_prev) ** 2


def sca_subproblem(p_prev, xi, tau, pmax):
    """Maximizer of the concave per-user surrogate over ``[0, pmax]``."""
    return np.clip(np.asarray(p_prev) + np.asarray(xi) / tau, 0.0, pmax)


def channel_stream(scenario, book, seed, tag="sca", weights=None):
    """Iterator of fresh channel realizations (true channels + MMSE estimates)."""
    cache = EstimatorCache(book, scenario)
    t = 0
    while True:
        t += 1
        rng = stream(seed, tag, t)
        d = sample_channel(scenario, rng, seed_index=t)
        y = pilot_phase_rx(d, book, scenario, rng)
        yield InstantRateContext(d.H, cache.estimate(y), scenario.noise_power, scenario.user_cell, weights)


def algorithm2(scenario, book, weights=None, schedule=None, tau=1.0, eps2=1e-4,
               max_iter=20000, seed=0, channels=None, p0=None, check_schedule=True):
    """Stochastic SCA power control trained on a stream of channel realizations.

    Powers are handled internally in units of P_max, so ``xi`` and ``tau``
    are in bits per P_max.  ``channels`` may be any iterable of
    ``InstantRateContext``; by default fresh keyed draws are used.  Stops
    when the surrogate value changes by less than ``eps2`` between
    iterations (``eps2 = 0`` runs all ``max_iter`` iterations).

    Returns ``(state, trace)`` with powers in watts.
    """
    schedule = default_schedule() if schedule is None else schedule
    if check_schedule:
        schedule.validate(max_iter)
    pmax = scenario.pmax
    n = scenario.num_users
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,)).copy()
    if np.any(tau <= 0):
        raise ValueError("tau must be > 0")
    x = np.ones(n) if p0 is None else np.asarray(p0, dtype=float) / pmax
    xi = np.zeros(n)
    channels = channel_stream(scenario, book, seed, weights=w) if channels is None else channels
    it = iter(channels)
    trace = []
    prev_obj = None
    rate_avg = 0.0
    t0 = time.perf_counter()
    state = SsaState(x * pmax, xi, 0, 1.0, 1.0, tau)
    for t in range(1, max_iter + 1):
        ctx = next(it)
        a, b = schedule.alpha(t), schedule.beta(t)
        terms = sinr_terms(ctx)
        r_prev = rate_from_sinr(_sinr(x * pmax, terms))
        jac = pmax * instant_rate_grad(x * pmax, ctx, terms)
        xi = surrogate_xi(xi, jac, w, a)
        x_star = sca_subproblem(x, xi, tau, 1.0)
        obj = float(np.sum(sca_q(x_star, x, xi, tau, a, w, r_prev)))
        x = (1.0 - b) * x + b * x_star
        rate_avg = (1.0 - a) * rate_avg + a * float(w @ r_prev)
        trace.append(TraceRow(t, obj, float(x.max() * pmax), float(x.min() * pmax),
                              1e3 * (time.perf_counter() - t0)))
        done = prev_obj is not None and abs(obj - prev_obj) < eps2
        prev_obj = obj
        state = SsaState(x * pmax, xi, t, a, b, tau, obj, done, rate_avg)
        if done:
            break
    return state, trace
