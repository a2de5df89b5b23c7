"""Monte Carlo ergodic rates, CDFs and the comparison experiments."""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import EstimatorCache, draw_batch
from .network import generate_scenario
from .pilots import PilotKind, make_pilots
from .power_control import algorithm1, algorithm2, default_schedule
from .rates import InstantRateContext, _sinr, det_coeffs, det_rate, rate_from_sinr, sinr_terms
from .rng import stream

METHODS = {"D": "deterministic", "S": "stochastic", "E": "equal"}


@dataclass
class ErgodicEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_draws: int
    stream_id: str = ""

    @property
    def sum_rate(self):
        return float(np.sum(self.mean))

    def cell_sum_rates(self, user_cell):
        return np.bincount(user_cell, weights=self.mean)


def equal_power(scenario):
    """Uncoordinated baseline: every user at full power."""
    return np.full(scenario.num_users, scenario.pmax)


def mc_from_contexts(p, contexts):
    """Ergodic estimate from an iterable of (possibly batched) rate contexts."""
    powers = np.atleast_2d(np.asarray(p, dtype=float))
    acc = None
    for ctx in contexts:
        r = np.stack([rate_from_sinr(_sinr(q, sinr_terms(ctx))) for q in powers])
        acc = _merge(acc, _moments(r.reshape(len(powers), -1, powers.shape[1])))
    if acc is None:
        raise ValueError("need at least one channel context")
    return _finish(acc, np.ndim(p) == 1)


def _moments(r):
    """Count, mean and centred sum of squares over axis 1 (two-pass)."""
    mean = r.mean(axis=1)
    return r.shape[1], mean, np.sum((r - mean[:, None]) ** 2, axis=1)


def _merge(a, b):
    """Pairwise combination of two moment triples."""
    if a is None:
        return b
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta**2 * (na * nb / n)


def _finish(acc, single, stream_id=""):
    n, mean, m2 = acc
    var = m2 / (n - 1) if n > 1 else np.zeros_like(m2)
    se = np.sqrt(var / n)
    out = [ErgodicEstimate(m, e, n, stream_id) for m, e in zip(mean, se)]
    return out[0] if single else out


def eval_stream_id(scenario, seed, n_draws):
    """Fingerprint of the channel draws consumed by an evaluation.

    Depends on the keyed draws only (not on the pilot book or powers), so
    equal fingerprints certify common random numbers across methods.
    """
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(scenario.large_scale).tobytes())
    h.update(f"{int(seed)}:{int(n_draws)}:{scenario.antennas}".encode())
    for t in (0, n_draws - 1):
        g = stream(seed, "eval", t).standard_normal(8)
        h.update(g.tobytes())
    return h.hexdigest()[:16]


def mc_ergodic(p, scenario, book, n_draws=1000, seed=0, batch=128, threads=1):
    """Monte Carlo ergodic rates of one or several power vectors.

    Draw ``t`` uses the keyed stream ``(seed, "eval", t)``: fresh fading,
    fresh pilot-phase noise and a new MMSE estimate.  Passing a 2-D ``p``
    evaluates every row on the same draws.  Results are independent of
    ``batch`` and ``threads`` up to floating-point summation order, which
    is fixed by merging batch moments in index order.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    powers = np.atleast_2d(np.asarray(p, dtype=float))
    cache = EstimatorCache(book, scenario)

    def work(start):
        idx = range(start, min(start + batch, n_draws))
        H, Hh = draw_batch(scenario, book, seed, idx, cache=cache)
        t = sinr_terms(InstantRateContext(H, Hh, scenario.noise_power, scenario.user_cell))
        return _moments(np.stack([rate_from_sinr(_sinr(q, t)) for q in powers]))

    starts = range(0, n_draws, batch)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    acc = None
    for part in parts:
        acc = _merge(acc, part)
    return _finish(acc, np.ndim(p) == 1, eval_stream_id(scenario, seed, n_draws))


@dataclass
class CdfTable:
    values: np.ndarray
    probs: np.ndarray

    def quantile(self, q):
        return float(np.quantile(self.values, q))

    @property
    def median(self):
        return self.quantile(0.5)

    def __call__(self, x):
        """Right-continuous empirical CDF evaluated at ``x``."""
        return np.searchsorted(self.values, x, side="right") / len(self.values)


def rate_cdf(samples):
    v = np.sort(np.ravel(np.asarray(samples, dtype=float)))
    if v.size == 0:
        raise ValueError("need at least one sample")
    return CdfTable(v, np.arange(1, v.size + 1) / v.size)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class MethodSettings:
    eps1: float = 1e-4
    max_iter1: int = 100
    eps2: float = 1e-4
    max_iter2: int = 20000
    tau: float = 1.0
    schedule: object = field(default_factory=default_schedule)


def solve_powers(method, scenario, book, coeffs=None, weights=None, settings=None, seed=0):
    """Power vector chosen by method ``D``, ``S`` or ``E``."""
    settings = settings or MethodSettings()
    method = method.upper()[0]
    if method == "E":
        return equal_power(scenario)
    if method == "D":
        coeffs = det_coeffs(book, scenario) if coeffs is None else coeffs
        st, _ = algorithm1(coeffs, weights, eps1=settings.eps1, max_iter=settings.max_iter1)
        return st.p
    if method == "S":
        st, _ = algorithm2(scenario, book, weights, settings.schedule, settings.tau,
                           settings.eps2, settings.max_iter2, seed=seed)
        return st.p
    raise ValueError(f"unknown method {method!r}")


def parse_label(label):
    """``"D-N"`` -> (``"D"``, PilotKind.NONORTHOGONAL)."""
    m, k = label.split("-")
    return m.upper(), PilotKind.parse(k)


def label(method, kind):
    return f"{method}-{PilotKind.parse(kind).letter}"


@dataclass
class GridResult:
    labels: list
    records: list  # dicts, one per (seed, label, user)
    cell_sums: dict  # label -> array (n_seeds, I)
    network_sums: dict  # label -> array (n_seeds,)
    stream_ids: dict  # (seed index) -> fingerprint


def evaluate_seed(base_config, seed_index, scenario_seed, labels, pilot_length, n_draws,
                  eval_seed, settings, pilot_seed=None, external_path=None):
    scen = generate_scenario(base_config.replace(seed=scenario_seed))
    books = {}
    out = {}
    for lab in labels:
        method, kind = parse_label(lab)
        if kind not in books:
            books[kind] = make_pilots(kind, pilot_length, scen,
                                      seed=scenario_seed if pilot_seed is None else pilot_seed,
                                      path=external_path)
        book = books[kind]
        coeffs = det_coeffs(book, scen)
        p = solve_powers(method, scen, book, coeffs, settings=settings, seed=scenario_seed)
        est = mc_ergodic(p, scen, book, n_draws, seed=eval_seed)
        out[lab] = (p, det_rate(p, coeffs), est)
    return scen, out


def run_grid(base_config, labels, seeds, pilot_length=16, n_draws=1000, master_seed=0,
             settings=None, threads=1, external_path=None):
    """Evaluate every ``method-pilot`` label on every scenario seed.

    All labels of one scenario are evaluated on the same keyed channel
    draws; seeds run in parallel when ``threads > 1`` without changing any
    result.
    """
    labels = list(labels)
    seeds = list(seeds)
    settings = settings or MethodSettings()

    def work(item):
        s_idx, sc_seed = item
        return evaluate_seed(base_config, s_idx, sc_seed, labels, pilot_length, n_draws,
                             eval_seed_for(master_seed, sc_seed), settings,
                             external_path=external_path)

    items = list(enumerate(seeds))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, items))
    else:
        results = [work(it) for it in items]

    records = []
    cell_sums = {lab: [] for lab in labels}
    net = {lab: [] for lab in labels}
    ids = {}
    for (s_idx, sc_seed), (scen, out) in zip(items, results):
        for lab in labels:
            p, rdet, est = out[lab]
            ids.setdefault(sc_seed, set()).add(est.stream_id)
            cell_sums[lab].append(est.cell_sum_rates(scen.user_cell))
            net[lab].append(est.sum_rate)
            for u in range(scen.num_users):
                records.append({
                    "seed": sc_seed, "label": lab, "cell": int(scen.user_cell[u]),
                    "user": u, "power_w": float(p[u]), "det_rate": float(rdet[u]),
                    "ergodic_mean": float(est.mean[u]), "ergodic_se": float(est.stderr[u]),
                })
    return GridResult(labels, records,
                      {k: np.array(v) for k, v in cell_sums.items()},
                      {k: np.array(v) for k, v in net.items()},
                      {k: sorted(v) for k, v in ids.items()})


def eval_seed_for(master_seed, scenario_seed):
    return int(stream(master_seed, "eval", scenario_seed).integers(2**63))


def scenario_seeds(master_seed, n):
    """``n`` distinct scenario seeds derived from the master seed."""
    rng = stream(master_seed, "seeds", 0)
    return [int(x) for x in rng.choice(2**31, size=n, replace=False)]


def antenna_sweep(config, antennas, labels, pilot_length=16, n_draws=1000, master_seed=0,
                  settings=None, n_seeds=1):
    """Network sum rate of every label versus the number of BS antennas.

    The drop (positions, shadowing) does not depend on M; every M and label
    share the same keyed draws per scenario.
    """
    antennas = [int(m) for m in antennas]
    if not antennas or any(b <= a for a, b in zip(antennas, antennas[1:])):
        raise ValueError("antenna list must be nonempty and strictly ascending")
    settings = settings or MethodSettings()
    seeds = [config.seed] if n_seeds == 1 else scenario_seeds(master_seed, n_seeds)
    rows = []
    for m in antennas:
        row = {"antennas": m}
        for lab in labels:
            method, kind = parse_label(lab)
            total = 0.0
            for sc_seed in seeds:
                scen = generate_scenario(config.replace(seed=sc_seed, antennas=m))
                book = make_pilots(kind, pilot_length, scen, seed=sc_seed)
                p = solve_powers(method, scen, book, settings=settings, seed=sc_seed)
                est = mc_ergodic(p, scen, book, n_draws, seed=eval_seed_for(master_seed, sc_seed))
                total += est.sum_rate
            row[lab] = total / len(seeds)
        rows.append(row)
    return rows
