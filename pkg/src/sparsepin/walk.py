"""Nearest-neighbor walk driven by a potential V.

The chain steps up from site i with probability 1/(1 + exp(V_i - V_{i-1})),
so it rolls downhill in V.  Everything exact here comes from the scale
function W(n) = sum_{k<n} exp(V_k): ruin probabilities are ratios of W
increments, and the expected number of visits to the origin before first
hitting R (for the chain folded onto the non-negative integers, with the
forced 0 -> 1 step) is exactly W(R).

Monte Carlo counterparts are chunk-vectorized with one labeled substream
per fixed-size chunk, which makes every statistic bit-identical for a given
master seed no matter how many workers run the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._rng import derive_seed, rng_for
from .environment import SparseEnvironment

__all__ = [
    "WalkParams",
    "Potential",
    "StepBudgetError",
    "build_potential",
    "step_prob",
    "scale_values",
    "ruin_prob",
    "expected_visits_exact",
    "simulate_visits",
    "simulate_visit_counts",
    "mc_visits",
    "mc_speed",
    "homogeneous_increment_stream",
    "sparse_increment_stream",
]

DEFAULT_STEP_BUDGET = 10 ** 8
_CHUNK = 8192


class StepBudgetError(RuntimeError):
    """A trajectory exhausted its step budget before absorbing at R."""

    def __init__(self, replica: int, budget: int):
        super().__init__(
            f"replica {replica} not absorbed within {budget} steps; "
            "R is too large for this drift"
        )
        self.replica = replica
        self.budget = budget


@dataclass(frozen=True)
class WalkParams:
    """Contact energy scale beta >= 0, contact bias h, external drift f."""

    beta: float = 0.0
    h: float = 0.0
    f: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass(frozen=True, eq=False)
class Potential:
    """V_0..V_M with V_0 = 0."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) == 0 or v[0] != 0.0:
            raise ValueError("potential must start at V_0 = 0")
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def increments(self) -> np.ndarray:
        """Delta V_i = V_i - V_{i-1} for i = 1..M."""
        return np.diff(self.values)


def build_potential(env: SparseEnvironment, params: WalkParams) -> Potential:
    """V_i = V_{i-1} + (h + beta*omega_i) * [i in tau] - f."""
    m = env.horizon
    incr = np.full(m, -params.f)
    contact_sites = env.tau[env.tau >= 1]
    if len(contact_sites):
        incr[contact_sites - 1] += params.h + params.beta * env.omega[contact_sites - 1]
    values = np.concatenate([[0.0], np.cumsum(incr)])
    return Potential(values=values)


def step_prob(delta_v):
    """Up-step probability 1/(1 + exp(delta_v)), overflow-safe, in (0,1).

    Scalar in, float out; array in, array out.  step_prob(x) + step_prob(-x)
    is 1 to within one ulp because both branches share the denominator.
    """
    dv = np.asarray(delta_v, dtype=float)
    with np.errstate(over="ignore"):
        e = np.exp(-np.abs(dv))
    p = np.where(dv >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    if np.isscalar(delta_v) or dv.ndim == 0:
        return float(p)
    return p


def scale_values(potential: Potential, n: int) -> float:
    """Scale function W(n) = sum_{0 <= k < n} exp(V_k); W(0) = 0."""
    v = potential.values
    if not 0 <= n <= len(v):
        raise ValueError(f"n must lie in 0..{len(v)}")
    return math.fsum(np.exp(v[:n]))


def ruin_prob(potential: Potential, a: int, b: int, c: int) -> float:
    """P(exit through c before a | start at b) = (W(b)-W(a)) / (W(c)-W(a)).

    Requires a < b <= c <= M+1; evaluated in the log domain so potentials
    reaching +-hundreds stay finite.
    """
    v = potential.values
    if not (a < b <= c):
        raise ValueError("need a < b <= c")
    if a < 0 or c > len(v):
        raise ValueError("interval out of the potential's range")
    if b == c:
        return 1.0
    log_num = _logsumexp(v[a:b])
    log_den = _logsumexp(v[a:c])
    return float(np.exp(log_num - log_den))


def expected_visits_exact(potential: Potential, r: int) -> float:
    """Expected visits to 0 (time 0 included) before first hitting R.

    For the folded chain this is exactly W(R): each visit launches an
    excursion from 1 that escapes to R with probability 1/W(R), so the
    visit count is geometric with that success probability.
    """
    if not 1 <= r <= potential.horizon + 1:
        raise ValueError("need 1 <= R <= M+1")
    return scale_values(potential, r)


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(a - m))))


def simulate_visits(potential: Potential, r: int, seed: int,
                    step_budget: int = DEFAULT_STEP_BUDGET) -> int:
    """One folded trajectory; returns its visit count to 0 (>= 1).

    From 0 the chain moves to 1 with probability one; from 1 <= i < R it
    moves up with probability step_prob(V_i - V_{i-1}); R absorbs.
    """
    counts = simulate_visit_counts(potential, r, 1, seed, step_budget=step_budget)
    return int(counts[0])


def simulate_visit_counts(potential: Potential, r: int, replicas: int, seed: int,
                          step_budget: int = DEFAULT_STEP_BUDGET,
                          workers: int = 1, censor: bool = False) -> np.ndarray:
    """Visit counts of `replicas` independent folded trajectories.

    Replicas are simulated in fixed chunks of 8192; chunk c uses the
    substream (seed, "visits", c), so the returned array depends only on
    (potential, r, replicas, seed) and never on `workers`.

    A trajectory that exhausts the step budget raises StepBudgetError with
    its replica index; with censor=True it instead reports -1, which the
    transience diagnostics use to measure the absorbed fraction.
    """
    if not 1 <= r <= potential.horizon + 1:
        raise ValueError("need 1 <= R <= M+1")
    if replicas < 1:
        raise ValueError("need at least one replica")
    p_up = step_prob(potential.increments()[: r - 1]) if r > 1 else np.empty(0)
    out = np.empty(replicas, dtype=np.int64)
    chunks = [(c, min(_CHUNK, replicas - c * _CHUNK)) for c in range((replicas + _CHUNK - 1) // _CHUNK)]

    def run(chunk):
        c, size = chunk
        counts = _visits_chunk(p_up, r, size, rng_for(seed, "visits", c),
                               step_budget, c * _CHUNK, censor)
        out[c * _CHUNK : c * _CHUNK + size] = counts

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    else:
        for chunk in chunks:
            run(chunk)
    return out


def _visits_chunk(p_up: np.ndarray, r: int, size: int, rng: np.random.Generator,
                  step_budget: int, replica_offset: int, censor: bool) -> np.ndarray:
    """Synchronous vectorized evolution of one chunk of folded walkers.

    The up-probability table carries sentinels above 1: at position 0 the
    sentinel realizes the forced 0 -> 1 step, and walkers that cross R march
    upward on sentinels until the next compaction sweep collects them, so
    the hot loop has no per-step branching at all.
    """
    counts = np.empty(size, dtype=np.int64)
    if r == 1:
        # the forced 0 -> 1 step absorbs immediately
        counts[:] = 1
        return counts
    interval = 32
    pad = np.full(r + interval + 2, 9.0)
    pad[1:r] = p_up
    pos = np.zeros(size, dtype=np.int64)
    visits = np.ones(size, dtype=np.int64)
    idx = np.arange(size)
    u = np.empty(size)
    steps = 0
    while True:
        n = len(pos)
        for _ in range(interval):
            steps += 1
            rng.random(out=u[:n])
            up = u[:n] < pad[pos]
            pos += up.astype(np.int64) * 2 - 1
            visits += pos == 0
        absorbed = pos >= r
        if absorbed.any():
            counts[idx[absorbed]] = visits[absorbed]
            keep = ~absorbed
            pos, visits, idx = pos[keep], visits[keep], idx[keep]
            if not len(pos):
                return counts
        if steps >= step_budget:
            if censor:
                counts[idx] = -1
                return counts
            raise StepBudgetError(int(replica_offset + idx[0]), step_budget)


def mc_visits(potential: Potential, r: int, replicas: int, seed: int,
              step_budget: int = DEFAULT_STEP_BUDGET,
              workers: int = 1) -> tuple[float, float]:
    """(mean, stderr) of the visit count over independent replicas."""
    if replicas < 2:
        raise ValueError("need replicas >= 2 for a standard error")
    counts = simulate_visit_counts(potential, r, replicas, seed,
                                   step_budget=step_budget, workers=workers)
    mean = float(np.mean(counts))
    stderr = float(np.std(counts, ddof=1) / math.sqrt(replicas))
    return mean, stderr


# ---------------------------------------------------------------------------
# speed of the unfolded walk on the integers

def homogeneous_increment_stream(params: WalkParams) -> Callable:
    """Increment stream with Delta V_i = -f at every site of Z (beta = h = 0)."""

    def stream(replica: int, rng: np.random.Generator, n_sites: int) -> np.ndarray:
        return np.full(2 * n_sites + 1, -params.f)

    return stream


def sparse_increment_stream(kernel, spec, params: WalkParams) -> Callable:
    """Two-sided sparse environment increments, one fresh draw per replica.

    Sites i >= 1 and i <= 0 carry independent renewal/disorder layers with
    the same law, so every increment of the potential on Z is distributed as
    (h + beta*omega) * [site in tau] - f.
    """

    def stream(replica: int, rng: np.random.Generator, n_sites: int) -> np.ndarray:
        dv = np.full(2 * n_sites + 1, -params.f)
        for side in (0, 1):
            contact = np.zeros(n_sites + 1, dtype=bool)
            pos = 0
            while True:
                gaps = rng.choice(np.arange(1, kernel.n_max + 1),
                                  size=max(16, n_sites // 4 + 1), p=kernel.weights)
                done = False
                for g in gaps:
                    pos += int(g)
                    if pos > n_sites:
                        done = True
                        break
                    contact[pos] = True
                if done:
                    break
            kick = params.h + params.beta * _draw_disorder(spec, rng, n_sites + 1)
            if side == 0:
                # sites 1..n_sites, increments Delta V_i at index n_sites + i
                sel = np.nonzero(contact)[0]
                dv[n_sites + sel] += kick[sel]
            else:
                # sites 0, -1, ..., -n_sites at index n_sites + i; site 0 is
                # a renewal point by convention, the rest from the left layer
                contact[0] = True
                sel = np.nonzero(contact)[0]
                dv[n_sites - sel] += kick[sel]
        return dv

    return stream


def _draw_disorder(spec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.family == "gaussian":
        return rng.normal(0.0, spec.sigma, size=n)
    if spec.family == "rademacher":
        return rng.integers(0, 2, size=n).astype(float) * 2.0 - 1.0
    return rng.uniform(-spec.half_width, spec.half_width, size=n)


def mc_speed(increment_stream: Callable, n_steps: int, replicas: int,
             seed: int) -> tuple[float, float]:
    """(mean, stderr) of X_n / n for the walk on Z.

    `increment_stream(replica, rng, n_sites)` must return Delta V_i for
    i = -n_sites..n_sites, laid out at index n_sites + i.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if replicas < 2:
        raise ValueError("need replicas >= 2")
    ratios = np.empty(replicas)
    block = 256
    for start in range(0, replicas, block):
        size = min(block, replicas - start)
        p_up = np.empty((size, 2 * n_steps + 1))
        for j in range(size):
            dv = increment_stream(start + j, rng_for(seed, "speed-env", start + j), n_steps)
            p_up[j] = step_prob(dv)
        rng = rng_for(seed, "speed-walk", start // block)
        pos = np.zeros(size, dtype=np.int64)
        rows = np.arange(size)
        for _ in range(n_steps):
            u = rng.random(size)
            up = u < p_up[rows, pos + n_steps]
            pos += np.where(up, 1, -1)
        ratios[start : start + size] = pos / n_steps
    mean = float(np.mean(ratios))
    stderr = float(np.std(ratios, ddof=1) / math.sqrt(replicas))
    return mean, stderr
