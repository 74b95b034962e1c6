"""Metropolis-Hastings sampling of Z-product states.

States are proposed either by flipping a single spin or by growing a Wolff
cluster of the classical Ising model; the cluster proposal is reweighted by
the ratio of classical Boltzmann factors so the chain targets the quantum
weights ``W_psi = <psi|exp(-beta H)|psi>``.
"""
from __future__ import annotations

import json
import math
import sys
import threading
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import dynamics
from .dynamics import SpinConfig, TimeGrid, magnetization_sq
from .lattice import Lattice, TfimParams
from .shots import ShotModel, noisify
from .wick import WickConfig, weight_from_density, wick_weight

__all__ = [
    "WeightProvider",
    "WeightCache",
    "ChainConfig",
    "ChainRecord",
    "estimate_weight",
    "propose_single_flip",
    "propose_wolff_cluster",
    "metropolis_step",
    "run_chain",
    "aggregate_chains",
    "integrated_autocorr_time",
    "chain_rng",
]

TINY = sys.float_info.min


def chain_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one named stream of a chain seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)])))


@dataclass
class WeightProvider:
    """Source of Boltzmann weights for single states.

    ``kind`` is ``"exact"`` (diagonalisation or Krylov), ``"classical"``
    (``exp(-beta <psi|H|psi>)``) or ``"wick_pipeline"``. The pipeline
    generates echoes on ``grid`` (exactly, or Trotterised when ``n_trotter``
    or ``max_step`` is set), adds shot noise when ``shots`` is given and
    Wick-rotates them with ``wick``. The shot seed of a state is derived from
    ``shots.seed`` and the state's bits, so repeated requests agree.
    """

    kind: str
    lattice: Lattice
    params: TfimParams
    grid: TimeGrid | None = None
    wick: WickConfig = field(default_factory=WickConfig)
    shots: ShotModel | None = None
    n_trotter: int | None = None
    max_step: float | None = None
    nonpositive: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "classical", "wick_pipeline"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "wick_pipeline" and self.grid is None:
            raise ValueError("wick_pipeline needs a time grid")
        self._lock = threading.Lock()
        self._density = lru_cache(maxsize=65536)(self._density_uncached)

    def __getstate__(self):
        # locks and memo tables stay with the process that made them
        state = self.__dict__.copy()
        for key in ("_lock", "_density"):
            state.pop(key, None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()
        self._density = lru_cache(maxsize=65536)(self._density_uncached)

    def series(self, psi: SpinConfig):
        if self.n_trotter is not None or self.max_step is not None:
            s = dynamics.trotter_echoes(psi, self.grid, self.lattice, self.params, self.n_trotter, self.max_step)
        else:
            s = dynamics.exact_echoes(psi, self.grid, self.lattice, self.params)
        if self.shots is not None:
            seed = np.random.SeedSequence([int(self.shots.seed) & (2**64 - 1), psi.bits]).generate_state(1, np.uint64)[0]
            s = noisify(s, ShotModel(self.shots.n_shots, self.shots.mode, int(seed)))
        return s

    def _density_uncached(self, bits: int):
        psi = SpinConfig(bits, self.lattice.n_sites)
        moments = dynamics.moments(psi, self.lattice, self.params)
        max_abs = None
        if self.wick.method == "gaussian_filter" and self.wick.cap_delta:
            max_abs = self._max_abs_energy()
        _, density = wick_weight(self.series(psi), 0.0, self.wick, energy_moments=moments, max_abs_energy=max_abs)
        return density

    def _max_abs_energy(self) -> float:
        if not hasattr(self, "_max_abs"):
            lo, hi = dynamics.extremal_energies(self.lattice, self.params)
            self._max_abs = max(abs(lo), abs(hi))
        return self._max_abs

    def __call__(self, psi: SpinConfig, beta: float) -> float:
        if self.kind == "classical":
            w = math.exp(-beta * dynamics.product_state_energy(psi, self.lattice, self.params))
        elif self.kind == "exact":
            w = dynamics.exact_boltzmann(psi, beta, self.lattice, self.params)
        else:
            density = self._density(psi.bits)
            w = weight_from_density(density, beta, unsafe=density.method == "direct")
        if not (w > 0 and math.isfinite(w)):
            with self._lock:
                self.nonpositive += 1
            w = TINY
        return float(w)


class WeightCache:
    """Thread-safe map ``(state, beta) -> weight``.

    With ``fold_z2`` a state and its global spin flip share an entry, which is
    valid for the zero-longitudinal-field model.
    """

    def __init__(self, fold_z2: bool = False):
        self.fold_z2 = fold_z2
        self._data: dict = {}
        self._lock = threading.Lock()
        self.misses = 0

    def key(self, psi: SpinConfig, beta: float):
        bits = psi.bits
        if self.fold_z2:
            bits = min(bits, bits ^ ((1 << psi.n) - 1))
        return bits, float(beta)

    def get(self, psi, beta):
        with self._lock:
            return self._data.get(self.key(psi, beta))

    def put(self, psi, beta, weight):
        with self._lock:
            self._data[self.key(psi, beta)] = weight

    def __len__(self):
        return len(self._data)


def estimate_weight(psi: SpinConfig, beta: float, provider: WeightProvider, cache: WeightCache | None = None):
    """Return ``(weight, cache_hit)`` for a state, consulting the cache first."""
    if cache is not None:
        w = cache.get(psi, beta)
        if w is not None:
            return w, True
    w = provider(psi, beta)
    if cache is not None:
        cache.put(psi, beta, w)
        with cache._lock:
            cache.misses += 1
    return w, False


def propose_single_flip(psi: SpinConfig, rng: np.random.Generator):
    """Flip one uniformly chosen spin; the proposal is symmetric."""
    return psi.flip(int(rng.integers(psi.n))), 0.0


def propose_wolff_cluster(psi: SpinConfig, beta: float, J: float, lattice: Lattice, rng: np.random.Generator):
    """Flip a Wolff cluster of aligned spins.

    Aligned neighbours join with probability ``1 - exp(-2 beta J)``. Returns
    the new state and ``log(P(new -> old) / P(old -> new))``, which for this
    move is ``-beta (E_old - E_new)`` in terms of classical energies.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if not J > 0:
        raise ValueError("the cluster proposal needs a ferromagnetic coupling J > 0")
    p_add = -math.expm1(-2.0 * beta * J)
    root = int(rng.integers(psi.n))
    spin = (psi.bits >> root) & 1
    in_cluster = {root}
    frontier = deque([root])
    while frontier:
        site = frontier.popleft()
        for nb in lattice.adjacency[site]:
            if nb not in in_cluster and ((psi.bits >> nb) & 1) == spin and rng.random() < p_add:
                in_cluster.add(nb)
                frontier.append(nb)
    new = psi.flip(sorted(in_cluster))
    # only bonds leaving the cluster change sign: E_new - E_old = 2 J sum z_i z_j there
    boundary = 0
    for site in in_cluster:
        for nb in lattice.adjacency[site]:
            if nb not in in_cluster:
                boundary += 1 if ((psi.bits >> nb) & 1) == spin else -1
    return new, 2.0 * beta * J * boundary


@dataclass(frozen=True)
class ChainConfig:
    beta: float
    n_samples: int = 512
    burn_in: int = 32
    initial: SpinConfig | None = None
    proposal: str = "wolff"
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 <= self.burn_in < self.n_samples:
            raise ValueError("need 0 <= burn_in < n_samples")
        if self.proposal not in ("single_flip", "wolff"):
            raise ValueError(f"unknown proposal {self.proposal!r}")


def metropolis_step(state: SpinConfig, weight: float, config: ChainConfig, provider, cache, rng):
    """One Metropolis-Hastings update.

    Returns ``(state, weight, accepted, cache_hit)``; on rejection the old
    state and weight are returned unchanged.
    """
    if config.proposal == "wolff":
        proposal, log_ratio = propose_wolff_cluster(state, config.beta, provider.params.J, provider.lattice, rng)
    else:
        proposal, log_ratio = propose_single_flip(state, rng)
    w_new, hit = estimate_weight(proposal, config.beta, provider, cache)
    log_a = math.log(w_new) - math.log(weight) + log_ratio
    if log_a >= 0 or rng.random() < math.exp(log_a):
        return proposal, w_new, True, hit
    return state, weight, False, hit


@dataclass
class ChainRecord:
    """Per-iteration history of one chain."""

    states: np.ndarray
    weights: np.ndarray
    m2: np.ndarray
    accepted: np.ndarray
    cached: np.ndarray
    burn_in: int
    beta: float
    n_sites: int
    n_evaluations: int = 0
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    def mean_m2(self) -> float:
        return float(self.m2[self.burn_in :].mean())

    def running_mean(self) -> np.ndarray:
        x = self.m2[self.burn_in :]
        return np.cumsum(x) / np.arange(1, len(x) + 1)

    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def unique_fraction(self) -> float:
        """Weights that had to be computed, per iteration."""
        return self.n_evaluations / len(self)

    def to_jsonl(self, path) -> None:
        with Path(path).open("w") as fh:
            for i in range(len(self)):
                fh.write(
                    json.dumps(
                        {
                            "iter": i,
                            "state": SpinConfig(int(self.states[i]), self.n_sites).to_string(),
                            "weight": float(self.weights[i]),
                            "m2": float(self.m2[i]),
                            "accepted": bool(self.accepted[i]),
                            "cached": bool(self.cached[i]),
                        }
                    )
                    + "\n"
                )


def run_chain(config: ChainConfig, provider: WeightProvider, cache: WeightCache | None = None) -> ChainRecord:
    """Run one Markov chain; deterministic for a given seed.

    A fresh cache is used when none is given. Iteration ``i`` records the
    state after the ``i``-th update.
    """
    n = provider.lattice.n_sites
    cache = WeightCache() if cache is None else cache
    misses_before = cache.misses
    rng = chain_rng(config.seed, 0)
    state = config.initial if config.initial is not None else SpinConfig.all_up(n)
    weight, _ = estimate_weight(state, config.beta, provider, cache)
    states = np.empty(config.n_samples, dtype=np.int64)
    weights = np.empty(config.n_samples)
    accepted = np.zeros(config.n_samples, dtype=bool)
    cached = np.zeros(config.n_samples, dtype=bool)
    for i in range(config.n_samples):
        state, weight, accepted[i], cached[i] = metropolis_step(state, weight, config, provider, cache, rng)
        states[i] = state.bits
        weights[i] = weight
    return ChainRecord(
        states,
        weights,
        magnetization_sq(states, n),
        accepted,
        cached,
        config.burn_in,
        config.beta,
        n,
        n_evaluations=cache.misses - misses_before,
        info={"seed": config.seed, "proposal": config.proposal},
    )


def aggregate_chains(records) -> tuple[float, float]:
    """Mean of per-chain averages and its two-sigma error.

    The error is ``2 * s / sqrt(n_chains)`` with ``s`` the sample standard
    deviation (``ddof=1``) of the per-chain means.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two chains")
    means = np.array([r.mean_m2() for r in records])
    return float(means.mean()), float(2.0 * means.std(ddof=1) / math.sqrt(len(means)))


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = x @ x / n
    if var == 0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * tau
    m = int(np.argmax(window)) if window.any() else n - 1
    return float(tau[m])
