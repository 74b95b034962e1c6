"""Parameter scans, shot-noise studies and Monte Carlo runs.

These are the building blocks of the command-line front end; each returns
plain rows (dicts) or small result objects so callers can tabulate them.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import dynamics
from .dynamics import SpinConfig, TimeGrid
from .lattice import Lattice, TfimParams, critical_beta
from .metrics import distribution_distance, relative_weight_error
from .sampler import ChainConfig, ChainRecord, WeightProvider, aggregate_chains, run_chain
from .shots import ShotModel, noisify
from .wick import WickConfig, wick_weight

__all__ = [
    "SCAN_AXES",
    "derive_seed",
    "weight_errors",
    "scan",
    "echo_classes",
    "ShotsStudy",
    "shots_study",
    "shots_needed",
    "McResult",
    "run_mc",
    "report_rows",
]

SCAN_AXES = ("alpha", "tmax", "beta", "shots", "hx", "trotter")


def derive_seed(root: int, *path: int) -> int:
    """Child seed of ``root`` along an integer path (stable across runs)."""
    ss = np.random.SeedSequence([int(root) & (2**64 - 1), *map(int, path)])
    return int(ss.generate_state(1, np.uint64)[0])


def _max_abs(lattice, params):
    lo, hi = dynamics.extremal_energies(lattice, params)
    return max(abs(lo), abs(hi))


def weight_errors(series, psi, lattice, params, betas, config: WickConfig, max_abs_energy=None) -> np.ndarray:
    """Relative error of the Wick-rotated weights against exact ones, per beta."""
    betas = np.asarray(betas, dtype=float)
    est, _ = wick_weight(series, betas, config, energy_moments=dynamics.moments(psi, lattice, params), max_abs_energy=max_abs_energy)
    exact = dynamics.exact_boltzmann(psi, betas, lattice, params)
    return relative_weight_error(est, exact)


def scan(
    axis: str,
    values,
    *,
    lattice: Lattice,
    params: TfimParams,
    psi: SpinConfig,
    grid: TimeGrid,
    betas,
    wick: WickConfig = WickConfig(),
    shots: ShotModel | None = None,
    realizations: int = 1,
    n_trotter: int | None = None,
    max_step: float | None = None,
) -> list[dict]:
    """Relative weight error of one state while varying a single setting.

    ``axis`` selects what ``values`` are: Gaussian-filter ``alpha``, maximum
    time ``tmax`` (at the sampling rate of ``grid``), inverse temperature
    ``beta``, shot count ``shots``, transverse field ``hx`` or Trotter steps
    per sampling period ``trotter``. Noisy settings are averaged over
    ``realizations`` independent draws. Rows are sorted by value then beta.
    """
    if axis not in SCAN_AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {SCAN_AXES}")
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    rows = []
    for value in sorted(float(v) for v in values):
        cfg, g, p, model, trot = wick, grid, params, shots, n_trotter
        b = betas
        if axis == "alpha":
            cfg = replace(wick, method="gaussian_filter", alpha=value, delta=None)
        elif axis == "tmax":
            g = TimeGrid(grid.dt, int(round(value / grid.dt)))
        elif axis == "beta":
            b = np.array([value])
        elif axis == "shots":
            model = ShotModel(int(value), shots.mode if shots else "gaussian", shots.seed if shots else 0)
        elif axis == "hx":
            p = TfimParams(params.J, value)
        elif axis == "trotter":
            trot = int(value)
        max_abs = _max_abs(lattice, p) if cfg.method == "gaussian_filter" and cfg.cap_delta else None
        if trot is not None or max_step is not None:
            clean = dynamics.trotter_echoes(psi, g, lattice, p, trot, max_step)
        else:
            clean = dynamics.exact_echoes(psi, g, lattice, p)
        n_draws = realizations if model is not None else 1
        errs = []
        for r in range(n_draws):
            series = clean
            if model is not None:
                series = noisify(clean, ShotModel(model.n_shots, model.mode, derive_seed(model.seed, r)))
            errs.append(weight_errors(series, psi, lattice, p, b, cfg, max_abs))
        errs = np.mean(errs, axis=0)
        for beta, err in zip(b, np.atleast_1d(errs)):
            rows.append({axis: value, "beta": float(beta), "rel_error": float(err)})
    return rows


def echo_classes(lattice: Lattice, params: TfimParams, grid: TimeGrid, decimals: int = 10):
    """Group all basis states by their exact echo series.

    Returns ``(representatives, labels, series)``: one representative state
    per class, the class label of every state and the exact series of each
    representative. States in a class share their local density of states.
    """
    n = lattice.n_sites
    keys, reps, labels, series = {}, [], np.empty(1 << n, dtype=int), []
    for bits in range(1 << n):
        s = dynamics.exact_echoes(SpinConfig(bits, n), grid, lattice, params)
        key = tuple(np.round(np.concatenate([s.values.real, s.values.imag]), decimals))
        if key not in keys:
            keys[key] = len(reps)
            reps.append(bits)
            series.append(s)
        labels[bits] = keys[key]
    return np.array(reps), labels, series


@dataclass
class ShotsStudy:
    """Weight errors of one state and KL distances of the full distribution.

    Arrays are indexed ``[n_shots, realization, beta]``.
    """

    n_shots: np.ndarray
    betas: np.ndarray
    rel_error: np.ndarray
    kl: np.ndarray


def shots_study(
    lattice: Lattice,
    params: TfimParams,
    grid: TimeGrid,
    n_shots,
    betas,
    *,
    wick: WickConfig = WickConfig(),
    psi: SpinConfig | None = None,
    realizations: int = 20,
    seed: int = 0,
    mode: str = "gaussian",
) -> ShotsStudy:
    """Shot-count dependence of Wick-rotated weights on an enumerable lattice.

    States with identical exact echoes are handled as one class: each
    realization draws one noisy series per class and gives all its members
    the resulting weight. The relative error is reported for ``psi``
    (default all up); the KL distance compares the estimated Boltzmann
    distribution over all states with the exact one.
    """
    n = lattice.n_sites
    psi = SpinConfig.all_up(n) if psi is None else psi
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    n_shots = np.asarray(sorted(int(x) for x in n_shots))
    reps, labels, series = echo_classes(lattice, params, grid)
    exact = np.array([dynamics.all_boltzmann_weights(lattice, params, b) for b in betas])
    moments = [dynamics.moments(SpinConfig(int(b), n), lattice, params) for b in reps]
    target = labels[psi.bits]
    rel = np.empty((len(n_shots), realizations, len(betas)))
    kl = np.empty_like(rel)
    for i, ns in enumerate(n_shots):
        for r in range(realizations):
            w = np.empty((len(betas), len(reps)))
            for c, s in enumerate(series):
                noisy = noisify(s, ShotModel(int(ns), mode, derive_seed(seed, i, r, c)))
                w[:, c], _ = wick_weight(noisy, betas, wick, energy_moments=moments[c])
            rel[i, r] = relative_weight_error(w[:, target], exact[:, psi.bits])
            for k in range(len(betas)):
                kl[i, r, k] = distribution_distance(w[k, labels], exact[k])
    return ShotsStudy(n_shots, betas, rel, kl)


def shots_needed(n_shots, kl, target: float) -> float:
    """Shot count at which a decreasing KL curve first reaches ``target``.

    Interpolates linearly in ``log N`` and ``log KL``; returns ``inf`` if the
    target is never reached and the smallest ``n_shots`` if it is met there.
    """
    log_n = np.log(np.asarray(n_shots, dtype=float))
    log_kl = np.log(np.asarray(kl, dtype=float))
    lt = math.log(target)
    if log_kl[0] <= lt:
        return float(n_shots[0])
    for i in range(1, len(log_n)):
        if log_kl[i] <= lt:
            f = (log_kl[i - 1] - lt) / (log_kl[i - 1] - log_kl[i])
            return float(math.exp(log_n[i - 1] + f * (log_n[i] - log_n[i - 1])))
    return math.inf


@dataclass
class McResult:
    beta: float
    mean: float
    error: float
    records: list

    @property
    def unique_fraction(self) -> float:
        return float(np.mean([r.unique_fraction() for r in self.records]))

    @property
    def acceptance(self) -> float:
        return float(np.mean([r.acceptance_rate() for r in self.records]))


def _chain_job(args) -> ChainRecord:
    config, provider = args
    return run_chain(config, provider)


def run_mc(
    provider: WeightProvider,
    betas,
    *,
    n_chains: int = 4,
    n_samples: int = 512,
    burn_in: int = 32,
    proposal: str = "wolff",
    initial=None,
    seed: int = 0,
    workers: int = 1,
) -> list[McResult]:
    """Independent chains at each temperature, aggregated per temperature.

    ``initial`` lists one starting state per chain; by default the first half
    of the chains start all up and the rest all down. Chain ``c`` at the
    ``i``-th temperature uses seed ``derive_seed(seed, i, c)``, so results do
    not depend on ``workers``.
    """
    n = provider.lattice.n_sites
    betas = [float(b) for b in betas]
    if initial is None:
        initial = [SpinConfig.all_up(n) if c < n_chains / 2 else SpinConfig.all_down(n) for c in range(n_chains)]
    if len(initial) != n_chains:
        raise ValueError("need one initial state per chain")
    jobs = [
        ChainConfig(b, n_samples, burn_in, initial[c], proposal, derive_seed(seed, i, c))
        for i, b in enumerate(betas)
        for c in range(n_chains)
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_chain_job, [(job, provider) for job in jobs]))
    else:
        records = [run_chain(job, provider) for job in jobs]
    out = []
    for i, b in enumerate(betas):
        recs = records[i * n_chains : (i + 1) * n_chains]
        mean, err = aggregate_chains(recs)
        out.append(McResult(b, mean, err, recs))
    return out


def report_rows(lattice: Lattice, params: TfimParams, betas, mc: list[McResult] | None = None) -> list[dict]:
    """Squared magnetisation against temperature.

    Columns are the exact quantum value (where full diagonalisation is
    possible), the classical Ising value at zero transverse field and, when
    given, the Monte Carlo estimate with its two-sigma error.
    """
    classical = TfimParams(params.J, 0.0)
    bc = critical_beta()
    by_beta = {r.beta: r for r in mc or []}
    rows = []
    for b in sorted(float(x) for x in betas):
        try:
            exact = dynamics.thermal_m2(lattice, params, b)
        except dynamics.CapacityError:
            exact = math.nan
        row = {
            "beta": b,
            "beta_over_beta_c": b / bc,
            "m2_exact": exact,
            "m2_classical": dynamics.thermal_m2(lattice, classical, b),
        }
        if b in by_beta:
            r = by_beta[b]
            row.update(m2_mc=r.mean, m2_mc_err=r.error, unique_fraction=r.unique_fraction, acceptance=r.acceptance)
        rows.append(row)
    return rows
