"""Statevector dynamics of the transverse-field Ising model.

Basis states are Z-product states labelled by an integer whose bit ``i`` is
the spin at site ``i`` (0 = up = +1, 1 = down = -1). The Hamiltonian is

    H = -J sum_<ij> Z_i Z_j + h_x sum_i X_i

so bond terms are diagonal in this basis and field terms flip single bits.
Small systems are diagonalised exactly; larger ones use a Lanczos
quadrature of the local density of states, which yields Loschmidt echoes and
Boltzmann weights of a single state from one Krylov space.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as sla

from .lattice import Lattice, TfimParams

__all__ = [
    "SpinConfig",
    "TimeGrid",
    "TimeSeries",
    "EigenDecomposition",
    "CapacityError",
    "FULL_DIAG_MAX_SITES",
    "KRYLOV_MAX_SITES",
    "classical_energies",
    "magnetization_sq",
    "apply_hamiltonian",
    "product_state_energy",
    "moments",
    "exact_echoes",
    "trotter_echoes",
    "trotter_steps",
    "exact_dos",
    "exact_boltzmann",
    "all_boltzmann_weights",
    "thermal_m2",
    "lanczos_quadrature",
    "extremal_energies",
    "nyquist_dt",
]

FULL_DIAG_MAX_SITES = 12
KRYLOV_MAX_SITES = 22


class CapacityError(RuntimeError):
    """The requested backend cannot handle a system of this size."""


@dataclass(frozen=True)
class SpinConfig:
    """Z-basis product state of ``n`` spins stored as a bit pattern."""

    bits: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 <= self.bits < (1 << self.n):
            raise ValueError(f"bits {self.bits} out of range for {self.n} spins")

    @classmethod
    def all_up(cls, n: int) -> "SpinConfig":
        return cls(0, n)

    @classmethod
    def all_down(cls, n: int) -> "SpinConfig":
        return cls((1 << n) - 1, n)

    @classmethod
    def from_string(cls, s: str) -> "SpinConfig":
        """Parse a bitstring whose first character is site 0."""
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {s!r}")
        return cls(sum(1 << i for i, c in enumerate(s) if c == "1"), len(s))

    def to_string(self) -> str:
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.n))

    def spins(self) -> np.ndarray:
        """Spin values ``z_i`` in {+1, -1}."""
        return 1 - 2 * ((self.bits >> np.arange(self.n)) & 1)

    def flip(self, sites) -> "SpinConfig":
        mask = 0
        for s in np.atleast_1d(sites):
            mask ^= 1 << int(s)
        return SpinConfig(self.bits ^ mask, self.n)


@dataclass(frozen=True)
class TimeGrid:
    """Sample times ``t_k = k * dt`` for ``k = 1..n_t``."""

    dt: float
    n_t: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_t < 1:
            raise ValueError("n_t must be at least 1")

    @classmethod
    def from_rate(cls, rate: float, t_max: float) -> "TimeGrid":
        """Grid with sampling rate ``1/dt`` ending at ``t_max``."""
        dt = 1.0 / rate
        return cls(dt, int(round(t_max / dt)))

    @property
    def t_max(self) -> float:
        return self.n_t * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.n_t + 1)


@dataclass
class TimeSeries:
    """Loschmidt echo samples ``G(t_k)``; ``G(0) = 1`` is implied.

    ``n_shots`` is ``None`` for numerically exact series.
    """

    grid: TimeGrid
    values: np.ndarray
    re_var: np.ndarray = None
    im_var: np.ndarray = None
    n_shots: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_t,):
            raise ValueError(f"expected {self.grid.n_t} values, got shape {self.values.shape}")
        if self.re_var is None:
            self.re_var = np.zeros(self.grid.n_t)
        if self.im_var is None:
            self.im_var = np.zeros(self.grid.n_t)
        self.re_var = np.asarray(self.re_var, dtype=float)
        self.im_var = np.asarray(self.im_var, dtype=float)

    @property
    def is_exact(self) -> bool:
        return self.n_shots is None

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def to_json(self) -> dict:
        return {
            "n_shots": "exact" if self.n_shots is None else int(self.n_shots),
            "dt": self.grid.dt,
            "times": self.times.tolist(),
            "re": self.values.real.tolist(),
            "im": self.values.imag.tolist(),
            "re_var": self.re_var.tolist(),
            "im_var": self.im_var.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TimeSeries":
        times = np.asarray(doc["times"], dtype=float)
        dt = float(doc["dt"])
        grid = TimeGrid(dt, len(times))
        if not np.allclose(times, grid.times, rtol=1e-9, atol=1e-12):
            raise ValueError("times must be k*dt for k = 1..n_t")
        n_shots = doc.get("n_shots", "exact")
        return cls(
            grid,
            np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float),
            doc.get("re_var"),
            doc.get("im_var"),
            None if n_shots in (None, "exact") else int(n_shots),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "TimeSeries":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class EigenDecomposition:
    energies: np.ndarray
    overlaps: np.ndarray = field(repr=False)


# --- basis-level quantities -------------------------------------------------

def _spin_table(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return (1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)).astype(np.int8)


@lru_cache(maxsize=16)
def _classical_energies_cached(lattice: Lattice, J: float) -> np.ndarray:
    n = lattice.n_sites
    idx = np.arange(1 << n, dtype=np.int64)
    e = np.zeros(1 << n)
    for i, j in lattice.bonds:
        # z_i z_j = +1 when the two bits agree
        agree = 1 - 2 * (((idx >> i) ^ (idx >> j)) & 1)
        e -= J * agree
    e.flags.writeable = False
    return e


def classical_energies(lattice: Lattice, params: TfimParams) -> np.ndarray:
    """Diagonal of H in the Z basis, i.e. ``<psi|H|psi>`` for every basis state."""
    return _classical_energies_cached(lattice, float(params.J))


def magnetization_sq(bits, n: int):
    """``(sum_i z_i / n)^2`` for an integer bit pattern or an array of them."""
    bits = np.asarray(bits, dtype=np.int64)
    ones = np.zeros_like(bits)
    for i in range(n):
        ones += (bits >> i) & 1
    m = (n - 2 * ones) / n
    return m * m


def _check(psi: SpinConfig, lattice: Lattice):
    if psi.n != lattice.n_sites:
        raise ValueError(f"state has {psi.n} spins, lattice has {lattice.n_sites} sites")


def product_state_energy(psi: SpinConfig, lattice: Lattice, params: TfimParams) -> float:
    _check(psi, lattice)
    z = psi.spins()
    b = lattice.bond_array()
    if len(b) == 0:
        return 0.0
    return float(-params.J * np.sum(z[b[:, 0]] * z[b[:, 1]]))


def moments(psi: SpinConfig, lattice: Lattice, params: TfimParams) -> tuple[float, float]:
    """Mean energy and energy standard deviation of a product state.

    Each ``X_i`` contributes ``h_x**2`` to the variance and the cross terms
    vanish on Z-product states.
    """
    return product_state_energy(psi, lattice, params), abs(params.hx) * math.sqrt(lattice.n_sites)


def apply_hamiltonian(v: np.ndarray, diag: np.ndarray, hx: float, n: int) -> np.ndarray:
    """Return ``H @ v`` using the classical diagonal and bit flips."""
    out = diag * v
    if hx != 0.0:
        for i in range(n):
            w = v.reshape(-1, 2, 1 << i)
            out += hx * w[:, ::-1, :].reshape(-1)
    return out


def _linear_operator(lattice: Lattice, params: TfimParams):
    n = lattice.n_sites
    diag = classical_energies(lattice, params)
    dim = 1 << n
    return sla.LinearOperator(
        (dim, dim),
        matvec=lambda v: apply_hamiltonian(np.ravel(v), diag, params.hx, n),
        dtype=float,
    )


# --- exact diagonalisation ----------------------------------------------------

@lru_cache(maxsize=8)
def _eigh(lattice: Lattice, J: float, hx: float):
    n = lattice.n_sites
    if n > FULL_DIAG_MAX_SITES:
        raise CapacityError(f"full diagonalisation limited to {FULL_DIAG_MAX_SITES} sites, got {n}")
    dim = 1 << n
    params = TfimParams(J, hx)
    h = np.diag(classical_energies(lattice, params)).astype(float)
    idx = np.arange(dim)
    for i in range(n):
        h[idx, idx ^ (1 << i)] += hx
    energies, vectors = np.linalg.eigh(h)
    energies.flags.writeable = False
    vectors.flags.writeable = False
    return energies, vectors


def exact_dos(psi: SpinConfig, lattice: Lattice, params: TfimParams) -> EigenDecomposition:
    """Eigenenergies and overlaps ``|<psi|n>|^2`` (sum to one)."""
    _check(psi, lattice)
    energies, vectors = _eigh(lattice, float(params.J), float(params.hx))
    return EigenDecomposition(energies.copy(), vectors[psi.bits] ** 2)


def lanczos_quadrature(
    psi: SpinConfig,
    lattice: Lattice,
    params: TfimParams,
    n_iter: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gauss quadrature ``(nodes, weights)`` of the local density of states of ``psi``.

    ``n_iter`` Lanczos steps with full reorthogonalisation reproduce the
    first ``2 * n_iter - 1`` energy moments of the local density exactly.
    """
    _check(psi, lattice)
    n = lattice.n_sites
    if n > KRYLOV_MAX_SITES:
        raise CapacityError(f"Krylov backend limited to {KRYLOV_MAX_SITES} sites, got {n}")
    diag = classical_energies(lattice, params)
    dim = 1 << n
    n_iter = min(n_iter, dim)
    basis = np.zeros((n_iter, dim))
    basis[0, psi.bits] = 1.0
    alpha, beta = [], []
    for k in range(n_iter):
        w = apply_hamiltonian(basis[k], diag, params.hx, n)
        a = basis[k] @ w
        alpha.append(a)
        w -= a * basis[k]
        if k > 0:
            w -= beta[-1] * basis[k - 1]
        w -= basis[: k + 1].T @ (basis[: k + 1] @ w)
        b = np.linalg.norm(w)
        if k == n_iter - 1 or b < 1e-12:
            break
        beta.append(b)
        basis[k + 1] = w / b
    nodes, vecs = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta[: len(alpha) - 1]))
    return nodes, vecs[0] ** 2


def _krylov_spectral(psi, lattice, params, evaluate, tol=1e-10, start=30, step=15, cap=400):
    # Grow the Krylov space until the requested quantities stop changing.
    prev = None
    m = start
    while True:
        nodes, weights = lanczos_quadrature(psi, lattice, params, m)
        cur = evaluate(nodes, weights)
        if len(nodes) < m:
            return cur
        if prev is not None and np.max(np.abs(cur - prev)) <= tol * max(1.0, np.max(np.abs(cur))):
            return cur
        if m >= cap:
            raise CapacityError("Krylov quadrature did not converge")
        prev = cur
        m += step


def _backend(lattice: Lattice, backend: str) -> str:
    if backend == "auto":
        return "full" if lattice.n_sites <= FULL_DIAG_MAX_SITES else "krylov"
    if backend not in ("full", "krylov"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


def exact_echoes(
    psi: SpinConfig,
    grid: TimeGrid,
    lattice: Lattice,
    params: TfimParams,
    backend: str = "auto",
) -> TimeSeries:
    """Numerically exact ``G(t_k) = <psi|exp(-iHt_k)|psi>``."""
    _check(psi, lattice)
    t = grid.times

    def evaluate(energies, weights):
        return np.exp(-1j * np.outer(t, energies)) @ weights

    if _backend(lattice, backend) == "full":
        dos = exact_dos(psi, lattice, params)
        values = evaluate(dos.energies, dos.overlaps)
    else:
        values = _krylov_spectral(psi, lattice, params, evaluate)
    return TimeSeries(grid, values)


def exact_boltzmann(
    psi: SpinConfig,
    beta,
    lattice: Lattice,
    params: TfimParams,
    backend: str = "auto",
):
    """``<psi|exp(-beta H)|psi>``; ``beta`` may be a scalar or an array."""
    _check(psi, lattice)
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    if np.any(betas < 0):
        raise ValueError("beta must be non-negative")

    def evaluate(energies, weights):
        # shift by the lowest energy for range safety, then undo
        e0 = energies.min()
        return np.exp(-np.outer(betas, energies - e0)) @ weights * np.exp(-betas * e0)

    if _backend(lattice, backend) == "full":
        dos = exact_dos(psi, lattice, params)
        w = evaluate(dos.energies, dos.overlaps)
    else:
        w = _krylov_spectral(psi, lattice, params, evaluate, tol=1e-12)
    return float(w[0]) if np.ndim(beta) == 0 else w


def all_boltzmann_weights(lattice: Lattice, params: TfimParams, beta: float) -> np.ndarray:
    """Diagonal of ``exp(-beta H)`` for every basis state (full diagonalisation)."""
    energies, vectors = _eigh(lattice, float(params.J), float(params.hx))
    e0 = energies.min()
    return (vectors**2) @ np.exp(-beta * (energies - e0)) * math.exp(-beta * e0)


def thermal_m2(lattice: Lattice, params: TfimParams, beta: float) -> float:
    """Exact thermal average of the squared magnetisation."""
    if params.hx == 0.0 or lattice.n_sites > FULL_DIAG_MAX_SITES:
        if params.hx != 0.0:
            raise CapacityError("exact thermal average needs full diagonalisation")
        e = classical_energies(lattice, params)
        w = np.exp(-beta * (e - e.min()))
    else:
        w = all_boltzmann_weights(lattice, params, beta)
    m2 = magnetization_sq(np.arange(1 << lattice.n_sites), lattice.n_sites)
    return float(w @ m2 / w.sum())


def extremal_energies(lattice: Lattice, params: TfimParams, maxiter: int = 10_000) -> tuple[float, float]:
    """Lowest and highest eigenvalues of H."""
    n = lattice.n_sites
    if n <= 8 or params.hx == 0.0:
        if params.hx == 0.0:
            e = classical_energies(lattice, params)
            return float(e.min()), float(e.max())
        energies, _ = _eigh(lattice, float(params.J), float(params.hx))
        return float(energies[0]), float(energies[-1])
    op = _linear_operator(lattice, params)
    try:
        lo = sla.eigsh(op, k=1, which="SA", maxiter=maxiter, tol=1e-12, return_eigenvectors=False)
        hi = sla.eigsh(op, k=1, which="LA", maxiter=maxiter, tol=1e-12, return_eigenvectors=False)
    except sla.ArpackNoConvergence as exc:
        raise RuntimeError("extremal eigenvalue solver did not converge") from exc
    return float(lo[0]), float(hi[0])


def nyquist_dt(max_abs_energy: float) -> float:
    """Largest sampling interval that resolves a spectrum within ``±max_abs_energy``."""
    if not max_abs_energy > 0:
        raise ValueError("max_abs_energy must be positive")
    return math.pi / max_abs_energy


# --- Trotterised evolution ----------------------------------------------------

def trotter_steps(grid: TimeGrid, n_trotter: int | None = None, max_step: float | None = None) -> np.ndarray:
    """Number of Trotter steps used for each sample time.

    Fixed mode uses ``n_trotter`` steps per ``dt``; variable mode uses
    ``ceil(t_k / max_step)`` steps for time ``t_k``.
    """
    k = np.arange(1, grid.n_t + 1)
    if max_step is not None:
        if not max_step > 0:
            raise ValueError("max_step must be positive")
        # guard against t_k / max_step landing a hair above an integer
        return np.ceil(np.round(grid.times / max_step, 9)).astype(int)
    if n_trotter is None or n_trotter < 1:
        raise ValueError("n_trotter must be >= 1 when max_step is not given")
    return k * int(n_trotter)


def _apply_field(v: np.ndarray, angle: float, n: int) -> np.ndarray:
    # exp(-i angle sum_i X_i) as a product of commuting single-site rotations
    if angle == 0.0:
        return v
    c, s = math.cos(angle), -1j * math.sin(angle)
    for i in range(n):
        w = v.reshape(-1, 2, 1 << i)
        v = (c * w + s * w[:, ::-1, :]).reshape(-1)
    return v


def trotter_echoes(
    psi: SpinConfig,
    grid: TimeGrid,
    lattice: Lattice,
    params: TfimParams,
    n_trotter: int | None = 1,
    max_step: float | None = None,
) -> TimeSeries:
    """Echoes from second-order Trotterised evolution.

    The product ``exp(-iA tau/2) [exp(-iB tau) exp(-iA tau)]^n exp(+iA tau/2)``
    with A the field terms and B the bond terms is evaluated as
    ``<phi|[exp(-iB tau) exp(-iA tau)]^n|phi>`` with ``phi = exp(+iA tau/2) psi``.
    """
    _check(psi, lattice)
    n = lattice.n_sites
    steps = trotter_steps(grid, n_trotter, max_step)
    diag = classical_energies(lattice, params)
    hx = params.hx
    dim = 1 << n
    e0 = np.zeros(dim, dtype=complex)
    e0[psi.bits] = 1.0
    values = np.empty(grid.n_t, dtype=complex)

    def evolve(chi, tau, count):
        bond_phase = np.exp(-1j * tau * diag)
        for _ in range(count):
            chi = bond_phase * _apply_field(chi, hx * tau, n)
        return chi

    if max_step is None:
        tau = grid.dt / n_trotter
        phi = _apply_field(e0, -hx * tau / 2, n)
        chi = phi
        done = 0
        for k, m in enumerate(steps):
            chi = evolve(chi, tau, m - done)
            done = m
            values[k] = np.vdot(phi, chi)
    else:
        for k, (t, m) in enumerate(zip(grid.times, steps)):
            tau = t / m
            phi = _apply_field(e0, -hx * tau / 2, n)
            values[k] = np.vdot(phi, evolve(phi, tau, m))
    return TimeSeries(grid, values)
