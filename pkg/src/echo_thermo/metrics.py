"""Distances between Boltzmann distributions and weight errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["WeightTable", "SupportError", "distribution_distance", "relative_weight_error", "normalize"]


class SupportError(ValueError):
    """``p`` puts mass where the reference distribution has none."""


@dataclass
class WeightTable:
    """Unnormalised Boltzmann weights keyed by state (bit pattern)."""

    entries: dict
    beta: float | None = None

    def __post_init__(self):
        vals = np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))
        if vals.size == 0 or np.any(vals < 0) or not np.any(vals > 0):
            raise ValueError("weights must be non-negative with at least one positive entry")

    @classmethod
    def from_arrays(cls, states, weights, beta=None) -> "WeightTable":
        return cls(dict(zip((int(s) for s in states), (float(w) for w in weights))), beta)

    def probabilities(self, keys=None) -> np.ndarray:
        keys = list(self.entries) if keys is None else keys
        w = np.array([self.entries[k] for k in keys], dtype=float)
        return w / w.sum()


def normalize(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


def distribution_distance(p, p_star, metric: str = "kl") -> float:
    """KL divergence ``KL(p || p_star)`` (natural log) or L1 distance.

    Accepts two ``WeightTable`` objects over the same states or two weight
    arrays in matching order; both are normalised first.
    """
    if isinstance(p, WeightTable) or isinstance(p_star, WeightTable):
        if not (isinstance(p, WeightTable) and isinstance(p_star, WeightTable)):
            raise TypeError("pass two WeightTables or two arrays")
        if set(p.entries) != set(p_star.entries):
            raise ValueError("weight tables cover different states")
        keys = list(p_star.entries)
        pa, pb = p.probabilities(keys), p_star.probabilities(keys)
    else:
        pa, pb = normalize(p), normalize(p_star)
        if pa.shape != pb.shape:
            raise ValueError("distributions have different lengths")
    if metric == "l1":
        return float(np.abs(pa - pb).sum())
    if metric != "kl":
        raise ValueError(f"unknown metric {metric!r}")
    pos = pa > 0
    if np.any(pb[pos] == 0):
        raise SupportError("p has mass where p_star is zero")
    return float(max(np.sum(pa[pos] * np.log(pa[pos] / pb[pos])), 0.0))


def relative_weight_error(w_est, w_exact):
    w_exact = np.asarray(w_exact, dtype=float)
    if np.any(w_exact == 0):
        raise ZeroDivisionError("exact weight is zero")
    err = np.abs(np.asarray(w_est, dtype=float) - w_exact) / np.abs(w_exact)
    return float(err) if err.ndim == 0 else err
