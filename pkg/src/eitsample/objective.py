"""Least-squares misfit between simulated and observed electrode currents."""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .conductivity import Basis, blend
from .excitation import PatternSet
from .forward import ForwardModel


@dataclass(frozen=True)
class NoiseSpec:
    """Relative Gaussian noise: each current I becomes I * (1 + eta), eta ~ N(0, level^2)."""

    level: float = 0.005
    seed: int = 0
    model: str = "multiplicative_gaussian"

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"noise level must be >= 0, got {self.level}")
        if self.model != "multiplicative_gaussian":
            raise ValueError(f"unsupported noise model {self.model!r}")


def cost(simulated: np.ndarray, observed: np.ndarray) -> float:
    """J = sum_k sum_l (I[k, l] - I*[k, l])**2."""
    simulated, observed = np.asarray(simulated), np.asarray(observed)
    if simulated.shape != observed.shape:
        raise ValueError(f"shape mismatch: {simulated.shape} vs {observed.shape}")
    return float(np.sum((simulated - observed) ** 2))


def add_noise(clean: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    clean = np.asarray(clean, dtype=float)
    if spec.level == 0:
        return clean.copy()
    eta = np.random.default_rng(spec.seed).normal(0.0, spec.level, size=clean.shape)
    return clean * (1 + eta)


class BudgetExhausted(RuntimeError):
    pass


class Objective:
    """J(sigma) for fixed observed data, with an evaluation counter.

    Every call counts as one cost functional evaluation. Identical
    conductivity fields are served from a small cache, so repeated probes of
    a rasterization plateau do not re-solve the PDE (they are still counted).

    Parameters
    ----------
    model : ForwardModel
    patterns : PatternSet
    observed : (m, m) array
    max_evaluations : int, optional
        Calls beyond this raise :class:`BudgetExhausted`.
    cache_size : int
    """

    def __init__(self, model: ForwardModel, patterns: PatternSet, observed,
                 max_evaluations: int | None = None, cache_size: int = 2048):
        self.model = model
        self.patterns = patterns
        self.observed = np.asarray(observed, dtype=float)
        expected = (len(patterns), patterns.m)
        if self.observed.shape != expected:
            raise ValueError(f"observed data has shape {self.observed.shape}, expected {expected}")
        self.max_evaluations = max_evaluations
        self.n_evaluations = 0
        self.n_solves = 0
        self._cache: OrderedDict[bytes, float] = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def remaining(self) -> float:
        if self.max_evaluations is None:
            return np.inf
        return self.max_evaluations - self.n_evaluations

    def _tick(self) -> None:
        with self._lock:
            if self.max_evaluations is not None and self.n_evaluations >= self.max_evaluations:
                raise BudgetExhausted(f"evaluation budget {self.max_evaluations} reached")
            self.n_evaluations += 1

    def simulate(self, sigma) -> np.ndarray:
        return self.model.measure(sigma, self.patterns)

    def __call__(self, sigma) -> float:
        self._tick()
        sigma = np.ascontiguousarray(sigma, dtype=float)
        key = sigma.tobytes()
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        J = cost(self.simulate(sigma), self.observed)
        with self._lock:
            self.n_solves += 1
            self._cache[key] = J
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return J

    def evaluate_basis(self, basis: Basis) -> float:
        return self(blend(basis, self.model.mesh))


def evaluate_basis(basis: Basis, model: ForwardModel, patterns: PatternSet, observed,
                   objective: Objective | None = None) -> float:
    """Blend, solve and score a basis; counts on ``objective`` when given."""
    if objective is None:
        objective = Objective(model, patterns, observed)
    return objective.evaluate_basis(basis)
