"""
Two-step reconstruction over a basis of circle samples.

Step 1 ranks a precomputed collection by misfit and keeps the best ``N_s``
samples with equal weights. Step 2 is a derivative-free coordinate descent
that visits the controls in a fixed order: for each sample, every circle's
``(x01, x02, r)`` in turn, then the sample's weight. Each scalar coordinate is
improved by a bound-projected pattern search (probe +-step, double while
improving, shrink otherwise).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .conductivity import Basis, CircleSample, blend_masks, circle_masks
from .mesh import DomainSpec
from .objective import BudgetExhausted, Objective, cost
from .sampling import PrecomputeStore, random_center

logger = logging.getLogger(__name__)

COORD_NAMES = ("x01", "x02", "r")


def control_dimension(n_samples: int, n_circles_max: int, n: int = 2) -> int:
    """Number of scalar controls: N_s * (N_c,max * (n + 1) + 1)."""
    return n_samples * (n_circles_max * (n + 1) + 1)


def control_vector(basis: Basis) -> np.ndarray:
    """Flatten a padded basis in visiting order: per sample, all triplets then the weight."""
    parts = []
    for s, a in zip(basis.samples, basis.weights):
        parts.append(s.params.ravel())
        parts.append([a])
    return np.concatenate(parts)


def control_labels(n_samples: int, n_circles: int) -> list[str]:
    labels = []
    for i in range(n_samples):
        labels += [f"s{i}.c{j}.{c}" for j in range(n_circles) for c in COORD_NAMES]
        labels.append(f"s{i}.alpha")
    return labels


@dataclass(frozen=True)
class CDConfig:
    """Coordinate descent settings; lengths are absolute (same unit as the mesh)."""

    tolerance: float = 1e-4
    max_evaluations: int = 50_000
    initial_step_position: float = 0.005
    initial_step_radius: float = 0.005
    initial_step_weight: float = 0.05
    step_shrink: float = 0.5
    step_grow: float = 2.0
    min_step: float = 1e-5
    min_step_weight: float = 1e-4
    radius_bound: float = 0.1
    max_iterations: int | None = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.step_grow < 1:
            raise ValueError("step_grow must be >= 1")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive")

    @classmethod
    def for_domain(cls, domain: DomainSpec, **overrides) -> "CDConfig":
        R = domain.radius
        kw = dict(initial_step_position=0.05 * R, initial_step_radius=0.05 * R,
                  min_step=1e-4 * R, radius_bound=R)
        kw.update(overrides)
        return cls(**kw)


@dataclass
class RunHistory:
    """Per major iteration: (k, evaluations, J, elapsed seconds, L2 error or nan).

    ``moves`` holds every accepted coordinate change as
    (evaluations, coordinate index, label, old, new, J, L2 error or nan).
    """

    iterations: list = field(default_factory=list)
    moves: list = field(default_factory=list)
    status: str = "running"

    @property
    def J(self) -> np.ndarray:
        return np.array([it[2] for it in self.iterations])

    @property
    def evaluations(self) -> int:
        return self.iterations[-1][1] if self.iterations else 0

    def trace_text(self) -> str:
        lines = ["# k evaluations J l2_error"]
        lines += [f"{k} {n} {J!r} {e!r}" for k, n, J, _, e in self.iterations]
        return "\n".join(lines) + "\n"

    def moves_text(self) -> str:
        lines = ["# evaluations coordinate label old new J l2_error"]
        lines += [f"{n} {c} {lab} {o!r} {v!r} {J!r} {e!r}" for n, c, lab, o, v, J, e in self.moves]
        return "\n".join(lines) + "\n"


# Step 1 ----------------------------------------------------------------------

def rank_collection(store: PrecomputeStore, observed) -> np.ndarray:
    """J for every stored sample (inf for failed records)."""
    observed = np.asarray(observed, dtype=float)
    if store.data.shape[1:] != observed.shape:
        raise ValueError(f"observed shape {observed.shape} does not match store {store.data.shape[1:]}")
    J = np.sum((store.data - observed) ** 2, axis=(1, 2))
    J[store.failed] = np.inf
    return J


def rank_and_select(store: PrecomputeStore, observed, n_samples: int = 10) -> tuple[Basis, np.ndarray]:
    """Best ``n_samples`` records (ties by lower index) with equal weights.

    Returns the basis and the full misfit vector.
    """
    J = rank_collection(store, observed)
    ok = int(np.sum(~store.failed))
    if n_samples > ok:
        raise ValueError(f"requested {n_samples} samples but only {ok} usable records")
    order = np.argsort(J, kind="stable")[:n_samples]
    samples = tuple(store.samples[i] for i in order)
    return Basis(samples, np.full(n_samples, 1.0 / n_samples), tuple(int(i) for i in order)), J


def pad_basis(basis: Basis, n_circles_max: int, domain: DomainSpec,
              rng: np.random.Generator) -> Basis:
    """Append zero-radius circles at random in-domain centres up to ``n_circles_max``."""
    padded = []
    for s in basis.samples:
        if s.n_circles > n_circles_max:
            raise ValueError(f"sample has {s.n_circles} circles, more than {n_circles_max}")
        extra = [(*random_center(rng, domain.radius), 0.0) for _ in range(n_circles_max - s.n_circles)]
        padded.append(CircleSample(s.circles + tuple(extra), s.sigma_c, s.sigma_h))
    return Basis(tuple(padded), basis.weights, basis.indices)


# Step 2 ----------------------------------------------------------------------

class LineSearchResult(NamedTuple):
    value: float
    fvalue: float
    step: float
    exhausted: bool


def line_search_scalar(f: Callable[[float], float], value: float, fvalue: float,
                       lower: float, upper: float, step: float, min_step: float,
                       shrink: float = 0.5, grow: float = 2.0) -> LineSearchResult:
    """Pattern search on one coordinate inside ``[lower, upper]``.

    Probes ``value +- step`` (projected onto the bounds). On a strict
    improvement it moves to the better probe and keeps doubling the step in
    that direction while that improves; otherwise the step shrinks. Stops when
    the step falls below ``min_step`` or ``f`` raises :class:`BudgetExhausted`.
    Never returns a point worse than the start.
    """
    x, fx = value, fvalue
    try:
        while step >= min_step:
            best = None
            for cand in (x + step, x - step):
                y = min(max(cand, lower), upper)
                if y == x:
                    continue
                fy = f(y)
                if fy < fx and (best is None or fy < best[1]):
                    best = (y, fy)
            if best is None:
                step *= shrink
                continue
            direction = 1.0 if best[0] > x else -1.0
            x, fx = best
            s = step
            while grow > 1:
                s *= grow
                y = min(max(x + direction * s, lower), upper)
                if y == x:
                    break
                fy = f(y)
                if fy < fx:
                    x, fx = y, fy
                else:
                    break
    except BudgetExhausted:
        return LineSearchResult(x, fx, step, True)
    return LineSearchResult(x, fx, step, False)


def restore_simplex(weights, index: int, value: float) -> np.ndarray:
    """Set ``weights[index] = value`` and rescale the rest so the total is 1."""
    w = np.array(weights, dtype=float)
    value = float(min(max(value, 0.0), 1.0))
    others = np.arange(w.size) != index
    rest = w[others].sum()
    if w.size == 1:
        return np.ones(1)
    if rest > 0:
        w[others] *= (1.0 - value) / rest
    else:
        w[others] = (1.0 - value) / (w.size - 1)
    w[index] = value
    np.clip(w, 0.0, 1.0, out=w)
    return w


class _State:
    """Mutable view of a padded basis with cached rasterizations."""

    def __init__(self, basis: Basis, centroids: np.ndarray):
        n_c = {s.n_circles for s in basis.samples}
        if len(n_c) != 1:
            raise ValueError("coordinate descent needs a padded basis (equal circle counts)")
        if len({(s.sigma_c, s.sigma_h) for s in basis.samples}) != 1:
            raise ValueError("all basis samples must share sigma_c and sigma_h")
        self.sigma_c = basis.samples[0].sigma_c
        self.sigma_h = basis.samples[0].sigma_h
        self.indices = basis.indices
        self.centroids = centroids
        self.params = np.array([s.params for s in basis.samples])  # (N_s, N_c, 3)
        self.weights = np.array(basis.weights, dtype=float)
        self.cmasks = np.array([circle_masks(p, centroids) for p in self.params])  # (N_s, N_c, n_el)
        self.smasks = self.cmasks.any(axis=1).astype(float)

    def field(self, smasks=None, weights=None) -> np.ndarray:
        return blend_masks(self.smasks if smasks is None else smasks,
                           self.weights if weights is None else weights,
                           self.sigma_c, self.sigma_h)

    def basis(self) -> Basis:
        samples = tuple(CircleSample(tuple(map(tuple, p)), self.sigma_c, self.sigma_h) for p in self.params)
        return Basis(samples, self.weights.copy(), self.indices)


def _bounds(params: np.ndarray, coord: int, R: float, r_bound: float) -> tuple[float, float]:
    """Feasible interval of one coordinate given the others: |x0| < R + r, 0 <= r <= r_bound."""
    x01, x02, r = params
    shrink = 1 - 1e-12
    if coord == 2:
        lo = max(0.0, np.hypot(x01, x02) - R)
        return (lo / shrink if lo > 0 else 0.0), r_bound
    other = x02 if coord == 0 else x01
    half = np.sqrt(max((R + r) ** 2 - other**2, 0.0)) * shrink
    return -half, half


def coordinate_descent(basis: Basis, objective: Objective, cfg: CDConfig, *,
                       truth: np.ndarray | None = None,
                       check_feasible: bool = False) -> tuple[Basis, RunHistory]:
    """Minimize J over circle triplets and weights of a padded basis.

    ``objective`` supplies J and the evaluation counter; its own budget is
    ignored in favour of ``cfg.max_evaluations`` counted from the call.
    Probes whose blended field equals the current field are recognised
    without evaluating J. With ``truth`` given, the L2 error is tracked.
    """
    mesh = objective.model.mesh
    R = mesh.domain.radius
    state = _State(basis, mesh.element_centroids)
    n_s, n_c, _ = state.params.shape
    labels = control_labels(n_s, n_c)
    areas = mesh.element_areas
    history = RunHistory()
    start_evals = objective.n_evaluations
    saved_budget = objective.max_evaluations
    objective.max_evaluations = start_evals + cfg.max_evaluations
    t0 = time.perf_counter()

    def l2(field):
        return float(np.sqrt(np.sum(areas * (field - truth) ** 2))) if truth is not None else float("nan")

    def used():
        return objective.n_evaluations - start_evals

    def feasible(params, weights):
        d = np.hypot(params[..., 0], params[..., 1])
        r = params[..., 2]
        assert np.all(d < R + r), "centre bound |x0| < R + r violated"
        assert np.all((r >= 0) & (r <= cfg.radius_bound)), "radius bound violated"
        assert np.all((weights >= 0) & (weights <= 1)), "weight box violated"
        assert abs(weights.sum() - 1) <= 1e-12, "weights do not sum to 1"

    if check_feasible:
        feasible(state.params, state.weights)
    current = state.field()
    exhausted = False
    k = 0
    try:
        J = objective(current)
        history.iterations.append((0, used(), J, 0.0, l2(current)))
        while True:
            if J == 0:
                history.status = "converged"
                break
            k += 1
            J_prev = J
            for i in range(n_s):
                for j in range(n_c):
                    others = np.delete(state.cmasks[i], j, axis=0).any(axis=0)
                    for c in range(3):
                        lo, hi = _bounds(state.params[i, j], c, R, cfg.radius_bound)
                        step = cfg.initial_step_radius if c == 2 else cfg.initial_step_position
                        trial = state.params[i, j].copy()
                        cache = {}

                        def f(v, i=i, j=j, c=c, trial=trial, others=others, cache=cache):
                            trial[c] = v
                            cm = circle_masks(trial, state.centroids)[0]
                            sm = state.smasks.copy()
                            sm[i] = others | cm
                            fld = state.field(smasks=sm)
                            cache[v] = (cm, sm, fld)
                            if np.array_equal(fld, current):
                                return J
                            if check_feasible:
                                p = state.params.copy()
                                p[i, j] = trial
                                feasible(p, state.weights)
                            return objective(fld)

                        old = state.params[i, j, c]
                        res = line_search_scalar(f, old, J, lo, hi, step, cfg.min_step,
                                                 cfg.step_shrink, cfg.step_grow)
                        exhausted = res.exhausted
                        if res.value != old and res.fvalue < J:
                            cm, sm, fld = cache[res.value]
                            state.params[i, j, c] = res.value
                            state.cmasks[i, j] = cm
                            state.smasks = sm
                            current, J = fld, res.fvalue
                            idx = i * (3 * n_c + 1) + 3 * j + c
                            history.moves.append((used(), idx, labels[idx], float(old), float(res.value), J, l2(current)))
                        if exhausted:
                            raise BudgetExhausted
                if n_s > 1:
                    cache = {}

                    def g(a, i=i, cache=cache):
                        w = restore_simplex(state.weights, i, a)
                        fld = state.field(weights=w)
                        cache[a] = (w, fld)
                        if np.array_equal(fld, current):
                            return J
                        if check_feasible:
                            feasible(state.params, w)
                        return objective(fld)

                    old = state.weights[i]
                    res = line_search_scalar(g, old, J, 0.0, 1.0, cfg.initial_step_weight,
                                             cfg.min_step_weight, cfg.step_shrink, cfg.step_grow)
                    exhausted = res.exhausted
                    if res.value != old and res.fvalue < J:
                        w, fld = cache[res.value]
                        state.weights = w
                        current, J = fld, res.fvalue
                        idx = i * (3 * n_c + 1) + 3 * n_c
                        history.moves.append((used(), idx, labels[idx], float(old), float(res.value), J, l2(current)))
                    if exhausted:
                        raise BudgetExhausted
            history.iterations.append((k, used(), J, time.perf_counter() - t0, l2(current)))
            logger.info("major iteration %d: J = %.6e after %d evaluations", k, J, used())
            if J == 0 or abs(J - J_prev) / J < cfg.tolerance:
                history.status = "converged"
                break
            if cfg.max_iterations is not None and k >= cfg.max_iterations:
                history.status = "max_iterations"
                break
    except BudgetExhausted:
        history.iterations.append((k, used(), J, time.perf_counter() - t0, l2(current)))
        history.status = "budget"
    finally:
        objective.max_evaluations = saved_budget
    return state.basis(), history


def basis_cost(basis: Basis, objective: Objective) -> float:
    """J of a basis without touching the evaluation counter."""
    from .conductivity import blend

    return cost(objective.simulate(blend(basis, objective.model.mesh)), objective.observed)
