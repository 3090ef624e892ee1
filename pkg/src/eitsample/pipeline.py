"""
Experiment configuration and the end-to-end reconstruction run.

A run directory receives every intermediate artifact as plain text (tables
have ``#`` header lines) plus ``metadata.json`` with the config echo, all
seeds and the code version, which is enough to repeat the run exactly. If a
stage raises, ``failure.json`` names the stage and the artifacts that were
already written, and the exception propagates.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import platform
import subprocess
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .conductivity import (Basis, blend, field_grid, field_table, grid_pgm, grid_text, l2_error,
                           threshold)
from .excitation import PatternSet, base_pattern, rotation_scheme
from .forward import ForwardModel, ImpedanceSet, save_measurements
from .mesh import DomainSpec, Mesh, build_disc_mesh
from .models import ModelSpec, builtin_model
from .objective import NoiseSpec, Objective, add_noise
from .optimizer import CDConfig, RunHistory, coordinate_descent, pad_basis, rank_and_select
from .sampling import CollectionSpec, PrecomputeStore, check_store, generate_collection, precompute

logger = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """Flat, YAML-friendly description of one experiment.

    Lengths in the ``cd_*`` and ``*_fraction`` fields are fractions of the
    domain radius so that one file works for any ``radius``.
    """

    model: str = "model1"
    # domain and discretization
    radius: float = 0.1
    electrode_count: int = 16
    electrode_half_width: float = 0.12
    electrode_offset: float = 0.0
    mesh_elements: int = 2000
    degree: int = 1
    truth_mesh_scale: float = 1.0
    contact_impedance: float = 0.1
    pattern_kind: str = "trig"
    pattern_amplitude: float = 1.0
    # collection
    collection_size: int = 1000
    circles_max: int = 8
    r_max_fraction: float = 0.3
    r_min_fraction: float = 1e-4
    collection_seed: int = 0
    workers: int = 1
    store: str | None = None
    # basis
    n_samples: int = 10
    padding_seed: int = 0
    # data
    noise_level: float = 0.005
    noise_seed: int = 0
    # coordinate descent
    cd_tolerance: float = 1e-4
    cd_max_evaluations: int = 50_000
    cd_max_iterations: int | None = None
    cd_step_position: float = 0.05
    cd_step_radius: float = 0.05
    cd_step_weight: float = 0.05
    cd_step_shrink: float = 0.5
    cd_step_grow: float = 2.0
    cd_min_step: float = 1e-4
    cd_min_step_weight: float = 1e-4
    # output
    output_dir: str = "runs/latest"
    grid_resolution: int = 101
    histogram_bins: int = 20

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.n_samples > self.collection_size:
            raise ValueError(f"n_samples={self.n_samples} exceeds collection_size={self.collection_size}")
        if self.truth_mesh_scale < 1:
            raise ValueError("truth_mesh_scale must be >= 1")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be at least 2")
        # fail early on inconsistent geometry / optimizer settings
        self.domain()
        self.cd()

    # derived objects --------------------------------------------------------

    def domain(self) -> DomainSpec:
        return DomainSpec(self.radius, self.electrode_count, self.electrode_half_width,
                          self.electrode_offset)

    def impedance(self) -> ImpedanceSet:
        return ImpedanceSet.uniform(self.electrode_count, self.contact_impedance)

    def patterns(self) -> PatternSet:
        return rotation_scheme(base_pattern(self.electrode_count, self.pattern_kind,
                                            self.pattern_amplitude))

    def collection(self) -> CollectionSpec:
        return CollectionSpec.for_domain(self.domain(), N=self.collection_size,
                                         N_c_max=self.circles_max, seed=self.collection_seed,
                                         r_max_fraction=self.r_max_fraction,
                                         r_min_fraction=self.r_min_fraction)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(level=self.noise_level, seed=self.noise_seed)

    def cd(self) -> CDConfig:
        R = self.radius
        return CDConfig(tolerance=self.cd_tolerance, max_evaluations=self.cd_max_evaluations,
                        initial_step_position=self.cd_step_position * R,
                        initial_step_radius=self.cd_step_radius * R,
                        initial_step_weight=self.cd_step_weight,
                        step_shrink=self.cd_step_shrink, step_grow=self.cd_step_grow,
                        min_step=self.cd_min_step * R, min_step_weight=self.cd_min_step_weight,
                        radius_bound=R, max_iterations=self.cd_max_iterations)

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def export_histogram(field: np.ndarray, mesh: Mesh, bins: int = 20,
                     sigma_h: float = 0.2, sigma_c: float = 0.4) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted histogram of ``field`` over ``[sigma_h, sigma_c]``.

    Returns ``(edges, mass)`` with ``len(edges) == bins + 1``; the masses sum
    to the mesh area.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    lo, hi = min(sigma_h, sigma_c), max(sigma_h, sigma_c)
    mass, edges = np.histogram(np.clip(field, lo, hi), bins=bins, range=(lo, hi),
                               weights=mesh.element_areas)
    return edges, mass


def histogram_text(edges: np.ndarray, mass: np.ndarray) -> str:
    lines = ["# bin_lo bin_hi area fraction"]
    total = mass.sum()
    lines += [f"{a:.6g} {b:.6g} {m:.10g} {m / total:.6f}" for a, b, m in zip(edges[:-1], edges[1:], mass)]
    return "\n".join(lines) + "\n"


def step1_trace(J: np.ndarray) -> str:
    """Best-of-prefix misfit over the collection in index order."""
    best = np.minimum.accumulate(np.where(np.isfinite(J), J, np.inf))
    lines = ["# sample J best_so_far"]
    lines += [f"{i} {j!r} {b!r}" for i, (j, b) in enumerate(zip(J.tolist(), best.tolist()))]
    return "\n".join(lines) + "\n"


def version_tag() -> str:
    tag = f"eitsample {__version__}"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            tag += f" ({rev.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return tag


@dataclass
class RunResult:
    output_dir: Path
    mesh: Mesh
    truth: np.ndarray
    observed: np.ndarray
    initial_basis: Basis
    final_basis: Basis
    history: RunHistory
    J_initial: float
    J_final: float
    l2_initial: float
    l2_final: float
    l2_threshold: float
    evaluations: int
    timings: dict = field(default_factory=dict)


class _Run:
    """Bookkeeping for stages and written files."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        self.stage = "setup"
        self.timings: dict[str, float] = {}

    def write(self, name: str, content) -> Path:
        path = self.out / name
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content)
        self.files.append(name)
        return path

    def begin(self, stage: str) -> float:
        self.stage = stage
        logger.info("stage %s", stage)
        return time.perf_counter()

    def end(self, t0: float) -> None:
        self.timings[self.stage] = time.perf_counter() - t0


def build_store(cfg: ExperimentConfig, model: ForwardModel, patterns: PatternSet) -> PrecomputeStore:
    domain = cfg.domain()
    spec = cfg.collection()
    return precompute(generate_collection(spec, domain), model, patterns, spec=spec,
                      workers=cfg.workers)


def run_pipeline(cfg: ExperimentConfig, model_spec: ModelSpec | None = None,
                 store: PrecomputeStore | None = None) -> RunResult:
    """Mesh -> data -> collection store -> Step 1 -> padding -> Step 2 -> exports.

    ``store`` may be passed in to share one precomputed collection between
    runs; otherwise ``cfg.store`` is loaded if set, else the collection is
    generated and simulated (and saved under the run directory).
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    model_spec = model_spec or builtin_model(cfg.model, cfg.radius)
    run.write("config.yaml", cfg.to_yaml())
    try:
        return _run(cfg, model_spec, store, run)
    except Exception as err:
        manifest = {"stage": run.stage, "error": f"{type(err).__name__}: {err}",
                    "traceback": traceback.format_exc(), "artifacts": list(run.files)}
        (out / "failure.json").write_text(json.dumps(manifest, indent=2))
        raise


def _run(cfg: ExperimentConfig, model_spec: ModelSpec, store, run: _Run) -> RunResult:
    domain = cfg.domain()

    t = run.begin("mesh")
    mesh = build_disc_mesh(domain, cfg.mesh_elements)
    run.write("mesh.txt", mesh.to_text())
    patterns = cfg.patterns()
    run.write("patterns.txt", patterns.to_text())
    fwd = ForwardModel(mesh, cfg.impedance(), cfg.degree)
    run.end(t)

    t = run.begin("data")
    truth = model_spec.field(mesh)
    if cfg.truth_mesh_scale > 1:
        truth_mesh = build_disc_mesh(domain, int(round(cfg.mesh_elements * cfg.truth_mesh_scale)))
        clean = ForwardModel(truth_mesh, cfg.impedance(), cfg.degree).measure(
            model_spec.field(truth_mesh), patterns)
    else:
        clean = fwd.measure(truth, patterns)
    observed = add_noise(clean, cfg.noise())
    run.write("truth_field.txt", field_table(truth, mesh))
    save_measurements(run.out / "observed_clean.txt", clean, model=model_spec.name)
    save_measurements(run.out / "observed.txt", observed, model=model_spec.name,
                      noise_level=cfg.noise_level, noise_seed=cfg.noise_seed)
    run.files += ["observed_clean.txt", "observed.txt"]
    run.end(t)

    t = run.begin("precompute")
    if store is None and cfg.store:
        store = PrecomputeStore.load(cfg.store)
    if store is None:
        store = build_store(cfg, fwd, patterns)
        store.save(run.out / "store")
        run.files.append("store/")
    check_store(store, fwd, patterns)
    run.end(t)

    t = run.begin("step1")
    basis0, J_all = rank_and_select(store, observed, cfg.n_samples)
    run.write("step1_trace.txt", step1_trace(J_all))
    basis0 = pad_basis(basis0, cfg.circles_max, domain, np.random.default_rng(cfg.padding_seed))
    run.write("initial_basis.txt", basis0.to_text())
    sigma0 = blend(basis0, mesh)
    run.write("field_initial.txt", field_table(sigma0, mesh))
    run.end(t)

    t = run.begin("step2")
    objective = Objective(fwd, patterns, observed)
    basis, history = coordinate_descent(basis0, objective, cfg.cd(), truth=truth)
    run.write("final_basis.txt", basis.to_text())
    run.write("trace.txt", history.trace_text())
    run.write("moves.txt", history.moves_text())
    run.end(t)

    t = run.begin("export")
    final = blend(basis, mesh)
    binary = threshold(final, sigma_c=model_spec.sigma_c, sigma_h=model_spec.sigma_h)
    run.write("field_final.txt", field_table(final, mesh))
    grid = field_grid(final, mesh, cfg.grid_resolution)
    run.write("grid_final.txt", grid_text(grid))
    bgrid = field_grid(binary, mesh, cfg.grid_resolution)
    run.write("grid_threshold.txt", grid_text(bgrid))
    run.write("final_threshold.pgm", grid_pgm(bgrid, model_spec.sigma_h, model_spec.sigma_c))
    edges, mass = export_histogram(final, mesh, cfg.histogram_bins, model_spec.sigma_h, model_spec.sigma_c)
    run.write("histogram.txt", histogram_text(edges, mass))
    run.end(t)

    result = RunResult(
        output_dir=run.out, mesh=mesh, truth=truth, observed=observed,
        initial_basis=basis0, final_basis=basis, history=history,
        J_initial=history.iterations[0][2], J_final=history.iterations[-1][2],
        l2_initial=l2_error(sigma0, truth, mesh), l2_final=l2_error(final, truth, mesh),
        l2_threshold=l2_error(binary, truth, mesh), evaluations=history.evaluations,
        timings=dict(run.timings),
    )
    metadata = {
        "version": version_tag(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.to_dict(),
        "model": model_spec.name,
        "seeds": {"collection": cfg.collection_seed, "padding": cfg.padding_seed,
                  "noise": cfg.noise_seed},
        "mesh": {"elements": mesh.n_elements, "vertices": mesh.n_vertices, "digest": mesh.digest()},
        "store": {"size": len(store), "failed": int(store.failed.sum()),
                  "mesh_digest": store.header.get("mesh_digest")},
        "status": history.status,
        "evaluations": result.evaluations,
        "solves": objective.n_solves,
        "J_initial": result.J_initial,
        "J_final": result.J_final,
        "l2_initial": result.l2_initial,
        "l2_final": result.l2_final,
        "l2_threshold": result.l2_threshold,
        "timings": run.timings,
        "artifacts": run.files + ["metadata.json"],
    }
    (run.out / "metadata.json").write_text(json.dumps(metadata, indent=2))
    return result
