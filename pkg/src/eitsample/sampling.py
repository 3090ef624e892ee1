"""
Random circle-union sample collections and the precomputed data store.

Each stored record holds a sample's circle triplets and its m x m electrode
currents, so ranking a collection against new measurements needs no PDE
solves.
"""

from __future__ import annotations

import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .conductivity import SIGMA_C, SIGMA_H, CircleCase, CircleSample, classify_circle, rasterize, Circle
from .excitation import PatternSet
from .forward import ForwardModel
from .mesh import DomainSpec

logger = logging.getLogger(__name__)

MAX_RESAMPLE = 1000


@dataclass(frozen=True)
class CollectionSpec:
    N: int = 10000
    N_c_max: int = 8
    r_min: float = 1e-5
    r_max: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.N_c_max < 1:
            raise ValueError("N and N_c_max must be at least 1")
        if not 0 < self.r_min <= self.r_max:
            raise ValueError(f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")

    @classmethod
    def for_domain(cls, domain: DomainSpec, N=10000, N_c_max=8, seed=0,
                   r_max_fraction=0.3, r_min_fraction=1e-4) -> "CollectionSpec":
        R = domain.radius
        return cls(N=N, N_c_max=N_c_max, r_min=r_min_fraction * R,
                   r_max=r_max_fraction * R, seed=seed)


def random_center(rng: np.random.Generator, R: float) -> tuple[float, float]:
    """Area-uniform point in the open disc of radius R."""
    rho = R * np.sqrt(rng.random())
    theta = 2 * np.pi * rng.random()
    return rho * np.cos(theta), rho * np.sin(theta)


def _random_circle(rng, spec: CollectionSpec, R: float) -> Circle:
    for _ in range(MAX_RESAMPLE):
        x01, x02 = random_center(rng, R)
        # uniform on (r_min, r_max]
        r = spec.r_max - (spec.r_max - spec.r_min) * rng.random()
        c = Circle(x01, x02, r)
        if classify_circle(c, R) not in (CircleCase.S4_ZERO_RADIUS, CircleCase.S5_FULLY_OUTSIDE):
            return c
    raise RuntimeError(f"no admissible circle after {MAX_RESAMPLE} draws; check r_min/r_max")


def generate_collection(spec: CollectionSpec, domain: DomainSpec,
                        sigma_c: float = SIGMA_C, sigma_h: float = SIGMA_H) -> list[CircleSample]:
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.N):
        n_c = int(rng.integers(1, spec.N_c_max + 1))
        circles = tuple(_random_circle(rng, spec, domain.radius) for _ in range(n_c))
        out.append(CircleSample(circles, sigma_c, sigma_h))
    return out


@dataclass
class PrecomputeStore:
    """Collection samples with their simulated currents ``data[i]`` (m x m).

    ``failed[i]`` marks records whose forward solve raised; their data is NaN
    and ``diagnostics[i]`` holds the message.
    """

    header: dict
    samples: list
    data: np.ndarray
    failed: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def m(self) -> int:
        return self.data.shape[-1]

    def save(self, directory) -> None:
        """Write ``header.json`` and ``records.txt`` into ``directory``.

        Record line layout (whitespace separated)::

            index status n_circles [x01 x02 r] * n_circles  D[0,0] D[0,1] ... D[m-1,m-1]

        with ``status`` 0 = ok, 1 = failed and D in row-major (pattern, electrode) order.
        """
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        header = dict(self.header, N=len(self), m=self.m,
                      diagnostics={str(k): v for k, v in self.diagnostics.items()})
        (d / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True))
        with open(d / "records.txt", "w") as fh:
            fh.write("# index status n_circles (x01 x02 r)*n_circles D(k,l) row-major\n")
            for i, (s, D, bad) in enumerate(zip(self.samples, self.data, self.failed)):
                vals = [repr(float(v)) for v in s.params.ravel()] + [repr(float(v)) for v in D.ravel()]
                fh.write(f"{i} {int(bad)} {s.n_circles} " + " ".join(vals) + "\n")

    @classmethod
    def load(cls, directory) -> "PrecomputeStore":
        d = Path(directory)
        header = json.loads((d / "header.json").read_text())
        diagnostics = {int(k): v for k, v in header.pop("diagnostics", {}).items()}
        m = header["m"]
        sigma_c, sigma_h = header["sigma_c"], header["sigma_h"]
        samples, data, failed = [], [], []
        with open(d / "records.txt") as fh:
            for line in fh:
                if line.startswith("#"):
                    continue
                tok = line.split()
                status, n_c = int(tok[1]), int(tok[2])
                vals = np.array([float(t) for t in tok[3:]])
                samples.append(CircleSample(tuple(map(tuple, vals[:3 * n_c].reshape(-1, 3))), sigma_c, sigma_h))
                data.append(vals[3 * n_c:].reshape(m, m))
                failed.append(bool(status))
        if len(samples) != header["N"]:
            raise ValueError(f"store has {len(samples)} records, header says {header['N']}")
        return cls(header, samples, np.array(data), np.array(failed), diagnostics)


def _simulate_chunk(model: ForwardModel, patterns: PatternSet, samples, start: int):
    out = []
    for offset, s in enumerate(samples):
        try:
            D = model.measure(rasterize(s, model.mesh), patterns)
            if not np.all(np.isfinite(D)):
                raise FloatingPointError("non-finite currents")
            out.append((start + offset, D, None))
        except (ValueError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as err:
            out.append((start + offset, None, f"{type(err).__name__}: {err}"))
    return out


def precompute(collection, model: ForwardModel, patterns: PatternSet, *,
               spec: CollectionSpec | None = None, workers: int = 1,
               chunk_size: int = 64) -> PrecomputeStore:
    """Simulate every sample of ``collection``; results are keyed by index."""
    N, m = len(collection), len(patterns)
    data = np.full((N, m, patterns.m), np.nan)
    failed = np.zeros(N, dtype=bool)
    diagnostics = {}
    chunks = [(collection[i:i + chunk_size], i) for i in range(0, N, chunk_size)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_simulate_chunk, *zip(*[(model, patterns, c, i) for c, i in chunks]))
            results = [r for chunk in results for r in chunk]
    else:
        results = [r for c, i in chunks for r in _simulate_chunk(model, patterns, c, i)]
    for i, D, err in results:
        if err is None:
            data[i] = D
        else:
            failed[i] = True
            diagnostics[i] = err
            logger.warning("sample %d failed: %s", i, err)
    s0 = collection[0] if N else CircleSample(())
    header = {
        "mesh_digest": model.mesh.digest(),
        "model_digest": model.digest(),
        "pattern_digest": patterns.digest(),
        "patterns": patterns.matrix.tolist(),
        "Z": list(model.impedance.Z),
        "degree": model.degree,
        "sigma_c": s0.sigma_c,
        "sigma_h": s0.sigma_h,
        "collection": asdict(spec) if spec is not None else None,
    }
    return PrecomputeStore(header, list(collection), data, failed, diagnostics)


def check_store(store: PrecomputeStore, model: ForwardModel, patterns: PatternSet) -> None:
    """Raise if the store was computed with a different mesh/impedance/pattern set."""
    if store.header.get("model_digest") != model.digest():
        raise ValueError("store was computed on a different mesh, impedance set or degree")
    if store.header.get("pattern_digest") != patterns.digest():
        raise ValueError("store was computed with a different pattern set")


def samples_to_text(samples) -> str:
    out = io.StringIO()
    out.write("# sample x01 x02 r\n")
    for i, s in enumerate(samples):
        for c in s.circles:
            out.write(f"{i} {c.x01!r} {c.x02!r} {c.r!r}\n")
    return out.getvalue()


def samples_from_text(text: str, sigma_c=SIGMA_C, sigma_h=SIGMA_H) -> list[CircleSample]:
    rows = np.loadtxt(io.StringIO(text), ndmin=2)
    n = int(rows[:, 0].max()) + 1 if rows.size else 0
    return [CircleSample(tuple(map(tuple, rows[rows[:, 0] == i, 1:4])), sigma_c, sigma_h) for i in range(n)]
