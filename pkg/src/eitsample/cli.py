"""
Command line entry point: ``eitsample <command> [--config FILE] [--<field> VALUE ...]``.

Every :class:`~eitsample.pipeline.ExperimentConfig` field is available as a
``--field-name`` flag that overrides the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

from .conductivity import Basis, blend, field_grid, grid_pgm, grid_text, l2_error, threshold
from .forward import ForwardModel, load_measurements
from .mesh import Mesh, build_disc_mesh
from .models import builtin_model
from .objective import Objective
from .pipeline import ExperimentConfig, build_store, export_histogram, histogram_text, run_pipeline
from .sampling import generate_collection, samples_to_text

log = logging.getLogger("eitsample")


def _field_type(f: dataclasses.Field):
    hint = typing.get_type_hints(ExperimentConfig)[f.name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    base = args[0] if args else hint
    return base if base in (int, float, str) else str


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    g = p.add_argument_group("config overrides")
    for f in dataclasses.fields(ExperimentConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=_field_type(f), default=None)


def _config(args) -> ExperimentConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)
                 if getattr(args, f.name, None) is not None}
    if args.config:
        return ExperimentConfig.load(args.config, **overrides)
    return ExperimentConfig.from_dict(overrides)


def _model_and_patterns(cfg: ExperimentConfig, mesh: Mesh):
    return ForwardModel(mesh, cfg.impedance(), cfg.degree), cfg.patterns()


def cmd_mesh(args) -> int:
    cfg = _config(args)
    mesh = build_disc_mesh(cfg.domain(), cfg.mesh_elements)
    mesh.save(args.output)
    print(f"{mesh.n_elements} elements, {mesh.n_vertices} vertices, "
          f"coverage {cfg.domain().coverage_fraction:.4f} -> {args.output}")
    return 0


def cmd_gen_collection(args) -> int:
    cfg = _config(args)
    samples = generate_collection(cfg.collection(), cfg.domain())
    Path(args.output).write_text(samples_to_text(samples))
    print(f"{len(samples)} samples (seed {cfg.collection_seed}) -> {args.output}")
    return 0


def cmd_precompute(args) -> int:
    cfg = _config(args)
    mesh = Mesh.load(args.mesh) if args.mesh else build_disc_mesh(cfg.domain(), cfg.mesh_elements)
    model, patterns = _model_and_patterns(cfg, mesh)
    store = build_store(cfg, model, patterns)
    store.save(args.output)
    print(f"{len(store)} records ({int(store.failed.sum())} failed) -> {args.output}")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg)
    summary = {"output_dir": str(result.output_dir), "status": result.history.status,
               "evaluations": result.evaluations, "J_initial": result.J_initial,
               "J_final": result.J_final, "l2_initial": result.l2_initial,
               "l2_final": result.l2_final, "l2_threshold": result.l2_threshold}
    print(json.dumps(summary, indent=2))
    return 0


def _run_inputs(run_dir: Path, basis_name: str):
    cfg = ExperimentConfig.load(run_dir / "config.yaml")
    mesh = Mesh.load(run_dir / "mesh.txt")
    return cfg, mesh, Basis.load(run_dir / basis_name)


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run)
    cfg, mesh, basis = _run_inputs(run_dir, args.basis)
    model, patterns = _model_and_patterns(cfg, mesh)
    observed, _ = load_measurements(args.observed or run_dir / "observed.txt")
    field = blend(basis, mesh)
    J = Objective(model, patterns, observed)(field)
    truth = builtin_model(cfg.model, cfg.radius).field(mesh)
    print(f"J {J!r}")
    print(f"l2_error {l2_error(field, truth, mesh)!r}")
    print(f"l2_error_threshold {l2_error(threshold(field), truth, mesh)!r}")
    return 0


def cmd_export(args) -> int:
    run_dir = Path(args.run)
    cfg, mesh, basis = _run_inputs(run_dir, args.basis)
    out = Path(args.output or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    field = blend(basis, mesh)
    stem = Path(args.basis).stem
    grid = field_grid(field, mesh, args.resolution)
    (out / f"{stem}_grid.txt").write_text(grid_text(grid))
    (out / f"{stem}.pgm").write_bytes(grid_pgm(grid))
    tgrid = field_grid(threshold(field), mesh, args.resolution)
    (out / f"{stem}_threshold_grid.txt").write_text(grid_text(tgrid))
    (out / f"{stem}_threshold.pgm").write_bytes(grid_pgm(tgrid))
    (out / f"{stem}_histogram.txt").write_text(histogram_text(*export_histogram(field, mesh, args.bins)))
    print(f"exported {stem} to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eitsample", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build the disc mesh")
    _add_config_flags(p)
    p.add_argument("-o", "--output", default="mesh.txt")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("gen-collection", help="generate a random circle-sample collection")
    _add_config_flags(p)
    p.add_argument("-o", "--output", default="collection.txt")
    p.set_defaults(func=cmd_gen_collection)

    p = sub.add_parser("precompute", help="simulate a collection and write the data store")
    _add_config_flags(p)
    p.add_argument("--mesh", dest="mesh", help="mesh file (default: build from config)")
    p.add_argument("-o", "--output", default="store")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("reconstruct", help="run the full two-step reconstruction")
    _add_config_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="misfit and L2 error of a basis from a run directory")
    p.add_argument("run", help="run directory")
    p.add_argument("--basis", default="final_basis.txt")
    p.add_argument("--observed", help="measurement file (default: the run's observed.txt)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="grids, PGM images and histogram of a basis")
    p.add_argument("run", help="run directory")
    p.add_argument("--basis", default="final_basis.txt")
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("-o", "--output", help="output directory (default: the run directory)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"eitsample {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
