import json

import numpy as np
import pytest

from eitsample.cli import main
from eitsample.conductivity import SIGMA_C, SIGMA_H, CircleSample, connected_components
from eitsample.mesh import build_disc_mesh
from eitsample.models import MODEL_NAMES, CShape, builtin_model
from eitsample.pipeline import ExperimentConfig, export_histogram, run_pipeline, step1_trace


def tiny_config(tmp_path, **kw):
    base = dict(mesh_elements=300, collection_size=30, n_samples=3, cd_max_evaluations=200,
                noise_level=0.0, grid_resolution=21, output_dir=str(tmp_path / "run"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_models_on_reference_mesh(domain):
    mesh = build_disc_mesh(domain, 7730)
    truth1 = builtin_model("model1").field(mesh)
    assert connected_components(truth1 == SIGMA_C, mesh) == 3
    m2 = builtin_model("model2")
    radii = m2.truth.params[:, 2]
    assert len(radii) == 4 and np.all(radii == radii[0])
    assert radii[0] == builtin_model("model1").truth.params[:, 2].min()
    for name in MODEL_NAMES:
        spec = builtin_model(name)
        assert (spec.sigma_c, spec.sigma_h) == (0.4, 0.2)
        assert set(np.unique(spec.field(mesh))) == {SIGMA_H, SIGMA_C}
    with pytest.raises(ValueError):
        builtin_model("model4")


def test_c_shape_mask():
    c = CShape(inner_radius=1.0, outer_radius=2.0, opening=np.pi / 2)
    pts = np.array([[1.5, 0.0], [-1.5, 0.0], [0.0, 1.5], [0.5, 0.0], [3.0, 0.0]])
    np.testing.assert_array_equal(c.mask(pts), [False, True, True, False, False])


def test_histogram(coarse_mesh):
    n = coarse_mesh.n_elements
    binary = np.where(np.arange(n) % 3 == 0, SIGMA_C, SIGMA_H)
    edges, mass = export_histogram(binary, coarse_mesh, bins=10)
    assert len(edges) == 11
    assert np.count_nonzero(mass) == 2 and mass[0] > 0 and mass[-1] > 0
    _, mass = export_histogram(np.full(n, 0.33), coarse_mesh, bins=10)
    assert np.count_nonzero(mass) == 1
    assert mass.sum() == pytest.approx(np.pi * 0.01, rel=1e-2)
    with pytest.raises(ValueError):
        export_histogram(binary, coarse_mesh, bins=1)


def test_step1_trace():
    text = step1_trace(np.array([3.0, 1.0, 2.0, np.inf]))
    rows = [line.split() for line in text.splitlines()[1:]]
    assert [float(r[2]) for r in rows] == [3.0, 1.0, 1.0, 1.0]


def test_config_round_trip(tmp_path):
    cfg = tiny_config(tmp_path, model="model2")
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    assert ExperimentConfig.load(path) == cfg
    assert ExperimentConfig.load(path, noise_level=0.01).noise_level == 0.01
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"mesh_size": 3})
    with pytest.raises(ValueError):
        ExperimentConfig(n_samples=20, collection_size=10)
    with pytest.raises(ValueError, match="overlap"):
        ExperimentConfig(electrode_half_width=0.3)


def test_reference_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    ref = ExperimentConfig.load(root / "reference.yaml")
    assert (ref.mesh_elements, ref.degree, ref.collection_size, ref.n_samples) == (7730, 2, 10000, 10)
    assert ref.cd().max_evaluations == 50000 and ref.cd().tolerance == 1e-4
    assert ref.noise_level == 0.005 and ref.contact_impedance == 0.1
    ExperimentConfig.load(root / "desk.yaml")


def test_pipeline_artifacts_and_determinism(tmp_path):
    a = run_pipeline(tiny_config(tmp_path / "a"))
    b = run_pipeline(tiny_config(tmp_path / "b"))
    out = a.output_dir
    for name in ("config.yaml", "mesh.txt", "patterns.txt", "observed.txt", "truth_field.txt",
                 "store/header.json", "step1_trace.txt", "initial_basis.txt", "final_basis.txt",
                 "trace.txt", "moves.txt", "grid_final.txt", "grid_threshold.txt",
                 "final_threshold.pgm", "histogram.txt", "metadata.json"):
        assert (out / name).exists(), name
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seeds"] == {"collection": 0, "padding": 0, "noise": 0}
    assert meta["config"]["mesh_elements"] == 300
    assert meta["evaluations"] <= 200
    assert (a.output_dir / "trace.txt").read_bytes() == (b.output_dir / "trace.txt").read_bytes()
    assert (a.output_dir / "final_basis.txt").read_bytes() == (b.output_dir / "final_basis.txt").read_bytes()
    assert a.J_final <= a.J_initial


def test_pipeline_reuses_store(tmp_path):
    first = run_pipeline(tiny_config(tmp_path / "a"))
    cfg = tiny_config(tmp_path / "b", store=str(first.output_dir / "store"), noise_level=0.01)
    second = run_pipeline(cfg)
    assert not (second.output_dir / "store").exists()
    assert not np.array_equal(second.observed, first.observed)


def test_truth_mesh_scale_breaks_inverse_crime(tmp_path):
    cfg = tiny_config(tmp_path, truth_mesh_scale=2.0, cd_max_evaluations=1)
    result = run_pipeline(cfg)
    assert result.J_initial > 0


def test_failure_manifest(tmp_path):
    cfg = tiny_config(tmp_path, store=str(tmp_path / "missing"))
    with pytest.raises(FileNotFoundError):
        run_pipeline(cfg)
    manifest = json.loads((tmp_path / "run" / "failure.json").read_text())
    assert manifest["stage"] == "precompute"
    assert "mesh.txt" in manifest["artifacts"]


def test_custom_model(tmp_path):
    from eitsample.models import ModelSpec
    spec = ModelSpec("one", CircleSample(((0.02, 0.0, 0.03),)))
    result = run_pipeline(tiny_config(tmp_path), spec)
    assert json.loads((result.output_dir / "metadata.json").read_text())["model"] == "one"


def test_cli(tmp_path, capsys):
    common = ["--mesh-elements", "300", "--collection-size", "20"]
    assert main(["mesh", *common, "-o", str(tmp_path / "m.txt")]) == 0
    assert main(["gen-collection", *common, "-o", str(tmp_path / "c.txt")]) == 0
    assert main(["precompute", "--mesh", str(tmp_path / "m.txt"), *common, "-o", str(tmp_path / "s")]) == 0
    run = str(tmp_path / "run")
    assert main(["reconstruct", *common, "--n-samples", "2", "--cd-max-evaluations", "50",
                 "--noise-level", "0", "--output-dir", run]) == 0
    assert main(["evaluate", run]) == 0
    assert main(["export", run, "--resolution", "21", "-o", str(tmp_path / "exp")]) == 0
    assert (tmp_path / "exp" / "final_basis_threshold.pgm").exists()
    out = capsys.readouterr().out
    assert "l2_error" in out
    assert main(["reconstruct", "--n-samples", "5", "--collection-size", "2"]) == 2
