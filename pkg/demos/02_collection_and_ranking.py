"""
Step 1: a sample collection ranked against measurements
=======================================================

Random circle-union samples are simulated once; ranking them against new
data is then pure arithmetic. The best ten, equally weighted, form the
initial guess for the coordinate descent.

Run with ``python demos/02_collection_and_ranking.py`` (about 5 seconds).
"""

# %%
import numpy as np

from eitsample.conductivity import Basis, blend, l2_error
from eitsample.excitation import base_pattern, rotation_scheme
from eitsample.forward import ForwardModel, ImpedanceSet
from eitsample.mesh import DomainSpec, build_disc_mesh
from eitsample.models import builtin_model
from eitsample.optimizer import pad_basis, rank_and_select
from eitsample.sampling import CollectionSpec, generate_collection, precompute

domain = DomainSpec()
mesh = build_disc_mesh(domain, 2000)
patterns = rotation_scheme(base_pattern(16))
model = ForwardModel(mesh, ImpedanceSet.uniform(16, 0.1))

# %% A collection of 1000 samples with 1..8 circles of radius <= 0.3 R.
spec = CollectionSpec.for_domain(domain, N=1000, N_c_max=8, seed=1)
collection = generate_collection(spec, domain)
counts = np.bincount([s.n_circles for s in collection])[1:]
print("samples per circle count 1..8:", counts)

store = precompute(collection, model, patterns, spec=spec)
print(f"store: {len(store)} records of {store.data.shape[1]}x{store.data.shape[2]} currents")

# %% Synthetic data from the three-inclusion benchmark.
truth_spec = builtin_model("model1")
truth = truth_spec.field(mesh)
observed = model.measure(truth, patterns)

basis, J = rank_and_select(store, observed, n_samples=10)
print("\nbest ten samples:", basis.indices)
print("their misfits:", np.round(J[list(basis.indices)], 8))
print("median misfit over the collection:", np.median(J))

# %% Padding with zero-radius circles gives every sample 8 circles
# without changing the field, so all samples share one control layout.
padded = pad_basis(basis, 8, domain, np.random.default_rng(0))
same = np.array_equal(blend(padded, mesh), blend(basis, mesh))
print("\npadded field identical:", same)

sigma0 = blend(padded, mesh)
best = Basis(basis.samples[:1], np.ones(1))
print(f"L2 error of the best sample:       {l2_error(blend(best, mesh), truth, mesh):.5f}")
print(f"L2 error of the equal-weight blend: {l2_error(sigma0, truth, mesh):.5f}")
print(f"L2 error of the empty background:  {l2_error(np.full_like(truth, 0.2), truth, mesh):.5f}")
