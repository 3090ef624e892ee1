"""
The forward problem
===================

Build the 16-electrode disc, drive it with the rotated trigonometric
voltage pattern and look at the electrode currents for a background
medium and for a single conductive inclusion.

Run with ``python demos/01_forward_model.py`` (a few seconds).
"""

# %%
import numpy as np

from eitsample.conductivity import CircleSample, rasterize
from eitsample.excitation import base_pattern, rotation_scheme
from eitsample.forward import ForwardModel, ImpedanceSet
from eitsample.mesh import DomainSpec, build_disc_mesh

np.set_printoptions(precision=4, suppress=True, linewidth=110)

# %% The domain: radius 0.1, sixteen electrodes of half-width 0.12 rad.
domain = DomainSpec(radius=0.1, electrode_count=16, electrode_half_width=0.12)
print(f"electrodes cover {100 * domain.coverage_fraction:.1f}% of the boundary")

mesh = build_disc_mesh(domain, target_elements=2000)
print(f"mesh: {mesh.n_elements} triangles, {mesh.n_vertices} vertices, "
      f"area {mesh.element_areas.sum():.6f} (disc: {domain.area:.6f})")
print("electrode lengths:", mesh.electrode_lengths()[:4], "... (arc 2wR = 0.024)")

# %% Sixteen patterns: the base pattern and its cyclic shifts.
patterns = rotation_scheme(base_pattern(16, "trig"))
print("pattern 1:", patterns.matrix[0])
print("pattern 2:", patterns.matrix[1])

# %% Currents for the homogeneous background sigma_h = 0.2.
model = ForwardModel(mesh, ImpedanceSet.uniform(16, 0.1))
background = np.full(mesh.n_elements, 0.2)
I0 = model.measure(background, patterns)
print("\ncurrents, pattern 1:", I0[0])
print("sum over electrodes (should vanish):", I0.sum(axis=1)[:4])

# %% An inclusion of sigma_c = 0.4 near electrode 1 changes the currents most
# on the electrodes closest to it.
inclusion = CircleSample(((0.05, 0.0, 0.02),))
I1 = model.measure(rasterize(inclusion, mesh), patterns)
change = np.abs(I1 - I0).sum(axis=0)
print("\nsummed |change| per electrode:", change)
print("largest change on electrode", int(np.argmax(change)) + 1)

# %% Reciprocity: the electrode conductance matrix is symmetric.
G = model.conductance_matrix(rasterize(inclusion, mesh))
print(f"\nmax |G - G^T| / max |G| = {np.abs(G - G.T).max() / np.abs(G).max():.1e}")
