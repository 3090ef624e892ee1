"""
Sample-based reconstruction of binary conductivity images in 2D electrical
impedance tomography.

Modules, in pipeline order: ``mesh`` (disc triangulation with electrodes),
``excitation`` (voltage patterns), ``forward`` (complete electrode model
solver), ``conductivity`` (circle samples and blended fields), ``sampling``
(random collections and their precomputed data), ``objective`` (misfit and
evaluation budget), ``optimizer`` (ranking and coordinate descent),
``models`` (benchmark truths) and ``pipeline`` (configured end-to-end runs).
"""

__version__ = "0.1.0"
