"""
Built-in benchmark truths.

Geometries are approximations of the published pictures, scaled by the
domain radius: model1 has three inclusions of different size, model2 four
small equal inclusions (one near the centre), model3 a C-shaped annular
sector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conductivity import SIGMA_C, SIGMA_H, CircleSample, rasterize
from .mesh import Mesh


@dataclass(frozen=True)
class CShape:
    """Annular sector centred at ``center`` with its opening facing ``gap_direction``.

    Angles in radians; ``opening`` is the full angular width of the gap.
    """

    inner_radius: float
    outer_radius: float
    opening: float
    center: tuple = (0.0, 0.0)
    gap_direction: float = 0.0

    def mask(self, points: np.ndarray) -> np.ndarray:
        d = points - np.asarray(self.center)
        rho = np.hypot(d[:, 0], d[:, 1])
        phi = np.angle(np.exp(1j * (np.arctan2(d[:, 1], d[:, 0]) - self.gap_direction)))
        return (rho >= self.inner_radius) & (rho <= self.outer_radius) & (np.abs(phi) > self.opening / 2)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    truth: CircleSample | CShape
    sigma_c: float = SIGMA_C
    sigma_h: float = SIGMA_H
    approximate: bool = True

    def field(self, mesh: Mesh) -> np.ndarray:
        if isinstance(self.truth, CircleSample):
            return rasterize(self.truth, mesh)
        inside = self.truth.mask(mesh.element_centroids)
        return np.where(inside, self.sigma_c, self.sigma_h)


def builtin_model(name: str, R: float = 0.1) -> ModelSpec:
    if name == "model1":
        circles = ((0.45 * R, 0.35 * R, 0.25 * R),
                   (-0.45 * R, 0.30 * R, 0.15 * R),
                   (0.05 * R, -0.55 * R, 0.08 * R))
        return ModelSpec(name, CircleSample(circles))
    if name == "model2":
        r = 0.08 * R
        circles = ((0.05 * R, 0.08 * R, r),
                   (0.55 * R, 0.40 * R, r),
                   (-0.50 * R, 0.45 * R, r),
                   (-0.15 * R, -0.60 * R, r))
        return ModelSpec(name, CircleSample(circles))
    if name == "model3":
        return ModelSpec(name, CShape(inner_radius=0.25 * R, outer_radius=0.5 * R,
                                      opening=np.pi / 2, center=(0.1 * R, 0.0)))
    raise ValueError(f"unknown model {name!r}; choose model1, model2 or model3")


MODEL_NAMES = ("model1", "model2", "model3")
