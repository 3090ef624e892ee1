"""Applied electrode voltages and the cyclic rotation scheme."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def _check_ground(values: np.ndarray) -> None:
    scale = np.max(np.abs(values)) if values.size else 0.0
    if abs(values.sum()) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise ValueError(f"voltages must sum to zero, got sum {values.sum():.3g}")


@dataclass(frozen=True, eq=False)
class VoltagePattern:
    """Potentials applied to the m electrodes (volts); must sum to zero."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a voltage pattern needs at least two electrode values")
        _check_ground(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.size

    def __eq__(self, other):
        return isinstance(other, VoltagePattern) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class PatternSet:
    patterns: tuple

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        if len({p.m for p in self.patterns}) != 1:
            raise ValueError("all patterns must drive the same number of electrodes")

    @property
    def matrix(self) -> np.ndarray:
        """(k, l) array of applied potentials."""
        return np.vstack([p.values for p in self.patterns])

    @property
    def m(self) -> int:
        return self.patterns[0].m

    def __len__(self):
        return len(self.patterns)

    def __getitem__(self, k):
        return self.patterns[k]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()[:16]

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("# eitsample patterns v1: rows = pattern k, columns = electrode l\n")
        np.savetxt(out, self.matrix, fmt="%.17g")
        return out.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "PatternSet":
        return cls(tuple(VoltagePattern(row) for row in np.loadtxt(path, ndmin=2)))


def base_pattern(m: int, kind="trig", amplitude: float = 1.0) -> VoltagePattern:
    """Build the first drive pattern.

    ``kind`` is ``"trig"`` (A sin(2 pi l / m)), ``"alternating"`` (A (-1)^l,
    even m only) or an explicit sequence of m potentials.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 electrodes, got {m}")
    if isinstance(kind, str):
        l = np.arange(1, m + 1)
        if kind == "trig":
            values = amplitude * np.sin(2 * np.pi * l / m)
            # exact symmetric cancellation; rounding leaves ~1e-16 residue
            values -= values.mean()
        elif kind == "alternating":
            if m % 2:
                raise ValueError(f"alternating pattern needs even m, got {m}")
            values = amplitude * (-1.0) ** l
        else:
            raise ValueError(f"unknown pattern kind {kind!r}")
    else:
        values = np.asarray(kind, dtype=float)
        if values.shape != (m,):
            raise ValueError(f"custom pattern must have length {m}, got {values.shape}")
    return VoltagePattern(values)


def rotation_scheme(base: VoltagePattern) -> PatternSet:
    """m patterns; pattern k is ``base`` cyclically shifted by k - 1 electrodes."""
    return PatternSet(tuple(VoltagePattern(np.roll(base.values, -k)) for k in range(base.m)))
