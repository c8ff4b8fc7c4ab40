"""Parametric dictionary of geometric atoms.

Atoms are generated by translating, rotating and anisotropically scaling one
of two mother functions: an isotropic Gaussian blob, or a Gaussian along one
axis combined with the second derivative of a Gaussian along the orthogonal
axis (an edge detector).  All atoms are L2-normalized after rendering on the
discrete pixel grid, so matching-pursuit coefficients are plain inner
products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np


class Generator(Enum):
    GAUSSIAN = "gaussian"
    EDGE = "edge"


class AtomRenderError(ValueError):
    """Raised when an atom is numerically zero on the pixel grid."""


class LabelOutOfRangeError(ValueError):
    """Raised when applying a transform label leaves the valid parameter grid."""


class SupportError(ValueError):
    """Raised when an atom support threshold yields an empty pixel set."""


@dataclass(frozen=True)
class AtomParams:
    """One geometric atom: generator plus (t_x, t_y, theta, s_x, s_y)."""

    generator: Generator
    t_x: float
    t_y: float
    theta: float
    s_x: float
    s_y: float

    def __post_init__(self):
        if self.s_x <= 0 or self.s_y <= 0:
            raise ValueError("atom scales must be positive")
        # normalize angle into [0, pi)
        theta = self.theta % math.pi
        object.__setattr__(self, "theta", theta)

    def validate_center(self, dims: tuple[int, int]) -> None:
        n1, n2 = dims
        if not (0 <= self.t_x < n2 and 0 <= self.t_y < n1):
            raise ValueError("atom center outside the image")


@dataclass(frozen=True)
class DictionarySpec:
    """Discretized parameter grid of the dictionary.

    Rotations start at 0 with increment pi/18.  Scales are equi-distributed
    in logarithmic scale, vertically over (1, N1/8) and horizontally over
    (1, N2/9.77).  Scale ranges rescale with the image dims.
    """

    image_dims: tuple[int, int]
    rotation_count: int = 10
    scale_count: int = 5

    def __post_init__(self):
        n1, n2 = self.image_dims
        if n1 <= 0 or n2 <= 0:
            raise ValueError("image dims must be positive")
        if self.rotation_count < 1 or self.scale_count < 1:
            raise ValueError("rotation_count and scale_count must be >= 1")

    @property
    def rotations(self) -> np.ndarray:
        return (np.arange(self.rotation_count) * (math.pi / 18.0)) % math.pi

    @property
    def scales_h(self) -> np.ndarray:
        hi = max(self.image_dims[1] / 9.77, 1.0 + 1e-9)
        return np.logspace(0.0, math.log10(hi), self.scale_count)

    @property
    def scales_v(self) -> np.ndarray:
        hi = max(self.image_dims[0] / 8.0, 1.0 + 1e-9)
        return np.logspace(0.0, math.log10(hi), self.scale_count)

    def rotation_index(self, theta: float) -> int:
        return _grid_index(self.rotations, theta % math.pi, "rotation")

    def sx_index(self, s_x: float) -> int:
        return _grid_index(self.scales_h, s_x, "horizontal scale")

    def sy_index(self, s_y: float) -> int:
        return _grid_index(self.scales_v, s_y, "vertical scale")

    def atom(self, generator: Generator, t_x: float, t_y: float,
             i_theta: int, i_sx: int, i_sy: int) -> AtomParams:
        return AtomParams(generator, t_x, t_y, float(self.rotations[i_theta]),
                          float(self.scales_h[i_sx]), float(self.scales_v[i_sy]))

    def iter_shape_params(self) -> Iterator[tuple[Generator, int, int, int]]:
        """All (generator, i_theta, i_sx, i_sy) combos, lexicographic order."""
        for gen in (Generator.GAUSSIAN, Generator.EDGE):
            for it in range(self.rotation_count):
                for ia in range(self.scale_count):
                    for ib in range(self.scale_count):
                        yield gen, it, ia, ib

    def to_config(self) -> dict[str, str]:
        return {
            "dict.n1": str(self.image_dims[0]),
            "dict.n2": str(self.image_dims[1]),
            "dict.rotation_count": str(self.rotation_count),
            "dict.scale_count": str(self.scale_count),
        }

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "DictionarySpec":
        return cls(
            image_dims=(int(cfg["dict.n1"]), int(cfg["dict.n2"])),
            rotation_count=int(cfg.get("dict.rotation_count", "10")),
            scale_count=int(cfg.get("dict.scale_count", "5")),
        )


def _grid_index(grid: np.ndarray, value: float, name: str) -> int:
    idx = int(np.argmin(np.abs(grid - value)))
    if not math.isclose(float(grid[idx]), value, rel_tol=1e-9, abs_tol=1e-9):
        raise ValueError(f"{name} value {value} is not on the dictionary grid")
    return idx


@dataclass(frozen=True)
class TransformLabel:
    """Candidate local transformation: integer offsets on the parameter grid."""

    d_tx: int = 0
    d_ty: int = 0
    d_theta: int = 0
    d_sx: int = 0
    d_sy: int = 0

    @property
    def is_identity(self) -> bool:
        return self == IDENTITY_LABEL


IDENTITY_LABEL = TransformLabel(0, 0, 0, 0, 0)


@dataclass(frozen=True)
class SearchWindow:
    """Half-widths of the search window per atom parameter."""

    dt_x: int = 0
    dt_y: int = 0
    d_theta: int = 0
    d_sx: int = 0
    d_sy: int = 0

    def __post_init__(self):
        for v in (self.dt_x, self.dt_y, self.d_theta, self.d_sx, self.d_sy):
            if v < 0:
                raise ValueError("window components must be non-negative")


def _grids(p: AtomParams, dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    n1, n2 = dims
    x = np.arange(n2, dtype=np.float64) - p.t_x
    y = np.arange(n1, dtype=np.float64) - p.t_y
    xx = x[np.newaxis, :]
    yy = y[:, np.newaxis]
    c, s = math.cos(p.theta), math.sin(p.theta)
    g1 = (c * xx + s * yy) / p.s_x
    g2 = (c * yy - s * xx) / p.s_y
    return g1, g2


def render_atom(p: AtomParams, dims: tuple[int, int]) -> np.ndarray:
    """Render the atom on a dims-shaped grid, L2-normalized."""
    if dims[0] <= 0 or dims[1] <= 0:
        raise ValueError("dims must be positive")
    g1, g2 = _grids(p, dims)
    r2 = g1 * g1 + g2 * g2
    if p.generator is Generator.GAUSSIAN:
        grid = np.exp(-r2)
    else:
        grid = (4.0 * g2 * g2 - 2.0) * np.exp(-r2)
    norm = float(np.linalg.norm(grid))
    if norm < 1e-300 or not np.isfinite(norm):
        raise AtomRenderError("atom vanishes on grid")
    return grid / norm


def apply_label(p: AtomParams, label: TransformLabel,
                spec: DictionarySpec) -> AtomParams:
    """Compose a transform label with atom parameters.

    Translations add in integer pixels; the rotation offset moves on the
    rotation grid with wraparound; scale offsets move on the log-scale grid
    without wraparound.  Results that leave the image or the scale grid raise
    LabelOutOfRangeError (callers exclude such labels).
    """
    n1, n2 = spec.image_dims
    t_x = p.t_x + label.d_tx
    t_y = p.t_y + label.d_ty
    if not (0 <= t_x < n2 and 0 <= t_y < n1):
        raise LabelOutOfRangeError("label out of range")
    theta = p.theta
    if label.d_theta != 0:
        it = (spec.rotation_index(p.theta) + label.d_theta) % spec.rotation_count
        theta = float(spec.rotations[it])
    s_x = p.s_x
    if label.d_sx != 0:
        ia = spec.sx_index(p.s_x) + label.d_sx
        if not (0 <= ia < spec.scale_count):
            raise LabelOutOfRangeError("label out of range")
        s_x = float(spec.scales_h[ia])
    s_y = p.s_y
    if label.d_sy != 0:
        ib = spec.sy_index(p.s_y) + label.d_sy
        if not (0 <= ib < spec.scale_count):
            raise LabelOutOfRangeError("label out of range")
        s_y = float(spec.scales_v[ib])
    return AtomParams(p.generator, t_x, t_y, theta, s_x, s_y)


def atom_support(p: AtomParams, dims: tuple[int, int],
                 eps: float | None = None) -> np.ndarray:
    """Boolean mask of pixels where the rendered atom exceeds eps.

    Defaults to eps = 0.01 * peak value of the rendered atom.
    """
    grid = render_atom(p, dims)
    if eps is None:
        eps = 0.01 * float(grid.max())
    if eps <= 0:
        raise ValueError("eps must be positive")
    mask = grid > eps
    if not mask.any():
        raise SupportError("atom support empty")
    return mask


def enumerate_labels(window: SearchWindow,
                     spec: DictionarySpec) -> list[TransformLabel]:
    """Cartesian product of per-parameter offsets, lexicographic order."""
    labels = []
    for dtx in range(-window.dt_x, window.dt_x + 1):
        for dty in range(-window.dt_y, window.dt_y + 1):
            for dth in range(-window.d_theta, window.d_theta + 1):
                for dsx in range(-window.d_sx, window.d_sx + 1):
                    for dsy in range(-window.d_sy, window.d_sy + 1):
                        labels.append(TransformLabel(dtx, dty, dth, dsx, dsy))
    return labels
