"""Energy terms for correlation estimation.

Stereo/motion mode works on per-atom transform labels; multi-view mode works
on per-atom inverse-depth labels with a horizontally rectified camera array.
The data terms compare quantized measurements against the span of sensed,
transformed atoms; the robust variant optimizes jointly over the quantization
cells.  Smoothness penalizes dense-field differences between 4-neighbors with
a truncated L1 distance, and consistency compares measurements of the warped
reference against the received packet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import (AtomParams, DictionarySpec, IDENTITY_LABEL,
                         SearchWindow, TransformLabel, apply_label,
                         atom_support, render_atom)
from .predict import MotionField, predict_from_motion, warp_view
from .sensing import MeasurementPacket, apply_sensing, quantize
from .sparse import SparseApprox


@dataclass
class EnergyConfig:
    alpha1: float = 0.0
    alpha2: float = 0.0
    tau: float = 4.0
    robust_data: bool = False
    window: SearchWindow = field(default_factory=SearchWindow)
    quantized_consistency: bool = True
    literal_t_matrix: bool = False  # keep the x-translation in both motion rows

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass
class DepthLabelSpec:
    """Depth label grid and rectified camera geometry.

    Inverse depths are uniformly sampled over [1/z_max, 1/z_min]; label 0 is
    the farthest plane.  baselines[j] is the signed baseline of non-reference
    view j (j = 0 for the first compressed view).
    """

    z_min: float
    z_max: float
    level_count: int
    focal: float
    baselines: tuple[float, ...]

    def __post_init__(self):
        if not (0 < self.z_min < self.z_max):
            raise ValueError("need 0 < z_min < z_max")
        if self.level_count < 1:
            raise ValueError("level_count must be >= 1")
        if self.focal <= 0:
            raise ValueError("focal must be positive")

    @property
    def inverse_depths(self) -> np.ndarray:
        return np.linspace(1.0 / self.z_max, 1.0 / self.z_min, self.level_count)

    def depth_of_label(self, label: int) -> float:
        return float(1.0 / self.inverse_depths[label])


# ---------------------------------------------------------------------------
# data terms
# ---------------------------------------------------------------------------

def projection_residual(psi: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """||y - Psi Psi^+ y||^2 via minimum-norm least squares."""
    if psi.size == 0 or not np.any(psi):
        return float(y @ y), np.zeros(psi.shape[1] if psi.ndim == 2 else 0)
    coeffs, *_ = np.linalg.lstsq(psi, y, rcond=None)
    r = y - psi @ coeffs
    return float(r @ r), coeffs


def transformed_atoms(assignment: list[TransformLabel], approx: SparseApprox,
                      spec: DictionarySpec) -> list[AtomParams]:
    if len(assignment) != len(approx.atoms):
        raise ValueError("assignment length must equal the atom count")
    return [apply_label(p, l, spec) for p, l in zip(approx.atoms, assignment)]


def atom_columns(atoms: list[AtomParams], dims: tuple[int, int],
                 packet: MeasurementPacket) -> np.ndarray:
    cols = [apply_sensing(render_atom(p, dims), packet.sensing) for p in atoms]
    return np.stack(cols, axis=1)


def data_cost(assignment: list[TransformLabel], approx: SparseApprox,
              packet: MeasurementPacket, spec: DictionarySpec) -> float:
    """E_d: squared distance from dequantized measurements to span(Psi)."""
    atoms = transformed_atoms(assignment, approx, spec)
    psi = atom_columns(atoms, approx.dims, packet)
    cost, _ = projection_residual(psi, packet.dequantized)
    return cost


@dataclass
class RobustDataResult:
    cost: float
    coeffs: np.ndarray
    y_consistent: np.ndarray
    converged: bool
    iterations: int
    objective_trace: list[float]


def robust_data_cost_from_columns(psi: np.ndarray, packet: MeasurementPacket,
                                  tol: float = 1e-8,
                                  max_iter: int = 200) -> RobustDataResult:
    """Alternating exact minimization of ||y~ - Psi c~||^2 over the cells."""
    lo, hi = packet.cell_bounds
    y = packet.dequantized.copy()
    trace: list[float] = []
    coeffs = np.zeros(psi.shape[1])
    converged = False
    it = 0
    prev = math.inf
    for it in range(1, max_iter + 1):
        _, coeffs = projection_residual(psi, y)
        pred = psi @ coeffs
        y = np.clip(pred, lo, hi)
        r = y - pred
        obj = float(r @ r)
        trace.append(obj)
        if prev - obj < tol:
            converged = True
            break
        prev = obj
    return RobustDataResult(trace[-1], coeffs, y, converged, it, trace)


def robust_data_cost(assignment: list[TransformLabel], approx: SparseApprox,
                     packet: MeasurementPacket, spec: DictionarySpec,
                     tol: float = 1e-8, max_iter: int = 200) -> RobustDataResult:
    atoms = transformed_atoms(assignment, approx, spec)
    psi = atom_columns(atoms, approx.dims, packet)
    return robust_data_cost_from_columns(psi, packet, tol, max_iter)


# ---------------------------------------------------------------------------
# dense motion fields and smoothness
# ---------------------------------------------------------------------------

def dominant_atom_map(approx: SparseApprox, dims: tuple[int, int],
                      eps_scale: float = 0.01) -> np.ndarray:
    """Per-pixel index of the atom with maximum response; -1 outside supports.

    Ties break toward the lower atom index.
    """
    best = np.full(dims, -np.inf)
    out = np.full(dims, -1, dtype=np.int64)
    for k, p in enumerate(approx.atoms):
        g = render_atom(p, dims)
        mask = (g > eps_scale * float(g.max())) & (g > best)
        out[mask] = k
        best[mask] = g[mask]
    return out


def label_motion(p: AtomParams, p_new: AtomParams, xs: np.ndarray,
                 ys: np.ndarray, literal_t: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Dense motion of pixels (xs, ys) for one atom transformation.

    Implements [m_h; m_v] = [x - t_x; y - t_y] - S R T with S the scale
    ratio matrix, R the rotation by the angle offset and T the translated
    grid offset.  By default the second row of T subtracts the y-translation;
    `literal_t` restores the published variant that subtracts the
    x-translation in both rows.
    """
    dtheta = p_new.theta - p.theta
    rx = p.s_x / p_new.s_x
    ry = p.s_y / p_new.s_y
    c, s = math.cos(dtheta), math.sin(dtheta)
    dx = p_new.t_x - p.t_x
    dy = p_new.t_y - p.t_y
    t0 = xs - p.t_x - dx
    t1 = ys - p.t_y - (dx if literal_t else dy)
    srt0 = rx * (c * t0 + s * t1)
    srt1 = ry * (-s * t0 + c * t1)
    return (xs - p.t_x) - srt0, (ys - p.t_y) - srt1


def motion_field(assignment: list[TransformLabel], approx: SparseApprox,
                 dims: tuple[int, int], spec: DictionarySpec,
                 dominant: np.ndarray | None = None,
                 literal_t: bool = False) -> MotionField:
    """Dense motion field from per-atom labels via the dominant-atom rule."""
    atoms_new = transformed_atoms(assignment, approx, spec)
    if dominant is None:
        dominant = dominant_atom_map(approx, dims)
    m_h = np.zeros(dims)
    m_v = np.zeros(dims)
    yy, xx = np.mgrid[0:dims[0], 0:dims[1]].astype(np.float64)
    for k, (p, p_new, label) in enumerate(zip(approx.atoms, atoms_new, assignment)):
        if label.is_identity:
            continue
        mask = dominant == k
        if not mask.any():
            continue
        mh, mv = label_motion(p, p_new, xx[mask], yy[mask], literal_t)
        m_h[mask] = mh
        m_v[mask] = mv
    return MotionField(m_h, m_v)


def smoothness_cost(field: MotionField, tau: float) -> float:
    """E_s: truncated L1 difference of the field over 4-neighbor pairs."""
    dh_h = np.abs(np.diff(field.m_h, axis=1)) + np.abs(np.diff(field.m_v, axis=1))
    dh_v = np.abs(np.diff(field.m_h, axis=0)) + np.abs(np.diff(field.m_v, axis=0))
    return float(np.minimum(dh_h, tau).sum() + np.minimum(dh_v, tau).sum())


# ---------------------------------------------------------------------------
# consistency terms
# ---------------------------------------------------------------------------

def consistency_cost_from_field(field: MotionField, reference: np.ndarray,
                                packet: MeasurementPacket,
                                quantized: bool = True) -> float:
    """E_t: L2 distance between packet measurements and sensed warped reference."""
    predicted = predict_from_motion(reference, field)
    y = apply_sensing(predicted, packet.sensing)
    if quantized:
        _, y = quantize(y, packet.quant)
    return float(np.linalg.norm(packet.dequantized - y))


def consistency_cost(assignment: list[TransformLabel], reference: np.ndarray,
                     packet: MeasurementPacket, approx: SparseApprox,
                     spec: DictionarySpec, quantized: bool = True,
                     dominant: np.ndarray | None = None,
                     literal_t: bool = False) -> float:
    if reference.shape != tuple(packet.sensing.dims):
        raise ValueError("reference dims do not match the packet")
    fld = motion_field(assignment, approx, reference.shape, spec,
                       dominant=dominant, literal_t=literal_t)
    return consistency_cost_from_field(fld, reference, packet, quantized)


# ---------------------------------------------------------------------------
# multi-view terms
# ---------------------------------------------------------------------------

def project_atom(p: AtomParams, depth_label: int, view: int,
                 depth_spec: DepthLabelSpec,
                 dims: tuple[int, int]) -> tuple[AtomParams, bool]:
    """Project an atom into a rectified view at the given depth label.

    Shifts t_x by focal * baseline * (1/Z); other parameters are unchanged.
    Centers leaving the image clamp to the border, flagged in the second
    return value.
    """
    inv_z = float(depth_spec.inverse_depths[depth_label])
    shift = depth_spec.focal * depth_spec.baselines[view] * inv_z
    t_x = p.t_x + shift
    clamped = False
    if t_x < 0:
        t_x, clamped = 0.0, True
    elif t_x > dims[1] - 1:
        t_x, clamped = float(dims[1] - 1), True
    return AtomParams(p.generator, t_x, p.t_y, p.theta, p.s_x, p.s_y), clamped


def multiview_columns(depth_labels: list[int], approx: SparseApprox,
                      packet: MeasurementPacket, view: int,
                      depth_spec: DepthLabelSpec) -> np.ndarray:
    atoms = [project_atom(p, l, view, depth_spec, approx.dims)[0]
             for p, l in zip(approx.atoms, depth_labels)]
    return atom_columns(atoms, approx.dims, packet)


def multiview_data_cost(depth_labels: list[int], approx: SparseApprox,
                        packets: list[MeasurementPacket],
                        depth_spec: DepthLabelSpec,
                        robust: bool = False) -> float:
    """H_d: summed projection residuals over all non-reference views."""
    if not packets:
        raise ValueError("need at least one non-reference view")
    total = 0.0
    for j, packet in enumerate(packets):
        psi = multiview_columns(depth_labels, approx, packet, j, depth_spec)
        if robust:
            total += robust_data_cost_from_columns(psi, packet).cost
        else:
            cost, _ = projection_residual(psi, packet.dequantized)
            total += cost
    return total


def depth_field_from_labels(label_field: np.ndarray,
                            depth_spec: DepthLabelSpec) -> np.ndarray:
    inv = depth_spec.inverse_depths[label_field]
    return 1.0 / inv


def multiview_smoothness(depth_field: np.ndarray, tau: float) -> float:
    """H_s: truncated L1 difference of depth values over 4-neighbor pairs."""
    dh = np.abs(np.diff(depth_field, axis=1))
    dv = np.abs(np.diff(depth_field, axis=0))
    return float(np.minimum(dh, tau).sum() + np.minimum(dv, tau).sum())


def multiview_consistency(depth_field: np.ndarray, reference: np.ndarray,
                          packets: list[MeasurementPacket],
                          depth_spec: DepthLabelSpec,
                          quantized: bool = True) -> float:
    """H_t: summed consistency of per-view warped predictions."""
    total = 0.0
    for j, packet in enumerate(packets):
        predicted = warp_view(reference, depth_field, depth_spec.focal,
                              depth_spec.baselines[j])
        y = apply_sensing(predicted, packet.sensing)
        if quantized:
            _, y = quantize(y, packet.quant)
        total += float(np.linalg.norm(packet.dequantized - y))
    return total


def identity_assignment(approx: SparseApprox) -> list[TransformLabel]:
    return [IDENTITY_LABEL] * len(approx.atoms)
