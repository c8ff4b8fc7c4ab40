"""Multi-label MRF solver: max-flow core and alpha-expansion driver.

Max-flow is Dinic's algorithm on paired edge arrays (reverse edge = e ^ 1),
JIT-compiled with numba.  Alpha-expansion reduces each move to a binary
s-t cut with the standard submodular decomposition; non-submodular terms are
truncated upward and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .dictionary import (DictionarySpec, IDENTITY_LABEL, TransformLabel,
                         apply_label, enumerate_labels, render_atom)
from .energy import (DepthLabelSpec, EnergyConfig, atom_columns,
                     consistency_cost_from_field, dominant_atom_map,
                     label_motion, motion_field, multiview_columns,
                     multiview_consistency, multiview_data_cost,
                     multiview_smoothness, project_atom,
                     projection_residual, robust_data_cost_from_columns)
from .predict import MotionField
from .sensing import MeasurementPacket, apply_sensing
from .sparse import SparseApprox

_EPS = 1e-12
_LARGE = 1e15  # finite stand-in for a forbidden label


# ---------------------------------------------------------------------------
# max-flow / min-cut
# ---------------------------------------------------------------------------

@njit(cache=True)
def _dinic(n, head, nxt, to, cap, s, t):  # pragma: no cover - jitted
    flow = 0.0
    level = np.empty(n, np.int32)
    it = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    estack = np.empty(n + 1, np.int64)
    while True:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            e = head[u]
            while e != -1:
                v = to[e]
                if cap[e] > _EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
                e = nxt[e]
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = head[i]
        while True:
            # DFS for one augmenting path in the level graph
            u = s
            depth = 0
            found = False
            while True:
                if u == t:
                    found = True
                    break
                e = it[u]
                while e != -1:
                    v = to[e]
                    if cap[e] > _EPS and level[v] == level[u] + 1:
                        break
                    e = nxt[e]
                    it[u] = e
                if e == -1:
                    level[u] = -1  # dead end
                    if depth == 0:
                        break
                    depth -= 1
                    u = to[estack[depth] ^ 1]
                else:
                    estack[depth] = e
                    depth += 1
                    u = to[e]
            if not found:
                break
            b = cap[estack[0]]
            for i in range(1, depth):
                if cap[estack[i]] < b:
                    b = cap[estack[i]]
            for i in range(depth):
                cap[estack[i]] -= b
                cap[estack[i] ^ 1] += b
            flow += b
    return flow


@njit(cache=True)
def _reachable(n, head, nxt, to, cap, s):  # pragma: no cover - jitted
    seen = np.zeros(n, np.bool_)
    queue = np.empty(n, np.int64)
    seen[s] = True
    queue[0] = s
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        e = head[u]
        while e != -1:
            v = to[e]
            if cap[e] > _EPS and not seen[v]:
                seen[v] = True
                queue[qt] = v
                qt += 1
            e = nxt[e]
    return seen


class FlowGraph:
    """Directed capacitated graph with a Dinic max-flow solver."""

    def __init__(self, n_nodes: int):
        if n_nodes < 2:
            raise ValueError("need at least two nodes")
        self.n = n_nodes
        self._us: list[np.ndarray] = []
        self._vs: list[np.ndarray] = []
        self._caps: list[np.ndarray] = []
        self._rcaps: list[np.ndarray] = []

    def add_edges(self, us, vs, caps, rcaps=None):
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        caps = np.asarray(caps, dtype=np.float64)
        if rcaps is None:
            rcaps = np.zeros_like(caps)
        else:
            rcaps = np.asarray(rcaps, dtype=np.float64)
        if (caps < 0).any() or (rcaps < 0).any():
            raise ValueError("capacities must be non-negative")
        if not (np.isfinite(caps).all() and np.isfinite(rcaps).all()):
            raise ValueError("capacities must be finite")
        self._us.append(us)
        self._vs.append(vs)
        self._caps.append(caps)
        self._rcaps.append(rcaps)

    def add_edge(self, u: int, v: int, cap: float, rcap: float = 0.0):
        self.add_edges([u], [v], [cap], [rcap])

    def _assemble(self):
        us = np.concatenate(self._us) if self._us else np.empty(0, np.int64)
        vs = np.concatenate(self._vs) if self._vs else np.empty(0, np.int64)
        caps = np.concatenate(self._caps) if self._caps else np.empty(0)
        rcaps = np.concatenate(self._rcaps) if self._rcaps else np.empty(0)
        m = us.size
        to = np.empty(2 * m, np.int64)
        cap = np.empty(2 * m, np.float64)
        to[0::2] = vs
        to[1::2] = us
        cap[0::2] = caps
        cap[1::2] = rcaps
        head = np.full(self.n, -1, np.int64)
        nxt = np.empty(2 * m, np.int64)
        src = np.empty(2 * m, np.int64)
        src[0::2] = us
        src[1::2] = vs
        for e in range(2 * m):
            u = src[e]
            nxt[e] = head[u]
            head[u] = e
        return head, nxt, to, cap

    def max_flow(self, s: int, t: int) -> tuple[float, np.ndarray]:
        """Return (flow value, boolean source-side mask of the min cut)."""
        head, nxt, to, cap = self._assemble()
        flow = float(_dinic(self.n, head, nxt, to, cap, s, t))
        source_side = np.asarray(_reachable(self.n, head, nxt, to, cap, s))
        return flow, source_side


def max_flow(n_nodes: int, edges: list[tuple[int, int, float]],
             source: int, sink: int) -> tuple[float, np.ndarray]:
    """One-shot max-flow over (u, v, capacity) edges."""
    g = FlowGraph(n_nodes)
    if edges:
        us, vs, caps = zip(*edges)
        g.add_edges(us, vs, caps)
    return g.max_flow(source, sink)


# ---------------------------------------------------------------------------
# alpha-expansion
# ---------------------------------------------------------------------------

PairwiseFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class MRFProblem:
    """Grid MRF with per-pixel unary costs and a vectorized pairwise function.

    `pairwise(z, z_prime, l, l_prime)` takes flat pixel index arrays and label
    arrays and returns the pairwise cost per edge.  Neighborhood is the
    4-connected grid.
    """

    dims: tuple[int, int]
    label_count: int
    unary: np.ndarray  # (n_pixels, label_count)
    pairwise: PairwiseFn

    def __post_init__(self):
        n = self.dims[0] * self.dims[1]
        self.unary = np.asarray(self.unary, dtype=np.float64)
        if self.unary.shape != (n, self.label_count):
            raise ValueError("unary table must be (n_pixels, label_count)")
        if not np.isfinite(self.unary).all() or (self.unary < 0).any():
            raise ValueError("unary costs must be finite and non-negative")

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.dims
        idx = np.arange(n1 * n2).reshape(n1, n2)
        hz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
        vt = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
        both = np.concatenate([hz, vt], axis=1)
        return both[0], both[1]


def evaluate_energy(problem: MRFProblem, labeling: np.ndarray) -> float:
    flat = labeling.ravel()
    n = flat.size
    unary = float(problem.unary[np.arange(n), flat].sum())
    za, zb = problem.edges()
    pw = problem.pairwise(za, zb, flat[za], flat[zb])
    return unary + float(pw.sum())


@dataclass
class ExpansionResult:
    labeling: np.ndarray
    energy: float
    truncations: int
    sweeps: int


def _expansion_move(problem: MRFProblem, labeling: np.ndarray, alpha: int,
                    za: np.ndarray, zb: np.ndarray) -> tuple[np.ndarray, int]:
    flat = labeling.ravel()
    n = flat.size
    alpha_arr = np.full(za.size, alpha)
    A = problem.pairwise(za, zb, flat[za], flat[zb])
    B = problem.pairwise(za, zb, flat[za], alpha_arr)
    C = problem.pairwise(za, zb, alpha_arr, flat[zb])
    D = problem.pairwise(za, zb, alpha_arr, alpha_arr)

    # truncate non-submodular terms upward: need B + C >= A + D
    viol = B + C < A + D - _EPS
    truncations = int(viol.sum())
    if truncations:
        B = np.where(viol, A + D - C, B)

    # binary energy: x=0 keep current label, x=1 take alpha
    f1 = problem.unary[np.arange(n), alpha].copy()
    f0 = problem.unary[np.arange(n), flat].copy()
    # pairwise decomposition: E = A + (C-A)x1 + (D-C)x2 + (B+C-A-D)(1-x1)x2
    c1 = C - A
    c2 = D - C
    np.add.at(f1, za, np.maximum(c1, 0.0))
    np.add.at(f0, za, np.maximum(-c1, 0.0))
    np.add.at(f1, zb, np.maximum(c2, 0.0))
    np.add.at(f0, zb, np.maximum(-c2, 0.0))
    w = np.maximum(B + C - A - D, 0.0)

    s, t = n, n + 1
    g = FlowGraph(n + 2)
    nodes = np.arange(n)
    g.add_edges(np.full(n, s), nodes, f1)
    g.add_edges(nodes, np.full(n, t), f0)
    keep = w > _EPS
    if keep.any():
        g.add_edges(za[keep], zb[keep], w[keep])
    _, source_side = g.max_flow(s, t)
    take_alpha = ~source_side[:n]
    new_flat = flat.copy()
    new_flat[take_alpha] = alpha
    return new_flat.reshape(problem.dims), truncations


def alpha_expansion(problem: MRFProblem, init: np.ndarray | None = None,
                    max_sweeps: int = 5) -> ExpansionResult:
    """Iterate expansion moves over all labels until no move lowers the energy."""
    if init is None:
        labeling = np.zeros(problem.dims, dtype=np.int64)
    else:
        labeling = np.asarray(init, dtype=np.int64).reshape(problem.dims).copy()
        if labeling.min() < 0 or labeling.max() >= problem.label_count:
            raise ValueError("initial labels out of range")
    za, zb = problem.edges()
    energy = evaluate_energy(problem, labeling)
    truncations = 0
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        improved = False
        for alpha in range(problem.label_count):
            cand, trunc = _expansion_move(problem, labeling, alpha, za, zb)
            truncations += trunc
            cand_energy = evaluate_energy(problem, cand)
            if cand_energy < energy - _EPS:
                labeling = cand
                energy = cand_energy
                improved = True
        if not improved:
            break
    return ExpansionResult(labeling, energy, truncations, sweeps)


# ---------------------------------------------------------------------------
# correlation solver (OPT-1 / OPT-2 / OPT-3)
# ---------------------------------------------------------------------------

@dataclass
class CorrelationResult:
    mode: str
    labels: list  # per-atom TransformLabel (stereo) or depth label int (multiview)
    label_field: np.ndarray
    field: MotionField | np.ndarray  # motion field, or per-pixel depth map
    energy: float
    truncations: int
    energy_terms: dict = field(default_factory=dict)
    unary_table: np.ndarray | None = None


def _atom_peak_pixels(approx: SparseApprox) -> list[tuple[int, int]]:
    peaks = []
    for p in approx.atoms:
        g = render_atom(p, approx.dims)
        r, c = np.unravel_index(int(np.argmax(g)), g.shape)
        peaks.append((int(r), int(c)))
    return peaks


def _stereo_unary_table(labels: list[TransformLabel], approx: SparseApprox,
                        packet: MeasurementPacket, spec: DictionarySpec,
                        config: EnergyConfig, reference: np.ndarray | None,
                        dominant: np.ndarray, use_consistency: bool) -> np.ndarray:
    """K x L data (+ consistency) costs: atom k relabeled, others at identity."""
    n_atoms = len(approx.atoms)
    base_cols = atom_columns(approx.atoms, approx.dims, packet)
    y = packet.dequantized
    table = np.full((n_atoms, len(labels)), _LARGE)
    yy, xx = np.mgrid[0:approx.dims[0], 0:approx.dims[1]].astype(np.float64)
    for k, p in enumerate(approx.atoms):
        mask = dominant == k
        xs, ys = xx[mask], yy[mask]
        psi = base_cols.copy()
        for li, label in enumerate(labels):
            try:
                p_new = apply_label(p, label, spec)
            except ValueError:
                continue
            psi[:, k] = apply_sensing(render_atom(p_new, approx.dims),
                                      packet.sensing)
            if config.robust_data:
                cost = robust_data_cost_from_columns(psi, packet).cost
            else:
                cost, _ = projection_residual(psi, y)
            if use_consistency and config.alpha2 > 0:
                m_h = np.zeros(approx.dims)
                m_v = np.zeros(approx.dims)
                if mask.any() and not label.is_identity:
                    mh, mv = label_motion(p, p_new, xs, ys,
                                          config.literal_t_matrix)
                    m_h[mask] = mh
                    m_v[mask] = mv
                cost += config.alpha2 * consistency_cost_from_field(
                    MotionField(m_h, m_v), reference, packet,
                    config.quantized_consistency)
            table[k, li] = cost
    return table


def _stereo_motion_arrays(labels: list[TransformLabel], approx: SparseApprox,
                          spec: DictionarySpec, dominant: np.ndarray,
                          literal_t: bool) -> tuple[np.ndarray, np.ndarray]:
    """Per-label dense motion (L, n_pixels); unreachable labels get zero motion."""
    dims = dominant.shape
    n = dims[0] * dims[1]
    yy, xx = np.mgrid[0:dims[0], 0:dims[1]].astype(np.float64)
    mh = np.zeros((len(labels), n))
    mv = np.zeros((len(labels), n))
    for li, label in enumerate(labels):
        if label.is_identity:
            continue
        h = np.zeros(dims)
        v = np.zeros(dims)
        for k, p in enumerate(approx.atoms):
            mask = dominant == k
            if not mask.any():
                continue
            try:
                p_new = apply_label(p, label, spec)
            except ValueError:
                continue
            hh, vv = label_motion(p, p_new, xx[mask], yy[mask], literal_t)
            h[mask] = hh
            v[mask] = vv
        mh[li] = h.ravel()
        mv[li] = v.ravel()
    return mh, mv


def solve_correlation(mode: str, approx: SparseApprox,
                      packets: MeasurementPacket | list[MeasurementPacket],
                      config: EnergyConfig, spec: DictionarySpec,
                      reference: np.ndarray | None = None,
                      depth_spec: DepthLabelSpec | None = None,
                      max_sweeps: int = 5) -> CorrelationResult:
    """Estimate per-atom transformations (OPT1/OPT2) or depth labels (OPT3)."""
    mode = mode.upper()
    if mode in ("OPT1", "OPT2"):
        packet = packets[0] if isinstance(packets, list) else packets
        return _solve_stereo(mode, approx, packet, config, spec, reference,
                             max_sweeps)
    if mode == "OPT3":
        if depth_spec is None:
            raise ValueError("OPT3 requires a DepthLabelSpec")
        packet_list = packets if isinstance(packets, list) else [packets]
        return _solve_multiview(approx, packet_list, config, spec, reference,
                                depth_spec, max_sweeps)
    raise ValueError(f"unknown mode {mode!r}")


def _solve_stereo(mode: str, approx: SparseApprox, packet: MeasurementPacket,
                  config: EnergyConfig, spec: DictionarySpec,
                  reference: np.ndarray | None,
                  max_sweeps: int) -> CorrelationResult:
    use_consistency = mode == "OPT2"
    if use_consistency and config.alpha2 > 0 and reference is None:
        raise ValueError("OPT2 with alpha2 > 0 needs the reference image")
    dims = approx.dims
    labels = enumerate_labels(config.window, spec)
    identity_idx = labels.index(IDENTITY_LABEL)
    dominant = dominant_atom_map(approx, dims)
    table = _stereo_unary_table(labels, approx, packet, spec, config,
                                reference, dominant, use_consistency)

    n = dims[0] * dims[1]
    dom_flat = dominant.ravel()
    unary = np.zeros((n, len(labels)))
    inside = dom_flat >= 0
    unary[inside] = table[dom_flat[inside]]
    # pixels outside every support are pinned to the identity label
    unary[~inside] = _LARGE
    unary[~inside, identity_idx] = 0.0

    mh, mv = _stereo_motion_arrays(labels, approx, spec, dominant,
                                   config.literal_t_matrix)
    tau, a1 = config.tau, config.alpha1

    def pairwise(za, zb, la, lb):
        d = (np.abs(mh[la, za] - mh[lb, zb])
             + np.abs(mv[la, za] - mv[lb, zb]))
        return a1 * np.minimum(d, tau)

    problem = MRFProblem(dims, len(labels), unary, pairwise)
    init = np.full(dims, identity_idx, dtype=np.int64)
    res = alpha_expansion(problem, init, max_sweeps)

    peaks = _atom_peak_pixels(approx)
    assignment = []
    for k, (r, c) in enumerate(peaks):
        li = int(res.labeling[r, c])
        if table[k, li] >= _LARGE:  # label invalid for this atom
            li = identity_idx
        assignment.append(labels[li])
    fld = motion_field(assignment, approx, dims, spec, dominant=dominant,
                       literal_t=config.literal_t_matrix)
    return CorrelationResult(mode, assignment, res.labeling, fld, res.energy,
                             res.truncations, unary_table=table)


def _solve_multiview(approx: SparseApprox, packets: list[MeasurementPacket],
                     config: EnergyConfig, spec: DictionarySpec,
                     reference: np.ndarray | None,
                     depth_spec: DepthLabelSpec,
                     max_sweeps: int) -> CorrelationResult:
    dims = approx.dims
    n_atoms = len(approx.atoms)
    n_labels = depth_spec.level_count
    dominant = dominant_atom_map(approx, dims)
    depths = 1.0 / depth_spec.inverse_depths
    peaks = _atom_peak_pixels(approx)

    n = dims[0] * dims[1]
    dom_flat = dominant.ravel()
    inside = dom_flat >= 0
    tau, a1 = config.tau, config.alpha1

    def pairwise(za, zb, la, lb):
        return a1 * np.minimum(np.abs(depths[la] - depths[lb]), tau)

    def joint_energy(assign, lab):
        cost = multiview_data_cost(assign, approx, packets, depth_spec,
                                   robust=config.robust_data)
        dfield = depths[lab]
        cost += a1 * multiview_smoothness(dfield, tau)
        if config.alpha2 > 0 and reference is not None:
            cost += config.alpha2 * multiview_consistency(
                dfield, reference, packets, depth_spec,
                config.quantized_consistency)
        return cost

    # Tables are rebuilt with the "others" anchored at the previous round's
    # labels (farthest plane initially); each round is one coordinate-descent
    # pass over the per-atom relabelings, so clusters of atoms covering one
    # surface can follow each other instead of being judged one at a time
    # against a frozen anchor.  A round is kept only if the joint energy of
    # the extracted assignment decreases.
    anchor = [0] * n_atoms
    labeling = np.zeros(dims, dtype=np.int64)
    best_energy = joint_energy(anchor, labeling)
    res = None
    table = None
    for _round in range(max(1, max_sweeps)):
        anchor_cols = [multiview_columns(anchor, approx, pkt, j, depth_spec)
                       for j, pkt in enumerate(packets)]
        anchor_arr = np.asarray(anchor, dtype=np.int64)
        anchor_labels = np.zeros(dims, dtype=np.int64)
        anchor_labels.ravel()[inside] = anchor_arr[dom_flat[inside]]
        anchor_depths = depths[anchor_labels]
        table = np.full((n_atoms, n_labels), _LARGE)
        for k, p in enumerate(approx.atoms):
            mask = dominant == k
            for li in range(n_labels):
                cost = 0.0
                for j, pkt in enumerate(packets):
                    psi = anchor_cols[j].copy()
                    p_new, _ = project_atom(p, li, j, depth_spec, dims)
                    psi[:, k] = apply_sensing(render_atom(p_new, dims),
                                              pkt.sensing)
                    if config.robust_data:
                        cost += robust_data_cost_from_columns(psi, pkt).cost
                    else:
                        c, _ = projection_residual(psi, pkt.dequantized)
                        cost += c
                if config.alpha2 > 0:
                    if reference is None:
                        raise ValueError(
                            "consistency term needs the reference image")
                    depth_field = anchor_depths.copy()
                    depth_field[mask] = depths[li]
                    cost += config.alpha2 * multiview_consistency(
                        depth_field, reference, packets, depth_spec,
                        config.quantized_consistency)
                table[k, li] = cost

        unary = np.zeros((n, n_labels))
        unary[inside] = table[dom_flat[inside]]
        # pixels outside supports carry no data cost; smoothness decides
        problem = MRFProblem(dims, n_labels, unary, pairwise)
        res = alpha_expansion(problem, labeling, max_sweeps)
        new_labeling = res.labeling
        new_anchor = [int(new_labeling[r, c]) for r, c in peaks]
        new_energy = joint_energy(new_anchor, new_labeling)
        if new_energy >= best_energy - _EPS:
            break
        best_energy = new_energy
        labeling = new_labeling
        if new_anchor == anchor:
            break
        anchor = new_anchor

    assignment = [int(labeling[r, c]) for r, c in peaks]
    depth_field = depths[labeling]
    truncations = res.truncations if res is not None else 0
    return CorrelationResult("OPT3", assignment, labeling, depth_field,
                             best_energy, truncations, unary_table=table)


