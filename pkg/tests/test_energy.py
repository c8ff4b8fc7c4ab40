"""Data, smoothness, consistency and multi-view energy terms."""

import numpy as np
import pytest

from gcmp.dictionary import (DictionarySpec, Generator, IDENTITY_LABEL,
                             SearchWindow, TransformLabel, render_atom)
from gcmp.energy import (DepthLabelSpec, consistency_cost,
                         consistency_cost_from_field, data_cost,
                         depth_field_from_labels, identity_assignment,
                         motion_field, multiview_consistency,
                         multiview_data_cost, multiview_smoothness,
                         project_atom, projection_residual,
                         robust_data_cost, robust_data_cost_from_columns,
                         smoothness_cost)
from gcmp.predict import MotionField
from gcmp.sensing import (MeasurementPacket, QuantizerSpec, SensingSpec,
                          encode_packet, quantizer_for, quantize, sense)
from gcmp.sparse import matching_pursuit, reconstruct

DIMS = (24, 24)
SPEC = DictionarySpec(image_dims=DIMS, rotation_count=1, scale_count=3)


def _approx(seed=0, k=4):
    rng = np.random.default_rng(seed)
    image = rng.normal(size=DIMS) * 40.0
    return matching_pursuit(image, SPEC, k)


def _packet(image, m=96, bits=8, seed=1):
    spec = SensingSpec(dims=DIMS, m_count=m, seed=seed)
    packet, _ = encode_packet(image, spec, bits)
    return packet


class TestDataCost:
    def test_in_span_cost_zero(self):
        # [DERIVED] measurements of a signal lying in span(Psi) are exactly
        # representable, so the projection residual vanishes (barring the
        # quantization injected here kept tiny by 12-bit cells).
        a = _approx(seed=1, k=3)
        packet = _packet(reconstruct(a), bits=12)
        cost = data_cost(identity_assignment(a), a, packet, SPEC)
        assert cost <= 1e-2  # quantization noise only
        # replacing the packet measurements with the exact unquantized ones
        # drives the cost to round-off
        y = sense(reconstruct(a), packet.sensing)
        q = QuantizerSpec(bits=1, step=1.0, offset=0.0)
        exact = MeasurementPacket(packet.sensing, q,
                                  np.zeros(y.size, np.int64), 0)
        from gcmp.energy import atom_columns, transformed_atoms
        psi = atom_columns(transformed_atoms(
            identity_assignment(a), a, SPEC), DIMS, packet)
        cost, _ = projection_residual(psi, y)
        assert cost <= 1e-8

    def test_single_column_closed_form(self):
        # [DERIVED] with one column psi the residual is
        # ||y||^2 - (psi.y)^2/||psi||^2.
        rng = np.random.default_rng(3)
        psi = rng.normal(size=(50, 1))
        y = rng.normal(size=50)
        cost, coeffs = projection_residual(psi, y)
        p = psi[:, 0]
        expect = float(y @ y) - float(p @ y) ** 2 / float(p @ p)
        assert cost == pytest.approx(expect, rel=1e-12)
        assert coeffs[0] == pytest.approx(float(p @ y) / float(p @ p))

    def test_column_permutation_invariance(self):
        rng = np.random.default_rng(4)
        psi = rng.normal(size=(40, 4))
        y = rng.normal(size=40)
        c1, _ = projection_residual(psi, y)
        c2, _ = projection_residual(psi[:, ::-1], y)
        assert c1 == pytest.approx(c2, rel=1e-10)

    def test_zero_columns(self):
        y = np.arange(5.0)
        cost, _ = projection_residual(np.zeros((5, 2)), y)
        assert cost == float(y @ y)

    def test_assignment_length_checked(self):
        a = _approx()
        with pytest.raises(ValueError):
            data_cost([IDENTITY_LABEL], a, _packet(reconstruct(a)), SPEC)


class TestRobustDataCost:
    def test_never_exceeds_plain(self):
        # [DERIVED] the plain dequantized y is feasible for the robust
        # problem, so the robust optimum can only be lower.
        for seed in range(8):
            a = _approx(seed=seed)
            packet = _packet(reconstruct(a), bits=2, seed=seed + 1)
            assign = identity_assignment(a)
            plain = data_cost(assign, a, packet, SPEC)
            rob = robust_data_cost(assign, a, packet, SPEC)
            assert rob.cost <= plain + 1e-9

    def test_objective_trace_monotone(self):
        a = _approx(seed=2)
        packet = _packet(reconstruct(a), bits=2, seed=3)
        rob = robust_data_cost(identity_assignment(a), a, packet, SPEC)
        trace = np.asarray(rob.objective_trace)
        assert np.all(np.diff(trace) <= 1e-9)
        assert rob.converged
        assert rob.cost == trace[-1]

    def test_one_by_one_analytic(self):
        # [DERIVED] one measurement, one column: if the cell contains the
        # span the optimum is exactly zero, reached in-closed-form.
        q = QuantizerSpec(bits=2, step=1.0, offset=-2.0)
        spec = SensingSpec(dims=(1, 1), m_count=1, block_size=1, seed=0)
        packet = MeasurementPacket(spec, q, np.array([2]), 0)  # cell [0, 1)
        psi = np.array([[1.0]])
        rob = robust_data_cost_from_columns(psi, packet)
        assert rob.cost == pytest.approx(0.0, abs=1e-12)
        assert 0.0 <= rob.y_consistent[0] <= 1.0

    def test_fine_quantization_matches_plain(self):
        # [DERIVED] as bits grow the cells shrink and the robust cost
        # converges to the plain projection residual.
        a = _approx(seed=5)
        rng = np.random.default_rng(6)
        image = reconstruct(a) + rng.normal(size=DIMS)
        assign = identity_assignment(a)
        gaps = []
        for bits in (8, 12, 16):
            packet = _packet(image, bits=bits, seed=2)
            plain = data_cost(assign, a, packet, SPEC)
            rob = robust_data_cost(assign, a, packet, SPEC)
            assert rob.cost <= plain + 1e-9
            gaps.append(plain - rob.cost)
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] / plain < 2e-3

    def test_y_consistent_inside_cells(self):
        a = _approx(seed=7)
        packet = _packet(reconstruct(a), bits=2, seed=4)
        rob = robust_data_cost(identity_assignment(a), a, packet, SPEC)
        lo, hi = packet.cell_bounds
        assert np.all(rob.y_consistent >= lo - 1e-12)
        assert np.all(rob.y_consistent <= hi + 1e-12)


class TestMotionField:
    def test_identity_assignment_zero_field(self):
        a = _approx(seed=8)
        fld = motion_field(identity_assignment(a), a, DIMS, SPEC)
        assert np.all(fld.m_h == 0.0) and np.all(fld.m_v == 0.0)

    def test_pure_translation(self):
        # [DERIVED] a translation label moves every supported pixel by the
        # same integer offset (negated: motion maps new atom back to old).
        a = _approx(seed=9, k=1)
        assign = [TransformLabel(d_tx=2, d_ty=-1)]
        fld = motion_field(assign, a, DIMS, SPEC)
        moved = fld.m_h != 0
        assert moved.any()
        assert np.all(np.isin(fld.m_h[moved], [2.0]))
        assert np.all(fld.m_v[moved] == -1.0)


class TestSmoothness:
    def test_constant_field_zero(self):
        fld = MotionField(np.full(DIMS, 3.0), np.full(DIMS, -1.0))
        assert smoothness_cost(fld, 4.0) == 0.0

    def test_single_jump_truncated(self):
        # [DERIVED] a vertical split with an 11-pixel horizontal jump
        # costs tau per boundary edge once truncation kicks in.
        m_h = np.zeros(DIMS)
        m_h[:, 12:] = 11.0
        fld = MotionField(m_h, np.zeros(DIMS))
        tau = 4.0
        assert smoothness_cost(fld, tau) == pytest.approx(DIMS[0] * tau)

    def test_linear_ramp_below_truncation(self):
        m_h = np.tile(np.arange(DIMS[1], dtype=float), (DIMS[0], 1)) * 0.5
        fld = MotionField(m_h, np.zeros(DIMS))
        expect = DIMS[0] * (DIMS[1] - 1) * 0.5
        assert smoothness_cost(fld, 4.0) == pytest.approx(expect)

    def test_upper_bound(self):
        rng = np.random.default_rng(10)
        fld = MotionField(rng.normal(size=DIMS) * 100, rng.normal(size=DIMS) * 100)
        tau = 2.5
        n_edges = DIMS[0] * (DIMS[1] - 1) + (DIMS[0] - 1) * DIMS[1]
        assert smoothness_cost(fld, tau) <= tau * n_edges + 1e-9


class TestConsistency:
    def test_self_packet_zero(self):
        # [DERIVED] the reference warped by a zero field re-senses to the
        # same quantized measurements, so E_t = 0.
        rng = np.random.default_rng(11)
        image = rng.uniform(0, 255, size=DIMS)
        packet = _packet(image, bits=4, seed=5)
        fld = MotionField(np.zeros(DIMS), np.zeros(DIMS))
        assert consistency_cost_from_field(fld, image, packet) == 0.0

    def test_identity_assignment_zero(self):
        rng = np.random.default_rng(12)
        image = rng.uniform(0, 255, size=DIMS)
        a = matching_pursuit(image, SPEC, 3)
        packet = _packet(image, bits=4, seed=6)
        cost = consistency_cost(identity_assignment(a), image, packet, a, SPEC)
        assert cost == 0.0

    def test_wrong_reference_positive(self):
        rng = np.random.default_rng(13)
        image = rng.uniform(0, 255, size=DIMS)
        other = rng.uniform(0, 255, size=DIMS)
        packet = _packet(image, bits=4, seed=7)
        fld = MotionField(np.zeros(DIMS), np.zeros(DIMS))
        assert consistency_cost_from_field(fld, other, packet) > 0.0


class TestMultiView:
    DSPEC = DepthLabelSpec(z_min=12.0, z_max=48.0, level_count=4,
                           focal=48.0, baselines=(1.0, 2.0))

    def test_inverse_depth_grid(self):
        # [TRIVIAL] labels sample 1/Z uniformly from far to near.
        inv = self.DSPEC.inverse_depths
        np.testing.assert_allclose(inv, np.linspace(1 / 48, 1 / 12, 4))
        assert self.DSPEC.depth_of_label(0) == pytest.approx(48.0)
        assert self.DSPEC.depth_of_label(3) == pytest.approx(12.0)

    def test_project_atom_zero_baseline(self):
        spec = DepthLabelSpec(z_min=12, z_max=48, level_count=4,
                              focal=48, baselines=(0.0,))
        a = _approx(seed=14, k=1)
        p = a.atoms[0]
        q, clamped = project_atom(p, 3, 0, spec, DIMS)
        assert q == p and not clamped

    def test_project_atom_disparity(self):
        # [DERIVED] label 0 (Z=48) at f=48, B=1 shifts t_x by exactly 1;
        # B=2 doubles it.
        a = _approx(seed=15, k=1)
        p = a.atoms[0]
        q1, _ = project_atom(p, 0, 0, self.DSPEC, DIMS)
        q2, _ = project_atom(p, 0, 1, self.DSPEC, DIMS)
        assert q1.t_x - p.t_x == pytest.approx(1.0)
        assert q2.t_x - p.t_x == pytest.approx(2.0)
        assert (q1.t_y, q1.theta, q1.s_x, q1.s_y) == (p.t_y, p.theta, p.s_x, p.s_y)

    def test_project_atom_clamps(self):
        from gcmp.dictionary import AtomParams
        p = AtomParams(Generator.GAUSSIAN, 23.0, 10.0, 0.0, 2.0, 2.0)
        q, clamped = project_atom(p, 3, 1, self.DSPEC, DIMS)  # shift = 8
        assert clamped and q.t_x == DIMS[1] - 1

    def test_data_cost_sums_views(self):
        a = _approx(seed=16, k=3)
        img = reconstruct(a)
        pkts = [_packet(img, seed=20), _packet(img, seed=21)]
        labels = [0] * len(a.atoms)
        total = multiview_data_cost(labels, a, pkts, self.DSPEC)
        partial = (multiview_data_cost(labels, a, [pkts[0]], self.DSPEC)
                   + multiview_data_cost(
                       labels, a, [pkts[1]],
                       DepthLabelSpec(12, 48, 4, 48, (2.0,))))
        assert total == pytest.approx(partial, rel=1e-12)

    def test_smoothness_constant_zero(self):
        labels = np.full(DIMS, 2, dtype=np.int64)
        depth = depth_field_from_labels(labels, self.DSPEC)
        assert np.all(depth == pytest.approx(self.DSPEC.depth_of_label(2)))
        assert multiview_smoothness(depth, 4.0) == 0.0

    def test_consistency_self_zero(self):
        # [DERIVED] constant far depth warps by integer disparities 1 and 2;
        # a scene consistent with those shifts re-senses exactly.
        rng = np.random.default_rng(17)
        ref = rng.uniform(0, 255, size=DIMS)
        depth = np.full(DIMS, 48.0)
        from gcmp.predict import warp_view
        views = [warp_view(ref, depth, 48.0, b) for b in (1.0, 2.0)]
        pkts = [_packet(v, bits=4, seed=30 + j) for j, v in enumerate(views)]
        assert multiview_consistency(depth, ref, pkts, self.DSPEC) == 0.0
