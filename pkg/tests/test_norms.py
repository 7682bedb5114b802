"""
Tests for the norms.py module
"""

import math

import numpy as np
import pytest

from src.errors import ConfigError, MeshError
from src.mesh import CylinderRegion, DiscreteField, build_grid
from src.norms import (
    HYPOTHESIS_VIOLATION,
    NOT_CONVERGENT,
    WEAKLY_CONVERGENT,
    NormWorkspace,
    classify_weak_convergence,
    dual_norm,
    geometric_ratio,
    h1par_norm,
    lp_norm,
    pairing,
    spatial_dual_norm_l2t,
    sup_time_l2,
    w1par_norm,
    weak_convergence_check,
)


class TestLpNorm:
    """Tests for trapezoid L^p norms."""

    def test_constant_field(self, grid_1d):
        """Test norms of 1 on the unit box over (0, 0.25)."""
        one = DiscreteField.constant(grid_1d, 1.0)

        assert lp_norm(one) == pytest.approx(0.5)
        assert lp_norm(one, p=1.0) == pytest.approx(0.25)
        assert lp_norm(one, p=math.inf) == 1.0

    def test_region_restriction(self, grid_1d):
        """Test a region sees only its own values."""
        values = np.zeros(grid_1d.shape)
        values[:, 0] = 100.0
        field = DiscreteField(grid_1d, values)

        assert lp_norm(field, CylinderRegion((0.5,), 0.25)) == 0.0

    def test_exponent_below_one(self, grid_1d, zero_data):
        """Test p < 1 is rejected."""
        with pytest.raises(ConfigError):
            lp_norm(zero_data, p=0.5)

    def test_empty_region(self, grid_1d, zero_data):
        """Test an empty region raises MeshError."""
        with pytest.raises(MeshError):
            lp_norm(zero_data, np.zeros(grid_1d.shape, dtype=bool))

    def test_pairing(self, grid_1d):
        """Test the discrete integral of 1 * 1."""
        one = DiscreteField.constant(grid_1d, 1.0)

        assert pairing(one, one) == pytest.approx(0.25)


class TestNormWorkspace:
    """Tests for region handling in the workspace."""

    def test_cylinder_region(self, grid_1d):
        """Test a cylinder gives a product of levels and nodes."""
        ws = NormWorkspace(grid_1d, CylinderRegion((0.5,), 0.25))

        assert len(ws.spatial_nodes) == 7
        assert len(ws.levels) == 32
        assert ws.n_unknowns == 7 * 32

    def test_empty_region(self, grid_1d):
        """Test an empty mask raises MeshError."""
        with pytest.raises(MeshError):
            NormWorkspace(grid_1d, np.zeros(grid_1d.shape, dtype=bool))

    def test_non_product_region(self, grid_1d):
        """Test masks whose spatial part changes in time are rejected."""
        mask = np.zeros(grid_1d.shape, dtype=bool)
        mask[1, 2:5] = True
        mask[2, 3:6] = True
        with pytest.raises(ConfigError):
            NormWorkspace(grid_1d, mask)

    def test_non_consecutive_levels(self, grid_1d):
        """Test gaps in the time levels are rejected."""
        mask = np.zeros(grid_1d.shape, dtype=bool)
        mask[[1, 3], 2:5] = True
        with pytest.raises(ConfigError):
            NormWorkspace(grid_1d, mask)

    def test_full_resolution(self, grid_1d):
        """Test small regions are not coarsened."""
        coarsening = NormWorkspace(grid_1d).coarsening

        assert coarsening["space_stride"] == 1
        assert coarsening["time_stride"] == 1
        assert coarsening["coarse_unknowns"] == grid_1d.nt * grid_1d.nx

    def test_coarse_test_space(self, grid_1d, bump_data):
        """Test large regions use a coarse test space within the cap."""
        ws = NormWorkspace(grid_1d, max_unknowns=100)
        coarsening = ws.coarsening

        assert max(coarsening["space_stride"], coarsening["time_stride"]) > 1
        assert coarsening["coarse_unknowns"] <= 100
        assert ws.dual_norm(bump_data) <= dual_norm(bump_data) + 1e-12

    def test_coarse_matches_full_resolution(self):
        """Test a coarse test space reproduces constants and stays close on smooth data."""
        grid = build_grid(1, (0.0, 1.0), 9, (0.0, 0.1), 9)
        full = NormWorkspace(grid)
        coarse = NormWorkspace(grid, max_unknowns=30)
        one = DiscreteField.constant(grid, 1.0)
        smooth = DiscreteField.from_function(grid, lambda x, t: np.cos(np.pi * x))

        assert coarse.coarsening["space_stride"] == 2
        assert coarse.coarsening["time_stride"] == 2
        assert coarse.dual_norm(one) == pytest.approx(full.dual_norm(one), rel=1e-10)
        assert coarse.dual_norm(smooth) <= full.dual_norm(smooth) + 1e-12
        assert coarse.dual_norm(smooth) == pytest.approx(full.dual_norm(smooth), rel=0.05)


class TestParabolicNorms:
    """Tests for the H^1_par surrogate and its dual."""

    def test_dual_of_constant(self, grid_1d):
        """Test constants have dual norm equal to their L2 norm."""
        one = DiscreteField.constant(grid_1d, 1.0)

        assert dual_norm(one) == pytest.approx(0.5, rel=1e-8)

    def test_dual_below_l2(self, grid_1d, bump_data):
        """Test the dual norm never exceeds the L2 norm."""
        assert dual_norm(bump_data) <= lp_norm(bump_data) + 1e-12

    def test_dual_of_zero(self, zero_data):
        """Test the dual norm of zero."""
        assert dual_norm(zero_data) == 0.0

    def test_oscillation_lowers_dual_norm(self):
        """Test fast spatial oscillations have small dual norm at equal L2 norm."""
        grid = build_grid(1, (0.0, 1.0), 65, (0.0, 0.01), 5)
        ws = NormWorkspace(grid)
        slow = DiscreteField.from_function(grid, lambda x, t: np.cos(2 * np.pi * x))
        fast = DiscreteField.from_function(grid, lambda x, t: np.cos(16 * np.pi * x))

        assert lp_norm(fast) == pytest.approx(lp_norm(slow), rel=1e-6)
        assert ws.dual_norm(fast) < 0.5 * ws.dual_norm(slow)

    def test_riesz_representation(self):
        """Test the dual norm is the largest pairing with unit-norm test functions."""
        grid = build_grid(1, (0.0, 1.0), 9, (0.0, 0.1), 5)
        ws = NormWorkspace(grid)
        f = DiscreteField.from_function(grid, lambda x, t: np.sin(3 * np.pi * x) + t)
        gram = ws.gram_matrix()
        load = ws.load_vector(f)
        eigenvalues, eigenvectors = np.linalg.eigh(gram)
        spectral = math.sqrt(float(np.sum((eigenvectors.T @ load) ** 2 / eigenvalues)))

        riesz = np.linalg.solve(gram, load)
        representer = DiscreteField(grid, riesz.reshape(grid.shape))
        attained = pairing(f, representer) / math.sqrt(float(riesz @ gram @ riesz))

        rng = np.random.default_rng(5)
        trials = rng.standard_normal((500, ws.n_unknowns))
        ratios = (trials @ load) / np.sqrt(np.einsum("ij,jk,ik->i", trials, gram, trials))

        assert ws.dual_norm(f) == pytest.approx(spectral, rel=1e-10)
        assert attained == pytest.approx(spectral, rel=1e-10)
        assert np.max(np.abs(ratios)) <= spectral * (1.0 + 1e-12)

    def test_oscillation_rate(self):
        """Test sin(2 pi x / eps) halves its dual norm with eps at fixed L2 norm."""
        grid = build_grid(1, (0.0, 1.0), 257, (0.0, 0.01), 3)
        ws = NormWorkspace(grid)
        duals, l2 = [], []
        for eps in (1 / 4, 1 / 8, 1 / 16):
            f = DiscreteField.from_function(grid, lambda x, t, e=eps: np.sin(2 * np.pi * x / e))
            duals.append(ws.dual_norm(f))
            l2.append(lp_norm(f))

        assert ws.coarsening["space_stride"] == 1
        for coarse, fine in zip(duals, duals[1:], strict=False):
            assert 1.8 < coarse / fine < 2.2
        for value in l2:
            assert value == pytest.approx(l2[0], rel=0.05)

    def test_h1par_of_constant(self, grid_1d):
        """Test constants have no gradient or time contribution."""
        one = DiscreteField.constant(grid_1d, 1.0)

        assert h1par_norm(one) == pytest.approx(0.5)

    def test_h1par_of_linear(self, grid_1d):
        """Test u = x adds a unit gradient over the time window."""
        field = DiscreteField.from_function(grid_1d, lambda x, t: x)
        l2_sq = 0.25 * (1.0 / 3.0 + grid_1d.h**2 / 6.0)

        assert h1par_norm(field) == pytest.approx(math.sqrt(l2_sq + 0.25))

    def test_spatial_dual_of_constant(self, grid_1d):
        """Test the per-level H^-1 norm of 1 is 1."""
        one = DiscreteField.constant(grid_1d, 1.0)

        assert spatial_dual_norm_l2t(one) == pytest.approx(0.5)
        assert sup_time_l2(one) == pytest.approx(1.0)

    def test_w1par_of_constant(self, grid_1d):
        """Test only the L^q part survives for constants."""
        one = DiscreteField.constant(grid_1d, 1.0)

        assert w1par_norm(one, q=2.0) == pytest.approx(0.5)
        assert w1par_norm(one, q=4.0) == pytest.approx(0.25**0.25)


class TestWeakConvergence:
    """Tests for the weak convergence classifier."""

    def test_geometric_ratio(self):
        """Test the fitted ratio of a geometric sequence."""
        assert geometric_ratio([1.0, 0.5, 0.25, 0.125]) == pytest.approx(0.5)

    def test_decaying_sequence(self):
        """Test geometric decay with a small last term converges."""
        verdict, ratio = classify_weak_convergence(
            [1.0, 0.5, 0.25, 0.125, 0.0625], [1.0] * 5
        )

        assert verdict == WEAKLY_CONVERGENT
        assert ratio == pytest.approx(0.5)

    def test_stagnating_sequence(self):
        """Test constant dual norms do not converge."""
        verdict, ratio = classify_weak_convergence([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])

        assert verdict == NOT_CONVERGENT
        assert ratio == pytest.approx(1.0)

    def test_unbounded_sequence(self):
        """Test growing L2 norms violate the hypothesis."""
        verdict, ratio = classify_weak_convergence([1.0, 0.1], [1.0, 3.0])

        assert verdict == HYPOTHESIS_VIOLATION
        assert ratio is None

    def test_all_zero(self):
        """Test identical fields converge trivially."""
        assert classify_weak_convergence([0.0, 0.0], [1.0, 1.0]) == (WEAKLY_CONVERGENT, None)

    def test_single_term(self):
        """Test one nonzero term cannot show decay."""
        assert classify_weak_convergence([0.3], [1.0]) == (NOT_CONVERGENT, None)

    def test_empty(self):
        """Test an empty sequence is rejected."""
        with pytest.raises(ConfigError):
            classify_weak_convergence([], [])

    def test_check_on_fields(self, grid_1d, bump_data):
        """Test the field-level check on a sequence equal to its limit."""
        report = weak_convergence_check([bump_data, bump_data], bump_data)

        assert report.verdict == WEAKLY_CONVERGENT
        assert report.dual_norms == [0.0, 0.0]
        assert report.to_dict()["coarsening"]["space_stride"] == 1

    def test_check_not_convergent(self, grid_1d, zero_data):
        """Test a constant offset from the limit is not weakly convergent."""
        one = DiscreteField.constant(grid_1d, 1.0)
        report = weak_convergence_check([one, one, one], zero_data)

        assert report.verdict == NOT_CONVERGENT

    def test_check_empty(self, zero_data):
        """Test an empty field sequence is rejected."""
        with pytest.raises(ConfigError):
            weak_convergence_check([], zero_data)
