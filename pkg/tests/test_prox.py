import numpy as np
import pytest

from hsag.prox import (
    AbsValue,
    Box,
    IndicatorAffinePoint,
    IndicatorHalfline,
    IndicatorInterval,
    IndicatorPoint,
    L1,
    ProductOfScalars,
    dist_to_set,
    scalar_prox,
    smoothed_grad,
    smoothed_value,
    vector_prox,
)

# One representative of every catalog kind, at a fixed test dimension.
DIM = 6


def catalog(rng):
    mixed = ProductOfScalars([
        IndicatorPoint(0.5),
        IndicatorInterval(-1.0, 2.0),
        IndicatorHalfline(1.0),
        AbsValue(0.3),
        IndicatorInterval(0.0, np.inf),
        AbsValue(1.2),
    ])
    return {
        "box": Box(-1.0, 2.0),
        "l1": L1(0.7),
        "affine_point": IndicatorAffinePoint(rng.standard_normal(DIM)),
        "product": mixed,
    }


class TestScalarProx:
    def test_interval_clamp(self):
        assert scalar_prox(IndicatorInterval(1, 5), 7.0, 2.0) == 5.0

    def test_soft_threshold_kills_small(self):
        assert scalar_prox(AbsValue(1.0), 0.5, 1.0) == 0.0

    def test_soft_threshold_shifts(self):
        assert scalar_prox(AbsValue(0.1), -2.0, 1.0) == pytest.approx(-1.9, abs=1e-15)

    def test_point_and_halfline(self):
        assert scalar_prox(IndicatorPoint(3.0), -10.0, 1.0) == 3.0
        assert scalar_prox(IndicatorHalfline(2.0), 5.0, 1.0) == 2.0
        assert scalar_prox(IndicatorHalfline(2.0), -5.0, 1.0) == -5.0

    def test_tie_at_threshold_returns_zero(self):
        assert scalar_prox(AbsValue(2.0), 2.0, 1.0) == 0.0
        assert scalar_prox(AbsValue(2.0), -2.0, 1.0) == 0.0

    def test_nonpositive_beta_rejected(self):
        with pytest.raises(ValueError):
            scalar_prox(IndicatorPoint(0.0), 1.0, 0.0)


class TestVectorProx:
    def test_box(self):
        assert np.array_equal(vector_prox(Box(1, 5), [0.0, 3.0, 9.0], 1.0), [1.0, 3.0, 5.0])

    def test_affine_point(self):
        b = np.array([1.0, -2.0])
        assert np.array_equal(vector_prox(IndicatorAffinePoint(b), [9.0, 9.0], 3.0), b)

    def test_l1(self):
        out = vector_prox(L1(2.0), [3.0, -1.0], 0.5)
        assert np.allclose(out, [2.0, 0.0], atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            vector_prox(IndicatorAffinePoint(np.zeros(3)), [1.0, 2.0], 1.0)

    def test_product_matches_scalar_rule(self):
        rng = np.random.default_rng(5)
        desc = catalog(rng)["product"]
        z = rng.standard_normal(DIM) * 3
        beta = 0.7
        expected = np.array([scalar_prox(c, zi, beta) for c, zi in zip(desc.components, z)])
        assert np.array_equal(vector_prox(desc, z, beta), expected)


class TestSmoothedValueAndGrad:
    def test_grad_zero_inside_set(self):
        z = np.array([0.0, 1.0, -0.5])
        assert np.array_equal(smoothed_grad(Box(-1, 2), z, 0.3), np.zeros(3))

    def test_grad_box(self):
        assert np.array_equal(smoothed_grad(Box(1, 5), [7.0], 2.0), [1.0])

    def test_grad_l1_matches_finite_difference(self):
        desc = L1(0.1)
        z = np.array([-2.0])
        beta = 1.0
        h = 1e-6
        fd = (smoothed_value(desc, z + h, beta) - smoothed_value(desc, z - h, beta)) / (2 * h)
        grad = smoothed_grad(desc, z, beta)[0]
        assert grad == pytest.approx(-0.1, abs=1e-12)
        assert grad == pytest.approx(fd, rel=1e-5)

    def test_value_zero_inside_set(self):
        assert smoothed_value(Box(-1, 2), [0.0, 1.0], 0.5) == 0.0

    def test_value_box(self):
        assert smoothed_value(Box(1, 5), [7.0], 2.0) == pytest.approx(1.0, abs=1e-15)

    def test_value_l1_brute_force(self):
        # 1-D Moreau envelope by direct minimization over a fine grid.
        z, beta = 0.5, 1.0
        grid = np.linspace(-3, 3, 60001)
        brute = np.min(np.abs(grid) + (grid - z) ** 2 / (2 * beta))
        val = smoothed_value(L1(1.0), [z], beta)
        assert val == pytest.approx(0.125, abs=1e-8)
        assert val == pytest.approx(brute, abs=1e-6)

    def test_value_requires_positive_beta(self):
        with pytest.raises(ValueError):
            smoothed_value(L1(1.0), [0.5], -1.0)


class TestDistToSet:
    def test_inside(self):
        assert dist_to_set(Box(1, 5), [2.0, 3.0]) == 0.0

    def test_box_two_sided(self):
        assert dist_to_set(Box(1, 5), [0.0, 6.0]) == pytest.approx(np.sqrt(2.0), abs=1e-15)

    def test_affine_point(self):
        assert dist_to_set(IndicatorAffinePoint(np.array([1.0, 1.0])), [1.0, 4.0]) == 3.0

    def test_non_indicator_rejected(self):
        with pytest.raises(ValueError):
            dist_to_set(L1(1.0), [1.0])
        mixed = ProductOfScalars([IndicatorPoint(0.0), AbsValue(1.0)])
        with pytest.raises(ValueError):
            dist_to_set(mixed, [1.0, 1.0])


def _random_points(rng, count):
    return rng.standard_normal((count, DIM)) * 2.5


class TestSmoothingProperties:
    def test_prox_nonexpansive(self):
        rng = np.random.default_rng(11)
        for name, desc in catalog(rng).items():
            z = _random_points(rng, 2000)
            beta = 0.4
            for i in range(0, 2000, 2):
                p1 = vector_prox(desc, z[i], beta)
                p2 = vector_prox(desc, z[i + 1], beta)
                lhs = np.linalg.norm(p1 - p2)
                rhs = np.linalg.norm(z[i] - z[i + 1])
                assert lhs <= rhs + 1e-12, name

    def test_gradient_matches_finite_differences_every_kind(self):
        rng = np.random.default_rng(12)
        for name, desc in catalog(rng).items():
            for beta in (0.25, 1.0):
                pts = _random_points(rng, 100)
                for z in pts:
                    grad = smoothed_grad(desc, z, beta)
                    fd = np.empty(DIM)
                    h = 1e-6
                    for i in range(DIM):
                        e = np.zeros(DIM)
                        e[i] = h
                        fd[i] = (smoothed_value(desc, z + e, beta)
                                 - smoothed_value(desc, z - e, beta)) / (2 * h)
                    err = np.linalg.norm(fd - grad)
                    assert err <= 1e-5 * (1.0 + np.linalg.norm(grad)), name

    def test_lipschitz_sandwich_for_l1(self):
        # g_beta <= g <= g_beta + beta/2 * Lg^2 with Lg the 2-norm bound.
        rng = np.random.default_rng(13)
        lam = 0.7
        desc = L1(lam)
        lg = lam * np.sqrt(DIM)
        for z in _random_points(rng, 200):
            for beta in (0.1, 1.0, 5.0):
                g = lam * np.sum(np.abs(z))
                gb = smoothed_value(desc, z, beta)
                assert gb <= g + 1e-12
                assert g <= gb + beta / 2 * lg ** 2 + 1e-12

    def test_grad_is_one_over_beta_smooth(self):
        rng = np.random.default_rng(14)
        for name, desc in catalog(rng).items():
            beta = 0.6
            z = _random_points(rng, 1000)
            for i in range(0, 1000, 2):
                dg = np.linalg.norm(smoothed_grad(desc, z[i], beta)
                                    - smoothed_grad(desc, z[i + 1], beta))
                dz = np.linalg.norm(z[i] - z[i + 1])
                assert dg <= dz / beta + 1e-12, name

    def test_scaling_identity_for_homogeneous_scalar(self):
        # prox_g(z) = lam * prox_{g/lam}(z/lam) for positively homogeneous g.
        rng = np.random.default_rng(15)
        g_weight = 0.8
        for _ in range(200):
            z = float(rng.standard_normal() * 4)
            lam = float(rng.uniform(0.2, 5.0))
            lhs = scalar_prox(AbsValue(g_weight), z, 1.0)
            rhs = lam * scalar_prox(AbsValue(g_weight / lam), z / lam, 1.0)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_envelope_inequalities(self):
        # Three standard smoothing facts, checked numerically:
        #   g_b(z1) >= g_b(z2) + <grad(z2), z1-z2> + (b/2)||y(z2)-y(z1)||^2
        #   g(z1)   >= g_b(z2) + <grad(z2), z1-z2> + (b/2)||y(z2)||^2
        #   g_b(z)  <= g_c(z) + (c-b)/2 * ||y_b(z)||^2   for c >= b
        rng = np.random.default_rng(16)
        descs = catalog(rng)
        for name in ("box", "l1", "affine_point", "product"):
            desc = descs[name]
            for _ in range(100):
                z1 = rng.standard_normal(DIM) * 2
                z2 = rng.standard_normal(DIM) * 2
                beta, gamma = 0.5, 1.5
                y1 = smoothed_grad(desc, z1, beta)
                y2 = smoothed_grad(desc, z2, beta)
                lhs = smoothed_value(desc, z1, beta)
                rhs = (smoothed_value(desc, z2, beta) + y2 @ (z1 - z2)
                       + beta / 2 * np.linalg.norm(y2 - y1) ** 2)
                assert lhs >= rhs - 1e-9, name
                if name == "l1":
                    g_true = desc.lam * np.sum(np.abs(z1))
                    rhs2 = (smoothed_value(desc, z2, beta) + y2 @ (z1 - z2)
                            + beta / 2 * np.linalg.norm(y2) ** 2)
                    assert g_true >= rhs2 - 1e-9
                g_beta = smoothed_value(desc, z1, beta)
                g_gamma = smoothed_value(desc, z1, gamma)
                y_beta = smoothed_grad(desc, z1, beta)
                assert g_beta <= g_gamma + (gamma - beta) / 2 * np.linalg.norm(y_beta) ** 2 + 1e-9, name

    def test_beta_monotonicity(self):
        # Larger beta means heavier smoothing: g_beta decreases in beta.
        rng = np.random.default_rng(17)
        for name, desc in catalog(rng).items():
            for z in _random_points(rng, 50):
                vals = [smoothed_value(desc, z, b) for b in (0.1, 0.5, 2.0, 8.0)]
                assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:])), name
