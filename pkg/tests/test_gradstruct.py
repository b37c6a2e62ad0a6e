import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastslow.coarse import coarse_generator, coarse_graining
from fastslow.errors import BoundaryStateError, InvalidParameterError
from fastslow.gradstruct import (
    GradientStructure,
    Kind,
    check_tilt_invariance,
    coarse_cosh_intensities,
    coefficient_a,
    cosh_primal,
    cosh_primal_prime,
    cosh_star,
    cosh_star_prime,
    dual_dissipation,
    dual_hessian,
    energy,
    general_coefficient,
    logarithmic_mean,
    tilt_generator,
    tilt_measure,
    vector_field,
)
from fastslow.network import assemble_generator, kappa_representation, stationary_measure
from helpers import central_gradient, chain, four_state, interior_states, random_generator

KINDS = list(Kind)


class TestScalars:
    def test_zero(self):
        assert cosh_star(0.0) == 0.0 and cosh_primal(0.0) == 0.0

    def test_fenchel_at_point(self):
        z = 1.7
        s = cosh_star_prime(z)
        assert abs(cosh_primal(s) + cosh_star(z) - z * s) <= 1e-12

    def test_log_identity_point(self):
        p, q = 2.0, 5.0
        exact = 2.0 * (math.sqrt(p / q) + math.sqrt(q / p) - 2.0)
        assert abs(cosh_star(math.log(p) - math.log(q)) - exact) <= 1e-12

    def test_closed_form_against_cosh(self):
        z = np.linspace(-20, 20, 81)
        assert np.allclose(cosh_star(z), 4 * np.cosh(z / 2) - 4, rtol=1e-13, atol=1e-15)

    def test_primal_is_conjugate(self):
        # sup_z (s z - C*(z)) attained at z = C'(s)
        s = np.linspace(-50, 50, 41)
        z = cosh_primal_prime(s)
        assert np.allclose(cosh_primal(s), s * z - cosh_star(z), rtol=1e-12, atol=1e-14)

    def test_overflow_guard(self):
        assert cosh_star(2000.0) == np.inf


class TestLogMean:
    def test_equal(self):
        assert logarithmic_mean(3.0, 3.0) == 3.0

    def test_one_e(self):
        assert logarithmic_mean(1.0, math.e) == pytest.approx(math.e - 1.0, rel=1e-15)

    def test_zero(self):
        assert logarithmic_mean(0.0, 2.0) == 0.0

    def test_near_equal_series(self):
        a = 2.0
        b = a * (1 + 1e-7)
        # b - a is exact here, so only the division rounds before log1p
        exact = (b - a) / math.log1p((b - a) / a)
        assert logarithmic_mean(a, b) == pytest.approx(exact, rel=1e-14)

    def test_mean_inequalities(self, rng):
        a = np.exp(rng.uniform(-5, 5, 1000))
        b = np.exp(rng.uniform(-5, 5, 1000))
        L = logarithmic_mean(a, b)
        assert np.all(np.minimum(a, b) <= L * (1 + 1e-14))
        assert np.all(L <= 0.5 * (a + b) * (1 + 1e-14))

    def test_negative_rejected(self):
        with pytest.raises(InvalidParameterError):
            logarithmic_mean(-1.0, 1.0)


class TestEnergy:
    @pytest.mark.parametrize("kind", [Kind.ENTROPIC, Kind.COSH])
    def test_minimum_at_w(self, kind, rng):
        A, w = random_generator(rng, 5)
        gs = GradientStructure.from_generator(kind, A, w)
        val, grad = energy(gs, w)
        assert abs(val) <= 1e-15 and np.abs(grad).max() <= 1e-15

    def test_quadratic_at_w(self, rng):
        A, w = random_generator(rng, 5)
        gs = GradientStructure.from_generator(Kind.QUADRATIC, A, w)
        assert energy(gs, w)[0] == pytest.approx(0.5, rel=1e-14)

    @pytest.mark.parametrize("kind", KINDS)
    def test_gradient_finite_differences(self, kind, rng):
        A, w = random_generator(rng, 5)
        gs = GradientStructure.from_generator(kind, A, w)
        for c in interior_states(rng, 5, 100):
            g = energy(gs, c)[1]
            fd = central_gradient(lambda x: energy(gs, x, gradient=False)[0], c)
            assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)

    def test_boundary_gradient(self, rng):
        A, w = random_generator(rng, 3)
        gs = GradientStructure.from_generator(Kind.COSH, A, w)
        c = np.array([0.5, 0.5, 0.0])
        assert energy(gs, c, gradient=False)[0] == pytest.approx(
            0.5 * math.log(0.5 / w[0]) + 0.5 * math.log(0.5 / w[1]), rel=1e-12)
        with pytest.raises(BoundaryStateError):
            energy(gs, c)


class TestDual:
    @pytest.mark.parametrize("kind", KINDS)
    def test_constant_force(self, kind, rng):
        A, w = random_generator(rng, 4)
        gs = GradientStructure.from_generator(kind, A, w)
        val, grad = dual_dissipation(gs, interior_states(rng, 4, 1)[0], np.full(4, 2.5))
        assert val == 0.0 and np.abs(grad).max() == 0.0

    def test_cosh_quadratic_fourth_order(self, rng):
        A, w = random_generator(rng, 4)
        cosh = GradientStructure.from_generator(Kind.COSH, A, w)
        quad = GradientStructure.from_generator(Kind.QUADRATIC, A, w)
        xi = rng.normal(size=4)
        diff = [abs(dual_dissipation(cosh, w, t * xi)[0] - dual_dissipation(quad, w, t * xi)[0])
                for t in (1e-1, 1e-2)]
        assert diff[0] / diff[1] == pytest.approx(1e4, rel=1e-2)

    @pytest.mark.parametrize("kind", KINDS)
    def test_gradient_and_hessian_fd(self, kind, rng):
        A, w = random_generator(rng, 5)
        gs = GradientStructure.from_generator(kind, A, w)
        c = interior_states(rng, 5, 1)[0]
        xi = rng.normal(size=5)
        fd = central_gradient(lambda x: dual_dissipation(gs, c, x)[0], xi)
        assert np.allclose(dual_dissipation(gs, c, xi)[1], fd, rtol=1e-6, atol=1e-8)
        H = dual_hessian(gs, c, xi)
        fdH = np.column_stack([central_gradient(lambda x: dual_dissipation(gs, c, x)[1][k], xi)
                               for k in range(5)])
        assert np.allclose(H, fdH, rtol=1e-5, atol=1e-7)


class TestCoefficients:
    def test_cosh_formula(self, rng):
        for _ in range(100):
            A, w = random_generator(rng, 4)
            K = kappa_representation(A, w).kappa
            c = rng.dirichlet(np.ones(4))
            a = coefficient_a(Kind.COSH, c, w, K)
            expected = K * np.sqrt(np.outer(c, c))
            np.fill_diagonal(expected, 0.0)
            assert np.allclose(a, expected, rtol=1e-12, atol=0)
            assert np.allclose(general_coefficient(Kind.COSH, c, w, K), expected, rtol=1e-10)

    @pytest.mark.parametrize("kind", KINDS)
    def test_equilibrium_branch(self, kind, rng):
        A, w = random_generator(rng, 4)
        K = kappa_representation(A, w).kappa
        g = general_coefficient(kind, w, w, K)
        # rho = 1: Psi''(0) Phi''(1) = 1 for all three kinds
        expected = K * np.sqrt(np.outer(w, w))
        np.fill_diagonal(expected, 0.0)
        assert np.allclose(g, expected, rtol=1e-14)

    def test_measure_independence(self, rng):
        A, w1 = random_generator(rng, 4)
        K = kappa_representation(A, w1).kappa
        w2 = rng.dirichlet(np.ones(4))
        c = rng.dirichlet(np.ones(4))
        a1 = coefficient_a(Kind.COSH, c, w1, K)
        a2 = coefficient_a(Kind.COSH, c, w2, K)
        assert np.abs(a1 - a2).max() <= 1e-12
        q1 = coefficient_a(Kind.QUADRATIC, c, w1, K)
        q2 = coefficient_a(Kind.QUADRATIC, c, w2, K)
        assert np.abs(q1 - q2).max() > 1e-3


class TestVectorField:
    @pytest.mark.parametrize("kind", KINDS)
    def test_equilibrium(self, kind, rng):
        A, w = random_generator(rng, 4)
        gs = GradientStructure.from_generator(kind, A, w)
        assert np.abs(vector_field(gs, w)).max() <= 1e-15

    @pytest.mark.parametrize("kind", KINDS)
    def test_two_state(self, kind, rng):
        A = np.array([[-1.0, 3.0], [1.0, -3.0]])
        gs = GradientStructure.from_generator(kind, A)
        for c in interior_states(rng, 2, 20):
            f = vector_field(gs, c)
            assert np.abs(f - A @ c).max() <= 1e-10
            assert abs(f.sum()) <= 1e-12


class TestTilt:
    def test_zero_tilt(self, rng):
        A, w = random_generator(rng, 4)
        K = kappa_representation(A, w).kappa
        assert np.allclose(tilt_measure(w, np.zeros(4)), w, atol=1e-16)
        assert np.abs(tilt_generator(K, w, np.zeros(4)) - A).max() <= 1e-14

    def test_constant_tilt(self, rng):
        _, w = random_generator(rng, 4)
        assert np.allclose(tilt_measure(w, np.full(4, 7.3)), w, atol=1e-16)

    def test_two_state_value(self):
        wt = tilt_measure(np.array([0.75, 0.25]), np.array([0.0, math.log(3.0)]))
        assert np.allclose(wt, [0.9, 0.1], atol=1e-15)

    def test_tilted_generator_stationary(self, rng):
        A, w = random_generator(rng, 5)
        K = kappa_representation(A, w).kappa
        eta = rng.normal(size=5)
        At = tilt_generator(K, w, eta)
        assert np.abs(At @ tilt_measure(w, eta)).max() <= 1e-10

    def test_cosh_invariance(self, rng):
        net = four_state(1.0, 2.0, 3.0, 1.0, 1.5, 1.0)
        A = assemble_generator(net, 0.5)
        gs = GradientStructure.from_generator(Kind.COSH, A)
        states = interior_states(rng, 4, 20)
        for _ in range(5):
            assert check_tilt_invariance(gs, rng.normal(size=4), states) <= 1e-9

    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_tilt_residual(self, kind, rng):
        A, w = random_generator(rng, 4)
        gs = GradientStructure.from_generator(kind, A, w)
        assert check_tilt_invariance(gs, np.zeros(4), interior_states(rng, 4, 10)) <= 1e-10

    @pytest.mark.parametrize("kind", [Kind.QUADRATIC, Kind.ENTROPIC])
    def test_other_kinds_not_invariant(self, kind, rng):
        net = chain([1.0, 2.0], [2.0, 1.0])
        gs = GradientStructure.from_generator(kind, net.slow)
        eta = np.array([1.0, 0.0, 0.0])
        assert check_tilt_invariance(gs, eta, interior_states(rng, 3, 10)) > 1e-3


class TestCoarseIntensities:
    def test_trivial_partition(self):
        net = chain([1.0, 2.0], [2.0, 1.0])
        cg = coarse_graining(net)
        khat = coarse_cosh_intensities(net, cg)
        assert np.allclose(khat, kappa_representation(net.slow, cg.w0).kappa, atol=1e-15)

    def test_dual_evaluation(self, rng):
        net = four_state()
        cg = coarse_graining(net)
        khat = coarse_cosh_intensities(net, cg, check=False)
        slow = GradientStructure(Kind.COSH, cg.w0, kappa_representation(net.slow, cg.w0).kappa)
        coarse = GradientStructure(Kind.COSH, cg.what, khat)
        for _ in range(20):
            chat = rng.dirichlet(np.ones(3))
            xihat = rng.normal(size=3)
            lhs = dual_dissipation(coarse, chat, xihat)[0]
            rhs = dual_dissipation(slow, cg.reconstruct(chat), cg.lift(xihat))[0]
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_reproduces_coarse_generator(self, rng):
        net = four_state(1.0, 2.0, 3.0, 1.0, 1.5, 1.0)
        cg = coarse_graining(net)
        coarse = GradientStructure(Kind.COSH, cg.what, coarse_cosh_intensities(net, cg))
        Ahat = coarse_generator(net, cg)
        for chat in interior_states(rng, 3, 20):
            assert np.abs(vector_field(coarse, chat) - Ahat @ chat).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8), kind=st.sampled_from(KINDS))
def test_gradient_flow_equivalence_property(seed, n, kind):
    rng = np.random.default_rng(seed)
    A, w = random_generator(rng, n)
    gs = GradientStructure.from_generator(kind, A, w)
    for c in interior_states(rng, n, 5):
        assert np.abs(vector_field(gs, c) - A @ c).max() <= 1e-9


@settings(max_examples=50, deadline=None)
@given(z=st.floats(-40, 40), lam=st.floats(1.0, 10.0))
def test_cosh_scaling_properties(z, lam):
    assert lam ** 2 * cosh_star(z) <= cosh_star(lam * z) * (1 + 1e-12) + 1e-300
    s = 10 * z
    assert cosh_primal(lam * s) <= lam ** 2 * cosh_primal(s) * (1 + 1e-12) + 1e-300


@settings(max_examples=50, deadline=None)
@given(s=st.floats(-1e6, 1e6))
def test_cosh_primal_growth(s):
    g = abs(s) * math.log1p(abs(s))
    C = cosh_primal(s)
    assert 0.5 * g <= C * (1 + 1e-12) + 1e-300
    assert C <= 2.0 * g * (1 + 1e-12) + 1e-300
