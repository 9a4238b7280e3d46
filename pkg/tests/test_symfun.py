import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_psd, random_sym
from oracles import G_oracle, Gprime_oracle, contract_h, contract_hbar, fd_grad, fd_hess
from volfn.errors import DimensionError
from volfn.symfun import (
    MatrixFunctional,
    bias_kernel_G,
    bias_kernel_Gprime,
    bias_kernel_Gsecond,
    gauss_legendre_01,
    get_functional,
    h_from_g,
    hbar_from_g,
)

X2 = np.array([[1.0, 0.2], [0.2, 0.5]])
BUILTINS = [
    ("identity", 1),
    ("square", 1),
    ("cube", 1),
    ("identity", 2),
    ("square", 2),
    ("trace_power:2", 2),
    ("trace_power:3", 2),
    ("trace_power:4", 3),
    ("entry_power:1,2,3", 2),
    ("entry_power:2,2,4", 3),
]


def m1(v):
    return np.array([[v]])


class TestCatalog:
    @pytest.mark.parametrize(
        "name,expected",
        [("identity", "identity"), ("square", "square"), ("trace_power:3", "trace_power:3"),
         ("entry_power:1,2,2", "entry_power:1,2,2")],
    )
    def test_lookup(self, name, expected):
        assert get_functional(name, 2).name == expected

    @pytest.mark.parametrize("bad", ["log_det", "trace_power", "entry_power:1,2", "square:2"])
    def test_unknown_name(self, bad):
        with pytest.raises(ValueError):
            get_functional(bad, 2)

    def test_values(self):
        x = np.array([[2.0, 0.5], [0.5, 3.0]])
        assert get_functional("identity", 2)(x) == 2.0
        assert get_functional("square", 2)(x) == 4.0
        assert get_functional("trace_power:2", 2)(x) == pytest.approx(4 + 9 + 0.5)
        assert get_functional("entry_power:1,2,3", 2)(x) == pytest.approx(0.125)

    def test_dimension_mismatch(self):
        g = get_functional("square", 1)
        with pytest.raises(DimensionError):
            g(np.eye(2))
        with pytest.raises(DimensionError):
            h_from_g(get_functional("trace_power:2", 2), np.eye(3))

    def test_vectorised(self, rng):
        g = get_functional("trace_power:3", 2)
        xs = np.stack([random_psd(rng, 2) for _ in range(5)])
        np.testing.assert_allclose(g(xs), [g(x) for x in xs])
        assert g.hessian(xs).shape == (5, 2, 2, 2, 2)


class TestDerivatives:
    @pytest.mark.parametrize("name,d", BUILTINS)
    def test_hessian_index_symmetry(self, name, d, rng):
        g = get_functional(name, d)
        H = g.hessian(random_psd(rng, d))
        scale = 1e-8 * (1 + np.abs(H).max())
        np.testing.assert_allclose(H, np.transpose(H, (2, 3, 0, 1)), atol=scale)
        np.testing.assert_allclose(H, np.transpose(H, (1, 0, 2, 3)), atol=scale)
        np.testing.assert_allclose(H, np.transpose(H, (0, 1, 3, 2)), atol=scale)

    @pytest.mark.parametrize("name,d", BUILTINS)
    def test_analytic_matches_oracle(self, name, d, rng):
        g = get_functional(name, d)
        x = random_psd(rng, d)
        f = lambda z: float(g(z))  # noqa: E731
        np.testing.assert_allclose(g.gradient(x), fd_grad(f, x), atol=1e-7 * (1 + abs(f(x))))
        np.testing.assert_allclose(
            g.hessian(x), fd_hess(f, x, step=1e-4), atol=1e-5 * (1 + abs(f(x)))
        )

    @pytest.mark.parametrize("name,d", BUILTINS)
    def test_fd_mode_matches_analytic(self, name, d, rng):
        g = get_functional(name, d)
        gfd = g.finite_difference()
        assert g.derivative_mode == "analytic"
        assert gfd.derivative_mode == "finite-difference"
        for _ in range(3):
            x = random_psd(rng, d)
            h_a, h_f = h_from_g(g, x), h_from_g(gfd, x)
            assert abs(h_a - h_f) <= 1e-6 * (1 + abs(h_a))
            hb_a, hb_f = hbar_from_g(g, x), hbar_from_g(gfd, x)
            assert abs(hb_a - hb_f) <= 1e-6 * (1 + abs(hb_a))

    def test_user_functional_without_derivatives(self, rng):
        g = MatrixFunctional(lambda x: np.trace(x @ x, axis1=-2, axis2=-1), 2, name="user")
        x = random_psd(rng, 2)
        assert g.derivative_mode == "finite-difference"
        ref = get_functional("trace_power:2", 2)
        assert h_from_g(g, x) == pytest.approx(h_from_g(ref, x), rel=1e-6)

    def test_non_extending_functional_is_projected(self):
        seen = []

        def func(x):
            seen.append(np.linalg.eigvalsh(x).min())
            return np.log(np.linalg.det(x + np.eye(2)))

        g = MatrixFunctional(func, 2, symmetric_extension=False)
        g(np.array([[1.0, 0.0], [0.0, -0.5]]))
        assert min(seen) >= -1e-12


class TestH:
    def test_square_constant_value(self):
        assert h_from_g(get_functional("square"), m1(0.04)) == pytest.approx(0.0032, rel=1e-14)

    def test_identity_is_zero(self):
        assert h_from_g(get_functional("identity"), m1(0.3)) == 0.0

    def test_trace_square_d2(self):
        # oracle: central differences (step 1e-5) contracted by explicit loops -> 3.58
        g = get_functional("trace_power:2", 2)
        f = lambda z: float(np.trace(z @ z))  # noqa: E731
        oracle = contract_h(fd_hess(f, X2, step=1e-5), X2)
        assert oracle == pytest.approx(3.58, rel=1e-5)
        assert h_from_g(g, X2) == pytest.approx(3.58, rel=1e-12)


class TestHBar:
    def test_square_constant_value(self):
        assert hbar_from_g(get_functional("square"), m1(0.04)) == pytest.approx(2.048e-5, rel=1e-13)

    def test_identity(self):
        assert hbar_from_g(get_functional("identity"), m1(0.3)) == pytest.approx(2 * 0.09)

    def test_trace_square_d2(self):
        g = get_functional("trace_power:2", 2)
        f = lambda z: float(np.trace(z @ z))  # noqa: E731
        oracle = contract_hbar(fd_grad(f, X2), X2)
        assert oracle == pytest.approx(10.7656, rel=1e-8)
        assert hbar_from_g(g, X2) == pytest.approx(10.7656, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3), k=st.integers(1, 4))
    def test_nonnegative(self, seed, d, k):
        rng = np.random.default_rng(seed)
        x = random_psd(rng, d)
        x[...] = x - (np.linalg.eigvalsh(x).min() * rng.uniform()) * np.eye(d)
        assert hbar_from_g(get_functional(f"trace_power:{k}", d), x) >= -1e-12


class TestKernels:
    def test_gauss_legendre_degree(self):
        w, wt = gauss_legendre_01(16)
        for p in range(32):
            assert np.sum(wt * w**p) == pytest.approx(1 / (p + 1), rel=1e-13)
        with pytest.raises(ValueError):
            gauss_legendre_01(1)

    def test_G_square(self):
        # (w^2 - w) y^2 integrates to -y^2/6
        g = get_functional("square")
        for x in (0.0, 0.04, 1.3):
            assert bias_kernel_G(g, m1(x), m1(0.02)) == pytest.approx(-6.666666666666667e-05, rel=1e-12)
        assert G_oracle(lambda z: z[..., 0, 0] ** 2, m1(0.04), m1(0.02)) == pytest.approx(
            -0.02**2 / 6, rel=1e-8
        )

    def test_G_cube_vs_dense_oracle(self):
        g = get_functional("cube")
        oracle = G_oracle(lambda z: z[..., 0, 0] ** 3, m1(1.0), m1(0.5))
        assert abs(bias_kernel_G(g, m1(1.0), m1(0.5)) - oracle) <= 1e-10
        assert bias_kernel_G(g, m1(1.0), m1(0.5)) == pytest.approx(-0.15625, rel=1e-13)

    def test_Gprime_square(self):
        g = get_functional("square")
        assert bias_kernel_Gprime(g, m1(0.7), m1(0.02)) == pytest.approx(-0.02**2 / 6, rel=1e-12)

    def test_Gprime_quartic_vs_dense_oracle(self):
        g = get_functional("entry_power:1,1,4")
        oracle = Gprime_oracle(lambda z: np.array([[[[12 * z[0, 0] ** 2]]]]), m1(1.0), m1(0.3))
        assert abs(bias_kernel_Gprime(g, m1(1.0), m1(0.3)) - oracle) <= 1e-10
        assert bias_kernel_Gprime(g, m1(1.0), m1(0.3)) == pytest.approx(-0.097155, rel=1e-12)

    def test_Gsecond(self):
        assert bias_kernel_Gsecond(get_functional("square"), m1(0.3), m1(0.1)) == pytest.approx(0, abs=1e-16)
        # -0.15625 - (-0.1328125), both kernels in closed form
        val = bias_kernel_Gsecond(get_functional("cube"), m1(1.0), m1(0.5))
        assert val == pytest.approx(-0.0234375, rel=1e-12)

    @pytest.mark.parametrize("name,d", BUILTINS)
    def test_zero_jump(self, name, d, rng):
        g = get_functional(name, d)
        x = random_psd(rng, d)
        z = np.zeros((d, d))
        assert abs(bias_kernel_G(g, x, z)) <= 1e-14 * (1 + abs(g(x)))
        assert bias_kernel_Gprime(g, x, z) == 0.0
        assert abs(bias_kernel_Gsecond(g, x, z)) <= 1e-14 * (1 + abs(g(x)))

    @pytest.mark.parametrize("name,d", [("entry_power:1,1,6", 1), ("trace_power:3", 2), ("trace_power:2", 3)])
    def test_quadrature_converged(self, name, d, rng):
        g = get_functional(name, d)
        x, y = random_psd(rng, d), random_sym(rng, d, 0.3)
        for kernel in (bias_kernel_G, bias_kernel_Gprime):
            assert abs(kernel(g, x, y, 8) - kernel(g, x, y, 16)) <= 1e-10
            assert abs(kernel(g, x, y, 16) - kernel(g, x, y, 32)) <= 1e-10

    def test_broadcast(self, rng):
        g = get_functional("trace_power:3", 2)
        xs = np.stack([random_psd(rng, 2) for _ in range(4)])
        ys = np.stack([random_sym(rng, 2, 0.1) for _ in range(4)])
        np.testing.assert_allclose(
            bias_kernel_Gsecond(g, xs, ys), [bias_kernel_Gsecond(g, x, y) for x, y in zip(xs, ys)]
        )

    def test_growth_bound(self, rng):
        # |G(x, y)| <= K (1 + |x|)^p |y|^2 for bounded jumps, K fitted on a pilot sample
        g = get_functional("trace_power:3", 2)
        p = g.growth_exponent

        def ratio(x, y):
            nx, ny = np.linalg.norm(x), np.linalg.norm(y)
            return abs(bias_kernel_G(g, x, y)) / ((1 + nx) ** p * ny**2)

        pilot = [ratio(random_psd(rng, 2), random_sym(rng, 2, 0.5)) for _ in range(200)]
        K = 2 * max(pilot)
        for scale_x in (0.1, 1, 10):
            for scale_y in (1e-3, 0.1, 0.5):
                x = random_psd(rng, 2, scale_x)
                y = random_sym(rng, 2, scale_y)
                assert ratio(x, y) <= K
