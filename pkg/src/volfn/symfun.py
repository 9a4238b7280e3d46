"""Test functions of symmetric matrices and the transforms built from them.

A :class:`MatrixFunctional` wraps a function ``g`` of a ``d x d`` symmetric
matrix together with its first and second partial derivatives with respect
to the ``d**2`` entries.  All array arguments are stacks of matrices with
shape ``(..., d, d)`` and every method broadcasts over the leading axes.

Derivatives are those of ``x -> g((x + x.T) / 2)``.  At symmetric points the
values of ``h``, ``hbar`` and every contraction against a symmetric tensor are
unchanged by this convention, and the resulting Hessian carries the full
index symmetry ``(jk) <-> (lm)``, ``j <-> k``, ``l <-> m``.
"""

from __future__ import annotations

import functools
import re

import numpy as np

from .errors import DimensionError

__all__ = [
    "MatrixFunctional",
    "identity",
    "square",
    "cube",
    "entry_power",
    "trace_power",
    "get_functional",
    "h_from_g",
    "hbar_from_g",
    "bias_kernel_G",
    "bias_kernel_Gprime",
    "bias_kernel_Gsecond",
    "gauss_legendre_01",
    "symmetrize",
    "project_psd",
]

FD_GRAD_STEP = 1e-5
FD_HESS_STEP = 1e-4
DEFAULT_QUAD_NODES = 16


def symmetrize(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def project_psd(x):
    """Clip negative eigenvalues of a stack of symmetric matrices to zero."""
    w, v = np.linalg.eigh(symmetrize(x))
    w = np.clip(w, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", v, w, v)


@functools.lru_cache(maxsize=32)
def _gauss_legendre_01_cached(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre_01(n):
    """Gauss-Legendre nodes and weights mapped to ``[0, 1]``.

    The rule with ``n`` nodes integrates polynomials of degree ``2n - 1``
    exactly.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"quad_nodes must be >= 2, got {n}")
    return _gauss_legendre_01_cached(n)


def _sym_unit(d, a, b):
    e = np.zeros((d, d))
    e[a, b] += 0.5
    e[b, a] += 0.5
    return e


class MatrixFunctional:
    """A scalar test function on ``d x d`` symmetric matrices.

    Parameters
    ----------
    func : callable
        Maps an array of shape ``(..., d, d)`` to an array of shape ``(...)``.
    dim : int
        Matrix dimension ``d``.
    grad, hess : callable, optional
        Analytic first and second derivatives returning ``(..., d, d)`` and
        ``(..., d, d, d, d)`` arrays.  When either is missing, central finite
        differences are used for both.
    growth_exponent : float
        The polynomial growth exponent ``p >= 3`` of ``g`` and its
        derivatives.
    degree : int, optional
        Polynomial degree when ``g`` is a polynomial in the entries.  Used to
        short-circuit kernels that vanish identically (degree <= 2).
    symmetric_extension : bool
        Whether ``func`` is valid on all symmetric matrices.  When False,
        arguments are projected onto the PSD cone before evaluation.
    name : str, optional
    """

    def __init__(
        self,
        func,
        dim,
        *,
        grad=None,
        hess=None,
        growth_exponent=3.0,
        degree=None,
        symmetric_extension=True,
        name=None,
    ):
        if int(dim) < 1:
            raise ValueError("dim must be positive")
        if growth_exponent < 3:
            raise ValueError("growth_exponent must be >= 3")
        self._func = func
        self.dim = int(dim)
        self._grad = grad
        self._hess = hess
        self.growth_exponent = float(growth_exponent)
        self.degree = degree
        self.symmetric_extension = symmetric_extension
        self.name = name or getattr(func, "__name__", "g")

    def __repr__(self):
        return (
            f"MatrixFunctional({self.name!r}, dim={self.dim}, "
            f"mode={self.derivative_mode!r})"
        )

    @property
    def derivative_mode(self):
        if self._grad is not None and self._hess is not None:
            return "analytic"
        return "finite-difference"

    @property
    def is_linear(self):
        return self.degree is not None and self.degree <= 1

    def check_dim(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim < 2 or x.shape[-2:] != (self.dim, self.dim):
            raise DimensionError(
                f"{self.name}: expected (..., {self.dim}, {self.dim}) "
                f"matrices, got shape {x.shape}"
            )
        return x

    def _eval(self, x):
        x = symmetrize(x)
        if not self.symmetric_extension:
            x = project_psd(x)
        return np.asarray(self._func(x), dtype=float)

    def __call__(self, x):
        return self._eval(self.check_dim(x))

    def gradient(self, x):
        x = self.check_dim(x)
        if self._grad is not None and self._hess is not None:
            return np.asarray(self._grad(symmetrize(x)), dtype=float)
        return self.fd_gradient(x)

    def hessian(self, x):
        x = self.check_dim(x)
        if self._grad is not None and self._hess is not None:
            return np.asarray(self._hess(symmetrize(x)), dtype=float)
        return self.fd_hessian(x)

    def _step(self, x, rel):
        return rel * (1.0 + np.linalg.norm(x, axis=(-2, -1)))

    def fd_gradient(self, x):
        """Central-difference gradient, relative step 1e-5 (1 + ||x||)."""
        x = self.check_dim(x)
        d = self.dim
        h = self._step(x, FD_GRAD_STEP)
        hb = h[..., None, None]
        out = np.empty(x.shape)
        for a in range(d):
            for b in range(d):
                e = np.zeros((d, d))
                e[a, b] = 1.0
                out[..., a, b] = (self._eval(x + hb * e) - self._eval(x - hb * e)) / (
                    2.0 * h
                )
        return out

    def fd_hessian(self, x):
        """Central-difference Hessian from four-point stencils.

        Uses a relative step of 1e-4, which balances truncation against
        round-off for second differences in double precision.
        """
        x = self.check_dim(x)
        d = self.dim
        h = self._step(x, FD_HESS_STEP)
        hb = h[..., None, None]
        units = []
        for a in range(d):
            for b in range(d):
                e = np.zeros((d, d))
                e[a, b] = 1.0
                units.append(((a, b), e))
        out = np.empty(x.shape + (d, d))
        for i, ((a, b), ea) in enumerate(units):
            for (l, m), eb in units[i:]:
                val = (
                    self._eval(x + hb * (ea + eb))
                    - self._eval(x + hb * (ea - eb))
                    - self._eval(x - hb * (ea - eb))
                    + self._eval(x - hb * (ea + eb))
                ) / (4.0 * h * h)
                out[..., a, b, l, m] = val
                out[..., l, m, a, b] = val
        return out

    def finite_difference(self):
        """Return a copy of this functional that differentiates numerically."""
        return MatrixFunctional(
            self._func,
            self.dim,
            growth_exponent=self.growth_exponent,
            degree=self.degree,
            symmetric_extension=self.symmetric_extension,
            name=f"{self.name}[fd]",
        )


def _symmetrize_hessian(hs):
    return 0.25 * (
        hs
        + np.swapaxes(hs, -4, -3)
        + np.swapaxes(hs, -2, -1)
        + np.swapaxes(np.swapaxes(hs, -4, -3), -2, -1)
    )


def entry_power(j, k, p, dim=None):
    """``g(x) = (x^{jk})**p`` with 1-based indices ``j, k``."""
    j, k, p = int(j), int(k), int(p)
    dim = max(j, k) if dim is None else int(dim)
    if not (1 <= j <= dim and 1 <= k <= dim):
        raise DimensionError(f"entry ({j},{k}) outside a {dim}x{dim} matrix")
    if p < 1:
        raise ValueError("entry_power needs an integer exponent p >= 1")
    a, b = j - 1, k - 1
    unit = _sym_unit(dim, a, b)

    def func(x):
        return x[..., a, b] ** p

    def grad(x):
        s = x[..., a, b]
        coef = p * s ** (p - 1) if p > 1 else np.ones_like(s)
        return coef[..., None, None] * unit

    def hess(x):
        s = x[..., a, b]
        if p == 1:
            coef = np.zeros_like(s)
        elif p == 2:
            coef = np.full_like(s, 2.0)
        else:
            coef = p * (p - 1) * s ** (p - 2)
        return coef[..., None, None, None, None] * np.multiply.outer(unit, unit)

    return MatrixFunctional(
        func,
        dim,
        grad=grad,
        hess=hess,
        growth_exponent=max(3.0, float(p)),
        degree=p,
        name=f"entry_power:{j},{k},{p}",
    )


def identity(dim=1):
    """``g(x) = x^{11}``, the first diagonal entry."""
    g = entry_power(1, 1, 1, dim)
    g.name = "identity"
    return g


def square(dim=1):
    """``g(x) = (x^{11})**2``; the quarticity functional when ``d = 1``."""
    g = entry_power(1, 1, 2, dim)
    g.name = "square"
    return g


def cube(dim=1):
    g = entry_power(1, 1, 3, dim)
    g.name = "cube"
    return g


def trace_power(k, dim=1):
    """``g(x) = tr(x**k)`` for an integer ``k >= 1``."""
    k = int(k)
    if k < 1:
        raise ValueError("trace_power needs k >= 1")
    d = int(dim)

    def func(x):
        return np.trace(np.linalg.matrix_power(x, k), axis1=-2, axis2=-1)

    def grad(x):
        return k * np.linalg.matrix_power(x, k - 1)

    def hess(x):
        out = np.zeros(x.shape + (d, d))
        if k < 2:
            return out
        powers = [np.linalg.matrix_power(x, a) for a in range(k - 1)]
        for a in range(k - 1):
            # d/dx^{lm} (x^{k-1})_{kj} = sum_a (x^a)_{kl} (x^{k-2-a})_{mj}
            out += np.einsum("...kl,...mj->...jklm", powers[a], powers[k - 2 - a])
        return _symmetrize_hessian(k * out)

    return MatrixFunctional(
        func,
        d,
        grad=grad,
        hess=hess,
        growth_exponent=max(3.0, float(k)),
        degree=k,
        name=f"trace_power:{k}",
    )


_NAME_RE = re.compile(r"^\s*([a-z_]+)\s*(?::\s*(.*))?$")


def get_functional(name, dim=1):
    """Look up a built-in functional by its config name.

    Recognised names are ``identity``, ``square``, ``cube``,
    ``trace_power:k`` and ``entry_power:j,k,p``.
    """
    if isinstance(name, MatrixFunctional):
        return name
    m = _NAME_RE.match(str(name))
    if not m:
        raise ValueError(f"unknown functional {name!r}")
    kind, arg = m.group(1), m.group(2)
    if kind in ("identity", "square", "cube") and arg is None:
        return {"identity": identity, "square": square, "cube": cube}[kind](dim)
    if kind == "trace_power" and arg:
        return trace_power(int(arg), dim)
    if kind == "entry_power" and arg:
        parts = [s.strip() for s in arg.split(",")]
        if len(parts) != 3:
            raise ValueError("entry_power expects 'entry_power:j,k,p'")
        return entry_power(int(parts[0]), int(parts[1]), int(parts[2]), dim)
    raise ValueError(f"unknown functional {name!r}")


def _pair_tensor(x):
    """``x^{jl} x^{km} + x^{jm} x^{kl}`` as a ``(..., d, d, d, d)`` array."""
    return np.einsum("...jl,...km->...jklm", x, x) + np.einsum(
        "...jm,...kl->...jklm", x, x
    )


def h_from_g(g, x):
    r"""Second-order transform driving the statistical-error bias.

    .. math:: h(x) = \tfrac12 \sum_{jklm} \partial^2_{jk,lm} g(x)
              \, (x^{jl}x^{km} + x^{jm}x^{kl})
    """
    x = symmetrize(g.check_dim(x))
    return 0.5 * np.einsum("...jklm,...jklm->...", g.hessian(x), _pair_tensor(x))


def hbar_from_g(g, x):
    r"""Asymptotic-variance integrand.

    .. math:: \bar h(x) = \sum_{jklm} \partial_{jk} g(x) \, \partial_{lm} g(x)
              \, (x^{jl}x^{km} + x^{jm}x^{kl})
    """
    x = symmetrize(g.check_dim(x))
    dg = g.gradient(x)
    return np.einsum("...jk,...lm,...jklm->...", dg, dg, _pair_tensor(x))


def _check_pair(g, x, y):
    x = g.check_dim(x)
    y = g.check_dim(y)
    return np.broadcast_arrays(x, y)


def bias_kernel_G(g, x, y, quad_nodes=DEFAULT_QUAD_NODES):
    r"""Jump kernel :math:`\int_0^1 g(x+wy) - w g(x+y) - (1-w) g(x)\,dw`.

    Computed by Gauss-Legendre quadrature with ``quad_nodes`` points.
    Broadcasts over leading axes of ``x`` and ``y``.
    """
    x, y = _check_pair(g, x, y)
    w, wt = gauss_legendre_01(quad_nodes)
    pts = x[..., None, :, :] + w[:, None, None] * y[..., None, :, :]
    # The linear part integrates to g(x+y)/2 + g(x)/2 exactly.
    integral = np.sum(wt * g(pts), axis=-1)
    return integral - 0.5 * g(x + y) - 0.5 * g(x)


def bias_kernel_Gprime(g, x, y, quad_nodes=DEFAULT_QUAD_NODES):
    r"""Jump kernel picked up by the vol-of-vol bias estimator.

    .. math:: -\tfrac18 \sum_{jklm} \int_0^1 \big(\partial^2_{jk,lm}g(x)
              + \partial^2_{jk,lm}g(x+(1-w)y)\big)\, w^2\, y^{jk} y^{lm}\,dw
    """
    x, y = _check_pair(g, x, y)
    w, wt = gauss_legendre_01(quad_nodes)
    q0 = np.einsum("...jklm,...jk,...lm->...", g.hessian(x), y, y)
    pts = x[..., None, :, :] + (1.0 - w)[:, None, None] * y[..., None, :, :]
    hq = g.hessian(pts)
    q1 = np.einsum("...qjklm,...jk,...lm->...q", hq, y, y)
    return -0.125 * (q0 / 3.0 + np.sum(wt * w**2 * q1, axis=-1))


def bias_kernel_Gsecond(g, x, y, quad_nodes=DEFAULT_QUAD_NODES):
    """Difference ``G - G'``; identically zero for polynomial ``g`` of degree <= 2."""
    return bias_kernel_G(g, x, y, quad_nodes) - bias_kernel_Gprime(g, x, y, quad_nodes)
