"""Differentiation backend for the smooth NLPs.

Functions are expressed as jax-traceable maps of a local slice of the decision
vector plus constant parameter arrays. Compiled value/Jacobian/Hessian kernels
are cached per underlying function so that structurally identical blocks (one
per stage, element, interval, ...) share compilations.
"""

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)
jax.config.update("jax_platform_name", "cpu")

from .errors import DomainError

_CACHE = {}


def _compiled(fn):
    if fn not in _CACHE:
        val = jax.jit(fn)
        jac = jax.jit(jax.jacfwd(fn))

        def lag(x, mult, *params):
            return fn(x, *params) @ mult

        hess = jax.jit(jax.jacfwd(jax.grad(lag, argnums=0), argnums=0))
        _CACHE[fn] = (val, jac, hess)
    return _CACHE[fn]


class ExprFunction:
    """Differentiable vector-valued function of a slice of the decision vector.

    fn(x, *params) must be jax-traceable and return a 1-D array. Derivatives
    are exact for the elementary operations of the graph.
    """

    def __init__(self, fn, params=()):
        self.fn = fn
        self.params = tuple(np.asarray(p, dtype=float) for p in params)
        self._val, self._jac, self._hess = _compiled(fn)

    def value(self, x):
        v = np.asarray(self._val(np.asarray(x, dtype=float), *self.params))
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite value in expression evaluation")
        return v

    def jacobian(self, x):
        return np.asarray(self._jac(np.asarray(x, dtype=float), *self.params))

    def gradient(self, x):
        J = self.jacobian(x)
        if J.shape[0] != 1:
            raise ValueError("gradient requires a scalar-valued function")
        return J[0]

    def hessian(self, x, mult=None):
        """Hessian of mult @ fn (the Lagrangian contribution of this block)."""
        x = np.asarray(x, dtype=float)
        if mult is None:
            mult = np.ones(1)
        return np.asarray(self._hess(x, np.asarray(mult, dtype=float), *self.params))


def differentiate(f, w):
    """(value, gradient, jacobian, hessian) of an ExprFunction at w.

    gradient and hessian refer to a scalar function (m = 1); for vector-valued
    functions, gradient is the Jacobian's single row convention and raises.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise DomainError("non-finite evaluation point")
    value = f.value(w)
    jac = f.jacobian(w)
    if value.shape[0] == 1:
        return value, jac[0], jac, f.hessian(w)
    return value, None, jac, None


class Block:
    """An ExprFunction wired into global decision-vector indices."""

    def __init__(self, fn, idx, params=()):
        self.expr = ExprFunction(fn, params)
        self.idx = np.asarray(idx, dtype=int)

    def value(self, w):
        return self.expr.value(w[self.idx])

    def jacobian(self, w):
        return self.expr.jacobian(w[self.idx])

    def hessian(self, w, mult):
        return self.expr.hessian(w[self.idx], mult)


class NlpProblem:
    """Smooth NLP: min f(w) s.t. c_E(w) = 0, c_I(w) >= 0, lb <= w <= ub."""

    def __init__(self, n, lb, ub, obj_blocks, eq_blocks, ineq_blocks):
        self.n = n
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.obj_blocks = list(obj_blocks)
        self.eq_blocks = list(eq_blocks)
        self.ineq_blocks = list(ineq_blocks)
        self._m_eq = None
        self._m_ineq = None

    def _sizes(self, w):
        if self._m_eq is None:
            self._m_eq = [b.value(w).shape[0] for b in self.eq_blocks]
            self._m_ineq = [b.value(w).shape[0] for b in self.ineq_blocks]
        return self._m_eq, self._m_ineq

    @property
    def m_eq(self):
        return sum(self._m_eq)

    @property
    def m_ineq(self):
        return sum(self._m_ineq)

    def eval_f(self, w):
        return float(sum(b.value(w)[0] for b in self.obj_blocks))

    def eval_grad(self, w):
        g = np.zeros(self.n)
        for b in self.obj_blocks:
            g[b.idx] += b.jacobian(w)[0]
        return g

    def _eval_group(self, w, blocks, sizes, want_jac):
        m = sum(sizes)
        c = np.empty(m)
        J = np.zeros((m, self.n)) if want_jac else None
        row = 0
        for b, mb in zip(blocks, sizes):
            c[row : row + mb] = b.value(w)
            if want_jac:
                J[row : row + mb, b.idx] += b.jacobian(w)
            row += mb
        return c, J

    def eval_eq(self, w, want_jac=True):
        m_eq, _ = self._sizes(w)
        return self._eval_group(w, self.eq_blocks, m_eq, want_jac)

    def eval_ineq(self, w, want_jac=True):
        _, m_ineq = self._sizes(w)
        return self._eval_group(w, self.ineq_blocks, m_ineq, want_jac)

    def hess_lagrangian(self, w, sigma_f, y_eq, z_ineq):
        """Hessian of sigma_f * f - y^T c_E - z^T c_I."""
        m_eq, m_ineq = self._sizes(w)
        H = np.zeros((self.n, self.n))
        for b in self.obj_blocks:
            H[np.ix_(b.idx, b.idx)] += sigma_f * b.hessian(w, np.ones(1))
        row = 0
        for b, mb in zip(self.eq_blocks, m_eq):
            mult = y_eq[row : row + mb]
            if np.any(mult):
                H[np.ix_(b.idx, b.idx)] -= b.hessian(w, mult)
            row += mb
        row = 0
        for b, mb in zip(self.ineq_blocks, m_ineq):
            mult = z_ineq[row : row + mb]
            if np.any(mult):
                H[np.ix_(b.idx, b.idx)] -= b.hessian(w, mult)
            row += mb
        return H
