"""Discrete fractional Sobolev inner products.

A :class:`FracOperator` carries a symmetric positive definite matrix ``A``
with ``u @ A @ u == ||u||_V^2``.  Two realizations exist:

``spectral``
    ``A = M S diag(lam^s) S^T`` where ``S`` is the orthonormal sine basis of
    the 3-point Dirichlet Laplacian and ``lam`` its eigenvalues.  Applied
    with the type-I DST, never formed.
``integral``
    P1 Galerkin matrix of the whole-line Gagliardo form
    ``int int (u(x)-u(y)) (v(x)-v(y)) / |x-y|^(1+2s)`` for functions
    extended by zero, plus the lumped L^2 mass.  1-D only, dense.

``M`` is always the lumped mass, a scalar multiple of the identity.
"""

from __future__ import annotations

import csv

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from .grid import Grid, check_function

__all__ = [
    "FracOperator",
    "ConvergenceError",
    "spectral_operator",
    "integral_stiffness",
    "laplacian_eigenvalues",
    "sine_basis",
]

DEFAULT_MAX_INTEGRAL_N = 512


class ConvergenceError(RuntimeError):
    """Raised when CG stops before reaching the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def laplacian_eigenvalues(n: int, length: float) -> np.ndarray:
    """Eigenvalues ``(4/h^2) sin^2(k pi h / (2L))``, k = 1..n, of the
    3-point Dirichlet Laplacian on ``n`` interior nodes."""
    h = length / (n + 1)
    k = np.arange(1, n + 1)
    return (4.0 / h**2) * np.sin(k * np.pi / (2.0 * (n + 1))) ** 2


def sine_basis(n: int) -> np.ndarray:
    """Orthonormal, symmetric sine matrix; column k-1 is the k-th eigenvector."""
    i = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(i, i) * np.pi / (n + 1))


class FracOperator:
    """Discrete V-inner product on a :class:`~fraclp.grid.Grid`.

    Use :func:`spectral_operator` or :func:`integral_stiffness` to build one.
    Instances are treated as immutable.
    """

    def __init__(self, kind, s, grid, *, eigenvalues=None, matrix=None, seminorm=None):
        self.kind = kind
        self.s = float(s)
        self.grid = grid
        self._mass = grid.cell
        if kind == "spectral":
            # (lam^h)^s, shaped like the grid
            self.eigenvalues = eigenvalues
            self._diag = None
        elif kind == "integral":
            self.matrix = matrix
            self.seminorm_matrix = seminorm
            self._chol = None
        else:
            raise ValueError(f"unknown operator kind {kind!r}")

    def __repr__(self):
        return f"FracOperator(kind={self.kind!r}, s={self.s}, n={self.grid.size})"

    # -- transforms (spectral only) -------------------------------------------------
    def _forward(self, u):
        return scipy.fft.dstn(u.reshape(self.grid.shape), type=1, norm="ortho")

    def _backward(self, c):
        return scipy.fft.idstn(c, type=1, norm="ortho").ravel()

    def coefficients(self, u):
        """Coefficients of ``u`` in the orthonormal sine basis."""
        if self.kind != "spectral":
            raise TypeError("coefficients are only defined for the spectral kind")
        return self._forward(check_function(self.grid, u))

    # -- core linear algebra ---------------------------------------------------
    def matvec(self, u):
        """``A @ u`` (V-inner product matrix)."""
        u = check_function(self.grid, u)
        if self.kind == "spectral":
            return self._mass * self._backward(self.eigenvalues * self._forward(u))
        return self.matrix @ u

    def apply(self, u):
        """V-Riesz image ``M^-1 A u``; for the spectral kind this is
        ``(-Delta_h)^s u``."""
        return self.matvec(u) / self._mass

    def inner(self, u, v):
        v = check_function(self.grid, v)
        return float(v @ self.matvec(u))

    def norm(self, u):
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def diagonal(self):
        if self.kind == "integral":
            return np.diag(self.matrix).copy()
        if self._diag is None:
            g = self.grid
            sx2 = sine_basis(g.n) ** 2
            if g.dim == 1:
                d = sx2 @ self.eigenvalues
            else:
                sy2 = sine_basis(g.ny) ** 2
                d = (sx2 @ self.eigenvalues @ sy2.T).ravel()
            self._diag = self._mass * d
        return self._diag

    def to_dense(self):
        if self.kind == "integral":
            return self.matrix.copy()
        eye = np.eye(self.grid.size)
        return np.column_stack([self.matvec(e) for e in eye])

    def solve(self, rhs):
        """``A^-1 rhs`` by a direct method."""
        rhs = check_function(self.grid, rhs, name="rhs")
        if self.kind == "spectral":
            return self._backward(self._forward(rhs) / self.eigenvalues) / self._mass
        if self._chol is None:
            self._chol = scipy.linalg.cho_factor(self.matrix)
        return scipy.linalg.cho_solve(self._chol, rhs)

    def dual_norm(self, r):
        """``sqrt(r @ A^-1 @ r)``, the V*-norm of a nodal functional."""
        return float(np.sqrt(max(float(r @ self.solve(r)), 0.0)))

    def solve_shifted(self, c, w, rhs, tol=1e-10, maxiter=None, x0=None):
        """Solve ``(c A + M diag(w)) u = rhs`` with Jacobi-preconditioned CG.

        ``x0`` warm-starts CG; the tolerance is relative to ``||rhs||``.
        Raises :class:`ConvergenceError` if the relative residual is not
        below ``tol`` after ``maxiter`` (default ``10 n``) iterations.
        """
        if not c > 0:
            raise ValueError("shift c must be positive")
        w = check_function(self.grid, w, name="weights")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        rhs = check_function(self.grid, rhs, name="rhs")
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0:
            return np.zeros_like(rhs)
        if self.kind == "spectral" and not np.any(w):
            return self.solve(rhs) / c

        mw = self._mass * w
        n = rhs.size
        diag = c * self.diagonal() + mw
        if self.kind == "integral":
            system = LinearOperator((n, n), matvec=lambda v: c * (self.matrix @ v) + mw * v,
                                    dtype=float)
        else:
            system = LinearOperator((n, n), matvec=lambda v: c * self.matvec(v) + mw * v,
                                    dtype=float)
        precond = LinearOperator((n, n), matvec=lambda v: v / diag, dtype=float)
        maxiter = 10 * n if maxiter is None else maxiter
        if x0 is not None:
            x0 = check_function(self.grid, x0, name="x0")
        u, info = cg(system, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=precond)
        resid = np.linalg.norm(rhs - system.matvec(u)) / bnorm
        if info != 0:
            raise ConvergenceError(
                f"CG did not converge in {maxiter} iterations "
                f"(relative residual {resid:.3e}, tol {tol:.1e})",
                residual=resid, iterations=maxiter)
        return u

    def dump_matrix(self, path, max_n=64):
        """Write the dense matrix ``A`` as CSV (debugging aid, small grids)."""
        if self.grid.size > max_n:
            raise ValueError(f"matrix dump is limited to n <= {max_n}")
        A = self.to_dense()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in A:
                writer.writerow([format(v, ".17g") for v in row])


def _check_order(s, allow_one=False):
    hi_ok = s <= 1.0 if allow_one else s < 1.0
    if not (0.0 < s and hi_ok):
        raise ValueError("s must lie in (0,1)")


def spectral_operator(grid: Grid, s: float, *, _allow_one=False) -> FracOperator:
    """Matrix power ``(-Delta_h)^s`` of the Dirichlet 3-point Laplacian.

    In 2-D the eigenvalues are sums of the 1-D ones and the transform is the
    tensor-product DST.
    """
    _check_order(s, allow_one=_allow_one)
    lam = laplacian_eigenvalues(grid.n, grid.length)
    if grid.dim == 2:
        lam = lam[:, None] + laplacian_eigenvalues(grid.ny, grid.length_y)[None, :]
    return FracOperator("spectral", s, grid, eigenvalues=lam ** s)


# ---------------------------------------------------------------------------
# integral (Gagliardo) assembly
# ---------------------------------------------------------------------------

def _power_moment(m: int, gamma: float) -> float:
    """``int_0^1 t^m (1+t)^(-gamma) dt`` for m in {0,1,2}, in closed form."""
    coeffs = {0: (1,), 1: (-1, 1), 2: (1, -2, 1)}[m]  # (w-1)^m in powers of w
    total = 0.0
    for k, c in enumerate(coeffs):
        e = k - gamma + 1.0
        total += c * (np.log(2.0) if abs(e) < 1e-14 else (2.0**e - 1.0) / e)
    return total


def _near_field(s: float):
    """Unit-cell integrals for the singular element pairs.

    Returns ``(same, adj)`` where ``same = int_{[0,1]^2} |x-y|^(1-2s)`` and
    ``adj`` is the 2x2 matrix of ``int_{[0,1]^2} a b (a+b)^(-1-2s)`` for
    ``a, b`` in ``{xi, eta}`` (distance to the shared node on either side).
    """
    gamma = 1.0 + 2.0 * s
    same = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    t0, t1, t2 = (_power_moment(m, gamma) for m in range(3))
    # split the square along the diagonal, polar-type map (r, r t)
    j20 = (t0 + t2) / (3.0 - 2.0 * s)
    j11 = 2.0 * t1 / (3.0 - 2.0 * s)
    adj = np.array([[j20, j11], [j11, j20]])
    return same, adj


def integral_stiffness(grid: Grid, s: float, *, quad_order: int = 6,
                       max_n: int = DEFAULT_MAX_INTEGRAL_N) -> FracOperator:
    """Dense P1 Galerkin matrix of the Gagliardo form plus lumped L^2 mass.

    Same-element and neighbouring-element pairs use closed-form integrals of
    the kernel against the piecewise-linear differences; pairs further apart
    use tensor Gauss-Legendre quadrature.  The interaction with the exterior
    ``R \\ (0, L)`` reduces to the weight ``(x^-2s + (L-x)^-2s)/s``.
    """
    _check_order(s)
    if grid.dim != 1:
        raise ValueError("integral operator is only available in 1-D")
    if grid.n > max_n:
        raise ValueError(f"integral assembly is capped at n <= {max_n} (got {grid.n})")
    n, h, L = grid.n, grid.h, grid.length
    ne = n + 1  # elements; nodes 0..n+1 with 0 and n+1 on the boundary
    gamma = 1.0 + 2.0 * s
    K = np.zeros((n + 2, n + 2))

    same, adj = _near_field(s)
    scale = h ** (1.0 - 2.0 * s)  # h^(3-2s) from the integral, 1/h^2 from slopes

    # slope of u on element e is (u[e+1] - u[e]) / h; D maps nodes -> slopes * h
    e = np.arange(ne)
    # same element: (u'_e v'_e) * same * h^(3-2s)
    for a, b, sign in ((e, e, 1.0), (e + 1, e + 1, 1.0), (e, e + 1, -1.0), (e + 1, e, -1.0)):
        np.add.at(K, (a, b), sign * same * scale)

    # neighbours e, e+1 share node e+1; contribution 2 * [s_e, s_{e+1}] adj [.]^T
    # with xi-coefficient slope_e and eta-coefficient slope_{e+1}
    ea = np.arange(ne - 1)
    slope_nodes = [(ea, ea + 1), (ea + 1, ea + 2)]  # (minus, plus) node of each slope
    for i in range(2):
        for j in range(2):
            c = 2.0 * adj[i, j] * scale
            mi, pi = slope_nodes[i]
            mj, pj = slope_nodes[j]
            for ri, si in ((pi, 1.0), (mi, -1.0)):
                for rj, sj in ((pj, 1.0), (mj, -1.0)):
                    np.add.at(K, (ri, rj), c * si * sj)

    # far pairs: 4-node local matrices depending only on the element offset
    gx, gw = np.polynomial.legendre.leggauss(quad_order)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    phi = np.stack([1.0 - gx, gx])  # local hat values at the Gauss points, (2, Q)
    ww = np.outer(gw, gw) * h * h
    for m in range(2, ne):
        dist = (m + gx[None, :] - gx[:, None]) * h  # y - x with y in element a+m
        kern = ww * dist ** (-gamma)
        # d = [phi_a(x), -phi_b(y)]
        k_aa = np.einsum("iq,jq,qr->ij", phi, phi, kern)
        k_bb = np.einsum("ir,jr,qr->ij", phi, phi, kern)
        k_ab = -np.einsum("iq,jr,qr->ij", phi, phi, kern)
        loc = 2.0 * np.block([[k_aa, k_ab], [k_ab.T, k_bb]])
        a = np.arange(ne - m)
        idx = np.stack([a, a + 1, a + m, a + m + 1])  # (4, count)
        for i in range(4):
            for j in range(4):
                np.add.at(K, (idx[i], idx[j]), loc[i, j])

    K = K[1:-1, 1:-1]

    # exterior interaction: (1/s) int u v (x^-2s + (L-x)^-2s) dx
    ext = np.zeros((n + 2, n + 2))
    xq = (e[:, None] + gx[None, :]) * h  # Gauss points per element, (ne, Q)
    weight = (xq ** (-2.0 * s) + (L - xq) ** (-2.0 * s)) / s
    # boundary elements: the x^-2s (resp. (L-x)^-2s) part against phi^2 exactly
    weight_first = ((L - xq[0]) ** (-2.0 * s)) / s
    weight_last = (xq[-1] ** (-2.0 * s)) / s
    weight[0] = weight_first
    weight[-1] = weight_last
    for i in range(2):
        for j in range(2):
            vals = h * np.einsum("q,q,q,eq->e", gw, phi[i], phi[j], weight)
            np.add.at(ext, (e + i, e + j), vals)
    exact = h ** (1.0 - 2.0 * s) / ((3.0 - 2.0 * s) * s)
    ext[1, 1] += exact
    ext[n, n] += exact
    ext = ext[1:-1, 1:-1]

    seminorm = K + ext
    seminorm = 0.5 * (seminorm + seminorm.T)
    matrix = seminorm + grid.cell * np.eye(n)
    return FracOperator("integral", s, grid, matrix=matrix, seminorm=seminorm)
