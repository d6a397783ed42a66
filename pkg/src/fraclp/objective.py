"""Smooth data-fidelity terms F and their L^2-Riesz gradients.

Two problems are provided:

* :class:`TrackingProblem` -- ``F(u) = 1/2 ||K u - z||^2`` (denoising when
  ``K`` is the identity);
* :class:`HeatSourceProblem` -- recover a perturbation ``u`` of the initial
  state of ``y_t - (a y_x)_x + f(y) = 0`` from the terminal state, with
  ``F(u) = 1/2 ||y(T) - z||^2``.

Norms are the lumped L^2 norms of the grid.  Gradients are Riesz vectors:
``dF(u)[h] == grid.cell * grad(u) @ h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .grid import Grid, check_function

__all__ = [
    "ObjectiveProblem",
    "TrackingProblem",
    "HeatSourceProblem",
    "HeatTrajectory",
    "add_noise",
]


class ObjectiveProblem:
    """Interface for the smooth term ``F``."""

    kind: str = ""
    grid: Grid

    def value(self, u) -> float:
        raise NotImplementedError

    def gradient(self, u) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_quadratic(self) -> bool:
        return False

    def _l2sq(self, r):
        return float(self.grid.cell * (r @ r))


class TrackingProblem(ObjectiveProblem):
    """``F(u) = 1/2 ||K u - z||^2`` with ``K`` a square matrix (default identity)."""

    kind = "tracking"

    def __init__(self, grid: Grid, z, K=None):
        self.grid = grid
        self.z = check_function(grid, z, name="z")
        if K is not None:
            K = np.asarray(K, dtype=float)
            if K.shape != (grid.size, grid.size):
                raise ValueError(f"K must be {grid.size}x{grid.size}")
        self.K = K

    @property
    def is_quadratic(self):
        return True

    def _forward(self, u):
        return u if self.K is None else self.K @ u

    def value(self, u):
        u = check_function(self.grid, u)
        return 0.5 * self._l2sq(self._forward(u) - self.z)

    def gradient(self, u):
        u = check_function(self.grid, u)
        r = self._forward(u) - self.z
        return r.copy() if self.K is None else self.K.T @ r


@dataclass
class HeatTrajectory:
    states: np.ndarray  # (nt + 1, n)
    dt: float

    @property
    def final(self):
        return self.states[-1]


class HeatSourceProblem(ObjectiveProblem):
    """Terminal-observation source identification for a 1-D heat equation.

    Time stepping is IMEX Euler: implicit diffusion, explicit reaction,
    ``(I + dt L_a) y^{m+1} = y^m - dt f(y^m)``.  The gradient is the exact
    transpose of this scheme.

    Parameters
    ----------
    grid : Grid
        1-D grid.
    z : array
        Terminal measurement.
    y0 : array, optional
        Base initial state (default zero).
    diffusivity : float or array
        Constant or nodal diffusion coefficient ``a > 0``.  Nodal values are
        averaged to the cell midpoints; the boundary cells use the adjacent
        interior value.
    reaction : {"zero", "cubic"}
        ``f = 0`` or ``f(y) = y^3 - y``.
    T : float
        Final time.
    nt : int
        Number of time steps.
    """

    kind = "heat_source"

    def __init__(self, grid: Grid, z, y0=None, diffusivity=1.0, reaction="zero",
                 T=0.1, nt=50):
        if grid.dim != 1:
            raise ValueError("heat_source is implemented for 1-D grids")
        if reaction not in ("zero", "cubic"):
            raise ValueError("reaction must be 'zero' or 'cubic'")
        if not T > 0:
            raise ValueError("T must be positive")
        if int(nt) != nt or nt < 1:
            raise ValueError("nt must be an integer >= 1")
        self.grid = grid
        self.z = check_function(grid, z, name="z")
        self.y0 = grid.zeros() if y0 is None else check_function(grid, y0, name="y0")
        if np.isscalar(diffusivity):
            a = np.full(grid.n, float(diffusivity))
        else:
            a = check_function(grid, diffusivity, name="diffusivity")
        if np.any(a <= 0):
            raise ValueError("diffusivity must be positive")
        self.diffusivity = a
        self.reaction = reaction
        self.T = float(T)
        self.nt = int(nt)
        self.dt = self.T / self.nt

        # a at the n+1 cell midpoints
        a_mid = np.concatenate([[a[0]], 0.5 * (a[:-1] + a[1:]), [a[-1]]])
        h2 = grid.h ** 2
        main = 1.0 + self.dt * (a_mid[:-1] + a_mid[1:]) / h2
        off = -self.dt * a_mid[1:-1] / h2
        self._banded = np.vstack([np.concatenate([[0.0], off]), main])  # upper form
        self._chol = scipy.linalg.cholesky_banded(self._banded, lower=False)

    @property
    def is_quadratic(self):
        return self.reaction == "zero"

    def step_matrix(self):
        """Dense ``I + dt L_a`` (for tests)."""
        off = self._banded[0, 1:]
        return np.diag(self._banded[1]) + np.diag(off, 1) + np.diag(off, -1)

    def _implicit(self, rhs):
        return scipy.linalg.cho_solve_banded((self._chol, False), rhs)

    def _f(self, y):
        return y**3 - y if self.reaction == "cubic" else np.zeros_like(y)

    def _fprime(self, y):
        return 3.0 * y**2 - 1.0 if self.reaction == "cubic" else np.zeros_like(y)

    def heat_forward(self, u) -> HeatTrajectory:
        u = check_function(self.grid, u)
        states = np.empty((self.nt + 1, self.grid.n))
        states[0] = self.y0 + u
        for m in range(self.nt):
            y = states[m]
            with np.errstate(over="ignore", invalid="ignore"):
                rhs = y - self.dt * self._f(y)
            if not np.all(np.isfinite(rhs)):
                raise FloatingPointError(
                    f"heat forward solve blew up at step {m + 1} of {self.nt}")
            states[m + 1] = self._implicit(rhs)
        return HeatTrajectory(states=states, dt=self.dt)

    def linearized_forward(self, traj: HeatTrajectory, du) -> np.ndarray:
        """Terminal response of the scheme linearized along ``traj``."""
        self._check_traj(traj)
        dy = check_function(self.grid, du)
        for m in range(self.nt):
            dy = self._implicit(dy - self.dt * self._fprime(traj.states[m]) * dy)
        return dy

    def adjoint(self, traj: HeatTrajectory, seed) -> np.ndarray:
        """Transpose of :meth:`linearized_forward` applied to ``seed``."""
        self._check_traj(traj)
        q = check_function(self.grid, seed, name="seed")
        for m in range(self.nt - 1, -1, -1):
            q = self._implicit(q)  # step matrix is symmetric
            q = q - self.dt * self._fprime(traj.states[m]) * q
        return q

    def heat_adjoint(self, traj: HeatTrajectory) -> np.ndarray:
        return self.adjoint(traj, traj.final - self.z)

    def _check_traj(self, traj):
        if traj.states.shape != (self.nt + 1, self.grid.n) or traj.dt != self.dt:
            raise ValueError("trajectory does not belong to this problem")

    def value(self, u):
        traj = self.heat_forward(u)
        return 0.5 * self._l2sq(traj.final - self.z)

    def gradient(self, u):
        return self.heat_adjoint(self.heat_forward(u))

    def value_and_gradient(self, u):
        traj = self.heat_forward(u)
        return 0.5 * self._l2sq(traj.final - self.z), self.heat_adjoint(traj)


def add_noise(z, std: float, seed: int) -> np.ndarray:
    """Return ``z`` plus i.i.d. Gaussian noise from a seeded generator."""
    z = np.asarray(z, dtype=float)
    if std < 0:
        raise ValueError("noise std must be non-negative")
    if std == 0:
        return z.copy()
    rng = np.random.default_rng(seed)
    return z + std * rng.standard_normal(z.shape)
