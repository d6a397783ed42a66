"""Monotone majorize-minimize iteration for

    min_u  F(u) + alpha/2 ||u||_V^2 + beta ||u||_p^p

The L^p term is replaced by the smoothed ``G_eps`` and, at each outer step,
by its tangent majorant at ``u_k`` in the variable ``u^2``.  ``F`` is
linearized with a proximal term ``L_k/2 ||u - u_k||_V^2`` whose weight is
chosen by backtracking from the ladder ``0, L~, L~ eta, L~ eta^2, ...``.
Every step reduces to one SPD linear solve

    ((alpha + L) A + M diag(2 beta psi'(u_k^2))) u = L A u_k - M grad F(u_k).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .frac_ops import FracOperator
from .grid import check_function, lp_pseudonorm
from .objective import ObjectiveProblem
from .smoothing import PsiParams, g_eps, pairing_bound, psi_prime

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "StationarityReport",
    "RunResult",
    "BacktrackError",
    "SolverError",
    "phi",
    "subproblem_solve",
    "backtrack",
    "run",
    "stationarity_report",
    "tikhonov_start",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the outer iteration.

    ``beta_reg`` weights the L^p term; ``bt_growth`` is the factor of the
    backtracking ladder.  ``beta_reg = 0`` is accepted and reduces the
    method to a proximal-gradient iteration for the Tikhonov problem.
    """

    alpha: float = 1e-2
    beta_reg: float = 1e-2
    p: float = 0.5
    eps0: float = 1e-1
    eps_decay: float = 0.5
    eps_min: float = 1e-6
    L_tilde: float = 1e-2
    bt_growth: float = 2.0
    max_outer: int = 500
    tol_step: float = 1e-8
    tol_cg: float = 1e-10
    bt_max_trials: int = 60
    bt_rtol: float = 1e-14

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.alpha > 0:
            out.append("alpha must be positive")
        if not self.beta_reg >= 0:
            out.append("beta_reg must be non-negative")
        if not 0 < self.p < 1:
            out.append("p must lie in (0,1)")
        if not self.eps0 > 0:
            out.append("eps0 must be positive")
        if not 0 < self.eps_decay <= 1:
            out.append("eps_decay must lie in (0,1]")
        if not 0 <= self.eps_min <= self.eps0:
            out.append("eps_min must lie in [0, eps0]")
        if not self.L_tilde > 0:
            out.append("L_tilde must be positive")
        if not self.bt_growth > 1:
            out.append("bt_growth must be greater than 1")
        if int(self.max_outer) != self.max_outer or self.max_outer < 1:
            out.append("max_outer must be an integer >= 1")
        if not self.tol_step > 0:
            out.append("tol_step must be positive")
        if not 0 < self.tol_cg < 1:
            out.append("tol_cg must lie in (0,1)")
        if int(self.bt_max_trials) != self.bt_max_trials or self.bt_max_trials < 1:
            out.append("bt_max_trials must be an integer >= 1")
        if not self.bt_rtol >= 0:
            out.append("bt_rtol must be non-negative")
        return out

    def next_eps(self, eps: float) -> float:
        return max(self.eps_min, self.eps_decay * eps)


@dataclass
class IterationRecord:
    k: int
    eps_k: float
    L_k: float
    bt_trials: int
    phi: float                 # Phi_{eps_k}(u_k)
    phi_next: float            # Phi_{eps_{k+1}}(u_{k+1})
    step_V: float              # ||u_{k+1} - u_k||_V
    weighted_step: float       # beta * int psi'_{eps_k}(u_k^2) (u_{k+1} - u_k)^2
    support_fraction: float    # share of nodes with |u_{k+1}| > eps_k
    pairing_lower: float
    pairing_upper: float
    pairing_gap: float
    stationarity_residual: float
    local_lipschitz: float     # ||M (g(u_{k+1}) - g(u_k))||_{V*} / step_V

    def descent_slack(self, alpha: float) -> float:
        """``Phi(u_k) - [Phi(u_{k+1}) + alpha/2 step^2 + weighted_step]``."""
        return self.phi - (self.phi_next + 0.5 * alpha * self.step_V**2 + self.weighted_step)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def as_row(self):
        return asdict(self)


@dataclass
class StationarityReport:
    """Discrete version of ``alpha A u + beta M lambda = -M grad F(u)`` and the
    pairing ``<lambda, u> >= p ||u||_p^p`` at the last iterate."""

    lam: np.ndarray
    residual_norm: float
    pairing_gap: float
    pairing: float = 0.0          # <lambda, u>
    p_lp: float = 0.0             # p ||u||_p^p
    scale: float = 1.0

    def as_dict(self):
        return {
            "residual_norm": self.residual_norm,
            "pairing_gap": self.pairing_gap,
            "pairing": self.pairing,
            "p_lp": self.p_lp,
            "scale": self.scale,
        }


@dataclass
class RunResult:
    u: np.ndarray
    records: list[IterationRecord]
    report: StationarityReport | None
    converged: bool
    phi0: float
    eps_final: float
    extra: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.u, self.records, self.report))


class SolverError(RuntimeError):
    """Failure during :func:`run`; ``records`` keeps the completed iterations."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


class BacktrackError(RuntimeError):
    def __init__(self, message, trials=None, last_L=None):
        super().__init__(message)
        self.trials = trials
        self.last_L = last_L


def phi(u, eps: float, cfg: SolverConfig, op: FracOperator, prob: ObjectiveProblem,
        F_value: float | None = None) -> float:
    """``F(u) + alpha/2 ||u||_V^2 + beta G_eps(u)``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    u = check_function(op.grid, u)
    F = prob.value(u) if F_value is None else F_value
    G = g_eps(op.grid, u, PsiParams(cfg.p, eps)) if cfg.beta_reg else 0.0
    return F + 0.5 * cfg.alpha * op.inner(u, u) + cfg.beta_reg * G


def _weights(u_k, eps_k, cfg):
    return 2.0 * cfg.beta_reg * psi_prime(PsiParams(cfg.p, eps_k), u_k * u_k)


def subproblem_solve(u_k, eps_k: float, L: float, cfg: SolverConfig, op: FracOperator,
                     prob: ObjectiveProblem, grad_k=None) -> np.ndarray:
    """Minimizer of the convex surrogate at ``u_k`` with proximal weight ``L``."""
    if L < 0:
        raise ValueError("L must be non-negative")
    if not eps_k > 0:
        raise ValueError("eps_k must be positive")
    u_k = check_function(op.grid, u_k)
    g = prob.gradient(u_k) if grad_k is None else grad_k
    rhs = -op.grid.cell * g
    if L:
        rhs = rhs + L * op.matvec(u_k)
    return op.solve_shifted(cfg.alpha + L, _weights(u_k, eps_k, cfg), rhs, tol=cfg.tol_cg,
                            x0=u_k)


def _ladder(cfg):
    yield 0.0
    L = cfg.L_tilde
    while True:
        yield L
        L *= cfg.bt_growth


def backtrack(u_k, eps_k, cfg, op, prob, grad_k=None, F_k=None, phi_k=None,
              guard=None):
    """Smallest ladder value ``L`` whose surrogate minimizer passes

        F(u+) <= F(u_k) + <grad F(u_k), u+ - u_k> + L ||u+ - u_k||_V^2.

    With ``phi_k`` given, a candidate must also not increase the computed
    ``Phi_{eps_{k+1}}``.  This only bites when the true decrease is below
    the rounding error of evaluating Phi; every rejection is counted in
    ``guard["rejections"]`` when a dict is passed.  If the last allowed rung
    passes the F test but not this check, the step is below the attainable
    precision and ``u_k`` itself is returned (counted in
    ``guard["null_steps"]``).

    Returns ``(L, u_next, trials, F(u_next))``.
    """
    u_k = check_function(op.grid, u_k)
    g = prob.gradient(u_k) if grad_k is None else grad_k
    F0 = prob.value(u_k) if F_k is None else F_k
    # rounding allowance for the comparison, relative to |F(u_k)|
    slack = cfg.bt_rtol * max(abs(F0), np.finfo(float).tiny)
    eps_next = cfg.next_eps(eps_k)
    for trial, L in enumerate(_ladder(cfg), start=1):
        u_next = subproblem_solve(u_k, eps_k, L, cfg, op, prob, grad_k=g)
        d = u_next - u_k
        try:
            F1 = prob.value(u_next)
        except FloatingPointError:
            # a too-long trial step can make F overflow; treat as a failed test
            F1 = np.inf
        model = F0 + op.grid.cell * float(g @ d) + L * op.inner(d, d)
        passed = F1 <= model + slack
        if passed:
            if phi_k is None or phi(u_next, eps_next, cfg, op, prob, F_value=F1) <= phi_k:
                return L, u_next, trial, F1
            if guard is not None:
                guard["rejections"] = guard.get("rejections", 0) + 1
        if trial >= cfg.bt_max_trials:
            if passed:
                # The step is pure solver noise: no rung decreases the computed
                # Phi.  Return the L -> infinity limit of the ladder, u_k itself.
                if guard is not None:
                    guard["null_steps"] = guard.get("null_steps", 0) + 1
                log.warning("step below attainable precision at L=%.3e; taking a null step", L)
                return L, u_k.copy(), trial, F0
            raise BacktrackError(
                f"no admissible L within {trial} trials (last L={L:.3e}, "
                f"F(u+)={F1:.6e}, model={model:.6e})", trials=trial, last_L=L)


def stationarity_report(u_k, u_next, eps_k, cfg, op, prob, grad_next=None,
                        grad_k=None, L_k=0.0) -> StationarityReport:
    """Multiplier ``lam = 2 psi'_{eps_k}(u_k^2) u_next`` and the residual of

        alpha A u + beta M lam + M grad F(u) = 0,   u = u_next,

    measured in the V* norm ``sqrt(r A^-1 r)``.  ``scale`` is
    ``1 + L_k + local Lipschitz ratio of grad F along the step``, the factor
    by which the step size bounds the residual.
    """
    grid = op.grid
    u_k = check_function(grid, u_k)
    u_next = check_function(grid, u_next)
    params = PsiParams(cfg.p, eps_k)
    lam = 2.0 * psi_prime(params, u_k * u_k) * u_next
    g1 = prob.gradient(u_next) if grad_next is None else grad_next
    r = cfg.alpha * op.matvec(u_next) + grid.cell * (cfg.beta_reg * lam + g1)
    residual = op.dual_norm(r)
    pairing = grid.cell * float(lam @ u_next)
    p_lp = cfg.p * lp_pseudonorm(grid, u_next, cfg.p)
    lip = 0.0
    if grad_k is not None:
        step = op.norm(u_next - u_k)
        if step > 0:
            lip = op.dual_norm(grid.cell * (g1 - grad_k)) / step
    return StationarityReport(lam=lam, residual_norm=residual, pairing_gap=pairing - p_lp,
                              pairing=pairing, p_lp=p_lp, scale=1.0 + L_k + lip)


def tikhonov_start(cfg: SolverConfig, op: FracOperator, prob: ObjectiveProblem,
                   max_outer: int = 200) -> np.ndarray:
    """Minimizer of ``F + alpha/2 ||.||_V^2`` (the ``beta_reg = 0`` problem).

    Quadratic ``F`` is handled by one CG solve on the affine gradient; other
    ``F`` by the same outer iteration with ``beta_reg = 0``.
    """
    grid = op.grid
    if prob.is_quadratic:
        from scipy.sparse.linalg import LinearOperator, cg

        g0 = prob.gradient(grid.zeros())
        n = grid.size
        system = LinearOperator(
            (n, n), dtype=float,
            matvec=lambda v: cfg.alpha * op.matvec(v) + grid.cell * (prob.gradient(v) - g0))
        diag = cfg.alpha * op.diagonal() + grid.cell
        precond = LinearOperator((n, n), dtype=float, matvec=lambda v: v / diag)
        rhs = -grid.cell * g0
        if not np.any(rhs):
            return grid.zeros()
        u, info = cg(system, rhs, rtol=cfg.tol_cg, atol=0.0, maxiter=10 * n, M=precond)
        if info == 0:
            return u
        log.warning("Tikhonov CG stopped early (info=%d); falling back to iteration", info)
    plain = SolverConfig(**{**asdict(cfg), "beta_reg": 0.0, "max_outer": max_outer})
    return run(plain, op, prob, grid.zeros()).u


def run(cfg: SolverConfig, op: FracOperator, prob: ObjectiveProblem, u0=None,
        callback=None) -> RunResult:
    """Outer iteration; stops once ``||u_{k+1} - u_k||_V <= tol_step`` and the
    smoothing schedule has reached ``eps_min`` (or ``max_outer`` is hit).

    ``u0=None`` starts from :func:`tikhonov_start`, since the origin is
    always stationary and the iteration would never leave it when
    ``grad F(0) = 0``.
    """
    grid = op.grid
    if u0 is None:
        u0 = tikhonov_start(cfg, op, prob)
    u = check_function(grid, u0, name="u0").copy()
    eps = cfg.eps0
    records: list[IterationRecord] = []
    F = prob.value(u)
    g = prob.gradient(u)
    phi_k = phi(u, eps, cfg, op, prob, F_value=F)
    phi0 = phi_k
    report = None
    converged = False
    guard = {"rejections": 0, "null_steps": 0}
    try:
        for k in range(cfg.max_outer):
            L, u_next, trials, F_next = backtrack(u, eps, cfg, op, prob, grad_k=g, F_k=F,
                                                  phi_k=phi_k, guard=guard)
            d = u_next - u
            step = op.norm(d)
            eps_next = cfg.next_eps(eps)
            g_next = prob.gradient(u_next)
            phi_next = phi(u_next, eps_next, cfg, op, prob, F_value=F_next)
            params = PsiParams(cfg.p, eps)
            weighted = cfg.beta_reg * grid.cell * float(
                psi_prime(params, u * u) @ (d * d)) if cfg.beta_reg else 0.0
            report = stationarity_report(u, u_next, eps, cfg, op, prob,
                                         grad_next=g_next, grad_k=g, L_k=L)
            lower, upper = pairing_bound(grid, u_next, params)
            rec = IterationRecord(
                k=k, eps_k=eps, L_k=L, bt_trials=trials, phi=phi_k, phi_next=phi_next,
                step_V=step, weighted_step=weighted,
                support_fraction=float(np.mean(np.abs(u_next) > eps)),
                pairing_lower=lower, pairing_upper=upper,
                pairing_gap=report.pairing_gap,
                stationarity_residual=report.residual_norm,
                local_lipschitz=report.scale - 1.0 - L,
            )
            records.append(rec)
            if callback is not None:
                callback(rec)
            log.debug("k=%d eps=%.3e L=%.3e phi=%.12e step=%.3e", k, eps, L, phi_k, step)
            u, F, g, phi_k, eps = u_next, F_next, g_next, phi_next, eps_next
            # only a finished eps schedule counts as converged
            if step <= cfg.tol_step and eps_next == rec.eps_k:
                converged = True
                break
    except Exception as exc:
        raise SolverError(f"iteration {len(records)} failed: {exc}", records) from exc
    return RunResult(u=u, records=records, report=report, converged=converged,
                     phi0=phi0, eps_final=eps, extra=guard)
