"""Steady and transient drivers around the stabilized assembly.

A steady solve linearizes the capturing operator by lagging: the first pass
runs without artificial diffusion, every following pass re-assembles with
the capturing magnitude evaluated on the previous pass's field.  Transient
solves step backward Euler and lag the capturing by one time level.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import femcore, mesh as meshmod
from .errors import LinearSolverError, SingularSystemError
from .femcore import DCConfig
from .transforms import Transform

log = logging.getLogger("btransport.solver")


@dataclass(frozen=True)
class SolverConfig:
    """Driver settings: mode, stepping, lagged-capturing passes, solver tolerance."""

    mode: str = "steady"
    dt: float = 1e-3
    n_steps: int = 1
    dc_passes: int = 3
    linear_tol: float = 1e-10
    max_linear_iters: int = 1000
    output_stride: int = 1

    def __post_init__(self):
        if self.mode not in ("steady", "transient"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if self.dc_passes < 1:
            raise ValueError("dc_passes must be >= 1")
        if not self.linear_tol > 0.0:
            raise ValueError("linear_tol must be > 0")


@dataclass
class TransportProblem:
    """Everything a solve needs: mesh, data fields, transform, capturing.

    ``inflow_value`` is the *physical* inflow concentration; it is converted
    through the transform when the Dirichlet rows are built.  An explicit
    ``dirichlet`` map overrides the automatic inflow detection.
    """

    mesh: meshmod.Mesh
    velocity: np.ndarray
    mu_r: np.ndarray
    nu_r: np.ndarray
    transform: Transform = field(default_factory=Transform)
    dc: DCConfig = field(default_factory=DCConfig)
    inflow_value: float = 0.0
    dirichlet: dict = None
    initial: np.ndarray = None

    def dirichlet_values(self):
        if self.dirichlet is not None:
            return dict(self.dirichlet)
        gbar = self.transform.to_transformed(self.inflow_value)
        return {n: gbar for n in sorted(meshmod.inflow_nodes(self.mesh, self.velocity))}

    def initial_field(self):
        if self.initial is not None:
            return self.mesh.check_nodal(self.initial, "initial")
        gbar = self.transform.to_transformed(self.inflow_value)
        return np.full(self.mesh.num_nodes, float(gbar))


@dataclass(frozen=True)
class PassStats:
    """Extrema of the solved variable after one pass or step."""

    index: int
    min: float
    max: float
    negative_nodes: int


@dataclass
class SolveResult:
    """Final solved field plus per-pass (or per-step) statistics."""

    cbar: np.ndarray
    passes: list

    def physical(self, transform: Transform):
        return transform.to_physical(self.cbar)


@dataclass
class TransientResult:
    """Stored time levels of a transient solve (per ``output_stride``)."""

    times: list
    fields: list
    passes: list

    @property
    def cbar(self):
        return self.fields[-1]


def _stats(index, cbar):
    return PassStats(
        index=index,
        min=float(cbar.min()),
        max=float(cbar.max()),
        negative_nodes=int(np.sum(cbar < 0.0)),
    )


def _log_stats(stats: PassStats):
    log.info(
        "pass=%d min=%.6e max=%.6e neg_nodes=%d",
        stats.index, stats.min, stats.max, stats.negative_nodes,
    )


def linear_solve(system: femcore.AssembledSystem, tol=1e-10, max_iters=1000):
    """Solve the reduced system to a relative residual below ``tol``.

    Tries a sparse direct factorization first and falls back to ILU-GMRES
    when the factorization misses the tolerance.

    Raises:
        SingularSystemError: the factorization produced non-finite values.
        LinearSolverError: the residual bound was not reached.
    """
    matrix, rhs = system.matrix, system.rhs
    if matrix.shape[0] == 0:
        return np.empty(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.MatrixRankWarning)
        x = spla.spsolve(matrix.tocsc(), rhs)
    rhs_norm = float(np.linalg.norm(rhs))
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            "direct factorization returned non-finite values; "
            "the system is singular (check inflow boundary conditions)"
        )
    residual = _relative_residual(matrix, x, rhs, rhs_norm)
    if residual <= tol:
        return x
    ilu = spla.spilu(matrix.tocsc())
    precond = spla.LinearOperator(matrix.shape, ilu.solve)
    x, info = spla.gmres(
        matrix, rhs, x0=x, rtol=tol / 10.0, atol=0.0,
        maxiter=max_iters, M=precond,
    )
    residual = _relative_residual(matrix, x, rhs, rhs_norm)
    if info != 0 or residual > tol:
        raise LinearSolverError(
            f"linear solve stalled at relative residual {residual:.3e} "
            f"(tolerance {tol:.3e})",
            residual=residual,
        )
    return x


def _relative_residual(matrix, x, rhs, rhs_norm):
    res = float(np.linalg.norm(matrix @ x - rhs))
    return res / rhs_norm if rhs_norm > 0.0 else res


def solve_steady(problem: TransportProblem, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Steady solve with lagged capturing over ``cfg.dc_passes`` passes.

    Pass 1 assembles without artificial diffusion; each later pass feeds the
    previous field into the capturing magnitude.  With the capturing
    operator disabled a single pass is performed.
    """
    dirichlet = problem.dirichlet_values()
    passes = 1 if problem.dc.operator == "none" else cfg.dc_passes
    cbar = None
    stats = []
    for i in range(1, passes + 1):
        system = femcore.assemble(
            problem.mesh,
            problem.velocity,
            problem.mu_r,
            problem.nu_r,
            problem.transform,
            dt=math.inf,
            cbar_prev=cbar if i > 1 else None,
            cbar_old=None,
            dc=problem.dc,
            dirichlet=dirichlet,
        )
        cbar = system.expand(linear_solve(system, cfg.linear_tol, cfg.max_linear_iters))
        stats.append(_stats(i, cbar))
        _log_stats(stats[-1])
    return SolveResult(cbar=cbar, passes=stats)


def solve_transient(problem: TransportProblem, cfg: SolverConfig) -> TransientResult:
    """Backward-Euler stepping; capturing lagged one time level."""
    if not cfg.dt > 0.0:
        raise ValueError("transient solve needs dt > 0")
    dirichlet = problem.dirichlet_values()
    cbar = problem.initial_field().copy()
    for node, value in dirichlet.items():
        cbar[node] = value
    times = [0.0]
    fields = [cbar.copy()]
    stats = []
    for step in range(1, cfg.n_steps + 1):
        system = femcore.assemble(
            problem.mesh,
            problem.velocity,
            problem.mu_r,
            problem.nu_r,
            problem.transform,
            dt=cfg.dt,
            cbar_prev=cbar if problem.dc.operator != "none" else None,
            cbar_old=cbar,
            dc=problem.dc,
            dirichlet=dirichlet,
        )
        cbar = system.expand(linear_solve(system, cfg.linear_tol, cfg.max_linear_iters))
        stats.append(_stats(step, cbar))
        _log_stats(stats[-1])
        if step % max(cfg.output_stride, 1) == 0 or step == cfg.n_steps:
            times.append(step * cfg.dt)
            fields.append(cbar.copy())
    return TransientResult(times=times, fields=fields, passes=stats)
