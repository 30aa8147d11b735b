"""SUPG weak-form and discontinuity-capturing kernels with sparse assembly.

The solved equation is the (possibly transformed) advection-reaction
residual ``R(cbar) = d(cbar)/dt + u . grad(cbar) + linear*cbar - source``
discretized with linear simplices.  Stabilization:

* SUPG term ``tau * (u . grad w) * R(cbar)`` with the Shakib parameter
  ``tau = ((2/dt)^2 + u . G u)^(-1/2)`` built on the covariant metric G of
  the symmetric reference element (the transient term drops for steady
  solves).
* Optional residual-driven artificial diffusion ("discontinuity capturing")
  ``nu_DC * grad(w) . M grad(cbar)`` where the direction matrix M is either
  isotropic in the reference frame (``G^-1``) or a crosswind projector that
  removes the streamline direction, and ``nu_DC`` comes from a lagged field
  so the assembled system stays linear.

Time discretization is backward Euler.  Element velocity enters ``tau`` and
``M`` as the nodal average; inside the Galerkin/SUPG integrals the velocity
is interpolated nodally and integrated with rules exact for the polynomial
degrees present.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError, StagnationError
from .transforms import Transform, transformed_reaction

DC_OPERATORS = ("none", "isotropic", "cwd_reference", "cwd_physical")
DC_DIFFUSIVITIES = ("dc_lin", "dc_quad", "codina")

# Symmetric quadrature rules on the unit simplex: barycentric coordinates
# and weights normalized to sum to one (fractions of the element measure).
_QUAD = {
    (2, 2): (
        np.array(
            [
                [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            ]
        ),
        np.full(3, 1.0 / 3.0),
    ),
    (3, 2): (None, None),  # filled below
}


def _fill_quadrature():
    a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    b = (5.0 - math.sqrt(5.0)) / 20.0
    pts = np.full((4, 4), b)
    np.fill_diagonal(pts, a)
    _QUAD[(3, 2)] = (pts, np.full(4, 0.25))

    a1, w1 = 0.445948490915965, 0.223381589678011
    a2, w2 = 0.091576213509771, 0.109951743655322
    rows, weights = [], []
    for a, w in ((a1, w1), (a2, w2)):
        for i in range(3):
            row = [a, a, a]
            row[i] = 1.0 - 2.0 * a
            rows.append(row)
            weights.append(w)
    _QUAD[(2, 4)] = (np.array(rows), np.array(weights))

    pts = np.vstack([np.full(4, 0.25), np.full((4, 4), 1.0 / 6.0)])
    np.fill_diagonal(pts[1:], 0.5)
    _QUAD[(3, 3)] = (pts, np.array([-0.8, 0.45, 0.45, 0.45, 0.45]))


_fill_quadrature()


def element_quadrature(dim, degree=2):
    """Barycentric points and measure-fraction weights, exact to ``degree``."""
    try:
        return _QUAD[(dim, degree)]
    except KeyError:
        raise ValueError(f"no {dim}D quadrature rule of degree {degree}") from None


@dataclass(frozen=True)
class DCConfig:
    """Discontinuity-capturing operator selection.

    ``operator`` picks the diffusion direction matrix, ``diffusivity`` the
    scalar magnitude.  ``codina_c`` is the crosswind constant for the
    ``codina`` magnitude; ``grad_floor`` scales the machine-level guard that
    switches the capturing off where the lagged field is flat (it must stay
    far below squared wiggle amplitudes or the capturing goes blind exactly
    where it is needed).
    """

    operator: str = "none"
    diffusivity: str = "dc_quad"
    codina_c: float = 0.7
    grad_floor: float = 1e-30

    def __post_init__(self):
        if self.operator not in DC_OPERATORS:
            raise ValueError(f"unknown DC operator {self.operator!r}")
        if self.diffusivity not in DC_DIFFUSIVITIES:
            raise ValueError(f"unknown DC diffusivity {self.diffusivity!r}")
        if self.diffusivity == "codina" and self.operator not in ("none", "cwd_physical"):
            raise ValueError(
                "the codina magnitude is a physical diffusivity and pairs "
                "only with the cwd_physical direction matrix"
            )
        if not self.codina_c > 0.0:
            raise ValueError(f"codina_c must be > 0, got {self.codina_c}")
        if not self.grad_floor > 0.0:
            raise ValueError(f"grad_floor must be > 0, got {self.grad_floor}")


def supg_tau(u_e, G, dt=math.inf):
    """Stabilization parameter ``((2/dt)^2 + u . G u)^(-1/2)`` (seconds).

    ``dt = inf`` drops the transient term (steady solve).

    Raises:
        StagnationError: steady solve with zero element velocity, where the
            parameter is undefined.
    """
    u_e = np.asarray(u_e, dtype=float)
    ugu = float(u_e @ np.asarray(G, dtype=float) @ u_e)
    trans = 0.0 if math.isinf(dt) else (2.0 / dt) ** 2
    total = trans + ugu
    if total <= 0.0:
        raise StagnationError(
            "stabilization parameter undefined: zero velocity in a steady solve"
        )
    return total ** (-0.5)


def dc_diffusivity(residual, grad_cbar, G, tau_e, cfg: DCConfig, scale_sq=0.0):
    """Reference-frame capturing magnitude (``dc_lin`` or ``dc_quad``).

    Returns zero when ``grad . G^-1 grad`` falls below
    ``grad_floor * scale_sq``, the flat-field guard.
    """
    grad_cbar = np.asarray(grad_cbar, dtype=float)
    gradsq = float(grad_cbar @ np.linalg.solve(np.asarray(G, dtype=float), grad_cbar))
    if gradsq <= cfg.grad_floor * scale_sq or gradsq <= 0.0:
        return 0.0
    if cfg.diffusivity == "dc_lin":
        return abs(residual) / math.sqrt(gradsq)
    if cfg.diffusivity == "dc_quad":
        return 2.0 * tau_e * residual**2 / gradsq
    raise ValueError("codina magnitude is computed by codina_diffusivity")


def codina_diffusivity(residual, grad_cbar, u_e, h_e, cfg: DCConfig, scale_sq=0.0):
    """Crosswind capturing magnitude ``0.5 h C |R| / |grad cbar|``.

    Pure advection-reaction carries no physical diffusion, so the element
    Peclet correction ``1/Pe`` vanishes and only the constant ``C`` remains.
    """
    if not h_e > 0.0:
        raise ValueError(f"element length must be > 0, got {h_e}")
    grad_cbar = np.asarray(grad_cbar, dtype=float)
    gradsq = float(grad_cbar @ grad_cbar)
    if gradsq <= cfg.grad_floor * scale_sq or gradsq <= 0.0:
        return 0.0
    return 0.5 * h_e * cfg.codina_c * abs(residual) / math.sqrt(gradsq)


def dc_tensor(u_e, G, J, cfg: DCConfig):
    """Diffusion direction matrix M of the capturing operator.

    * ``isotropic``: ``M = G^-1 = J J^T`` (reference-frame Laplacian).
    * ``cwd_reference``: ``M = J P J^T`` with the orthogonal projector
      ``P = I - ubar (x) ubar / |ubar|^2`` built from the reference-frame
      velocity ``ubar = J^-1 u``; then ``M (G u) = 0``, i.e. the operator
      acts only across the streamline.
    * ``cwd_physical``: ``M = I - u (x) u / |u|^2`` in physical coordinates.

    A (numerically) zero velocity degrades the crosswind variants to the
    isotropic direction.
    """
    J = np.asarray(J, dtype=float)
    u_e = np.asarray(u_e, dtype=float)
    d = J.shape[0]
    if cfg.operator == "none":
        raise ValueError("dc_tensor called with the capturing operator disabled")
    if cfg.operator == "isotropic":
        return J @ J.T
    if cfg.operator == "cwd_physical":
        usq = float(u_e @ u_e)
        if usq <= 1e-280:
            return np.eye(d)
        return np.eye(d) - np.outer(u_e, u_e) / usq
    u_ref = np.linalg.solve(J, u_e)
    usq = float(u_ref @ u_ref)  # equals u . G u
    if usq <= 1e-280:
        proj = np.eye(d)
    else:
        proj = np.eye(d) - np.outer(u_ref, u_ref) / usq
    return J @ proj @ J.T


def lagged_residual(grads, u_e, cbar_nodes, source, linear, dt=math.inf,
                    cbar_old_nodes=None):
    """Centroid residual of a lagged field, feeding the capturing magnitude."""
    cbar_nodes = np.asarray(cbar_nodes, dtype=float)
    grad_c = grads.T @ cbar_nodes
    c_mid = float(cbar_nodes.mean())
    r = float(np.asarray(u_e, dtype=float) @ grad_c) + linear * c_mid - source
    if not math.isinf(dt):
        c_old = float(np.asarray(cbar_old_nodes, dtype=float).mean())
        r += (c_mid - c_old) / dt
    return r, grad_c


def supg_element(grads, volume, u_nodes, tau_e, source, linear, dt=math.inf,
                 cbar_old_nodes=None, quad=None):
    """Local Galerkin + SUPG matrix and load vector of one element.

    ``grads`` are the physical shape-function gradients ((d+1) x d),
    ``u_nodes`` the nodal velocities of the element.  With a finite ``dt``
    the backward-Euler time term enters the matrix and, through
    ``cbar_old_nodes``, the load vector.
    """
    u_nodes = np.asarray(u_nodes, dtype=float)
    n, d = grads.shape
    if quad is None:
        quad = element_quadrature(d)
    lam, w = quad
    uq = lam @ u_nodes                      # velocity at quadrature points
    adv = uq @ grads.T                      # u . grad(N_j) at each point
    inv_dt = 0.0 if math.isinf(dt) else 1.0 / dt
    weighted_test = lam + tau_e * adv       # N_i + tau u . grad(N_i)
    op = adv + (linear + inv_dt) * lam      # residual operator on N_j
    ke = volume * np.einsum("q,qi,qj->ij", w, weighted_test, op)
    fe = volume * (w @ weighted_test) * source
    if inv_dt:
        c_old_q = lam @ np.asarray(cbar_old_nodes, dtype=float)
        fe = fe + volume * inv_dt * np.einsum("q,qi,q->i", w, weighted_test, c_old_q)
    return ke, fe


@dataclass
class AssembledSystem:
    """Sparse linear system over the free (non-Dirichlet) nodes."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: dict
    free_nodes: np.ndarray
    num_nodes: int

    def expand(self, x_free):
        """Insert the Dirichlet values back into a full nodal field."""
        full = np.empty(self.num_nodes)
        full[self.free_nodes] = x_free
        for node, value in self.dirichlet.items():
            full[node] = value
        return full


def assemble(mesh, velocity, mu_r, nu_r, transform: Transform, dt=math.inf,
             cbar_prev=None, cbar_old=None, dc: DCConfig = DCConfig(),
             dirichlet=None) -> AssembledSystem:
    """Assemble the stabilized global system with eliminated Dirichlet rows.

    ``cbar_prev`` is the lagged field feeding the capturing magnitude (the
    previous pass of a steady solve or the previous time level); passing
    ``None`` disables the capturing term regardless of ``dc.operator``.
    ``cbar_old`` is the previous time level of the backward-Euler term and is
    required for finite ``dt``.
    """
    velocity = mesh.check_nodal(velocity, "velocity")
    if velocity.ndim != 2 or velocity.shape[1] != mesh.dim:
        raise DimensionMismatchError(
            f"velocity must be ({mesh.num_nodes}, {mesh.dim}), got {velocity.shape}"
        )
    mu_nodal = np.broadcast_to(np.asarray(mu_r, dtype=float), (mesh.num_nodes,))
    nu_nodal = np.broadcast_to(np.asarray(nu_r, dtype=float), (mesh.num_nodes,))
    if not math.isinf(dt):
        if dt <= 0.0:
            raise ValueError(f"time step must be > 0, got {dt}")
        if cbar_old is None:
            raise ValueError("transient assembly needs the previous time level")
        cbar_old = mesh.check_nodal(cbar_old, "cbar_old")
    if cbar_prev is not None:
        cbar_prev = mesh.check_nodal(cbar_prev, "cbar_prev")

    geo = mesh.geometry()
    elems = mesh.elements
    n_local = mesh.dim + 1
    quad = element_quadrature(mesh.dim)

    u_elem = velocity[elems].mean(axis=1)
    mu_elem = mu_nodal[elems].mean(axis=1)
    nu_elem = nu_nodal[elems].mean(axis=1)
    source_elem, linear_elem = transformed_reaction(transform, mu_elem, nu_elem)
    source_elem = np.broadcast_to(np.asarray(source_elem, dtype=float), mu_elem.shape)
    linear_elem = np.broadcast_to(np.asarray(linear_elem, dtype=float), mu_elem.shape)

    capture = dc.operator != "none" and cbar_prev is not None
    scale_sq = 0.0
    if capture:
        span = mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)
        l_ref = float(np.linalg.norm(span))
        scale_sq = (float(np.abs(cbar_prev).max()) / l_ref) ** 2 if l_ref > 0 else 0.0

    # Batched element kernels (same math as supg_element / dc_* on one
    # element; the unit tests pin the two paths together).
    lam, w = quad
    inv_dt = 0.0 if math.isinf(dt) else 1.0 / dt
    ugu = np.einsum("ei,eij,ej->e", u_elem, geo.metric, u_elem)
    total = ugu + (0.0 if math.isinf(dt) else (2.0 / dt) ** 2)
    if np.any(total <= 0.0):
        raise StagnationError(
            "stabilization parameter undefined: zero velocity in a steady solve"
        )
    tau_elem = total ** (-0.5)

    u_nodes = velocity[elems]                                  # (ne, n, d)
    uq = np.einsum("qi,eid->eqd", lam, u_nodes)                # (ne, q, d)
    adv = np.einsum("eqd,end->eqn", uq, geo.grads)             # (ne, q, n)
    weighted_test = lam[None, :, :] + tau_elem[:, None, None] * adv
    op = adv + (linear_elem + inv_dt)[:, None, None] * lam[None, :, :]
    ke_all = np.einsum("q,eqi,eqj->eij", w, weighted_test, op)
    fe_all = np.einsum("q,eqi->ei", w, weighted_test) * source_elem[:, None]
    if inv_dt:
        c_old_q = np.einsum("qi,ei->eq", lam, cbar_old[elems])
        fe_all = fe_all + inv_dt * np.einsum("q,eqi,eq->ei", w, weighted_test, c_old_q)

    if capture:
        grad_prev = np.einsum("end,en->ed", geo.grads, cbar_prev[elems])
        c_mid = cbar_prev[elems].mean(axis=1)
        resid = (
            np.einsum("ed,ed->e", u_elem, grad_prev)
            + linear_elem * c_mid
            - source_elem
        )
        if inv_dt:
            resid = resid + inv_dt * (c_mid - cbar_old[elems].mean(axis=1))
        if dc.diffusivity == "codina":
            gradsq = np.einsum("ed,ed->e", grad_prev, grad_prev)
            with np.errstate(divide="ignore", invalid="ignore"):
                nu_dc = 0.5 * geo.longest_edge * dc.codina_c * np.abs(resid) / np.sqrt(gradsq)
        else:
            ginv_grad = np.linalg.solve(geo.metric, grad_prev[..., None])[..., 0]
            gradsq = np.einsum("ed,ed->e", grad_prev, ginv_grad)
            with np.errstate(divide="ignore", invalid="ignore"):
                if dc.diffusivity == "dc_lin":
                    nu_dc = np.abs(resid) / np.sqrt(gradsq)
                else:
                    nu_dc = 2.0 * tau_elem * resid**2 / gradsq
        floor = (gradsq <= dc.grad_floor * scale_sq) | (gradsq <= 0.0)
        nu_dc = np.where(floor, 0.0, nu_dc)
        direction = _dc_tensor_batch(u_elem, geo.jacobian, dc)
        ke_all = ke_all + nu_dc[:, None, None] * np.einsum(
            "eid,edk,ejk->eij", geo.grads, direction, geo.grads
        )

    ke_all *= geo.volume[:, None, None]
    fe_all *= geo.volume[:, None]
    rhs = np.zeros(mesh.num_nodes)
    np.add.at(rhs, elems, fe_all)
    data = ke_all.ravel()

    rows = np.repeat(elems, n_local, axis=1).ravel()
    cols = np.tile(elems, (1, n_local)).ravel()
    matrix = sp.coo_matrix(
        (data, (rows, cols)), shape=(mesh.num_nodes, mesh.num_nodes)
    ).tocsr()

    dirichlet = dict(dirichlet or {})
    for node in dirichlet:
        if not 0 <= node < mesh.num_nodes:
            raise DimensionMismatchError(f"Dirichlet node {node} out of range")
    fixed = np.zeros(mesh.num_nodes, dtype=bool)
    values = np.zeros(mesh.num_nodes)
    for node, value in dirichlet.items():
        fixed[node] = True
        values[node] = value
    free = np.nonzero(~fixed)[0]
    reduced = matrix[free][:, free].tocsr()
    rhs_free = rhs[free] - matrix[free][:, fixed] @ values[fixed]
    return AssembledSystem(
        matrix=reduced,
        rhs=rhs_free,
        dirichlet=dirichlet,
        free_nodes=free,
        num_nodes=mesh.num_nodes,
    )
