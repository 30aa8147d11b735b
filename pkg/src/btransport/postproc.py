"""Read-only field analyses: statistics, line sampling, boundary averages.

All routines leave the mesh and fields untouched and may run concurrently.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoIntersectionError, ZeroFluxError
from .mesh import Mesh

_BARY_TOL = 1e-9


@dataclass(frozen=True)
class FieldStats:
    """Nodal extrema plus how much of the domain carries negative values."""

    min: float
    max: float
    negative_node_count: int
    negative_volume_fraction: float


def field_stats(mesh: Mesh, values) -> FieldStats:
    """Nodal min/max and the volume share of elements touching a negative node."""
    values = mesh.check_nodal(values, "field")
    geo = mesh.geometry()
    negative = values < 0.0
    touched = negative[mesh.elements].any(axis=1)
    total = float(geo.volume.sum())
    return FieldStats(
        min=float(values.min()),
        max=float(values.max()),
        negative_node_count=int(np.sum(negative)),
        negative_volume_fraction=float(geo.volume[touched].sum() / total),
    )


def locate_point(mesh: Mesh, point):
    """Element index and barycentric coordinates containing ``point``.

    Returns ``(None, None)`` when the point lies outside the mesh; ties on
    shared faces resolve to the lowest element index.
    """
    point = np.asarray(point, dtype=float)
    geo = mesh.geometry()
    x0 = mesh.nodes[mesh.elements[:, 0]]
    lam = np.einsum("eid,ed->ei", geo.grads, point - x0)
    lam[:, 0] += 1.0
    inside = np.nonzero((lam >= -_BARY_TOL).all(axis=1))[0]
    if len(inside) == 0:
        return None, None
    e = int(inside[0])
    return e, lam[e]


def sample_line(mesh: Mesh, values, p0, p1, n):
    """``n`` uniform samples of a nodal field along the segment p0 -> p1.

    Returns ``(s, sampled)`` where ``s`` is the arc length of each sample
    and ``sampled`` holds the linear interpolant, with NaN marking samples
    outside the mesh.

    Raises:
        NoIntersectionError: no sample lies inside the mesh.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    values = mesh.check_nodal(values, "field")
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.0])
    points = p0 + t[:, None] * (p1 - p0)
    s = t * float(np.linalg.norm(p1 - p0))
    sampled = np.full(n, np.nan)
    for i, pt in enumerate(points):
        e, lam = locate_point(mesh, pt)
        if e is not None:
            sampled[i] = float(lam @ values[mesh.elements[e]])
    if np.all(np.isnan(sampled)):
        raise NoIntersectionError(
            f"segment {p0.tolist()} -> {p1.tolist()} does not intersect the mesh"
        )
    return s, sampled


# Gauss points on the unit interval and midedge points on the triangle:
# exact for the quadratic facet integrands (linear u . n times linear field).
_SEG_QP = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def _facet_rule(dim):
    if dim == 2:
        pts = np.array([[1.0 - q, q] for q in _SEG_QP])
        return pts, np.full(2, 0.5)
    pts = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
    return pts, np.full(3, 1.0 / 3.0)


def outflow_average(mesh: Mesh, values, velocity, marker) -> float:
    """Flow-weighted boundary average ``int(u.n v) / int(u.n)`` over a marker.

    Raises:
        ZeroFluxError: the marked surface carries (numerically) no net flux.
        ValueError: no boundary facet carries the marker.
    """
    values = mesh.check_nodal(values, "field")
    velocity = mesh.check_nodal(velocity, "velocity")
    owner, normal, measure = mesh.facet_geometry()
    selected = [i for i, m in enumerate(mesh.facet_markers) if m == marker]
    if not selected:
        raise ValueError(f"no boundary facets carry marker {marker!r}")
    lam, w = _facet_rule(mesh.dim)
    numerator = 0.0
    denominator = 0.0
    for i in selected:
        fnodes = mesh.facets[i]
        un = (lam @ velocity[fnodes]) @ normal[i]
        v = lam @ values[fnodes]
        numerator += measure[i] * float(w @ (un * v))
        denominator += measure[i] * float(w @ un)
    u_scale = float(np.abs(velocity).max())
    area = float(measure[selected].sum())
    if abs(denominator) <= 1e-12 * max(u_scale * area, np.finfo(float).tiny):
        raise ZeroFluxError(f"marker {marker!r} carries no net flux")
    return numerator / denominator


def delta_phb(ih_out, hb, hct, q, t, v_loop) -> float:
    """Plasma-free hemoglobin increase for a recirculating-loop experiment.

    ``Delta PHb = IH_out * Hb / (1 - Hct) * (Q * T) / V_loop`` with ``hb`` in
    mg/dL, ``q`` in L/min, ``t`` in minutes and ``v_loop`` in mL (the L -> mL
    conversion is applied internally); the result is in mg/dL.
    """
    if not 0.0 < hct < 1.0:
        raise ValueError(f"hematocrit must lie in (0, 1), got {hct}")
    if not v_loop > 0.0:
        raise ValueError(f"loop volume must be > 0, got {v_loop}")
    return ih_out * hb / (1.0 - hct) * (q * 1000.0 * t) / v_loop


def recover_nodal_gradient(mesh: Mesh, values):
    """Volume-weighted nodal average of the piecewise-constant gradient.

    For a scalar field the result is ``(n, d)``; for a vector field
    ``(n, k, d)`` with ``result[a, i, j] = d(value_i)/d(x_j)`` at node a.
    """
    values = mesh.check_nodal(values, "field")
    geo = mesh.geometry()
    conn = mesh.elements
    if values.ndim == 1:
        elem_grad = np.einsum("eid,ei->ed", geo.grads, values[conn])
        out_shape = (mesh.num_nodes, mesh.dim)
    else:
        elem_grad = np.einsum("eid,eik->ekd", geo.grads, values[conn])
        out_shape = (mesh.num_nodes, values.shape[1], mesh.dim)
    weighted = elem_grad * geo.volume.reshape(-1, *([1] * (elem_grad.ndim - 1)))
    accum = np.zeros(out_shape)
    weight = np.zeros(mesh.num_nodes)
    for a in range(conn.shape[1]):
        np.add.at(accum, conn[:, a], weighted)
        np.add.at(weight, conn[:, a], geo.volume)
    return accum / weight.reshape(-1, *([1] * (accum.ndim - 1)))
