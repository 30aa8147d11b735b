"""Unstructured linear-simplex meshes with symmetric reference-element geometry.

Meshes hold triangles (2D) or tetrahedra (3D) plus marked boundary facets.
Element geometry is expressed relative to a *symmetric* reference simplex
(equilateral triangle / regular tetrahedron with unit edge), so the covariant
metric tensor ``G`` carries element size and shape without a directional bias
from the reference corner.  All coordinates are in cm.
"""

import csv
import itertools
import math
import os

import numpy as np

from .errors import (
    DegenerateElementError,
    DimensionMismatchError,
    MeshFormatError,
    UnsupportedElementError,
)

# Affine maps taking the unit simplex onto the symmetric reference simplex
# with unit edge; columns are the reference edge vectors.
_SYM_EDGE = {
    2: np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]),
    3: np.array(
        [
            [1.0, 0.5, 0.5],
            [0.0, math.sqrt(3.0) / 2.0, math.sqrt(3.0) / 6.0],
            [0.0, 0.0, math.sqrt(6.0) / 3.0],
        ]
    ),
}
_SYM_EDGE_INV = {d: np.linalg.inv(m) for d, m in _SYM_EDGE.items()}

_DEGENERATE_REL_TOL = 1e-12


class ElementGeometryTable:
    """Per-element geometric quantities, computed once per mesh.

    Attributes:
        jacobian: (m, d, d) map from the symmetric reference simplex to the
            physical element.
        metric: (m, d, d) covariant metric ``G = J^-T J^-1`` (cm^-2).
        grads: (m, d+1, d) physical gradients of the linear shape functions.
        volume: (m,) element measure (area in 2D, volume in 3D).
        centroid: (m, d) element centroids.
        longest_edge: (m,) longest element edge (cm).
    """

    def __init__(self, jacobian, metric, grads, volume, centroid, longest_edge):
        self.jacobian = jacobian
        self.metric = metric
        self.grads = grads
        self.volume = volume
        self.centroid = centroid
        self.longest_edge = longest_edge


class ElementGeometry:
    """Geometry of a single element (a view into the mesh-wide table)."""

    def __init__(self, jacobian, covariant_metric, volume, grads, centroid, longest_edge):
        self.jacobian = jacobian
        self.covariant_metric = covariant_metric
        self.volume = volume
        self.grads = grads
        self.centroid = centroid
        self.longest_edge = longest_edge


class Mesh:
    """Immutable unstructured mesh of linear simplices.

    Args:
        nodes: (n, d) node coordinates, d = 2 or 3.
        elements: (m, d+1) node indices per element.  Elements with negative
            signed volume are reordered (last two nodes swapped) on
            construction; exactly degenerate elements are rejected.
        boundary_facets: optional sequence of ``(nodes, marker)`` pairs where
            ``nodes`` is a tuple of d facet node indices and ``marker`` a
            string.  When omitted, facets are derived from the element faces
            that occur exactly once, all marked ``"boundary"``.
    """

    def __init__(self, nodes, elements, boundary_facets=None):
        nodes = np.asarray(nodes, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise MeshFormatError("nodes must be an (n, 2) or (n, 3) array")
        d = nodes.shape[1]
        if elements.ndim != 2 or elements.shape[1] != d + 1:
            raise UnsupportedElementError(
                f"elements must have {d + 1} nodes for a {d}D mesh, "
                f"got shape {elements.shape}"
            )
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise MeshFormatError("element node index out of range")

        self.nodes = nodes
        self.elements = self._fix_orientation(nodes, elements)
        self.nodes.setflags(write=False)
        self.elements.setflags(write=False)

        if boundary_facets is None:
            boundary_facets = [
                (f, "boundary") for f in self._single_faces()
            ]
        facet_nodes = []
        facet_markers = []
        for fnodes, marker in boundary_facets:
            fnodes = tuple(int(i) for i in fnodes)
            if len(fnodes) != d:
                raise MeshFormatError(
                    f"boundary facet {fnodes} must have {d} nodes in {d}D"
                )
            facet_nodes.append(fnodes)
            facet_markers.append(str(marker))
        self.facets = np.array(facet_nodes, dtype=np.int64).reshape(len(facet_nodes), d)
        self.facet_markers = tuple(facet_markers)
        self.facets.setflags(write=False)

        self._validate_facets()
        self._geometry = None
        self._facet_geometry = None

    # -- basic queries ------------------------------------------------------

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    def check_nodal(self, field, name="field"):
        """Validate that ``field`` has one row per mesh node."""
        field = np.asarray(field, dtype=float)
        if field.shape[0] != self.num_nodes:
            raise DimensionMismatchError(
                f"{name} has {field.shape[0]} rows, mesh has {self.num_nodes} nodes"
            )
        return field

    # -- geometry ------------------------------------------------------------

    def geometry(self) -> ElementGeometryTable:
        """Element geometry table (computed lazily, cached)."""
        if self._geometry is None:
            self._geometry = _build_geometry(self.nodes, self.elements)
        return self._geometry

    def facet_geometry(self):
        """Per-facet (owner element, outward unit normal, measure) arrays."""
        if self._facet_geometry is None:
            self._facet_geometry = self._build_facet_geometry()
        return self._facet_geometry

    # -- internals -----------------------------------------------------------

    @staticmethod
    def _fix_orientation(nodes, elements):
        elements = elements.copy()
        if elements.shape[0] == 0:
            return elements
        coords = nodes[elements]
        edges = coords[:, 1:, :] - coords[:, :1, :]
        det = np.linalg.det(np.swapaxes(edges, 1, 2))
        flipped = det < 0.0
        if np.any(flipped):
            elements[flipped, -1], elements[flipped, -2] = (
                elements[flipped, -2].copy(),
                elements[flipped, -1].copy(),
            )
        edge_len = np.linalg.norm(
            coords[:, :, None, :] - coords[:, None, :, :], axis=-1
        ).max(axis=(1, 2))
        degenerate = np.abs(det) <= _DEGENERATE_REL_TOL * edge_len ** nodes.shape[1]
        if np.any(degenerate):
            bad = int(np.nonzero(degenerate)[0][0])
            raise DegenerateElementError(
                f"element {bad} has zero volume (nodes {elements[bad].tolist()})"
            )
        return elements

    def _face_counts(self):
        d = self.dim
        counts = {}
        owners = {}
        locs = list(itertools.combinations(range(d + 1), d))
        for e, elem in enumerate(self.elements):
            for loc in locs:
                face = tuple(sorted(int(elem[i]) for i in loc))
                counts[face] = counts.get(face, 0) + 1
                owners[face] = e
        return counts, owners

    def _single_faces(self):
        counts, _ = self._face_counts()
        return sorted(face for face, c in counts.items() if c == 1)

    def _validate_facets(self):
        counts, _ = self._face_counts()
        for fnodes in self.facets:
            key = tuple(sorted(int(i) for i in fnodes))
            c = counts.get(key, 0)
            if c != 1:
                raise MeshFormatError(
                    f"boundary facet {key} is a face of {c} elements, expected 1"
                )

    def _build_facet_geometry(self):
        _, owners = self._face_counts()
        nf = len(self.facets)
        owner = np.empty(nf, dtype=np.int64)
        normal = np.empty((nf, self.dim))
        measure = np.empty(nf)
        for i, fnodes in enumerate(self.facets):
            key = tuple(sorted(int(j) for j in fnodes))
            e = owners[key]
            owner[i] = e
            pts = self.nodes[fnodes]
            if self.dim == 2:
                t = pts[1] - pts[0]
                n = np.array([t[1], -t[0]])
                measure[i] = np.linalg.norm(t)
            else:
                n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
                measure[i] = 0.5 * np.linalg.norm(n)
            n = n / np.linalg.norm(n)
            opposite = [v for v in self.elements[e] if v not in set(key)]
            if n @ (pts[0] - self.nodes[opposite[0]]) < 0.0:
                n = -n
            normal[i] = n
        return owner, normal, measure


def _build_geometry(nodes, elements):
    d = nodes.shape[1]
    coords = nodes[elements]                          # (m, d+1, d)
    edge_mat = np.swapaxes(coords[:, 1:, :] - coords[:, :1, :], 1, 2)  # columns = edges
    det = np.linalg.det(edge_mat)
    edge_len = np.linalg.norm(
        coords[:, :, None, :] - coords[:, None, :, :], axis=-1
    ).max(axis=(1, 2))
    if np.any(np.abs(det) <= _DEGENERATE_REL_TOL * edge_len**d):
        bad = int(np.argmin(np.abs(det) / np.maximum(edge_len**d, 1e-300)))
        raise DegenerateElementError(f"element {bad} is degenerate")
    volume = det / math.factorial(d)                  # positive after orientation fix
    edge_inv = np.linalg.inv(edge_mat)                # rows = grad of barycentric 1..d
    jac = edge_mat @ _SYM_EDGE_INV[d]
    jac_inv = _SYM_EDGE[d] @ edge_inv
    metric = np.einsum("eki,ekj->eij", jac_inv, jac_inv)
    grads = np.empty((len(elements), d + 1, d))
    grads[:, 1:, :] = edge_inv
    grads[:, 0, :] = -edge_inv.sum(axis=1)
    centroid = coords.mean(axis=1)
    return ElementGeometryTable(jac, metric, grads, volume, centroid, edge_len)


def element_geometry(mesh: Mesh, e: int) -> ElementGeometry:
    """Geometry of element ``e``: Jacobian, covariant metric, volume.

    The Jacobian maps the symmetric reference simplex (unit edge) onto the
    physical element; ``covariant_metric`` is ``J^-T J^-1``.
    """
    if not 0 <= e < mesh.num_elements:
        raise IndexError(f"element index {e} out of range")
    g = mesh.geometry()
    return ElementGeometry(
        g.jacobian[e],
        g.metric[e],
        float(g.volume[e]),
        g.grads[e],
        g.centroid[e],
        float(g.longest_edge[e]),
    )


def inflow_nodes(mesh: Mesh, velocity) -> set:
    """Nodes of boundary facets with facet-averaged ``u . n < 0`` (n outward)."""
    velocity = mesh.check_nodal(velocity, "velocity")
    owner, normal, _ = mesh.facet_geometry()
    result = set()
    for i, fnodes in enumerate(mesh.facets):
        u_avg = velocity[fnodes].mean(axis=0)
        if float(u_avg @ normal[i]) < 0.0:
            result.update(int(j) for j in fnodes)
    return result


# ---------------------------------------------------------------------------
# Structured generators
# ---------------------------------------------------------------------------


def rectangle_mesh(nx, ny, length, height, markers=("inflow", "outflow", "bottom", "top")):
    """Structured triangulation of [0, length] x [0, height].

    Each grid cell is split along the lower-left / upper-right diagonal,
    giving ``2*nx*ny`` triangles.  ``markers`` names the x=0, x=length, y=0
    and y=height boundaries, in that order.
    """
    if nx < 2 or ny < 2:
        raise MeshFormatError("rectangle mesh needs nx >= 2 and ny >= 2")
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    nodes = np.array([(x, y) for j in range(ny + 1) for i in range(nx + 1) for x, y in [(xs[i], ys[j])]])

    def nid(i, j):
        return j * (nx + 1) + i

    elements = []
    for j in range(ny):
        for i in range(nx):
            a, b = nid(i, j), nid(i + 1, j)
            c, dd = nid(i + 1, j + 1), nid(i, j + 1)
            elements.append((a, b, c))
            elements.append((a, c, dd))
    left, right, bottom, top = markers
    facets = []
    for j in range(ny):
        facets.append(((nid(0, j), nid(0, j + 1)), left))
        facets.append(((nid(nx, j), nid(nx, j + 1)), right))
    for i in range(nx):
        facets.append(((nid(i, 0), nid(i + 1, 0)), bottom))
        facets.append(((nid(i, ny), nid(i + 1, ny)), top))
    return Mesh(nodes, elements, facets)


def box_mesh(nx, ny, nz, lx, ly, lz,
             markers=("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")):
    """Structured tetrahedralization of [0,lx] x [0,ly] x [0,lz].

    Each grid cell is cut into six tetrahedra (Kuhn subdivision), giving
    ``6*nx*ny*nz`` elements with conforming faces.
    """
    if min(nx, ny, nz) < 1:
        raise MeshFormatError("box mesh needs at least one cell per direction")
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    zs = np.linspace(0.0, lz, nz + 1)
    nodes = np.array(
        [(xs[i], ys[j], zs[k])
         for k in range(nz + 1) for j in range(ny + 1) for i in range(nx + 1)]
    )

    def nid(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    # Kuhn split: tets follow the 6 monotone paths from corner 000 to 111.
    paths = [
        (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
    ]
    elements = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                base = np.array([i, j, k])
                for path in paths:
                    corners = [base.copy()]
                    for axis in path:
                        nxt = corners[-1].copy()
                        nxt[axis] += 1
                        corners.append(nxt)
                    elements.append(tuple(nid(*c) for c in corners))
    mesh_no_facets = Mesh(nodes, elements)
    faces = mesh_no_facets._single_faces()
    coords = nodes
    bounds = {0: (0.0, lx), 1: (0.0, ly), 2: (0.0, lz)}
    tol = 1e-12 * max(lx, ly, lz)
    facets = []
    for face in faces:
        pts = coords[list(face)]
        marker = "boundary"
        for axis in range(3):
            lo, hi = bounds[axis]
            if np.all(np.abs(pts[:, axis] - lo) <= tol):
                marker = markers[2 * axis]
            elif np.all(np.abs(pts[:, axis] - hi) <= tol):
                marker = markers[2 * axis + 1]
        facets.append((face, marker))
    return Mesh(nodes, elements, facets)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

_GMSH_SIMPLEX = {1: 2, 2: 3, 4: 4}   # gmsh type -> node count (line, tri, tet)
_GMSH_SKIP = {15}                    # point elements carry no geometry here


def load_mesh(path, fmt) -> Mesh:
    """Load a mesh from ``gmsh_ascii`` (MSH 2.2) or ``native_csv`` files.

    For ``native_csv``, ``path`` is a directory holding ``nodes.csv`` and
    ``elements.csv`` (plus optional ``facets.csv``).
    """
    if fmt == "gmsh_ascii":
        return _load_gmsh(path)
    if fmt == "native_csv":
        return _load_native_csv(path)
    raise MeshFormatError(f"unknown mesh format {fmt!r}")


def _load_gmsh(path):
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise MeshFormatError(f"cannot read mesh file {path}: {exc}") from exc

    sections = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            end = f"$End{name}"
            j = i + 1
            body = []
            while j < len(lines) and lines[j].strip() != end:
                body.append(lines[j])
                j += 1
            if j >= len(lines):
                raise MeshFormatError(f"unterminated section {line} in {path}")
            sections[name] = body
            i = j + 1
        else:
            i += 1
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshFormatError(f"{path} is missing $Nodes or $Elements")

    phys_names = {}
    for row in sections.get("PhysicalNames", [])[1:]:
        parts = row.strip().split(maxsplit=2)
        if len(parts) == 3:
            phys_names[int(parts[1])] = parts[2].strip().strip('"')

    body = sections["Nodes"]
    try:
        n_nodes = int(body[0])
        raw_nodes = []
        id_map = {}
        for row in body[1 : 1 + n_nodes]:
            parts = row.split()
            id_map[int(parts[0])] = len(raw_nodes)
            raw_nodes.append([float(v) for v in parts[1:4]])
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"malformed $Nodes section in {path}") from exc
    coords = np.array(raw_nodes)

    body = sections["Elements"]
    tris, tets, segs = [], [], []
    seg_tags, tri_tags = [], []
    try:
        n_elems = int(body[0])
        for row in body[1 : 1 + n_elems]:
            parts = [int(v) for v in row.split()]
            etype, ntags = parts[1], parts[2]
            if etype in _GMSH_SKIP:
                continue
            if etype not in _GMSH_SIMPLEX:
                raise UnsupportedElementError(
                    f"unsupported gmsh element type {etype} in {path} "
                    "(only linear lines, triangles and tetrahedra)"
                )
            tags = parts[3 : 3 + ntags]
            conn = [id_map[v] for v in parts[3 + ntags :]]
            phys = tags[0] if tags else 0
            if etype == 1:
                segs.append(conn)
                seg_tags.append(phys)
            elif etype == 2:
                tris.append(conn)
                tri_tags.append(phys)
            else:
                tets.append(conn)
    except UnsupportedElementError:
        raise
    except (ValueError, IndexError, KeyError) as exc:
        raise MeshFormatError(f"malformed $Elements section in {path}") from exc

    def marker(tag):
        return phys_names.get(tag, str(tag))

    if tets:
        nodes = coords
        facets = [(tuple(c), marker(t)) for c, t in zip(tris, tri_tags)] or None
        return Mesh(nodes, np.array(tets), facets)
    if not tris:
        raise MeshFormatError(f"{path} contains no triangles or tetrahedra")
    nodes = coords[:, :2]
    facets = [(tuple(c), marker(t)) for c, t in zip(segs, seg_tags)] or None
    return Mesh(nodes, np.array(tris), facets)


def _read_csv_rows(path):
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and any(f.strip() for f in row)]
    except OSError as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc
    if rows and not _is_number(rows[0][0]) and not _is_number(rows[0][-1]):
        rows = rows[1:]  # header line
    return rows


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def _load_native_csv(path):
    nodes_path = os.path.join(path, "nodes.csv")
    elems_path = os.path.join(path, "elements.csv")
    facets_path = os.path.join(path, "facets.csv")

    id_map = {}
    raw_nodes = []
    for row in _read_csv_rows(nodes_path):
        try:
            nid = int(row[0])
            coords = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise MeshFormatError(f"malformed node row {row} in {nodes_path}") from exc
        if len(coords) not in (2, 3):
            raise MeshFormatError(f"node row {row} must have 2 or 3 coordinates")
        id_map[nid] = len(raw_nodes)
        raw_nodes.append(coords)
    if not raw_nodes:
        raise MeshFormatError(f"{nodes_path} contains no nodes")
    dims = {len(c) for c in raw_nodes}
    if len(dims) != 1:
        raise MeshFormatError(f"{nodes_path} mixes 2D and 3D coordinates")
    d = dims.pop()
    nodes = np.array(raw_nodes)

    elements = []
    for row in _read_csv_rows(elems_path):
        try:
            conn = [id_map[int(v)] for v in row[1:]]
        except (ValueError, KeyError) as exc:
            raise MeshFormatError(f"malformed element row {row} in {elems_path}") from exc
        if len(conn) != d + 1:
            raise UnsupportedElementError(
                f"element row {row} has {len(conn)} nodes; "
                f"only linear simplices ({d + 1} nodes in {d}D) are supported"
            )
        elements.append(conn)
    if not elements:
        raise MeshFormatError(f"{elems_path} contains no elements")

    facets = None
    if os.path.exists(facets_path):
        facets = []
        for row in _read_csv_rows(facets_path):
            try:
                conn = tuple(id_map[int(v)] for v in row[1:])
            except (ValueError, KeyError) as exc:
                raise MeshFormatError(f"malformed facet row {row} in {facets_path}") from exc
            facets.append((conn, row[0].strip()))
    return Mesh(nodes, np.array(elements), facets)


def write_native_csv(mesh: Mesh, path):
    """Write ``nodes.csv``, ``elements.csv`` and ``facets.csv`` into ``path``."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "nodes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + ["x", "y", "z"][: mesh.dim])
        for i, pt in enumerate(mesh.nodes):
            w.writerow([i] + [repr(float(v)) for v in pt])
    with open(os.path.join(path, "elements.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"n{k}" for k in range(mesh.dim + 1)])
        for i, conn in enumerate(mesh.elements):
            w.writerow([i] + [int(v) for v in conn])
    with open(os.path.join(path, "facets.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["marker"] + [f"n{k}" for k in range(mesh.dim)])
        for conn, marker in zip(mesh.facets, mesh.facet_markers):
            w.writerow([marker] + [int(v) for v in conn])


def write_gmsh(mesh: Mesh, path):
    """Write the mesh in gmsh MSH 2.2 ASCII format (with physical names)."""
    markers = sorted(set(mesh.facet_markers))
    marker_tag = {m: i + 1 for i, m in enumerate(markers)}
    facet_type = 1 if mesh.dim == 2 else 2
    elem_type = 2 if mesh.dim == 2 else 4
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        if markers:
            fh.write("$PhysicalNames\n")
            fh.write(f"{len(markers)}\n")
            for m in markers:
                fh.write(f'{mesh.dim - 1} {marker_tag[m]} "{m}"\n')
            fh.write("$EndPhysicalNames\n")
        fh.write("$Nodes\n")
        fh.write(f"{mesh.num_nodes}\n")
        for i, pt in enumerate(mesh.nodes):
            xyz = list(pt) + [0.0] * (3 - mesh.dim)
            fh.write(f"{i + 1} {xyz[0]!r} {xyz[1]!r} {xyz[2]!r}\n")
        fh.write("$EndNodes\n$Elements\n")
        fh.write(f"{len(mesh.facets) + mesh.num_elements}\n")
        eid = 1
        for conn, marker in zip(mesh.facets, mesh.facet_markers):
            tag = marker_tag[marker]
            nodes = " ".join(str(int(v) + 1) for v in conn)
            fh.write(f"{eid} {facet_type} 2 {tag} {tag} {nodes}\n")
            eid += 1
        for conn in mesh.elements:
            nodes = " ".join(str(int(v) + 1) for v in conn)
            fh.write(f"{eid} {elem_type} 2 0 0 {nodes}\n")
            eid += 1
        fh.write("$EndElements\n")
