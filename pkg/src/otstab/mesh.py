"""Simplicial meshes of Lipschitz domains and the proof-geometry helpers.

Provides the structured tetrahedral unit-cube mesh used by the shipped
experiments, a radially layered spherical-shell mesh used as a synthetic
quadrature test domain, plain-text mesh serialization, exterior offset
frames (the non-tangential field nu_tilde and the points z = x0 + tau nu),
exact point-to-boundary distances, and quadrature of moment integrals
|x - z|^s over the domain clipped by a ball around an exterior point.
"""

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError
from .quadrature import map_to_tet, tet_rule, tet_volumes


# ---------------------------------------------------------------------------
# mesh container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mesh:
    """First-order tetrahedral mesh with oriented boundary triangles.

    vertices: (V, 3) coordinates; tets: (T, 4) vertex indices with positive
    signed volume; boundary_faces: (F, 3) triangles oriented outward;
    boundary_vertices: sorted index array; h: max element diameter.
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray = field(default=None)
    boundary_vertices: np.ndarray = field(default=None)
    h: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "tets", np.asarray(self.tets, dtype=np.int64))
        vols = tet_volumes(self.vertices[self.tets])
        if np.any(vols <= 0):
            raise MeshError(
                f"{int(np.sum(vols <= 0))} tets have non-positive signed volume"
            )
        if self.boundary_faces is None:
            object.__setattr__(self, "boundary_faces", _boundary_faces(self.vertices, self.tets))
        else:
            object.__setattr__(self, "boundary_faces", np.asarray(self.boundary_faces, dtype=np.int64))
        if self.boundary_vertices is None:
            object.__setattr__(
                self, "boundary_vertices", np.unique(self.boundary_faces.ravel())
            )
        if self.h is None:
            object.__setattr__(self, "h", float(_max_diameter(self.vertices[self.tets])))

    # -- derived geometry ---------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_tets(self):
        return self.tets.shape[0]

    def tet_coords(self):
        return self.vertices[self.tets]

    def volumes(self):
        return tet_volumes(self.tet_coords())

    def centroids(self):
        return self.tet_coords().mean(axis=1)

    def quadrature_points(self, degree=2):
        """All element quadrature points with absolute weights (w_q * vol)."""
        ref, wts = tet_rule(degree)
        coords = self.tet_coords()
        pts = map_to_tet(coords, ref).reshape(-1, 3)
        weights = (tet_volumes(coords)[:, None] * wts).ravel()
        return pts, weights

    def boundary_sample_points(self):
        """Boundary vertices plus boundary-face centroids, lexicographically sorted."""
        pts = np.vstack(
            [
                self.vertices[self.boundary_vertices],
                self.vertices[self.boundary_faces].mean(axis=1),
            ]
        )
        order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
        return pts[order]

    def contains(self, point, tol=1e-12):
        """True iff the point lies in the closed mesh domain."""
        p = np.asarray(point, dtype=float)
        coords = self.tet_coords()
        origin = coords[:, 0, :]
        edges = np.swapaxes(coords[:, 1:, :] - origin[:, None, :], 1, 2)
        try:
            lam = np.linalg.solve(edges, (p - origin)[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            raise MeshError("degenerate tet while locating a point")
        ok = (lam >= -tol).all(axis=1) & (lam.sum(axis=1) <= 1.0 + tol)
        return bool(ok.any())

    # -- serialization --------------------------------------------------------

    def to_text(self):
        buf = io.StringIO()
        buf.write(f"3 {self.n_vertices} {self.n_tets}\n")
        for v in self.vertices:
            buf.write(f"{v[0]!r} {v[1]!r} {v[2]!r}\n")
        for t in self.tets:
            buf.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        return buf.getvalue()

    def save(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text):
        lines = text.strip().splitlines()
        dim, n_vert, n_tet = (int(tok) for tok in lines[0].split())
        if dim != 3:
            raise MeshError(f"unsupported dimension {dim} in mesh file")
        if len(lines) != 1 + n_vert + n_tet:
            raise MeshError("mesh file line count does not match header")
        vertices = np.array(
            [[float(tok) for tok in ln.split()] for ln in lines[1 : 1 + n_vert]]
        )
        tets = np.array(
            [[int(tok) for tok in ln.split()] for ln in lines[1 + n_vert :]],
            dtype=np.int64,
        )
        return cls(vertices, tets)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_text(fh.read())

    def fingerprint(self):
        return hashlib.sha256(self.to_text().encode("ascii")).hexdigest()


def _max_diameter(coords):
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    best = 0.0
    for i, j in pairs:
        d = np.linalg.norm(coords[:, i, :] - coords[:, j, :], axis=1)
        best = max(best, float(d.max()))
    return best


def _boundary_faces(vertices, tets):
    """Faces owned by exactly one tet, oriented with the outward normal."""
    local = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    faces = {}
    for t_idx, tet in enumerate(tets):
        for opp, tri in enumerate(local):
            key = tuple(sorted(tet[list(tri)]))
            faces.setdefault(key, []).append((t_idx, tet[opp]))
    out = []
    for key, owners in faces.items():
        if len(owners) > 2:
            raise MeshError(f"face {key} shared by {len(owners)} tets")
        if len(owners) == 1:
            a, b, c = key
            opposite = owners[0][1]
            normal = np.cross(vertices[b] - vertices[a], vertices[c] - vertices[a])
            if normal @ (vertices[a] - vertices[opposite]) < 0:
                b, c = c, b
            out.append((a, b, c))
    out.sort()
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def build_cube_mesh(divisions):
    """Uniform 6-tets-per-subcube mesh of the unit cube.

    Every subcube is split along the staircase paths of the three axis
    permutations, which is conforming across subcubes; h = sqrt(3)/divisions.
    """
    if divisions < 1:
        raise ValueError("divisions must be >= 1")
    d = int(divisions)
    side = d + 1
    grid = np.linspace(0.0, 1.0, side)
    xx, yy, zz = np.meshgrid(grid, grid, grid, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def vid(i, j, k):
        return (i * side + j) * side + k

    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets = []
    for i in range(d):
        for j in range(d):
            for k in range(d):
                base = np.array([i, j, k])
                for perm in perms:
                    path = [base.copy()]
                    cur = base.copy()
                    for axis in perm:
                        cur = cur.copy()
                        cur[axis] += 1
                        path.append(cur)
                    ids = [vid(*p) for p in path]
                    if _perm_parity(perm) < 0:
                        ids[2], ids[3] = ids[3], ids[2]
                    tets.append(ids)
    return Mesh(vertices, np.array(tets, dtype=np.int64))


def _perm_parity(perm):
    inversions = sum(
        1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j]
    )
    return -1 if inversions % 2 else 1


def _octasphere(subdivisions):
    """Octahedron-based triangulation of the unit sphere."""
    verts = [
        (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    ]
    verts = [np.array(v, dtype=float) for v in verts]
    faces = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    midpoint = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    for _ in range(subdivisions):
        new_faces = []
        midpoint.clear()
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def _split_prism(bottom, top):
    """Split a vertical prism into three tets with index-consistent diagonals.

    Quad faces are cut along the diagonal through their smallest global
    vertex index, so adjacent prisms always agree on the shared face.
    """
    ids = list(bottom) + list(top)
    start = int(np.argmin(ids))
    if start >= 3:
        bottom, top = top, bottom
        start -= 3
    b = [bottom[(start + i) % 3] for i in range(3)]
    t = [top[(start + i) % 3] for i in range(3)]
    v0, v1, v2 = b
    v3, v4, v5 = t
    if min(v1, v5) < min(v2, v4):
        return [(v0, v1, v2, v5), (v0, v1, v5, v4), (v0, v4, v5, v3)]
    return [(v0, v1, v2, v4), (v0, v4, v2, v5), (v0, v4, v5, v3)]


def build_shell_mesh(center, r_inner, r_outer, layers=6, subdivisions=3):
    """Tet mesh of the spherical shell r_inner <= |x - center| <= r_outer.

    Radii are geometrically graded so the inner layers (where radial
    integrands are steepest) are the thinnest.
    """
    if not 0 < r_inner < r_outer:
        raise ValueError("need 0 < r_inner < r_outer")
    center = np.asarray(center, dtype=float)
    sphere_v, sphere_f = _octasphere(subdivisions)
    radii = r_inner * (r_outer / r_inner) ** (np.arange(layers + 1) / layers)
    n_sphere = sphere_v.shape[0]
    vertices = np.vstack([center + r * sphere_v for r in radii])
    tets = []
    for layer in range(layers):
        lo = layer * n_sphere
        hi = (layer + 1) * n_sphere
        for a, b, c in sphere_f:
            tets.extend(_split_prism((lo + a, lo + b, lo + c), (hi + a, hi + b, hi + c)))
    tets = np.array(tets, dtype=np.int64)
    coords = vertices[tets]
    vols = tet_volumes(coords)
    flip = vols < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
    return Mesh(vertices, tets)


# ---------------------------------------------------------------------------
# boundary distance and offset frames
# ---------------------------------------------------------------------------

def point_triangles_distance(point, tri_coords):
    """Exact distances from one point to a batch of triangles, shape (F,)."""
    p = np.asarray(point, dtype=float)
    a = tri_coords[:, 0, :]
    b = tri_coords[:, 1, :]
    c = tri_coords[:, 2, :]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def settle(mask, value):
        fresh = mask & ~done
        closest[fresh] = value[fresh] if value.ndim == 2 else value
        done[fresh] = True

    settle((d1 <= 0) & (d2 <= 0), a)  # vertex a
    settle((d3 >= 0) & (d4 <= d3), b)  # vertex b
    settle((d6 >= 0) & (d5 <= d6), c)  # vertex c

    vc = d1 * d4 - d3 * d2
    edge_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    v = np.divide(d1, d1 - d3, out=np.zeros_like(d1), where=(d1 - d3) != 0)
    settle(edge_ab, a + v[:, None] * ab)

    vb = d5 * d2 - d1 * d6
    edge_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    w = np.divide(d2, d2 - d6, out=np.zeros_like(d2), where=(d2 - d6) != 0)
    settle(edge_ac, a + w[:, None] * ac)

    va = d3 * d6 - d5 * d4
    edge_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    w2 = np.divide(
        d4 - d3, (d4 - d3) + (d5 - d6), out=np.zeros_like(d4), where=((d4 - d3) + (d5 - d6)) != 0
    )
    settle(edge_bc, b + w2[:, None] * (c - b))

    denom = va + vb + vc
    v_in = np.divide(vb, denom, out=np.zeros_like(vb), where=denom != 0)
    w_in = np.divide(vc, denom, out=np.zeros_like(vc), where=denom != 0)
    settle(np.ones_like(done), a + v_in[:, None] * ab + w_in[:, None] * ac)
    return np.linalg.norm(p - closest, axis=1)


def boundary_distance(mesh, point):
    """Exact distance from a point to the boundary triangulation."""
    tri = mesh.vertices[mesh.boundary_faces]
    return float(point_triangles_distance(point, tri).min())


@dataclass(frozen=True)
class BoundaryFrame:
    """An anchor x0 on the boundary with an exterior non-tangential direction.

    Offset points z = x0 + tau * nu_tilde for 0 < tau <= tau0 stay outside the
    domain with c_tau * tau <= dist(z, boundary) <= tau.
    """

    x0: np.ndarray
    nu_tilde: np.ndarray
    tau0: float
    c_tau: float


def make_boundary_frame(mesh, x0, tau0=0.25, tol=1e-9, n_check=8):
    """Build the exterior frame at a boundary point.

    nu_tilde is the outward face normal at interior points of a flat face and
    the normalised sum of the distinct adjacent face normals at edges and
    corners.  The comparability constant c_tau is measured against the exact
    boundary distance on a dyadic tau grid.
    """
    x0 = np.asarray(x0, dtype=float)
    tri = mesh.vertices[mesh.boundary_faces]
    dists = point_triangles_distance(x0, tri)
    touching = dists < tol
    if not touching.any():
        raise ValueError(f"point {x0.tolist()} does not lie on the mesh boundary")
    normals = np.cross(
        tri[touching, 1] - tri[touching, 0], tri[touching, 2] - tri[touching, 0]
    )
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    distinct = np.unique(np.round(normals, 9), axis=0)
    nu = distinct.sum(axis=0)
    norm = np.linalg.norm(nu)
    if norm < tol:
        raise ValueError("adjacent face normals cancel; no exterior direction")
    nu /= norm

    taus = tau0 / 2.0 ** np.arange(n_check)
    ratios = []
    for tau in taus:
        z = x0 + tau * nu
        if mesh.contains(z):
            raise ValueError("offset point fell inside the domain; reduce tau0")
        dist = boundary_distance(mesh, z)
        if dist > tau * (1.0 + 1e-9):
            raise ValueError("boundary distance exceeds tau; inconsistent frame")
        ratios.append(dist / tau)
    return BoundaryFrame(x0, nu, float(tau0), float(min(ratios)))


def offset_point(frame, tau):
    """The exterior point x0 + tau * nu_tilde, for 0 < tau <= tau0."""
    if not 0.0 < tau <= frame.tau0:
        raise ValueError(f"tau must lie in (0, {frame.tau0}], got {tau}")
    return frame.x0 + tau * frame.nu_tilde


# ---------------------------------------------------------------------------
# moment integrals
# ---------------------------------------------------------------------------

def _subdivide(coords):
    """Split tets (B, 4, 3) into 8 children each, (8B, 4, 3)."""
    v = coords
    m01 = 0.5 * (v[:, 0] + v[:, 1])
    m02 = 0.5 * (v[:, 0] + v[:, 2])
    m03 = 0.5 * (v[:, 0] + v[:, 3])
    m12 = 0.5 * (v[:, 1] + v[:, 2])
    m13 = 0.5 * (v[:, 1] + v[:, 3])
    m23 = 0.5 * (v[:, 2] + v[:, 3])
    children = [
        (v[:, 0], m01, m02, m03),
        (v[:, 1], m01, m12, m13),
        (v[:, 2], m02, m12, m23),
        (v[:, 3], m03, m13, m23),
        # central octahedron split along the m02-m13 diagonal
        (m02, m13, m01, m03),
        (m02, m13, m03, m23),
        (m02, m13, m23, m12),
        (m02, m13, m12, m01),
    ]
    return np.concatenate([np.stack(ch, axis=1) for ch in children], axis=0)


def _diameters(coords):
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    d = np.zeros(coords.shape[0])
    for i, j in pairs:
        np.maximum(d, np.linalg.norm(coords[:, i] - coords[:, j], axis=1), out=d)
    return d


def moment_integral(
    mesh,
    z,
    s,
    rho,
    region="inside",
    degree=5,
    max_depth=4,
    near_factor=4.0,
):
    """Quadrature of integral |x - z|^s over the domain clipped by B_rho(z).

    region "inside" integrates over Omega intersected with the ball,
    "outside" over Omega minus the ball.  Elements cut by the sphere, and
    elements whose distance to z is small relative to their size, are
    recursively subdivided up to max_depth; remaining cut leaves split their
    quadrature points by the ball indicator, so inside + outside always
    reproduces the unclipped integral exactly.
    """
    if region not in ("inside", "outside", "both"):
        raise ValueError("region must be 'inside', 'outside' or 'both'")
    z = np.asarray(z, dtype=float)
    if mesh.contains(z):
        raise ValueError("the singular point z must lie outside the closed domain")
    ref, wts = tet_rule(degree)
    inside_total = 0.0
    outside_total = 0.0
    stack = [(mesh.tet_coords(), 0)]
    while stack:
        coords, depth = stack.pop()
        vdist = np.linalg.norm(coords - z, axis=2)
        dmax = vdist.max(axis=1)
        dmin = vdist.min(axis=1)
        diam = _diameters(coords)
        reach = dmin - diam  # certified lower bound on dist(z, tet)
        fully_in = dmax <= rho
        fully_out = reach >= rho
        cut = ~(fully_in | fully_out)
        steep = reach < near_factor * diam
        refine = (cut | steep) & (depth < max_depth)
        leaves = ~refine
        if refine.any():
            stack.append((_subdivide(coords[refine]), depth + 1))
        if not leaves.any():
            continue
        leaf = coords[leaves]
        pts = map_to_tet(leaf, ref)  # (B, q, 3)
        vals = np.linalg.norm(pts - z, axis=2) ** s
        vols = np.abs(tet_volumes(leaf))
        plain = vols[:, None] * wts * vals
        is_cut = cut[leaves]
        if (~is_cut).any():
            sums = plain[~is_cut].sum(axis=1)
            inside_total += sums[fully_in[leaves][~is_cut]].sum()
            outside_total += sums[~fully_in[leaves][~is_cut]].sum()
        if is_cut.any():
            in_ball = np.linalg.norm(pts[is_cut] - z, axis=2) <= rho
            inside_total += plain[is_cut][in_ball].sum()
            outside_total += plain[is_cut][~in_ball].sum()
    if region == "inside":
        return inside_total
    if region == "outside":
        return outside_total
    return inside_total, outside_total
