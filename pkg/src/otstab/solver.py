"""P1 finite elements for the complex second-order equation.

The complex equation -div(K grad u) + q u = 0 is discretised with first
order tets.  Stiffness entries use the element-centroid value of K (exact
for the piecewise-constant gradients), mass entries a degree-2 Gauss rule.
The complex N x N matrix is equivalent to the real 2N x 2N strongly
elliptic system in interleaved (re, im) ordering, which is exposed for
tests that address the block pattern directly.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .quadrature import map_to_tet, tet_rule

DIRECT_SOLVER_LIMIT = 50_000  # unknowns; iterative Krylov above this
MASS_QUADRATURE_DEGREE = 2


class FrozenTensor:
    """Constant-coefficient medium, handy for manufactured and decoupling tests."""

    def __init__(self, K, q, dim=3):
        K = np.asarray(K, dtype=complex)
        if K.ndim == 0:
            K = K * np.eye(dim)
        self.K0 = K
        self.q0 = complex(q)
        self.dim = K.shape[0]

    def _tile(self, points, mat):
        points = np.atleast_2d(points)
        return np.broadcast_to(mat, (points.shape[0],) + mat.shape).copy()

    def K_R(self, points):
        return self._tile(points, self.K0.real)

    def K_I(self, points):
        return self._tile(points, self.K0.imag)

    def q_R(self, points):
        points = np.atleast_2d(points)
        return np.full(points.shape[0], self.q0.real)

    def q_I(self, points):
        points = np.atleast_2d(points)
        return np.full(points.shape[0], self.q0.imag)


def p1_gradients(coords):
    """Gradients of the four barycentric basis functions, shape (T, 4, 3)."""
    edges = coords[:, 1:, :] - coords[:, :1, :]
    inv = np.linalg.inv(edges)  # rows of inv(E) are grad lambda_1..3
    grads = np.swapaxes(inv, 1, 2)
    grad0 = -grads.sum(axis=1, keepdims=True)
    return np.concatenate([grad0, grads], axis=1)


def _phi_at(ref_points):
    lam0 = 1.0 - ref_points.sum(axis=1)
    return np.column_stack([lam0, ref_points])


@dataclass
class FemSolution:
    """Nodal complex solution with the achieved interior residual."""

    u: np.ndarray
    residual: float
    solve_stats: dict


class DiscreteSystem:
    """Assembled bilinear form of the complex equation on a mesh.

    Kc is the complex symmetric N x N matrix; A is the equivalent real
    interleaved 2N x 2N matrix whose diagonal blocks come from Re(K), q_R and
    whose skew off-diagonal blocks come from Im(K), q_I.  dof_pairs maps
    vertex v to its (real, imag) rows (2v, 2v + 1).
    """

    def __init__(self, mesh, tensor, Kc):
        self.mesh = mesh
        self.tensor = tensor
        self.Kc = Kc.tocsr()
        self.boundary = np.asarray(mesh.boundary_vertices, dtype=np.int64)
        interior = np.ones(mesh.n_vertices, dtype=bool)
        interior[self.boundary] = False
        self.interior = np.nonzero(interior)[0]
        self._factor = None
        self._real = None

    @property
    def n_vertices(self):
        return self.mesh.n_vertices

    @property
    def dof_pairs(self):
        ids = np.arange(self.n_vertices)
        return np.column_stack([2 * ids, 2 * ids + 1])

    @property
    def A(self):
        """Real interleaved 2N x 2N matrix (built on first use)."""
        if self._real is None:
            coo = self.Kc.tocoo()
            r, c = coo.row, coo.col
            re, im = coo.data.real, coo.data.imag
            rows = np.concatenate([2 * r, 2 * r, 2 * r + 1, 2 * r + 1])
            cols = np.concatenate([2 * c, 2 * c + 1, 2 * c, 2 * c + 1])
            data = np.concatenate([re, -im, im, re])
            n2 = 2 * self.n_vertices
            self._real = sp.coo_matrix((data, (rows, cols)), shape=(n2, n2)).tocsr()
        return self._real

    def interior_factor(self):
        if self._factor is None:
            kii = self.Kc[self.interior][:, self.interior].tocsc()
            self._factor = spla.splu(kii)
        return self._factor


def assemble(mesh, tensor):
    """Assemble the discrete system for a diffusion tensor on a mesh."""
    coords = mesh.tet_coords()
    vols = mesh.volumes()
    if np.any(vols <= 0):
        raise SolverError("degenerate element: non-positive volume")
    grads = p1_gradients(coords)
    cent = coords.mean(axis=1)
    k_cent = tensor.K_R(cent) + 1j * tensor.K_I(cent)
    stiff = np.einsum("t,tid,tde,tje->tij", vols, grads, k_cent, grads)

    ref, wts = tet_rule(MASS_QUADRATURE_DEGREE)
    phi = _phi_at(ref)
    qpts = map_to_tet(coords, ref).reshape(-1, 3)
    qvals = (tensor.q_R(qpts) + 1j * tensor.q_I(qpts)).reshape(len(vols), -1)
    mass = np.einsum("t,tq,q,qi,qj->tij", vols, qvals, wts, phi, phi)

    local = stiff + mass
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    n = mesh.n_vertices
    kc = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    return DiscreteSystem(mesh, tensor, kc)


def solve_dirichlet(system, g, tol=1e-10):
    """Solve with prescribed boundary values (eliminated, hence exact on the boundary).

    g: complex values on system.boundary (in that order), or a callable of
    the boundary vertex coordinates.
    """
    if callable(g):
        g = np.asarray(g(system.mesh.vertices[system.boundary]), dtype=complex)
    else:
        g = np.asarray(g, dtype=complex)
    if g.shape[0] != system.boundary.shape[0]:
        raise SolverError(
            f"boundary data has {g.shape[0]} entries, expected {system.boundary.shape[0]}"
        )
    kc = system.Kc
    rhs = -kc[system.interior][:, system.boundary] @ g
    n_int = system.interior.size
    if n_int <= DIRECT_SOLVER_LIMIT:
        u_int = system.interior_factor().solve(rhs)
        stats = {"method": "splu", "unknowns": int(n_int)}
    else:
        kii = kc[system.interior][:, system.interior].tocsr()
        precond = spla.LinearOperator(
            kii.shape, lambda x: x / kii.diagonal(), dtype=complex
        )
        u_int, info = spla.gmres(kii, rhs, rtol=tol, atol=0.0, M=precond, maxiter=2000)
        if info != 0:
            res = float(np.linalg.norm(kii @ u_int - rhs) / np.linalg.norm(rhs))
            raise SolverError(
                f"Krylov solver did not converge (info={info})",
                iterations=info if info > 0 else None,
                residual=res,
            )
        stats = {"method": "gmres", "unknowns": int(n_int)}
    u = np.zeros(system.n_vertices, dtype=complex)
    u[system.boundary] = g
    u[system.interior] = u_int
    scale = np.linalg.norm(rhs)
    kii = kc[system.interior][:, system.interior]
    res = float(np.linalg.norm(kii @ u_int - rhs) / (scale if scale > 0 else 1.0))
    if res > tol:
        raise SolverError(f"interior residual {res:.3e} exceeds tolerance {tol:.1e}",
                          residual=res)
    return FemSolution(u, res, stats)


def solve_interior(system, load, tol=1e-10):
    """Solve with homogeneous Dirichlet data and an interior load vector."""
    load = np.asarray(load, dtype=complex)
    rhs = load[system.interior]
    u = np.zeros(system.n_vertices, dtype=complex)
    u[system.interior] = system.interior_factor().solve(rhs)
    kii = system.Kc[system.interior][:, system.interior]
    scale = np.linalg.norm(rhs)
    res = float(np.linalg.norm(kii @ u[system.interior] - rhs) / (scale if scale > 0 else 1.0))
    if res > tol:
        raise SolverError(f"interior residual {res:.3e} exceeds tolerance {tol:.1e}",
                          residual=res)
    return FemSolution(u, res, {"method": "splu", "unknowns": int(system.interior.size)})


def apply_operator(system, u):
    """Matrix-vector product through the real interleaved encoding."""
    u = np.asarray(u, dtype=complex)
    if u.shape[0] != system.n_vertices:
        raise ValueError(
            f"vector has {u.shape[0]} entries, expected {system.n_vertices}"
        )
    x = np.empty(2 * u.shape[0])
    x[0::2] = u.real
    x[1::2] = u.imag
    y = system.A @ x
    return y[0::2] + 1j * y[1::2]


def interpolate(mesh, u, degree):
    """P1 interpolant of nodal values at the quadrature points, shape (T, Q)."""
    ref, _ = tet_rule(degree)
    phi = _phi_at(ref)
    return np.einsum("ti,qi->tq", u[mesh.tets], phi)


def l2_error(mesh, u, exact, degree=4):
    """L2 distance between nodal values and an exact solution callable."""
    ref, wts = tet_rule(degree)
    phi = _phi_at(ref)
    coords = mesh.tet_coords()
    pts = map_to_tet(coords, ref)
    uh = np.einsum("ti,qi->tq", u[mesh.tets], phi)
    ue = exact(pts.reshape(-1, 3)).reshape(uh.shape)
    vols = mesh.volumes()
    return float(np.sqrt(np.einsum("t,q,tq->", vols, wts, np.abs(uh - ue) ** 2)))


def element_gradients(mesh, u):
    """Piecewise-constant gradient of a P1 nodal field, shape (T, 3) complex."""
    grads = p1_gradients(mesh.tet_coords())
    return np.einsum("tid,ti->td", grads, u[mesh.tets])
