"""Discrete Dirichlet-to-Neumann maps and trace-space norms.

The boundary operator maps Dirichlet data to the conormal flux through the
weak bilinear form; discretely it is the Schur complement of the assembled
matrix on the boundary vertices.  Discrete H^{1/2} and H^{-1/2} norms are
realised by Gram matrices built from the boundary mass matrix M and the
surface (Laplace-Beltrami) stiffness S:

    G_half       = M^{1/2} (I + M^{-1/2} S M^{-1/2})^{1/2} M^{1/2}
    G_minus_half = M G_half^{-1} M

which are spectrally equivalent to the continuous norms on quasi-uniform
meshes.  Operator outputs of the map are load vectors (functionals); their
dual norm is psi -> sqrt(psi^H G_half^{-1} psi), equal to the G_minus_half
norm of the L^2-representative M^{-1} psi.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quadrature import map_to_tet, tet_rule
from .solver import MASS_QUADRATURE_DEGREE, _phi_at, element_gradients, solve_dirichlet


# ---------------------------------------------------------------------------
# boundary element matrices
# ---------------------------------------------------------------------------

def boundary_matrices(mesh):
    """(M, S): P1 mass and Laplace-Beltrami stiffness on the boundary triangles.

    Rows/columns follow mesh.boundary_vertices order.
    """
    b_verts = mesh.boundary_vertices
    local_of = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local_of[b_verts] = np.arange(b_verts.size)
    tris = local_of[mesh.boundary_faces]
    coords = mesh.vertices[mesh.boundary_faces]

    e_a = coords[:, 2] - coords[:, 1]
    e_b = coords[:, 0] - coords[:, 2]
    e_c = coords[:, 1] - coords[:, 0]
    areas = 0.5 * np.linalg.norm(np.cross(e_c, -e_b), axis=1)

    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_local = areas[:, None, None] * mass_ref

    edges = np.stack([e_a, e_b, e_c], axis=1)  # opposite-edge vectors, cyclically oriented
    s_local = np.einsum("fid,fjd->fij", edges, edges) / (4.0 * areas)[:, None, None]

    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    nb = b_verts.size
    m_mat = sp.coo_matrix((m_local.ravel(), (rows, cols)), shape=(nb, nb)).toarray()
    s_mat = sp.coo_matrix((s_local.ravel(), (rows, cols)), shape=(nb, nb)).toarray()
    return 0.5 * (m_mat + m_mat.T), 0.5 * (s_mat + s_mat.T)


def _sym_sqrt(mat):
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass
class TraceSpace:
    """Boundary dofs with the Gram matrices of the discrete trace norms."""

    boundary_dofs: np.ndarray
    M: np.ndarray
    S: np.ndarray
    G_half: np.ndarray
    G_minus_half: np.ndarray
    _g_half_inv_sqrt: np.ndarray = field(repr=False, default=None)

    def norm_half(self, f):
        f = np.asarray(f)
        return float(np.sqrt(np.real(np.conj(f) @ (self.G_half @ f))))

    def norm_dual(self, psi):
        """H^{-1/2} norm of a boundary load vector (functional representation)."""
        psi = np.asarray(psi)
        y = self._g_half_inv_sqrt @ psi
        return float(np.linalg.norm(y))


def build_trace_space(mesh):
    """Assemble the trace-space Gram matrices by dense symmetric eigendecomposition."""
    m_mat, s_mat = boundary_matrices(mesh)
    m_sqrt = _sym_sqrt(m_mat)
    m_vals, m_vecs = np.linalg.eigh(m_mat)
    m_inv_sqrt = (m_vecs / np.sqrt(m_vals)) @ m_vecs.T
    x = m_inv_sqrt @ s_mat @ m_inv_sqrt
    x = 0.5 * (x + x.T)
    core = _sym_sqrt(np.eye(x.shape[0]) + x)
    g_half = m_sqrt @ core @ m_sqrt
    g_half = 0.5 * (g_half + g_half.T)
    g_minus_half = m_mat @ np.linalg.solve(g_half, m_mat)
    g_minus_half = 0.5 * (g_minus_half + g_minus_half.T)
    g_vals, g_vecs = np.linalg.eigh(g_half)
    g_half_inv_sqrt = (g_vecs / np.sqrt(g_vals)) @ g_vecs.T
    return TraceSpace(
        boundary_dofs=np.asarray(mesh.boundary_vertices),
        M=m_mat,
        S=s_mat,
        G_half=g_half,
        G_minus_half=g_minus_half,
        _g_half_inv_sqrt=g_half_inv_sqrt,
    )


# ---------------------------------------------------------------------------
# the discrete map
# ---------------------------------------------------------------------------

@dataclass
class DnMatrix:
    """Dense boundary operator (Dirichlet data -> conormal load vector)."""

    Lambda: np.ndarray
    meta: dict


def assemble_dn_matrix(system, trace, meta=None, method="schur"):
    """Assemble the dense D-N matrix on the boundary dofs.

    "schur" eliminates the interior block with one factorization; "columns"
    solves one Dirichlet problem per boundary basis vector and evaluates the
    bilinear form row-wise.  Both produce the Schur complement
    A_bb - A_bi A_ii^{-1} A_ib up to solver tolerance.
    """
    if not np.array_equal(trace.boundary_dofs, system.boundary):
        raise ValueError("trace space and system disagree on boundary dofs")
    kc = system.Kc
    bnd, itr = system.boundary, system.interior
    k_bb = kc[bnd][:, bnd].toarray()
    if method == "schur":
        k_ib = kc[itr][:, bnd].toarray()
        x = system.interior_factor().solve(k_ib)
        lam = k_bb - kc[bnd][:, itr] @ x
    elif method == "columns":
        nb = bnd.size
        lam = np.empty((nb, nb), dtype=complex)
        k_rows = kc[bnd]
        for j in range(nb):
            g = np.zeros(nb, dtype=complex)
            g[j] = 1.0
            sol = solve_dirichlet(system, g)
            lam[:, j] = k_rows @ sol.u
    else:
        raise ValueError(f"unknown method {method!r}")
    info = {"mesh": system.mesh.fingerprint(), "boundary_dofs": int(bnd.size)}
    if meta:
        info.update(meta)
    return DnMatrix(np.asarray(lam), info)


def dn_operator_norm(delta, trace):
    """Operator norm from discrete H^{1/2} into H^{-1/2}.

    Largest generalized singular value of the matrix with the G_half Gram on
    inputs and the dual (G_minus_half after the L^2 Riesz identification)
    Gram on output load vectors; computed as the spectral norm of
    G_half^{-1/2} Delta G_half^{-1/2}, deterministic dense linear algebra.
    """
    mat = delta.Lambda if isinstance(delta, DnMatrix) else np.asarray(delta)
    core = trace._g_half_inv_sqrt @ mat @ trace._g_half_inv_sqrt
    return float(np.linalg.svd(core, compute_uv=False)[0])


def alessandrini_residual(dn1, dn2, sys1, sys2, f, g):
    """Defect of the exact bilinear identity for the difference of two maps.

    Solves problem 1 with data f and problem 2 with data g, evaluates
    g . (L1 - L2) f against the interior integrals of the coefficient
    differences (same quadrature as the assembly), and returns the absolute
    mismatch; at matching quadrature this is solver-tolerance small.
    """
    if sys1.mesh is not sys2.mesh and sys1.mesh.fingerprint() != sys2.mesh.fingerprint():
        raise ValueError("the two systems must share one mesh")
    mesh = sys1.mesh
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    lhs = g @ ((dn1.Lambda - dn2.Lambda) @ f)

    u = solve_dirichlet(sys1, f).u
    v = solve_dirichlet(sys2, g).u
    cent = mesh.centroids()
    dk = (sys1.tensor.K_R(cent) + 1j * sys1.tensor.K_I(cent)) - (
        sys2.tensor.K_R(cent) + 1j * sys2.tensor.K_I(cent)
    )
    gu = element_gradients(mesh, u)
    gv = element_gradients(mesh, v)
    vols = mesh.volumes()
    grad_term = np.einsum("t,tij,ti,tj->", vols, dk, gu, gv)

    ref, wts = tet_rule(MASS_QUADRATURE_DEGREE)
    phi = _phi_at(ref)
    qpts = map_to_tet(mesh.tet_coords(), ref).reshape(-1, 3)
    dq = (
        (sys1.tensor.q_R(qpts) + 1j * sys1.tensor.q_I(qpts))
        - (sys2.tensor.q_R(qpts) + 1j * sys2.tensor.q_I(qpts))
    ).reshape(len(vols), -1)
    uq = np.einsum("ti,qi->tq", u[mesh.tets], phi)
    vq = np.einsum("ti,qi->tq", v[mesh.tets], phi)
    mass_term = np.einsum("t,tq,q,tq,tq->", vols, dq, wts, uq, vq)
    return float(np.abs(lhs - grad_term - mass_term))


def export_dn_matrix(dn, csv_path, json_path):
    """Write the matrix as rows of re,im cell pairs plus a JSON metadata sidecar."""
    lam = dn.Lambda
    with open(csv_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        header = []
        for j in range(lam.shape[1]):
            header += [f"re{j}", f"im{j}"]
        writer.writerow(header)
        for row in lam:
            cells = []
            for val in row:
                cells += [repr(float(val.real)), repr(float(val.imag))]
            writer.writerow(cells)
    with open(json_path, "w", encoding="ascii") as fh:
        json.dump(dn.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
