"""Singular solutions with a Green-type pole outside the domain.

The leading term is the principal-branch power

    H(x) = (K0inv (x - z) . (x - z))^{(2 - n)/2},

an exact solution of the frozen-coefficient equation -div(K(z) grad H) = 0
away from the pole z.  For variable coefficients the correction w solves
L w = -L H with zero boundary values; since the experiments only place z
outside the closed domain, H is smooth on the domain and the correction is
a standard Dirichlet solve whose load is the pointwise strong-form defect
of H (so a frozen medium with q = 0 yields w = 0 identically).
"""

from dataclasses import dataclass

import numpy as np

from .coefficients import principal_power
from .quadrature import map_to_tet, tet_rule
from .solver import FemSolution, _phi_at, assemble, element_gradients, solve_interior

LOAD_QUADRATURE_DEGREE = 3


@dataclass(frozen=True)
class LeadingTerm:
    """Frozen inverse tensor, pole location and dimension of the leading term."""

    K0inv: np.ndarray
    z: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "K0inv", np.asarray(self.K0inv, dtype=complex))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.K0inv.shape != (self.n, self.n):
            raise ValueError("K0inv must be n x n")
        if not np.allclose(self.K0inv, self.K0inv.T, atol=1e-12):
            raise ValueError("K0inv must be symmetric")
        if np.linalg.eigvalsh(0.5 * (self.K0inv.real + self.K0inv.real.T)).min() <= 0:
            raise ValueError("Re(K0inv) must be positive definite")


def _base(lead, x):
    """Quadratic form K0inv (x - z).(x - z) and the offset vectors."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = x - lead.z
    if np.any(np.all(r == 0.0, axis=1)):
        raise ValueError("evaluation point coincides with the pole z")
    qr = r @ lead.K0inv  # (m, n), complex
    return np.einsum("mi,mi->m", qr, r), r, qr


def eval_leading_term(lead, x):
    """H(x), principal branch; scalar for a single point."""
    g, _, _ = _base(lead, x)
    vals = principal_power(g, (2.0 - lead.n) / 2.0)
    return vals if vals.size > 1 else complex(vals[0])


def eval_leading_gradient(lead, x):
    """Exact gradient (2 - n) g^{-n/2} K0inv (x - z), shape (m, n)."""
    g, _, qr = _base(lead, x)
    scale = (2.0 - lead.n) * principal_power(g, -lead.n / 2.0)
    out = scale[:, None] * qr
    return out if out.shape[0] > 1 else out[0]


def eval_leading_hessian(lead, x):
    """Exact Hessian of H, shape (m, n, n)."""
    g, _, qr = _base(lead, x)
    p_n = principal_power(g, -lead.n / 2.0)
    p_n2 = p_n / g  # g^{-(n+2)/2}, same branch (integer exponent shift)
    outer = np.einsum("mi,mj->mij", qr, qr)
    hess = (2.0 - lead.n) * (
        -lead.n * p_n2[:, None, None] * outer + p_n[:, None, None] * lead.K0inv
    )
    return hess if hess.shape[0] > 1 else hess[0]


def strong_form_defect(tensor, lead, points):
    """-L H evaluated pointwise: K:D2H + div(K).grad(H) - q H."""
    points = np.atleast_2d(points)
    k_mat = tensor.K_R(points) + 1j * tensor.K_I(points)
    divk = tensor.div_K(points)
    q = tensor.q_R(points) + 1j * tensor.q_I(points)
    h = np.atleast_1d(eval_leading_term(lead, points))
    gh = np.atleast_2d(eval_leading_gradient(lead, points))
    hh = eval_leading_hessian(lead, points)
    if hh.ndim == 2:
        hh = hh[None]
    return (
        np.einsum("mij,mij->m", k_mat, hh)
        + np.einsum("mi,mi->m", divk, gh)
        - q * h
    )


def solve_correction(mesh, tensor, lead, system=None):
    """Correction w with L(H + w) = 0 in the domain and w = 0 on the boundary.

    Requires the pole strictly outside the closed domain.  Returns the nodal
    correction; the load vector is exposed on solve_stats["load"] so callers
    can re-check the interior residual through the operator application.
    """
    if mesh.contains(lead.z):
        raise ValueError("the pole z must lie strictly outside the closed domain")
    if system is None:
        system = assemble(mesh, tensor)
    ref, wts = tet_rule(LOAD_QUADRATURE_DEGREE)
    phi = _phi_at(ref)
    coords = mesh.tet_coords()
    qpts = map_to_tet(coords, ref).reshape(-1, 3)
    f_vals = strong_form_defect(tensor, lead, qpts).reshape(len(coords), -1)
    vols = mesh.volumes()
    local = np.einsum("t,tq,q,qi->ti", vols, f_vals, wts, phi)
    load = np.zeros(mesh.n_vertices, dtype=complex)
    np.add.at(load, mesh.tets.ravel(), local.ravel())
    sol = solve_interior(system, load)
    sol.solve_stats["load"] = load
    return FemSolution(sol.u, sol.residual, sol.solve_stats)


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    """Log-log decay fit of shell suprema against the shell radius."""

    radii: np.ndarray
    sup_values: np.ndarray
    grad_values: np.ndarray
    fitted_exponent: float
    fitted_grad_exponent: float
    alpha: float
    constants: np.ndarray

    def target_exponent(self, n):
        return 2.0 - n + self.alpha


def decay_exponent_fit(radii, sup_values, grad_values=None, alpha=0.25, n=3):
    """Least-squares slope of log(sup) vs log(radius), plus per-shell constants.

    Radii must be strictly decreasing with at least 4 shells and all values
    positive.  constants[i] = sup_values[i] * radii[i]^{-(2 - n + alpha)}.
    """
    radii = np.asarray(radii, dtype=float)
    sup_values = np.asarray(sup_values, dtype=float)
    if radii.size < 4:
        raise ValueError("need at least 4 shells for a decay fit")
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    if np.any(sup_values <= 0):
        raise ValueError("shell suprema must be positive")
    slope = np.polyfit(np.log(radii), np.log(sup_values), 1)[0]
    grad_slope = np.nan
    if grad_values is not None:
        grad_values = np.asarray(grad_values, dtype=float)
        if np.any(grad_values <= 0):
            raise ValueError("shell gradient suprema must be positive")
        grad_slope = float(np.polyfit(np.log(radii), np.log(grad_values), 1)[0])
    else:
        grad_values = np.full_like(sup_values, np.nan)
    constants = sup_values * radii ** (-(2.0 - n + alpha))
    return DecayFit(
        radii=radii,
        sup_values=sup_values,
        grad_values=grad_values,
        fitted_exponent=float(slope),
        fitted_grad_exponent=grad_slope,
        alpha=float(alpha),
        constants=constants,
    )


def shell_suprema_analytic(func, z, radii, n_dirs=256, rng=None):
    """max |func| over direction samples on spheres |x - z| = r."""
    rng = np.random.default_rng(0) if rng is None else rng
    z = np.asarray(z, dtype=float)
    dirs = rng.normal(size=(n_dirs, z.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    out = []
    for r in radii:
        vals = func(z + r * dirs)
        vals = np.asarray(vals)
        if vals.ndim > 1:
            vals = np.linalg.norm(vals, axis=-1)
        out.append(float(np.max(np.abs(vals))))
    return np.array(out)


def shell_suprema_fem(mesh, u, z, radii, degree=2):
    """Shell suprema of |u| and |x - z| |grad u| for a nodal field.

    Shell i is {radii[i] <= |x - z| < 2 radii[i]}; point values are sampled
    at element quadrature points, gradients per element at centroids.
    """
    z = np.asarray(z, dtype=float)
    ref, _ = tet_rule(degree)
    phi = _phi_at(ref)
    coords = mesh.tet_coords()
    pts = map_to_tet(coords, ref).reshape(-1, 3)
    uq = np.einsum("ti,qi->tq", u[mesh.tets], phi).ravel()
    dist = np.linalg.norm(pts - z, axis=1)
    grads = element_gradients(mesh, u)
    cent = mesh.centroids()
    cdist = np.linalg.norm(cent - z, axis=1)
    gnorm = np.linalg.norm(grads, axis=1)
    sup_u, sup_g = [], []
    for r in radii:
        in_shell = (dist >= r) & (dist < 2.0 * r)
        c_shell = (cdist >= r) & (cdist < 2.0 * r)
        sup_u.append(float(np.max(np.abs(uq[in_shell]))) if in_shell.any() else np.nan)
        sup_g.append(
            float(np.max(cdist[c_shell] * gnorm[c_shell])) if c_shell.any() else np.nan
        )
    return np.array(sup_u), np.array(sup_g)
