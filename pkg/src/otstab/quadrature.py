"""Gauss quadrature on reference simplices.

Tetrahedron rules are returned as cartesian points on the reference tet
{x, y, z >= 0, x + y + z <= 1} with weights normalised to sum to 1, so that

    integral over T  ~=  volume(T) * sum_q w_q f(x_q).

Degree 1 uses the centroid, degree 2 the classical 4-point rule, and higher
degrees a conical-product rule (Gauss-Jacobi in the collapsed coordinates),
which is exact for total degree <= 2m - 1 with m points per direction.
"""

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

_cache = {}


def tet_rule(degree):
    """Return (points, weights) exact for polynomials of the given total degree."""
    if degree in _cache:
        return _cache[degree]
    if degree <= 1:
        pts = np.array([[0.25, 0.25, 0.25]])
        wts = np.array([1.0])
    elif degree == 2:
        # barycentric permutations of (a, b, b, b); the all-b point carries a at vertex 0
        a = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        b = (5.0 - np.sqrt(5.0)) / 20.0
        pts = np.full((4, 3), b)
        pts[1, 0] = a
        pts[2, 1] = a
        pts[3, 2] = a
        wts = np.full(4, 0.25)
    else:
        m = (degree + 2) // 2  # 2m - 1 >= degree
        pts, wts = _conical_product(m)
    _cache[degree] = (pts, wts)
    return pts, wts


def _unit_interval(nodes, weights, scale):
    # map [-1, 1] Gauss nodes to [0, 1]; `scale` folds in the weight-function norm
    return (nodes + 1.0) / 2.0, weights * scale


def _conical_product(m):
    x1, w1 = _unit_interval(*roots_jacobi(m, 2.0, 0.0), scale=1.0 / 8.0)
    x2, w2 = _unit_interval(*roots_jacobi(m, 1.0, 0.0), scale=1.0 / 4.0)
    x3, w3 = _unit_interval(*roots_legendre(m), scale=1.0 / 2.0)
    pts = np.empty((m * m * m, 3))
    wts = np.empty(m * m * m)
    idx = 0
    for i in range(m):
        for j in range(m):
            for k in range(m):
                u, v, t = x1[i], x2[j], x3[k]
                pts[idx] = (u, v * (1.0 - u), t * (1.0 - u) * (1.0 - v))
                wts[idx] = w1[i] * w2[j] * w3[k]
                idx += 1
    # raw weights sum to the reference volume 1/6; normalise to 1
    return pts, wts * 6.0


def map_to_tet(vertices, ref_points):
    """Map reference points into physical tets.

    vertices: (..., 4, 3) tet vertex coordinates.
    ref_points: (q, 3) reference coordinates.
    Returns (..., q, 3).
    """
    v = np.asarray(vertices)
    origin = v[..., 0, :]
    edges = v[..., 1:, :] - origin[..., None, :]  # (..., 3, 3)
    return origin[..., None, :] + np.einsum("qi,...ij->...qj", ref_points, edges)


def tet_volumes(vertices):
    """Signed volumes of tets given as (..., 4, 3)."""
    v = np.asarray(vertices)
    e = v[..., 1:, :] - v[..., :1, :]
    return np.linalg.det(e) / 6.0
