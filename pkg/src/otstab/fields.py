"""Coefficient fields on the domain.

Scalar fields are callables evaluated at batches of points, shape (m, dim) ->
(m,), with exact gradients where the closed form is available.  The shipped
families are the ones the config schema admits: constants, affine fields,
piecewise constants on axis-aligned boxes, and smooth boundary bumps used as
perturbations.  Sums and scalings cover the perturbed-coefficient case.
"""

import numpy as np

from .errors import FieldEvaluationError


class ScalarField:
    """Base scalar field.  Subclasses implement evaluate() and gradient()."""

    name = "field"

    def __call__(self, points):
        return self.evaluate(np.atleast_2d(np.asarray(points, dtype=float)))

    def evaluate(self, points):
        raise NotImplementedError

    def gradient(self, points):
        raise NotImplementedError

    def check_finite(self, points):
        """Raise FieldEvaluationError at the first non-finite value."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = self.evaluate(points)
        bad = ~np.isfinite(values)
        if bad.any():
            i = int(np.argmax(bad))
            raise FieldEvaluationError(self.name, points[i], values[i])
        return values

    def fd_gradient(self, points, h=1e-5):
        """Central finite-difference gradient, the W^{1,p} surrogate used in checks."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grad = np.empty_like(points)
        for d in range(points.shape[1]):
            shift = np.zeros(points.shape[1])
            shift[d] = h
            grad[:, d] = (self.evaluate(points + shift) - self.evaluate(points - shift)) / (2 * h)
        return grad


class ConstantField(ScalarField):
    def __init__(self, value, name="constant"):
        self.value = float(value)
        self.name = name

    def evaluate(self, points):
        return np.full(points.shape[0], self.value)

    def gradient(self, points):
        return np.zeros_like(points)


class AffineField(ScalarField):
    """c0 + c . x"""

    def __init__(self, c0, c, name="affine"):
        self.c0 = float(c0)
        self.c = np.asarray(c, dtype=float)
        self.name = name

    def evaluate(self, points):
        return self.c0 + points @ self.c

    def gradient(self, points):
        return np.broadcast_to(self.c, points.shape).copy()


class PiecewiseConstantField(ScalarField):
    """Constant values on axis-aligned boxes, first match wins, default elsewhere."""

    def __init__(self, default, boxes, name="piecewise"):
        # boxes: sequence of (lo, hi, value)
        self.default = float(default)
        self.boxes = [
            (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), float(val))
            for lo, hi, val in boxes
        ]
        self.name = name

    def evaluate(self, points):
        out = np.full(points.shape[0], self.default)
        unset = np.ones(points.shape[0], dtype=bool)
        for lo, hi, val in self.boxes:
            inside = unset & np.all((points >= lo) & (points <= hi), axis=1)
            out[inside] = val
            unset &= ~inside
        return out

    def gradient(self, points):
        # zero a.e.; the box interfaces carry no mass under quadrature sampling
        return np.zeros_like(points)


class BumpField(ScalarField):
    """Smooth compactly supported bump, amplitude 1 at the centre.

    chi(x) = exp(1 - 1/(1 - |x-c|^2/r^2)) inside the ball of radius r, 0 outside.
    """

    def __init__(self, center, radius, name="bump"):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        self.name = name

    def _t(self, points):
        d = points - self.center
        return np.einsum("ij,ij->i", d, d) / self.radius**2

    def evaluate(self, points):
        t = self._t(points)
        out = np.zeros(points.shape[0])
        inside = t < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside]))
        return out

    def gradient(self, points):
        t = self._t(points)
        out = np.zeros_like(points)
        inside = t < 1.0
        if inside.any():
            chi = np.exp(1.0 - 1.0 / (1.0 - t[inside]))
            dchi_dt = -chi / (1.0 - t[inside]) ** 2
            dt_dx = 2.0 * (points[inside] - self.center) / self.radius**2
            out[inside] = dchi_dt[:, None] * dt_dx
        return out


class SumField(ScalarField):
    """base + sum of coeff * field terms."""

    def __init__(self, base, terms=(), name=None):
        self.base = base
        self.terms = [(float(c), f) for c, f in terms]
        self.name = name or base.name

    def evaluate(self, points):
        out = self.base.evaluate(points)
        for c, f in self.terms:
            out = out + c * f.evaluate(points)
        return out

    def gradient(self, points):
        out = self.base.gradient(points)
        for c, f in self.terms:
            out = out + c * f.gradient(points)
        return out


class ConstantMatrixField:
    """Constant symmetric matrix field (the anisotropy B of the medium)."""

    def __init__(self, matrix, name="B"):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix field must be square")
        if not np.allclose(m, m.T, atol=1e-14):
            raise ValueError("matrix field must be symmetric")
        self.matrix = 0.5 * (m + m.T)
        self.name = name

    @property
    def dim(self):
        return self.matrix.shape[0]

    def evaluate(self, points):
        points = np.atleast_2d(points)
        return np.broadcast_to(self.matrix, (points.shape[0],) + self.matrix.shape)

    __call__ = evaluate


def field_from_config(spec, name="field"):
    """Build a scalar field from a config mapping.

    Supported forms:
      {type: constant, value: v}
      {type: affine, c0: v, c: [cx, cy, cz]}
      {type: piecewise, default: v, boxes: [{min: [...], max: [...], value: v}, ...]}
      {type: bump, center: [...], radius: r}
    A bare number is shorthand for a constant.
    """
    if isinstance(spec, (int, float)):
        return ConstantField(spec, name=name)
    kind = spec.get("type")
    if kind == "constant":
        return ConstantField(spec["value"], name=name)
    if kind == "affine":
        return AffineField(spec["c0"], spec["c"], name=name)
    if kind == "piecewise":
        boxes = [(b["min"], b["max"], b["value"]) for b in spec.get("boxes", [])]
        return PiecewiseConstantField(spec["default"], boxes, name=name)
    if kind == "bump":
        return BumpField(spec["center"], spec["radius"], name=name)
    raise ValueError(f"unknown field type {kind!r} for {name!r}")
