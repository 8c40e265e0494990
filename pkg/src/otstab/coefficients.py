"""Optical coefficients and the complex diffusion tensor.

The medium is described by the absorption mu_a, the scattering mu_s and a
symmetric anisotropy matrix B with I - B positive definite.  For a wave
number k > 0 the flux tensor is the complex symmetric matrix

    K(x) = (1/n) * ( (mu_a(x) - i k) I + (I - B(x)) mu_s(x) )^{-1}

and the zeroth-order coefficient is q = mu_a - i k.  This module carries the
algebraic splittings of K and K^{-1} into real and imaginary parts, the
a-priori assumption checks, the admissible wave-number ranges and the
directional condition on the phase function F that those ranges are designed
to control, plus the rank-4 real system tensor used by the elliptic solver.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchCutError
from .fields import ConstantMatrixField, ScalarField


# ---------------------------------------------------------------------------
# a-priori data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AprioriBounds:
    """The constant tuple every stability constant is allowed to depend on.

    lam bounds mu_a and mu_s from both sides (lam^-1 <= mu <= lam), E bounds
    their W^{1,p} norms, cal_e is the two-sided ellipticity bound of I - B,
    p > n the Sobolev exponent, k the wave number, r0/l_lip the Lipschitz
    boundary constants and diam the domain diameter.
    """

    lam: float
    E: float
    cal_e: float
    p: float
    n: int = 3
    k: float = 1.0
    r0: float = 0.5
    l_lip: float = 1.0
    diam: float = np.sqrt(3.0)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.E <= 0 or self.cal_e <= 0:
            raise ValueError("E and cal_e must be positive")
        if self.n < 3:
            raise ValueError("space dimension must be >= 3")
        if self.p <= self.n:
            raise ValueError("Sobolev exponent p must exceed the dimension n")
        if self.k <= 0:
            raise ValueError("wave number k must be positive")
        if min(self.r0, self.l_lip, self.diam) <= 0:
            raise ValueError("boundary constants must be positive")

    @property
    def beta(self):
        """Hoelder exponent 1 - n/p, in (0, 1)."""
        return 1.0 - self.n / self.p

    def alpha(self, fraction=0.5):
        """Decay-rate parameter strictly inside (0, beta)."""
        if not 0.0 < fraction < 1.0:
            raise ValueError("alpha fraction must lie in (0, 1)")
        return fraction * self.beta


@dataclass(frozen=True)
class OpticalCoefficients:
    """Scalar absorption/scattering fields plus the constant anisotropy matrix."""

    mu_a: ScalarField
    mu_s: ScalarField
    B: ConstantMatrixField

    @property
    def dim(self):
        return self.B.dim


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    observed_min: float
    observed_max: float
    lower: float
    upper: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    passed: bool

    def lines(self):
        out = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            out.append(
                f"[{status}] {c.name}: observed [{c.observed_min:.6g}, {c.observed_max:.6g}]"
                f" within [{c.lower:.6g}, {c.upper:.6g}]"
            )
        return out


def _range_check(name, values, lower, upper, tol=1e-12):
    lo, hi = float(np.min(values)), float(np.max(values))
    ok = (lo >= lower - tol) and (hi <= upper + tol)
    return CheckResult(name, lo, hi, lower, upper, ok)


def validate_assumptions(coeffs, bounds, points, fd_step=1e-5):
    """Check the a-priori assumptions at the given sample points.

    Evaluates mu_a and mu_s bounds, the eigenvalue bounds of I - B, and a
    finite-difference surrogate of the W^{1,p} bound E (sampled sup of
    (|mu|^p + |grad mu|^p)^{1/p}; the true integral norm is not computable
    from point samples).  Non-finite field values raise FieldEvaluationError
    naming the offending point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lam, cal_e = bounds.lam, bounds.cal_e
    checks = []
    for fld, label in ((coeffs.mu_a, "mu_a"), (coeffs.mu_s, "mu_s")):
        vals = fld.check_finite(points)
        checks.append(_range_check(f"{label} in [1/lam, lam]", vals, 1.0 / lam, lam))
    eye = np.eye(coeffs.dim)
    eigs = np.linalg.eigvalsh(eye - coeffs.B.evaluate(points))
    checks.append(
        _range_check("eig(I - B) in [1/cal_e, cal_e]", eigs, 1.0 / cal_e, cal_e)
    )
    for fld, label in ((coeffs.mu_a, "mu_a"), (coeffs.mu_s, "mu_s")):
        vals = np.abs(fld.evaluate(points))
        grads = np.linalg.norm(fld.fd_gradient(points, h=fd_step), axis=1)
        surrogate = (vals**bounds.p + grads**bounds.p) ** (1.0 / bounds.p)
        checks.append(
            _range_check(f"{label} W^(1,p) sampled surrogate <= E", surrogate, 0.0, bounds.E)
        )
    checks = tuple(checks)
    return ValidationReport(checks, all(c.passed for c in checks))


# ---------------------------------------------------------------------------
# diffusion tensor
# ---------------------------------------------------------------------------

class DiffusionTensor:
    """Pointwise complex symmetric diffusion tensor with its real/imaginary splits.

    All evaluators accept points of shape (m, n) and return stacked arrays.
    With W(x) = mu_a(x) I + (I - B(x)) mu_s(x):

        K      = (1/n) (W - i k I)^{-1}
        K^{-1} = n (W - i k I),  split as  n W  and  -n k I
        K_R    = (1/n) (W^2 + k^2 I)^{-1} W
        K_I    = (k/n) (W^2 + k^2 I)^{-1}
        q      = mu_a - i k
    """

    def __init__(self, coeffs, k, dim=None):
        if k <= 0:
            raise ValueError("wave number k must be positive")
        self.coeffs = coeffs
        self.k = float(k)
        self.dim = int(dim if dim is not None else coeffs.dim)
        if self.dim != coeffs.dim:
            raise ValueError("dimension does not match the anisotropy matrix")

    # -- attenuation matrix W and its spatial derivatives ------------------

    def attenuation(self, points):
        points = np.atleast_2d(points)
        eye = np.eye(self.dim)
        mu_a = self.coeffs.mu_a.evaluate(points)
        mu_s = self.coeffs.mu_s.evaluate(points)
        i_minus_b = eye - self.coeffs.B.evaluate(points)
        return mu_a[:, None, None] * eye + i_minus_b * mu_s[:, None, None]

    def grad_attenuation(self, points):
        """Exact gradient of W: shape (m, n, dim, dim), first index after m is d/dx_h."""
        points = np.atleast_2d(points)
        eye = np.eye(self.dim)
        da = self.coeffs.mu_a.gradient(points)
        ds = self.coeffs.mu_s.gradient(points)
        i_minus_b = eye - self.coeffs.B.evaluate(points)
        return (
            da[:, :, None, None] * eye
            + ds[:, :, None, None] * i_minus_b[:, None, :, :]
        )

    # -- complex tensor and splits ------------------------------------------

    def Kinv(self, points):
        w = self.attenuation(points)
        return self.dim * (w - 1j * self.k * np.eye(self.dim))

    def Kinv_R(self, points):
        return self.dim * self.attenuation(points)

    def Kinv_I(self, points):
        points = np.atleast_2d(points)
        out = np.broadcast_to(
            -self.dim * self.k * np.eye(self.dim),
            (points.shape[0], self.dim, self.dim),
        )
        return out.copy()

    def K(self, points):
        try:
            return np.linalg.inv(self.Kinv(points))
        except np.linalg.LinAlgError as exc:  # impossible under the assumptions
            raise np.linalg.LinAlgError(
                "attenuation matrix not invertible; coefficient preconditions violated"
            ) from exc

    def K_R(self, points):
        w = self.attenuation(points)
        core = np.linalg.inv(
            np.einsum("mij,mjk->mik", w, w) + self.k**2 * np.eye(self.dim)
        )
        return np.einsum("mij,mjk->mik", core, w) / self.dim

    def K_I(self, points):
        w = self.attenuation(points)
        core = np.linalg.inv(
            np.einsum("mij,mjk->mik", w, w) + self.k**2 * np.eye(self.dim)
        )
        return core * (self.k / self.dim)

    def grad_K(self, points):
        """d/dx_h of K: shape (m, n, dim, dim), via dA^{-1} = -A^{-1} dA A^{-1}."""
        kinv = self.Kinv(points)
        k_mat = np.linalg.inv(kinv)
        dw = self.grad_attenuation(points)  # dKinv/dx_h = dim * dW/dx_h
        return -self.dim * np.einsum("mij,mhjk,mkl->mhil", k_mat, dw, k_mat)

    def div_K(self, points):
        """(div K)_j = sum_h dK_{hj}/dx_h, shape (m, dim)."""
        return np.einsum("mhhj->mj", self.grad_K(points))

    # -- zeroth-order coefficient -------------------------------------------

    def q(self, points):
        return self.coeffs.mu_a.evaluate(np.atleast_2d(points)) - 1j * self.k

    def q_R(self, points):
        return self.coeffs.mu_a.evaluate(np.atleast_2d(points))

    def q_I(self, points):
        points = np.atleast_2d(points)
        return np.full(points.shape[0], -self.k)

    def frozen(self, point):
        """(K0, K0inv, q0) at a single point, for leading-term constructions."""
        pt = np.atleast_2d(point)
        return self.K(pt)[0], self.Kinv(pt)[0], complex(self.q(pt)[0])


def assemble_diffusion_tensor(coeffs, k, dim=None):
    """Build the diffusion tensor for the given coefficients and wave number."""
    return DiffusionTensor(coeffs, k, dim)


def kr_ki_lower_bounds(bounds, k=None):
    """Closed-form lower bounds on the smallest eigenvalues of K_R and K_I.

    Valid whenever k^2 <= (1 + cal_e)(1 + 1/cal_e), which covers the whole
    small-k admissible range; for large k with lam > 1 the K_R bound can
    overshoot the true minimum and should not be asserted.
    """
    k = bounds.k if k is None else k
    lam, cal_e, n = bounds.lam, bounds.cal_e, bounds.n
    top = lam * (1.0 + cal_e)
    denom = top**2 + k**2
    return top / (n * denom), k / (n * denom)


# ---------------------------------------------------------------------------
# admissible wave-number ranges
# ---------------------------------------------------------------------------

def admissible_k_ranges(bounds):
    """Return (k0, k0_tilde): k is admissible iff 0 < k <= k0 or k >= k0_tilde.

    With t = tan(pi/(2n)) and M = lam (1 + cal_e), m = (1 + 1/cal_e)/lam:

        k0       = (sqrt(M^2 + m^2 t^2) - M) / t
        k0_tilde = (1 + sqrt(1 + t^2)) / t * M
    """
    lam, cal_e, n = bounds.lam, bounds.cal_e, bounds.n
    t = np.tan(np.pi / (2.0 * n))
    top = lam * (1.0 + cal_e)
    bot = (1.0 + 1.0 / cal_e) / lam
    k0 = (np.sqrt(top**2 + bot**2 * t**2) - top) / t
    k0_tilde = (1.0 + np.sqrt(1.0 + t**2)) / t * top
    return float(k0), float(k0_tilde)


def k_ranges_dim3(lam, cal_e):
    """Simplified closed forms of the two thresholds in dimension 3."""
    top = lam * (1.0 + cal_e)
    bot = (1.0 + 1.0 / cal_e) / lam
    k0 = np.sqrt(3.0 * top**2 + bot**2) - np.sqrt(3.0) * top
    k0_tilde = (2.0 + np.sqrt(3.0)) * top
    return float(k0), float(k0_tilde)


def k_in_admissible_range(bounds, k):
    """True iff k lies in (0, k0] or [k0_tilde, inf)."""
    k0, k0_tilde = admissible_k_ranges(bounds)
    return (0.0 < k <= k0) or (k >= k0_tilde)


# ---------------------------------------------------------------------------
# the phase function F and its sector condition
# ---------------------------------------------------------------------------

def principal_power(z, exponent):
    """z**exponent on the principal branch, arg z in (-pi, pi].

    Inputs exactly on the branch cut (negative real axis) are rejected.
    """
    z = np.asarray(z, dtype=complex)
    on_cut = (z.imag == 0.0) & (z.real < 0.0)
    if np.any(on_cut):
        raise BranchCutError(
            "complex power base lies on the negative real axis (branch cut)"
        )
    return np.exp(exponent * (np.log(np.abs(z)) + 1j * np.angle(z)))


@dataclass(frozen=True)
class FConditionReport:
    """Per-direction values of F with the sector flags of the phase condition."""

    directions: np.ndarray
    F: np.ndarray
    re_positive: np.ndarray
    im_dominated: np.ndarray
    passed: bool = field(init=False)
    pass_rate: float = field(init=False)

    def __post_init__(self):
        ok = self.re_positive & self.im_dominated
        object.__setattr__(self, "passed", bool(np.all(ok)))
        object.__setattr__(self, "pass_rate", float(np.mean(ok)) if ok.size else 1.0)

    @property
    def arg_range(self):
        args = np.angle(self.F)
        return float(args.min()), float(args.max())


def check_F_condition(k1_inv, k2_inv, directions, n):
    """Evaluate F = [conj(K1^-1) d.d * conj(K2^-1) d.d]^{n/2} over directions.

    The report records, per direction, whether Re F > 0 and |Im F| <= Re F.
    Bases on the branch cut raise BranchCutError.
    """
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    k1_inv = np.asarray(k1_inv, dtype=complex)
    k2_inv = np.asarray(k2_inv, dtype=complex)
    a = np.einsum("mi,ij,mj->m", d, np.conj(k1_inv), d)
    b = np.einsum("mi,ij,mj->m", d, np.conj(k2_inv), d)
    f_vals = principal_power(a * b, n / 2.0)
    re_pos = f_vals.real > 0.0
    im_dom = np.abs(f_vals.imag) <= f_vals.real + 1e-15 * np.abs(f_vals)
    return FConditionReport(d, f_vals, re_pos, im_dom)


def f_condition_monte_carlo(bounds, k_low, k_high, n_samples, rng):
    """Sample admissible isotropic coefficient pairs and directions; return a report.

    Draws mu_a1, mu_a2, mu_s uniformly in [1/lam, lam], k uniformly in
    [k_low, k_high] (a single point if k_low == k_high), unit directions
    uniformly on the sphere, with B = 0, and evaluates the F condition for
    every sample.
    """
    lam, n = bounds.lam, bounds.n
    mu_a1 = rng.uniform(1.0 / lam, lam, n_samples)
    mu_a2 = rng.uniform(1.0 / lam, lam, n_samples)
    mu_s = rng.uniform(1.0 / lam, lam, n_samples)
    ks = rng.uniform(k_low, k_high, n_samples)
    d = rng.normal(size=(n_samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # isotropic case: conj(Kinv) d.d = n (mu_a + mu_s + i k) |d|^2
    a = n * (mu_a1 + mu_s + 1j * ks)
    b = n * (mu_a2 + mu_s + 1j * ks)
    f_vals = principal_power(a * b, n / 2.0)
    re_pos = f_vals.real > 0.0
    im_dom = np.abs(f_vals.imag) <= f_vals.real + 1e-15 * np.abs(f_vals)
    return FConditionReport(d, f_vals, re_pos, im_dom)


# ---------------------------------------------------------------------------
# the real 2x2 system tensor
# ---------------------------------------------------------------------------

class SystemTensor:
    """Rank-4 tensor C and 2x2 matrix q of the real first-order system.

    C^{hk}_{lj} = K_R^{hk} d_{lj} - K_I^{hk} (d_{l1} d_{j2} - d_{l2} d_{j1}),
    q_{lj}      = q_R d_{lj}      - q_I      (d_{l1} d_{j2} - d_{l2} d_{j1}).

    Index layout of C(points): (m, h, k, l, j) with h, k spatial and l, j in
    {0, 1} for the (real, imaginary) components.
    """

    _skew = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def __init__(self, tensor):
        self.tensor = tensor
        self.dim = tensor.dim

    def C(self, points):
        kr = self.tensor.K_R(points)
        ki = self.tensor.K_I(points)
        eye2 = np.eye(2)
        return (
            kr[:, :, :, None, None] * eye2
            - ki[:, :, :, None, None] * self._skew
        )

    def q_mat(self, points):
        qr = self.tensor.q_R(points)
        qi = self.tensor.q_I(points)
        eye2 = np.eye(2)
        return qr[:, None, None] * eye2 - qi[:, None, None] * self._skew

    def quadratic_form(self, points, xi):
        """C^{hk}_{lj} xi^l_h xi^j_k for xi of shape (..., 2, dim)."""
        c = self.C(points)
        return np.einsum("mhklj,...lh,...jk->m...", c, xi, xi)

    def ellipticity_estimate(self, points, n_dirs, rng):
        """Sampled (min, max) of the quadratic form over unit xi in R^{2n}."""
        xi = rng.normal(size=(n_dirs, 2, self.dim))
        xi /= np.linalg.norm(xi.reshape(n_dirs, -1), axis=1)[:, None, None]
        vals = self.quadratic_form(points, xi)
        return float(vals.min()), float(vals.max())


def build_system_tensor(tensor):
    """Wrap a diffusion tensor as the real 2x2 system tensor."""
    return SystemTensor(tensor)
