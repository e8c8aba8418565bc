"""Curves, developable surfaces, Frenet frames and affine maps.

Points and frequencies are plain ``numpy`` arrays whose last axis has
length 3.  Every evaluator broadcasts over leading axes, so the same
function serves a single point and a batch of a million samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DegenerateError, DomainError

Vec3 = np.ndarray

CURVATURE_FLOOR = 1e-12


def _stack(*components):
    comps = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in components])
    return np.stack(comps, axis=-1)


def eval_moment_curve(t):
    """Return ``(t, t**2, t**3)``."""
    t = np.asarray(t, dtype=float)
    return _stack(t, t * t, t * t * t)


def eval_moment_surface(t, s):
    """Point ``phi(t) + s phi'(t)`` of the tangent surface of the moment curve."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return _stack(t + s, t * t + 2 * t * s, t * t * t + 3 * t * t * s)


def psi(t, s, v):
    """Moment-surface point lifted vertically by ``v``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    return _stack(t + s, t * t + 2 * t * s, t * t * t + 3 * t * t * s + v)


def invert_psi(xi, *, strict=True):
    """Recover ``(t, s, v)`` from a point over the moment surface.

    Takes the branch ``s >= 0``.

    Parameters
    ----------
    xi : array_like, shape (..., 3)
    strict : bool
        When true, raise :class:`DomainError` if any point has
        ``xi1**2 - xi2 < 0``.  When false such points come back as NaN.

    Returns
    -------
    t, s, v : ndarray
    """
    xi = np.asarray(xi, dtype=float)
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    disc = x1 * x1 - x2
    bad = disc < 0
    if strict and np.any(bad):
        raise DomainError("xi1**2 - xi2 < 0: point is not over the surface's shadow")
    with np.errstate(invalid="ignore"):
        s = np.sqrt(np.where(bad, np.nan, disc))
    t = x1 - s
    v = x3 - (t * t * t + 3 * t * t * s)
    return t, s, v


def jacobian_psi(t, s, v=0.0):
    """Jacobian determinant of ``psi``; equals ``2 s`` identically."""
    s = np.asarray(s, dtype=float)
    return 2.0 * s + 0.0 * np.asarray(t, dtype=float) + 0.0 * np.asarray(v, dtype=float)


def moment_cone_identity(xi):
    """Right-hand side ``-2 x1^3 + 3 x1 x2 + 2 (x1^2 - x2)^(3/2)``.

    On the moment surface (``s >= 0``) this reproduces the third coordinate.
    """
    xi = np.asarray(xi, dtype=float)
    x1, x2 = xi[..., 0], xi[..., 1]
    disc = np.maximum(x1 * x1 - x2, 0.0)
    return -2 * x1**3 + 3 * x1 * x2 + 2 * disc * np.sqrt(disc)


# ---------------------------------------------------------------------------
# affine maps


@dataclass(frozen=True)
class AffineMap3:
    """``x -> matrix @ x + translation``."""

    matrix: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(3, 3)
        b = np.array(self.translation, dtype=float).reshape(3)
        if not np.isfinite(m).all() or not np.isfinite(b).all():
            raise ValueError("affine map entries must be finite")
        if abs(np.linalg.det(m)) == 0.0:
            raise DegenerateError("affine map is singular")
        m.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", b)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.translation

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def inverse(self) -> "AffineMap3":
        inv = np.linalg.inv(self.matrix)
        return AffineMap3(inv, -inv @ self.translation)

    def compose(self, other: "AffineMap3") -> "AffineMap3":
        """Return ``self o other``."""
        return AffineMap3(self.matrix @ other.matrix, self.matrix @ other.translation + self.translation)

    def inverse_transpose(self) -> np.ndarray:
        return np.linalg.inv(self.matrix).T


def translation_map(a: float) -> AffineMap3:
    """Linear map carrying the moment surface at ``t`` to the one at ``t + a``.

    ``translation_map(a)(x(t, s)) + (a, a**2, a**3) == x(t + a, s)``.
    Columns are ``(1, 2a, 3a^2)``, ``(0, 1, 3a)`` and ``(0, 0, 1)``.
    """
    a = float(a)
    m = np.array([[1.0, 0.0, 0.0], [2 * a, 1.0, 0.0], [3 * a * a, 3 * a, 1.0]])
    return AffineMap3(m)


def moment_shift(a: float) -> np.ndarray:
    """Offset ``(a, a**2, a**3)`` completing :func:`translation_map`."""
    return eval_moment_curve(float(a))


def rescale_map(k: int) -> AffineMap3:
    """Anisotropic dilation ``diag(2^-k, 2^-2k, 2^-3k)``.

    Substituting ``t -> 2^-k t`` and ``s -> 2^-k s`` in the moment
    surface scales its coordinates by exactly these factors; the inverse
    therefore carries annulus ``k`` onto the unit annulus ``s in [1, 2]``.
    """
    if int(k) != k or k < 0:
        raise DomainError("k must be a non-negative integer")
    k = int(k)
    return AffineMap3(np.diag([2.0**-k, 2.0 ** (-2 * k), 2.0 ** (-3 * k)]))


# ---------------------------------------------------------------------------
# curves and Frenet frames


@dataclass(frozen=True)
class Curve:
    """A C^4 space curve given by closed-form evaluators.

    ``derivs`` holds callables for phi, phi', phi'' and phi'''; each must
    broadcast over an array of parameters and return shape ``(..., 3)``.
    ``unit_speed`` declares that the parameter is arc length.
    """

    derivs: tuple
    t_min: float = -0.5
    t_max: float = 0.5
    unit_speed: bool = False
    name: str = "curve"

    def __post_init__(self):
        if len(self.derivs) != 4:
            raise ValueError("need evaluators for phi, phi', phi'', phi'''")
        if not self.t_min < self.t_max:
            raise ValueError("empty parameter interval")

    def __call__(self, t):
        return self.derivs[0](np.asarray(t, dtype=float))

    def d(self, order: int, t):
        return self.derivs[order](np.asarray(t, dtype=float))


def moment_curve(t_min=-0.5, t_max=0.5) -> Curve:
    def d1(t):
        return _stack(np.ones_like(t), 2 * t, 3 * t * t)

    def d2(t):
        return _stack(np.zeros_like(t), 2 + 0 * t, 6 * t)

    def d3(t):
        return _stack(np.zeros_like(t), np.zeros_like(t), 6 + 0 * t)

    return Curve((eval_moment_curve, d1, d2, d3), t_min, t_max, False, "moment")


def helix(radius=1.0, pitch=1.0, *, unit_speed=False, t_min=-0.5, t_max=0.5) -> Curve:
    """Circular helix ``(r cos t, r sin t, h t)``.

    With ``unit_speed`` the parameter is rescaled by ``c = sqrt(r^2 + h^2)``
    so that ``|phi'| = 1``.  Curvature is ``r / c^2`` and torsion ``h / c^2``
    in either parametrisation.
    """
    r, h = float(radius), float(pitch)
    w = 1.0 / np.hypot(r, h) if unit_speed else 1.0

    def d0(t):
        return _stack(r * np.cos(w * t), r * np.sin(w * t), h * w * t)

    def d1(t):
        return _stack(-r * w * np.sin(w * t), r * w * np.cos(w * t), h * w + 0 * t)

    def d2(t):
        return _stack(-r * w**2 * np.cos(w * t), -r * w**2 * np.sin(w * t), 0 * t)

    def d3(t):
        return _stack(r * w**3 * np.sin(w * t), -r * w**3 * np.cos(w * t), 0 * t)

    return Curve((d0, d1, d2, d3), t_min, t_max, unit_speed, "helix")


def polynomial_curve(coeffs, *, unit_speed=False, t_min=-0.5, t_max=0.5, name="polynomial") -> Curve:
    """Curve ``sum_j coeffs[j] t^j`` with vector coefficients (shape ``(m, 3)``)."""
    c = np.array(coeffs, dtype=float)
    if c.ndim != 2 or c.shape[1] != 3:
        raise ValueError("coeffs must have shape (m, 3)")
    polys = [c]
    for _ in range(3):
        prev = polys[-1]
        if len(prev) <= 1:
            polys.append(np.zeros((1, 3)))
        else:
            polys.append(prev[1:] * np.arange(1, len(prev))[:, None])

    def make(pc):
        def ev(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros(t.shape + (3,))
            for coef in pc[::-1]:
                out = out * t[..., None] + coef
            return out

        return ev

    return Curve(tuple(make(pc) for pc in polys), t_min, t_max, unit_speed, name)


def line_curve(direction=(1.0, 0.0, 0.0), point=(0.0, 0.0, 0.0)) -> Curve:
    return polynomial_curve([point, direction], name="line")


@dataclass(frozen=True)
class FrenetFrame:
    """Tangent, normal and binormal with curvature ``kappa`` and torsion ``mu``.

    ``mu`` is the classical torsion ``(phi' x phi'') . phi''' / |phi' x phi''|^2``,
    so that ``b' = -mu |phi'| n``.  The Taylor expansion used in
    :mod:`devdecouple.verify` is written with ``b' . n = -mu``.
    """

    t_vec: np.ndarray
    n_vec: np.ndarray
    b_vec: np.ndarray
    kappa: float
    mu: float

    def matrix(self) -> np.ndarray:
        """Rows are ``t``, ``n``, ``b``; maps ambient vectors to frame coordinates."""
        return np.stack([self.t_vec, self.n_vec, self.b_vec])


def _frame_arrays(curve: Curve, t):
    d1 = curve.d(1, t)
    d2 = curve.d(2, t)
    d3 = curve.d(3, t)
    speed = np.linalg.norm(d1, axis=-1)
    if np.any(speed <= 0):
        raise DegenerateError("curve is not regular")
    cross = np.cross(d1, d2)
    cn = np.linalg.norm(cross, axis=-1)
    kappa = cn / speed**3
    if np.any(kappa < CURVATURE_FLOOR):
        raise DegenerateError("curvature vanishes; Frenet frame undefined")
    tv = d1 / speed[..., None]
    perp = d2 - np.sum(d2 * tv, axis=-1)[..., None] * tv
    nv = perp / np.linalg.norm(perp, axis=-1)[..., None]
    bv = np.cross(tv, nv)
    mu = np.sum(cross * d3, axis=-1) / cn**2
    return tv, nv, bv, kappa, mu, speed


def frenet_frame(curve: Curve, t: float) -> FrenetFrame:
    """Frenet trihedron at parameter ``t`` using parametrisation-free formulas.

    Raises
    ------
    DegenerateError
        If the curvature is below ``1e-12`` (e.g. a straight line).
    """
    tv, nv, bv, kappa, mu, _ = _frame_arrays(curve, np.asarray(float(t)))
    return FrenetFrame(tv, nv, bv, float(kappa), float(mu))


def curvature_arclength_derivative(curve: Curve, t: float) -> float:
    """``d kappa / d sigma`` where ``sigma`` is arc length."""
    t = np.asarray(float(t))
    d1, d2, d3 = curve.d(1, t), curve.d(2, t), curve.d(3, t)
    speed = np.linalg.norm(d1)
    cross = np.cross(d1, d2)
    cn = np.linalg.norm(cross)
    if cn / speed**3 < CURVATURE_FLOOR:
        raise DegenerateError("curvature vanishes")
    dcn = np.dot(cross, np.cross(d1, d3)) / cn
    dkappa_dt = dcn / speed**3 - 3 * cn * np.dot(d1, d2) / speed**5
    return float(dkappa_dt / speed)


def tangent_surface_point(curve: Curve, t, s):
    """``phi(t) + s phi'(t)``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return curve.d(0, t) + s[..., None] * curve.d(1, t)


def tangent_nbhd_point(curve: Curve, t, s, v):
    """Tangent-surface point pushed by ``v`` along the binormal ``b(t)``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    _, _, bv, _, _, _ = _frame_arrays(curve, t)
    return tangent_surface_point(curve, t, s) + v[..., None] * bv


# ---------------------------------------------------------------------------
# surface patches


@dataclass(frozen=True)
class SurfacePatch:
    """A parametrised surface with its thickening direction.

    ``point(t, s)`` evaluates the surface and ``normal(t, s)`` the unit
    vector along which the delta-neighbourhood is taken.
    """

    kind: str
    t_range: tuple
    s_range: tuple
    point: Callable
    normal: Callable
    curve: Curve | None = None

    def lift(self, t, s, v):
        return self.point(t, s) + np.asarray(v, dtype=float)[..., None] * self.normal(t, s)


def _vertical(t, s):
    shape = np.broadcast(np.asarray(t), np.asarray(s)).shape
    out = np.zeros(shape + (3,))
    out[..., 2] = 1.0
    return out


def moment_patch(t_range=(-0.5, 0.5), s_range=(0.0, 2.0)) -> SurfacePatch:
    return SurfacePatch("moment", t_range, s_range, eval_moment_surface, _vertical, moment_curve(*t_range))


def tangent_patch(curve: Curve, s_range=(0.0, 2.0)) -> SurfacePatch:
    def normal(t, s):
        t = np.broadcast_to(np.asarray(t, dtype=float), np.broadcast(np.asarray(t), np.asarray(s)).shape)
        return _frame_arrays(curve, t)[2]

    return SurfacePatch(
        "tangent",
        (curve.t_min, curve.t_max),
        s_range,
        lambda t, s: tangent_surface_point(curve, t, s),
        normal,
        curve,
    )


def cylinder_patch(t_range=(-0.5, 0.5), s_range=(-1.0, 1.0)) -> SurfacePatch:
    """Parabolic cylinder ``(t, t^2, s)`` thickened along ``xi2``."""

    def point(t, s):
        t = np.asarray(t, dtype=float)
        return _stack(t, t * t, s)

    def normal(t, s):
        shape = np.broadcast(np.asarray(t), np.asarray(s)).shape
        out = np.zeros(shape + (3,))
        out[..., 1] = 1.0
        return out

    return SurfacePatch("cylinder", t_range, s_range, point, normal)


def cone_patch(coefficient=0.75, t_range=(-0.5, 0.5), gamma_range=(1.0, 2.0)) -> SurfacePatch:
    """Cone ``xi3 = c xi2^2 / xi1`` over the rays ``gamma (t + 1, t^2 + 2t)``."""

    def point(t, g):
        t = np.asarray(t, dtype=float)
        g = np.asarray(g, dtype=float)
        x1 = g * (t + 1)
        x2 = g * (t * t + 2 * t)
        return _stack(x1, x2, coefficient * x2 * x2 / x1)

    return SurfacePatch("cone", t_range, gamma_range, point, _vertical)
