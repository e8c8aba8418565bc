"""Numerical checks of the geometric facts behind the decoupling partitions.

Every check returns a :class:`CheckReport` whose ``passed`` flag is
equivalent to ``residual <= tolerance`` (strict for the separation check,
whose claim is a strict inequality).  Checks are deterministic given
their seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.spatial import ConvexHull

from . import geometry as geo
from .exceptions import CertificateError, DomainError, ScaleError
from .partition import CONE_COEFFICIENT, Cap, _cbrt, _check_delta, _max_annulus, annuli

ROUNDING = 16 * np.finfo(float).eps
CONE_IDENTITY_TOL = 1e-12
CONE_D_MAX = 100.0
FRENET_MIN_ORDER = 3.5
EXACT_TOL = 1e-14
C_LIMIT = 1e6


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    residual: float
    tolerance: float
    witness: tuple = ()
    samples: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: residual={self.residual:.6g} tol={self.tolerance:.6g} witness={self.witness} n={self.samples}"


def make_report(name, residual, tolerance, witness, samples, strict=False, **extra):
    residual = float(residual)
    passed = residual < tolerance if strict else residual <= tolerance
    return CheckReport(name, bool(passed), residual, float(tolerance), tuple(map(float, witness)), int(samples), extra)


# ---------------------------------------------------------------------------
# near-curve region against the parabolic cylinder


def check_cylinder_containment(delta, n_samples=100_000, seed=0, *, threshold_scale=1.0) -> CheckReport:
    """Near-region points lie within ``delta^(2/3) + 2 delta`` of the parabolic cylinder.

    Samples ``(t, s, v)`` in ``[-1/2, 1/2] x [0, delta^(1/3)] x [-delta, delta]``
    (the edge ``s = delta^(1/3)`` is always included) and measures
    ``xi1^2 - xi2`` at ``psi(t, s, v)``, which is also the distance to the
    cylinder along ``xi2``.  The ``v = 0`` slice is held to the sharper
    bound ``delta^(2/3)``.  ``threshold_scale`` shrinks both bounds for
    negative controls.
    """
    delta = _check_delta(delta)
    cube = _cbrt(delta)
    rng = np.random.default_rng(seed)
    n_edge = max(1, n_samples // 10)
    t = rng.uniform(-0.5, 0.5, n_samples)
    s = np.concatenate([rng.uniform(0.0, cube, n_samples - n_edge), np.full(n_edge, cube)])
    v = rng.uniform(-delta, delta, n_samples)
    bound = threshold_scale * (cube * cube + 2 * delta)
    slice_bound = threshold_scale * cube * cube
    worst, witness = 0.0, (float("nan"),) * 3
    for vv, b in ((v, bound), (np.zeros_like(v), slice_bound)):
        xi = geo.psi(t, s, vv)
        gap = xi[:, 0] ** 2 - xi[:, 1]
        dist = np.abs(xi[:, 1] - xi[:, 0] ** 2)
        slack = ROUNDING * (xi[:, 0] ** 2 + np.abs(xi[:, 1]))
        excess = np.maximum(gap, dist) - b - slack
        i = int(np.argmax(excess))
        if excess[i] > worst or not np.isfinite(witness[0]):
            worst, witness = max(worst, float(excess[i])), (t[i], s[i], vv[i])
    return make_report("cylinder_containment", worst, 0.0, witness, 2 * n_samples, delta=delta, bound=bound)


# ---------------------------------------------------------------------------
# cone identity and cone approximation


def check_cone_identity(n_samples=1_000_000, seed=0) -> CheckReport:
    """Third coordinate of the moment surface recovered from the first two."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(-0.5, 0.5, n_samples)
    s = rng.uniform(0.0, 2.0, n_samples)
    xi = geo.eval_moment_surface(t, s)
    err = np.abs(xi[:, 2] - geo.moment_cone_identity(xi))
    i = int(np.argmax(err))
    return make_report("cone_identity", err[i], CONE_IDENTITY_TOL, (t[i], s[i]), n_samples)


def iteration_scales(delta):
    """``(1/2)^((3/2)^j)`` for ``j = 0, 1, ...`` up to the first value ``<= delta^(1/3)``."""
    delta = _check_delta(delta)
    cube = _cbrt(delta)
    out = []
    j = 0
    while True:
        val = 0.5 ** (1.5**j)
        out.append(val)
        if val <= cube:
            return out
        j += 1


def cone_gap(t, s, coefficient=CONE_COEFFICIENT):
    """Vertical distance from ``x(t, s)`` to the graph ``xi3 = c xi2^2 / xi1``."""
    xi = geo.eval_moment_surface(t, s)
    return np.abs(xi[..., 2] - coefficient * xi[..., 1] ** 2 / xi[..., 0])


def check_cone_approx(j, grid_size=1000, *, coefficient=CONE_COEFFICIENT, d_max=CONE_D_MAX) -> CheckReport:
    """Smallest ``D`` with ``gap <= D * scale^3`` on ``[0, scale] x [1, 2]``.

    ``scale = (1/2)^((3/2)^j)``.  The residual is the empirical ``D``; the
    check passes when it stays below ``d_max``.
    """
    if j < 0:
        raise DomainError("j must be non-negative")
    scale = 0.5 ** (1.5**j)
    t = np.linspace(0.0, scale, grid_size)
    s = np.linspace(1.0, 2.0, grid_size)
    tt, ss = np.meshgrid(t, s, indexing="ij")
    ratio = cone_gap(tt, ss, coefficient) / scale**3
    i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return make_report(
        "cone_approx", ratio[i], d_max, (tt[i], ss[i]), ratio.size, j=int(j), scale=scale, coefficient=coefficient
    )


def separation_margin(t, s, j):
    """``gamma ((t+h)^2 + 2(t+h)) - (t^2 + 2ts)`` with ``gamma`` matching first coordinates.

    ``h = (1/2)^((3/2)^(j+1))``.  A positive margin means the ray through
    the parameter ``t + h`` misses the point ``x(t, s)``.
    """
    h = 0.5 ** (1.5 ** (j + 1))
    gamma = (t + s) / (t + h + 1)
    return gamma * ((t + h) ** 2 + 2 * (t + h)) - (t * t + 2 * t * s)


def check_ray_separation(j, grid_size=(1000, 100)) -> CheckReport:
    """Margin of :func:`separation_margin` is positive on ``[0, scale] x [1, 2]``.

    Residual is minus the smallest margin, so the check passes iff it is
    strictly negative.
    """
    if j < 0:
        raise DomainError("j must be non-negative")
    nt, ns = (grid_size, grid_size) if np.ndim(grid_size) == 0 else grid_size
    scale = 0.5 ** (1.5**j)
    tt, ss = np.meshgrid(np.linspace(0.0, scale, nt), np.linspace(1.0, 2.0, ns), indexing="ij")
    margin = separation_margin(tt, ss, j)
    i = np.unravel_index(int(np.argmin(margin)), margin.shape)
    return make_report("ray_separation", -margin[i], 0.0, (tt[i], ss[i]), margin.size, strict=True, j=int(j))


# ---------------------------------------------------------------------------
# rescaled annuli against the parabola


def check_parabola_containment(delta, k, n_samples=100_000, seed=0, *, threshold=4.0) -> CheckReport:
    """Annulus ``k`` rescaled by ``diag(2^k, 4^k, 8^k)`` lies over ``|xi1^2 - xi2| <= 4``.

    The outer edge ``s = 2^(1-k)`` is always sampled.
    """
    delta = _check_delta(delta)
    if k < 0 or k > _max_annulus(delta):
        raise ScaleError(f"annulus {k} is not part of the partition at delta={delta}")
    lo, hi = next((a, b) for a, b, kk in annuli(delta) if kk == k)
    rng = np.random.default_rng(seed)
    n_edge = max(1, n_samples // 10)
    t = rng.uniform(-0.5, 0.5, n_samples)
    s = np.concatenate([rng.uniform(lo, hi, n_samples - n_edge), np.full(n_edge, hi)])
    v = rng.uniform(-delta, delta, n_samples)
    xi = geo.rescale_map(k).inverse()(geo.psi(t, s, v))
    gap = np.abs(xi[:, 0] ** 2 - xi[:, 1])
    excess = gap - threshold - ROUNDING * (xi[:, 0] ** 2 + np.abs(xi[:, 1]))
    i = int(np.argmax(excess))
    return make_report(
        "parabola_containment", max(excess[i], 0.0), 0.0, (t[i], s[i], v[i]), n_samples, k=int(k), max_gap=float(gap.max())
    )


# ---------------------------------------------------------------------------
# Frenet expansion


def frenet_expansion(curve: geo.Curve, t0, sigma):
    """Third-order Frenet expansion of ``phi`` around ``t0`` in arc length ``sigma``.

    Returns ``phi(t0) + T (sigma - k^2 sigma^3/6) + N (k sigma^2/2 + k' sigma^3/6)
    + B (k tau sigma^3/6)`` where ``tau`` is the classical torsion.
    """
    fr = geo.frenet_frame(curve, t0)
    dk = geo.curvature_arclength_derivative(curve, t0)
    sg = np.asarray(sigma, dtype=float)[..., None]
    k, tau = fr.kappa, fr.mu
    return (
        curve(np.asarray(float(t0)))
        + fr.t_vec * (sg - k * k * sg**3 / 6)
        + fr.n_vec * (k * sg**2 / 2 + dk * sg**3 / 6)
        + fr.b_vec * (k * tau * sg**3 / 6)
    )


def _arclength_window(curve, t0, window, n=4097):
    """Parameters ``t`` and their arc length from ``t0`` covering ``|sigma| <= window``."""
    speed0 = float(np.linalg.norm(curve.d(1, np.asarray(float(t0)))))
    half = 2 * window / speed0
    for _ in range(60):
        t = np.linspace(t0 - half, t0 + half, n)
        speed = np.linalg.norm(curve.d(1, t), axis=-1)
        sigma = cumulative_simpson(speed, x=t, initial=0.0)
        sigma -= sigma[n // 2]
        if sigma[0] <= -window and sigma[-1] >= window:
            keep = np.abs(sigma) <= window
            return t[keep], sigma[keep]
        half *= 2
    raise DomainError("could not cover the arc-length window")


def check_frenet_expansion(curve: geo.Curve, t0=0.0, window_list=None, n_points=2049,
                           min_order=FRENET_MIN_ORDER) -> CheckReport:
    """Order of the Frenet remainder ``max |phi - expansion|`` over shrinking windows.

    Curves not flagged ``unit_speed`` are compared in arc length obtained by
    cumulative Simpson quadrature.  If every remainder is below ``1e-14``
    the curve is treated as its own expansion and the order test is skipped.
    The residual is ``min_order - fitted order``.
    """
    from .norms import exponent_fit

    windows = [2.0**-e for e in range(3, 9)] if window_list is None else list(window_list)
    geo.frenet_frame(curve, t0)  # raises DegenerateError early
    rem = []
    witness = None
    for w in windows:
        if curve.unit_speed:
            t = np.linspace(t0 - w, t0 + w, n_points)
            sigma = t - t0
        else:
            t, sigma = _arclength_window(curve, t0, w, n_points)
        err = np.linalg.norm(curve(t) - frenet_expansion(curve, t0, sigma), axis=-1)
        i = int(np.argmax(err))
        rem.append(float(err[i]))
        if witness is None:
            witness = (w, float(t[i]))
    rem = np.array(rem)
    n = len(windows) * n_points
    if rem.max() <= EXACT_TOL:
        return make_report("frenet_expansion", rem.max(), EXACT_TOL, witness, n, order=float("nan"), remainders=rem.tolist())
    fit = exponent_fit(np.column_stack([windows, rem]))
    return make_report(
        "frenet_expansion", min_order - fit.slope, 0.0, witness, n, order=fit.slope, remainders=rem.tolist()
    )


# ---------------------------------------------------------------------------
# flatness


@dataclass(frozen=True)
class FlatnessCertificate:
    """Convex polyhedron ``R`` inside the cap with the cap inside ``C R``.

    ``vertices`` are ambient coordinates; ``C`` is the smallest
    enlargement about ``center`` that covers every sample.
    """

    cap_index: int
    vertices: np.ndarray
    center: np.ndarray
    C: float
    n_samples: int
    shrink: float = 1.0
    base: str = "trapezoid"
    k: int | None = None
    delta: float | None = None


def _facets(points):
    hull = ConvexHull(points)
    return hull.equations[:, :3], hull.equations[:, 3]


def enlargement_factor(vertices, points, center=None) -> float:
    """Smallest ``C >= 1`` with ``points`` inside ``center + C (conv(vertices) - center)``."""
    vertices = np.asarray(vertices, dtype=float)
    points = np.asarray(points, dtype=float)
    c = vertices.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    normals, offsets = _facets(vertices)
    room = -(normals @ c + offsets)
    if np.any(room <= 0):
        raise CertificateError("center is not interior to the polyhedron")
    reach = (points - c) @ normals.T / room
    return float(max(1.0, reach.max()))


def _shrink_into(vertices, center, normals, offsets):
    """Largest ``lam <= 1`` with ``center + lam (vertices - center)`` inside the facets."""
    room = -(normals @ center + offsets)
    if np.any(room <= 0):
        raise CertificateError("polyhedron center lies outside the sample hull")
    push = (vertices - center) @ normals.T
    with np.errstate(divide="ignore"):
        lam = np.where(push > 0, room / push, np.inf)
    return float(min(1.0, lam.min()))


def _cap_curve(cap: Cap):
    if cap.kind == "moment":
        return geo.moment_curve()
    if cap.kind == "tangent" and cap.curve is not None:
        return cap.curve
    raise ValueError(f"flatness certificates need a moment or tangent cap, got {cap.kind!r}")


def _cap_samples(cap: Cap, curve, n_samples, rng):
    # random interior samples plus a lattice on the boundary of the parameter box
    m = 9
    t_e, s_e = np.linspace(cap.t_lo, cap.t_hi, m), np.linspace(cap.s_lo, cap.s_hi, m)
    tb, sb, vb = np.meshgrid(t_e, s_e, [-cap.delta, cap.delta], indexing="ij")
    t = np.concatenate([rng.uniform(cap.t_lo, cap.t_hi, n_samples), tb.ravel()])
    s = np.concatenate([rng.uniform(cap.s_lo, cap.s_hi, n_samples), sb.ravel()])
    v = np.concatenate([rng.uniform(-cap.delta, cap.delta, n_samples), vb.ravel()])
    return _lift(cap, curve, t, s, v)


def _lift(cap, curve, t, s, v):
    t, s, v = (np.asarray(x, dtype=float) for x in (t, s, v))
    if cap.kind == "moment":
        return geo.psi(t, s, v)
    return geo.tangent_nbhd_point(curve, t, s, v)


def _preimage(proj, target, t_range, s_range, iters=30):
    """Parameters whose projection is ``target`` (Newton with a finite-difference Jacobian)."""
    x = np.array([0.5 * sum(t_range), 0.5 * sum(s_range)])
    h = 1e-7 * max(t_range[1] - t_range[0], s_range[1] - s_range[0])
    for _ in range(iters):
        r = proj(*x) - target
        jac = np.column_stack([(proj(x[0] + h, x[1]) - proj(x[0] - h, x[1])) / (2 * h),
                               (proj(x[0], x[1] + h) - proj(x[0], x[1] - h)) / (2 * h)])
        step = np.linalg.solve(jac, r)
        x = x - step
        if np.max(np.abs(step)) <= 1e-15 * (1 + np.max(np.abs(x))):
            break
    return float(x[0]), float(x[1])


def flatness_certificate(cap: Cap, surface=None, n_samples=2000, seed=0, *, c_limit=C_LIMIT) -> FlatnessCertificate:
    """Certify that an annulus cap is comparable to a convex polyhedron.

    Works in the frame at ``y(a, s_lo)`` (``a`` the left end of the cap):
    ``u`` along the ruling, ``w`` along the principal normal, ``z`` along
    the binormal.  The base of ``R`` in the ``(u, w)`` plane is bounded by
    the projections of the two edge rulings and by two segments orthogonal
    to the first ruling, placed as far apart as the projected cap allows;
    when those segments would be closer than a quarter of the ruling
    length the base falls back to the quadrilateral of projected corners.
    Each base vertex is pulled back to parameters ``(t, s)`` and lifted to
    the two faces ``v = +-delta`` of the cap, so ``R`` has eight vertices
    that are cap points and follows the sheet's tilt.  It is then shrunk
    about its centre, if needed, until it sits inside the sample hull.

    Parameters
    ----------
    cap : Cap
        Annulus cap of a moment or tangent partition.
    surface : Curve, optional
        Generating curve; defaults to the cap's own.

    Raises
    ------
    ValueError
        For near-region caps or unsupported kinds.
    CertificateError
        If the enlargement exceeds ``c_limit``.
    """
    if cap.near or cap.k is None:
        raise ValueError("flatness certificates are defined for annulus caps only")
    curve = surface if isinstance(surface, geo.Curve) else _cap_curve(cap)
    rng = np.random.default_rng(seed)
    pts = _cap_samples(cap, curve, n_samples, rng)

    a, b = cap.t_lo, cap.t_hi
    s1, s2 = cap.s_lo, cap.s_hi
    fr = geo.frenet_frame(curve, a)
    origin = geo.tangent_surface_point(curve, np.asarray(a), np.asarray(s1))
    axes = fr.matrix()

    def proj(t, s):
        return ((geo.tangent_surface_point(curve, np.asarray(t), np.asarray(s)) - origin) @ axes.T)[..., :2]

    p1, p2 = proj(a, s1), proj(a, s2)
    q1, q2 = proj(b, s1), proj(b, s2)
    # first ruling runs along +u from the origin
    e1 = np.linspace(a, b, 65)
    u_lo = max(p1[0], proj(e1, np.full_like(e1, s1))[:, 0].max())
    u_hi = min(p2[0], proj(e1, np.full_like(e1, s2))[:, 0].min())
    if u_hi - u_lo >= 0.25 * (p2[0] - p1[0]):
        slope = (q2[1] - q1[1]) / (q2[0] - q1[0])

        def far(u):
            return q1[1] + slope * (u - q1[0])

        base = np.array([[u_lo, 0.0], [u_hi, 0.0], [u_hi, far(u_hi)], [u_lo, far(u_lo)]])
        kind = "trapezoid"
    else:
        base = np.array([p1, p2, q2, q1])
        kind = "chord"

    # lift each base vertex back to the cap at both faces of the slab, a hair
    # inside so rounding in the membership test cannot push them out
    params = [_preimage(proj, xy, (a, b), (s1, s2)) for xy in base]
    face = cap.delta * (1.0 - 1e-9)
    verts_amb = np.array([_lift(cap, curve, t, s, sgn * face) for t, s in params for sgn in (-1.0, 1.0)])
    pts = np.concatenate([pts, verts_amb])
    local = (pts - origin) @ axes.T
    verts = (verts_amb - origin) @ axes.T

    # anisotropic units keep the hull computation well conditioned
    unit = np.array([max(p2[0] - p1[0], 1e-300), max(np.ptp(local[:, 1]), 1e-300), cap.delta])
    scaled_pts = local / unit
    scaled_verts = verts / unit
    center = scaled_verts.mean(axis=0)
    normals, offsets = _facets(scaled_pts)
    lam = _shrink_into(scaled_verts, center, normals, offsets)
    scaled_verts = center + lam * (scaled_verts - center)
    c_val = enlargement_factor(scaled_verts, scaled_pts, center)
    if not c_val <= c_limit:
        raise CertificateError(f"cap {cap.index}: enlargement {c_val:.3g} exceeds {c_limit:.3g}")
    ambient = origin + (scaled_verts * unit) @ axes
    return FlatnessCertificate(
        cap.index, ambient, origin + (center * unit) @ axes, c_val, len(pts), lam, kind, cap.k, cap.delta
    )


def flatness_sweep(partitions, n_samples=2000, seed=0, threads=1):
    """Certificates for every annulus cap of each partition, in cap order."""
    jobs = [(cap, part.curve) for part in partitions for cap in part if not cap.near]

    def one(job):
        return flatness_certificate(job[0], job[1], n_samples, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


# ---------------------------------------------------------------------------
# bundle used by the command line


def standard_checks(delta, n_samples=100_000, seed=0):
    """The containment, cone, separation, parabola and Frenet checks at one scale."""
    reports = [
        check_cylinder_containment(delta, n_samples, seed),
        check_cone_identity(n_samples, seed),
    ]
    for j in range(len(iteration_scales(delta))):
        reports.append(check_cone_approx(j, 200))
    for j in range(5):
        reports.append(check_ray_separation(j))
    for k in range(_max_annulus(delta) + 1):
        reports.append(check_parabola_containment(delta, k, max(1000, n_samples // 10), seed))
    reports.append(check_frenet_expansion(geo.helix(unit_speed=True)))
    reports.append(check_frenet_expansion(geo.moment_curve()))
    return reports
