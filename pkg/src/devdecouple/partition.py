"""Decoupling partitions and exact cap membership.

Every cap is a rectangle ``[t_lo, t_hi) x [s_lo, s_hi)`` in the chart of
its surface, thickened by ``delta`` along the surface's normal field.  A
*chart* maps ambient points back to ``(a, b, offset)`` coordinates, so a
point lies in a cap exactly when ``a`` and ``b`` fall in the cap's
intervals and ``|offset| <= delta``.  Intervals are half-open and closed
only at the global right end of the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .exceptions import DomainError, SamplingError, ScaleError

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
N_RESTARTS = 8

KINDS = ("moment", "tangent", "parabola-2", "parabola-3", "cylinder", "cone", "tube")
CONE_COEFFICIENT = 0.75
CYLINDER_SAMPLE_WINDOW = (-2.0, 2.0)
EDGE_TOL = 1e-12


@dataclass(frozen=True)
class Cap:
    """One element of a decoupling partition.

    ``k`` is the annulus index for moment/tangent caps and ``None`` for the
    near-curve region and for kinds without annuli.
    """

    kind: str
    t_lo: float
    t_hi: float
    s_lo: float
    s_hi: float
    delta: float
    k: int | None = None
    t_closed: bool = False
    s_closed: bool = False
    t_first: bool = False
    s_first: bool = False
    normal: str = "vertical"
    index: int = -1
    params: tuple = ()
    curve: geo.Curve | None = field(default=None, compare=False, repr=False)

    @property
    def near(self) -> bool:
        return self.kind in ("moment", "tangent") and self.k is None

    @property
    def t_center(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)

    @property
    def s_center(self) -> float:
        return 0.5 * (self.s_lo + self.s_hi)

    def contains(self, xi) -> np.ndarray:
        """Vectorised membership for points of shape ``(..., d)``."""
        a, b, off = _chart_for_cap(self, xi)
        return _in_box(self, a, b, off)


def cap_contains(cap: Cap, xi) -> bool:
    """Whether the single point ``xi`` lies in ``cap``.  Never raises."""
    try:
        return bool(np.all(cap.contains(np.asarray(xi, dtype=float))))
    except (DomainError, ValueError, FloatingPointError):
        return False


def _edge_slack(bound):
    return EDGE_TOL * max(1.0, abs(bound)) if math.isfinite(bound) else 0.0


def _in_interval(x, lo, hi, closed, first=False):
    # outer edges of the whole domain absorb chart rounding; interior edges are exact
    with np.errstate(invalid="ignore"):
        upper = (x <= hi + _edge_slack(hi)) if closed else (x < hi)
        lower = (x >= lo - _edge_slack(lo)) if first else (x >= lo)
        return lower & upper


def _in_box(cap: Cap, a, b, off):
    with np.errstate(invalid="ignore"):
        ok = _in_interval(a, cap.t_lo, cap.t_hi, cap.t_closed, cap.t_first)
        ok &= _in_interval(b, cap.s_lo, cap.s_hi, cap.s_closed, cap.s_first)
        ok &= np.abs(off) <= cap.delta
    return ok & np.isfinite(a) & np.isfinite(b) & np.isfinite(off)


# ---------------------------------------------------------------------------
# charts


def _pad3(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] == 2:
        xi = np.concatenate([xi, np.zeros(xi.shape[:-1] + (1,))], axis=-1)
    return xi


def moment_chart(xi):
    t, s, v = geo.invert_psi(xi, strict=False)
    return t, s, v


def cylinder_chart(xi):
    xi = _pad3(xi)
    return xi[..., 0], xi[..., 2], xi[..., 1] - xi[..., 0] ** 2


def parabola2_chart(xi):
    xi = np.asarray(xi, dtype=float)
    return xi[..., 0], np.zeros(xi.shape[:-1]), xi[..., 1] - xi[..., 0] ** 2


def parabola3_chart(xi):
    xi = np.asarray(xi, dtype=float)
    return xi[..., 0], xi[..., 1], xi[..., 2] - xi[..., 0] ** 2 - xi[..., 1] ** 2


def cone_chart(xi, coefficient=CONE_COEFFICIENT):
    """Ray parameter ``t``, dilation ``gamma`` and vertical offset from the cone.

    Uses that ``(t^2 + 2t) / (t + 1) = u - 1/u`` with ``u = t + 1``.
    """
    xi = np.asarray(xi, dtype=float)
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(x1 > 0, x2 / x1, np.nan)
        root = np.sqrt(rho * rho + 4.0)
        # positive root of u^2 - rho u - 1, written without cancellation
        u = np.where(rho >= 0, 0.5 * (rho + root), 2.0 / (root - rho))
        gamma = x1 / u
        off = x3 - coefficient * x2 * x2 / x1
    return u - 1.0, gamma, off


def tube_frame(direction):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    helper = np.eye(3)[np.argmin(np.abs(d))]
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return d, e1, e2


def tube_chart(xi, direction):
    d, e1, e2 = tube_frame(direction)
    xi = np.asarray(xi, dtype=float)
    u = xi @ d
    w = np.maximum(np.abs(xi @ e1), np.abs(xi @ e2))
    return u, np.zeros_like(u), w


def _seed_grid(curve, t_lo, t_hi, s_lo, s_hi, nt, ns):
    tg, sg = np.meshgrid(np.linspace(t_lo, t_hi, nt), np.linspace(s_lo, s_hi, ns), indexing="ij")
    tg, sg = tg.ravel(), sg.ravel()
    return tg, sg, geo.tangent_surface_point(curve, tg, sg)


def invert_tangent(curve: geo.Curve, xi, seeds=None, *, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Solve ``phi(t) + s phi'(t) + v b(t) = xi`` by damped Newton.

    Parameters
    ----------
    seeds : tuple (t0, s0, points) or None
        Candidate parameters and their surface points; each target starts
        from its nearest candidate.  Defaults to a grid over the curve's
        domain times ``s in [0, 2]``.

    Returns
    -------
    t, s, v : ndarray
        NaN where Newton did not reach residual ``tol``.
    """
    xi = np.asarray(xi, dtype=float)
    shape = xi.shape[:-1]
    pts = xi.reshape(-1, 3)
    if seeds is None:
        seeds = _seed_grid(curve, curve.t_min, curve.t_max, 0.0, 2.0, 129, 33)
    tg, sg, sp = seeds
    n_try = min(N_RESTARTS, len(tg))
    _, nearest = cKDTree(sp).query(pts, k=n_try)
    nearest = nearest.reshape(len(pts), n_try)
    t = np.full(len(pts), np.nan)
    s = np.full(len(pts), np.nan)
    v = np.full(len(pts), np.nan)
    todo = np.arange(len(pts))
    # the s < 0 sheet is a spurious preimage near the edge of regression
    for j in range(n_try):
        if len(todo) == 0:
            break
        idx = nearest[todo, j]
        tt, ss, vv = _newton_tangent(curve, pts[todo], tg[idx], sg[idx], tol, max_iter)
        ok = np.isfinite(tt) & (ss >= -tol)
        t[todo[ok]], s[todo[ok]], v[todo[ok]] = tt[ok], ss[ok], vv[ok]
        todo = todo[~ok]
    return t.reshape(shape), s.reshape(shape), v.reshape(shape)


def _newton_tangent(curve, pts, t, s, tol, max_iter):
    t = t.astype(float).copy()
    s = s.astype(float).copy()
    v = np.zeros(len(pts))
    lo, hi = curve.t_min - 0.25, curve.t_max + 0.25

    def residual(t, s, v, target):
        frame = geo._frame_arrays(curve, t)
        return geo.tangent_surface_point(curve, t, s) + v[:, None] * frame[2] - target, frame

    active = np.ones(len(pts), dtype=bool)
    done = np.zeros(len(pts), dtype=bool)
    for _ in range(max_iter):
        ia = np.flatnonzero(active)
        if len(ia) == 0:
            break
        target = pts[ia]
        ta, sa, va = t[ia], s[ia], v[ia]
        r, (tv, nv, bv, _, tau, speed) = residual(ta, sa, va, target)
        rn = np.linalg.norm(r, axis=1)
        conv = rn <= tol
        done[ia[conv]] = True
        active[ia[conv]] = False
        if conv.all():
            break
        keep = ~conv
        ia, ta, sa, va, r, rn, target = ia[keep], ta[keep], sa[keep], va[keep], r[keep], rn[keep], target[keep]
        nv, bv, tau, speed = nv[keep], bv[keep], tau[keep], speed[keep]
        d1 = curve.d(1, ta)
        d2 = curve.d(2, ta)
        db = -(tau * speed)[:, None] * nv
        jac = np.stack([d1 + sa[:, None] * d2 + va[:, None] * db, d1, bv], axis=-1)
        # least squares tolerates the singular Jacobian on the edge s = 0
        step = -(np.linalg.pinv(jac) @ r[..., None])[..., 0]
        lam = np.ones(len(ia))
        new_t, new_s, new_v = ta, sa, va
        pending = np.ones(len(ia), dtype=bool)
        for _ in range(12):
            cand_t = np.clip(ta + lam * step[:, 0], lo, hi)
            cand_s = sa + lam * step[:, 1]
            cand_v = va + lam * step[:, 2]
            rc, _ = residual(cand_t, cand_s, cand_v, target)
            better = pending & (np.linalg.norm(rc, axis=1) < rn)
            new_t = np.where(better, cand_t, new_t)
            new_s = np.where(better, cand_s, new_s)
            new_v = np.where(better, cand_v, new_v)
            pending &= ~better
            if not pending.any():
                break
            lam = np.where(pending, 0.5 * lam, lam)
        t[ia], s[ia], v[ia] = new_t, new_s, new_v
        active[ia[pending]] = False
    ia = np.flatnonzero(active | ~done)
    if len(ia):
        r, _ = residual(t[ia], s[ia], v[ia], pts[ia])
        done[ia[np.linalg.norm(r, axis=1) <= tol]] = True
    bad = ~done
    t[bad] = s[bad] = v[bad] = np.nan
    return t, s, v


def _chart_for_cap(cap: Cap, xi):
    kind = cap.kind
    if kind == "moment":
        return moment_chart(xi)
    if kind == "tangent":
        pad_t = 0.25 * (cap.t_hi - cap.t_lo)
        pad_s = 0.25 * (cap.s_hi - cap.s_lo)
        seeds = _seed_grid(
            cap.curve,
            max(cap.t_lo - pad_t, cap.curve.t_min),
            min(cap.t_hi + pad_t, cap.curve.t_max),
            max(cap.s_lo - pad_s, 0.0),
            cap.s_hi + pad_s,
            9,
            9,
        )
        return invert_tangent(cap.curve, xi, seeds)
    if kind == "cylinder":
        return cylinder_chart(xi)
    if kind == "parabola-2":
        return parabola2_chart(xi)
    if kind == "parabola-3":
        return parabola3_chart(xi)
    if kind == "cone":
        return cone_chart(xi, cap.params[0])
    if kind == "tube":
        return tube_chart(xi, cap.params)
    raise ValueError(f"unknown cap kind {kind!r}")


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class Partition:
    """An ordered family of caps tiling a parameter domain."""

    delta: float
    caps: tuple
    kind: str
    curve: geo.Curve | None = field(default=None, compare=False, repr=False)
    params: tuple = ()

    def __len__(self):
        return len(self.caps)

    def __iter__(self):
        return iter(self.caps)

    def __getitem__(self, i):
        return self.caps[i]

    def chart(self, xi):
        if self.kind == "tangent":
            return invert_tangent(self.curve, xi)
        return _chart_for_cap(self.caps[0], xi)

    def locate(self, xi) -> np.ndarray:
        """Index of the cap containing each point, ``-1`` where none does."""
        xi = np.asarray(xi, dtype=float)
        a, b, off = self.chart(xi)
        a, b, off = np.ravel(a), np.ravel(b), np.ravel(off)
        out = np.full(a.shape, -1, dtype=np.int64)
        for (s_lo, s_hi, s_closed, s_first), members in self._rows():
            caps = [self.caps[i] for i in members]
            edges = np.array([c.t_lo for c in caps] + [caps[-1].t_hi])
            row = _in_interval(b, s_lo, s_hi, s_closed, s_first)
            with np.errstate(invalid="ignore"):
                row &= np.abs(off) <= self.delta
            row &= _in_interval(a, edges[0], edges[-1], caps[-1].t_closed, caps[0].t_first)
            row &= out < 0
            j = np.searchsorted(edges, a[row], side="right") - 1
            j = np.clip(j, 0, len(caps) - 1)
            out[np.flatnonzero(row)] = np.asarray(members)[j]
        return out.reshape(xi.shape[:-1])

    def _rows(self):
        rows = {}
        for c in self.caps:
            rows.setdefault((c.s_lo, c.s_hi, c.s_closed, c.s_first), []).append(c.index)
        return sorted(rows.items(), key=lambda kv: kv[0][0])


def _cbrt(x):
    return float(np.cbrt(x))


def _check_delta(delta, allow_one=False):
    delta = float(delta)
    if not (delta > 0) or delta > 1 or (delta == 1 and not allow_one):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return delta


def _tile(lo, hi, length):
    """Edges of ``[lo, hi]`` cut into pieces of ``length``, remainder last."""
    n = max(1, math.ceil((hi - lo) / length - 1e-9))
    edges = [lo + i * length for i in range(n)] + [hi]
    return edges


def _max_annulus(delta):
    cube = _cbrt(delta)
    k = math.floor(-math.log2(cube) + 1e-9)
    return max(k, 0)


def annuli(delta):
    """Ruling-parameter ranges ``(s_lo, s_hi, k)``; ``k`` is ``None`` for the near range.

    The near range is ``[0, delta^(1/3))``; annulus ``k`` is
    ``[2^-k, 2^-k+1)`` for ``2^-k >= delta^(1/3)``, with ``k = 0`` closed
    at 2.  When ``delta^(1/3)`` is not a power of two the innermost annulus
    is stretched down to ``delta^(1/3)`` so that the ranges cover ``[0, 2]``.
    """
    delta = _check_delta(delta)
    cube = _cbrt(delta)
    kmax = _max_annulus(delta)
    out = [(0.0, cube, None)]
    for k in range(kmax, -1, -1):
        lo = 2.0**-k
        hi = 2.0 ** (-k + 1)
        if k == kmax:
            lo = min(lo, cube)
        out.append((lo, hi, k))
    return out


def _moment_like_caps(kind, delta, s_lo, s_hi, length, k, curve=None, t_range=(-0.5, 0.5)):
    edges = _tile(t_range[0], t_range[1], length)
    normal = "binormal" if kind == "tangent" else "vertical"
    return [
        Cap(
            kind,
            edges[i],
            edges[i + 1],
            s_lo,
            s_hi,
            delta,
            k=k,
            t_closed=(i == len(edges) - 2),
            s_closed=(k == 0),
            t_first=(i == 0),
            s_first=(s_lo == 0.0),
            normal=normal,
            curve=curve,
        )
        for i in range(len(edges) - 1)
    ]


def caps_for_annulus(delta, k, surface="moment", curve=None):
    """Caps of annulus ``k``: t-intervals of length ``(2^k delta)^(1/2)``."""
    delta = _check_delta(delta)
    if int(k) != k or k < 0:
        raise ScaleError("annulus index must be a non-negative integer")
    k = int(k)
    if k > _max_annulus(delta):
        raise ScaleError(f"2^-{k} < delta^(1/3); annulus {k} is not part of the partition")
    for lo, hi, kk in annuli(delta):
        if kk == k:
            break
    kind, curve, t_range = _surface_args(surface, curve)
    return _moment_like_caps(kind, delta, lo, hi, math.sqrt(2.0**k * delta), k, curve, t_range)


def caps_near_region(delta, surface="moment", curve=None):
    """Caps over ``s in [0, delta^(1/3))`` with t-length ``delta^(1/3)``."""
    delta = _check_delta(delta)
    cube = _cbrt(delta)
    kind, curve, t_range = _surface_args(surface, curve)
    return _moment_like_caps(kind, delta, 0.0, cube, cube, None, curve, t_range)


def near_partition(delta, surface="moment", curve=None) -> Partition:
    """The near-region caps alone, as a partition of ``[-1/2, 1/2] x [0, delta^(1/3))``."""
    kind, curve, _ = _surface_args(surface, curve)
    return Partition(float(delta), _indexed(caps_near_region(delta, kind, curve)), kind, curve)


def _surface_args(surface, curve):
    if isinstance(surface, geo.Curve):
        curve, surface = surface, "tangent"
    if surface == "moment":
        return "moment", None, (-0.5, 0.5)
    if surface == "tangent":
        if curve is None:
            raise ValueError("tangent partitions need a curve")
        return "tangent", curve, (curve.t_min, curve.t_max)
    raise ValueError(f"surface must be 'moment', 'tangent' or a Curve, got {surface!r}")


def _indexed(caps):
    return tuple(replace(c, index=i) for i, c in enumerate(caps))


def full_partition(delta, surface="moment", curve=None) -> Partition:
    """Near-region caps followed by every annulus, innermost first."""
    kind, curve, _ = _surface_args(surface, curve)
    caps = list(caps_near_region(delta, kind, curve))
    for lo, hi, k in annuli(delta)[1:]:
        caps.extend(caps_for_annulus(delta, k, kind, curve))
    return Partition(float(delta), _indexed(caps), kind, curve)


def cap_count_bound(delta) -> float:
    """Upper bound on ``len(full_partition(delta))``.

    Annulus ``k`` contributes at most ``(2^k delta)^(-1/2) + 1`` caps and
    the geometric series sums to ``(2 + sqrt 2) delta^(-1/2)``.
    """
    n_annuli = len(annuli(delta)) - 1
    return (2 + math.sqrt(2)) * delta**-0.5 + _cbrt(delta) ** -1 + n_annuli + 1


def parabola_partition(delta, n=2) -> Partition:
    """Cubes of side ``delta^(1/2)`` over ``[-1/2, 1/2]^(n-1)``."""
    delta = _check_delta(delta, allow_one=True)
    if n not in (2, 3):
        raise DomainError("n must be 2 or 3")
    edges = _tile(-0.5, 0.5, math.sqrt(delta))
    m = len(edges) - 1
    caps = []
    if n == 2:
        for i in range(m):
            caps.append(Cap("parabola-2", edges[i], edges[i + 1], -1.0, 1.0, delta, t_closed=(i == m - 1), s_closed=True, t_first=(i == 0), s_first=True))
    else:
        for j in range(m):
            for i in range(m):
                caps.append(
                    Cap(
                        "parabola-3",
                        edges[i],
                        edges[i + 1],
                        edges[j],
                        edges[j + 1],
                        delta,
                        t_closed=(i == m - 1),
                        s_closed=(j == m - 1),
                        t_first=(i == 0),
                        s_first=(j == 0),
                    )
                )
    return Partition(delta, _indexed(caps), f"parabola-{n}")


def cylinder_partition(delta) -> Partition:
    """Intervals of length ``delta^(1/2)`` in ``xi1``; ``xi3`` is free."""
    delta = _check_delta(delta, allow_one=True)
    edges = _tile(-0.5, 0.5, math.sqrt(delta))
    m = len(edges) - 1
    caps = [
        Cap("cylinder", edges[i], edges[i + 1], -math.inf, math.inf, delta, t_closed=(i == m - 1), s_closed=True, t_first=(i == 0), normal="xi2")
        for i in range(m)
    ]
    return Partition(delta, _indexed(caps), "cylinder")


def cone_partition(delta, coefficient=CONE_COEFFICIENT) -> Partition:
    """Sectors ``{gamma (t + 1, t^2 + 2t): t in theta, gamma in [1, 2]}`` of the cone.

    Membership also requires ``|xi3 - coefficient * xi2^2 / xi1| <= delta``.
    """
    delta = _check_delta(delta)
    edges = _tile(-0.5, 0.5, math.sqrt(delta))
    m = len(edges) - 1
    caps = [
        Cap(
            "cone",
            edges[i],
            edges[i + 1],
            1.0,
            2.0,
            delta,
            t_closed=(i == m - 1),
            s_closed=True,
            t_first=(i == 0),
            s_first=True,
            params=(float(coefficient),),
        )
        for i in range(m)
    ]
    return Partition(delta, _indexed(caps), "cone", params=(float(coefficient),))


def tube_partition(n_tubes, delta, direction=(1.0, 0.0, 0.0)) -> Partition:
    """``n_tubes`` slabs of length ``1/n_tubes`` along the unit segment through the origin.

    The segment is ``{u d : |u| <= 1/2}``; each tube keeps the points whose
    transverse coordinates are both at most ``delta`` in absolute value.
    """
    if n_tubes < 1:
        raise DomainError("need at least one tube")
    d = tuple(float(x) for x in tube_frame(direction)[0])
    edges = [-0.5 + i / n_tubes for i in range(n_tubes)] + [0.5]
    caps = [
        Cap("tube", edges[i], edges[i + 1], 0.0, 0.0, float(delta), t_closed=(i == n_tubes - 1), s_closed=True, t_first=(i == 0), s_first=True, normal="transverse", params=d)
        for i in range(n_tubes)
    ]
    return Partition(float(delta), _indexed(caps), "tube", params=d)


# ---------------------------------------------------------------------------
# sampling and overlap


def sample_cap(cap: Cap, n, rng) -> np.ndarray:
    """``n`` uniform samples of the cap's parameter box mapped to ambient space."""
    a = rng.uniform(cap.t_lo, cap.t_hi, n)
    if cap.kind == "tube":
        d, e1, e2 = tube_frame(cap.params)
        w = rng.uniform(-cap.delta, cap.delta, (n, 2))
        return a[:, None] * d + w[:, :1] * e1 + w[:, 1:] * e2
    s_lo, s_hi = cap.s_lo, cap.s_hi
    if not math.isfinite(s_lo) or not math.isfinite(s_hi):
        s_lo, s_hi = CYLINDER_SAMPLE_WINDOW
    b = rng.uniform(s_lo, s_hi, n)
    off = rng.uniform(-cap.delta, cap.delta, n)
    return lift_params(cap, a, b, off)


def lift_params(cap: Cap, a, b, off) -> np.ndarray:
    """Inverse of the chart: ambient point with chart coordinates ``(a, b, off)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    off = np.asarray(off, dtype=float)
    kind = cap.kind
    if kind == "moment":
        return geo.psi(a, b, off)
    if kind == "tangent":
        return geo.tangent_nbhd_point(cap.curve, a, b, off)
    if kind == "cylinder":
        return geo._stack(a, a * a + off, b)
    if kind == "parabola-2":
        return geo._stack(a, a * a + off)
    if kind == "parabola-3":
        return geo._stack(a, b, a * a + b * b + off)
    if kind == "cone":
        x1 = b * (a + 1)
        x2 = b * (a * a + 2 * a)
        return geo._stack(x1, x2, cap.params[0] * x2 * x2 / x1 + off)
    if kind == "tube":
        d, e1, _ = tube_frame(cap.params)
        return a[..., None] * d + off[..., None] * e1
    raise ValueError(kind)


def overlap_count(part_a: Partition, part_b: Partition, samples=10_000, seed=0):
    """Largest number of caps of one partition met by a single cap of the other.

    Samples ``samples`` points in every cap of both partitions, locates
    each sample in both, and records which cap pairs share a sample.

    Returns
    -------
    (int, int)
        Max over caps of ``part_a`` of distinct ``part_b`` caps met, and
        the converse.

    Raises
    ------
    SamplingError
        If some cap contains none of its own samples.
    """
    rng = np.random.default_rng(seed)
    pools = []
    for part in (part_a, part_b):
        for cap in part:
            pts = sample_cap(cap, samples, rng)
            own = part.locate(pts)
            if not np.any(own == cap.index):
                raise SamplingError(f"cap {cap.index} of {part.kind} received no samples")
            pools.append(pts)
    pts = np.concatenate(pools)
    la = part_a.locate(pts)
    lb = part_b.locate(pts)
    both = (la >= 0) & (lb >= 0)
    pairs = np.unique(np.stack([la[both], lb[both]], axis=1), axis=0)
    if len(pairs) == 0:
        return 0, 0
    deg_a = np.bincount(pairs[:, 0], minlength=len(part_a)).max()
    deg_b = np.bincount(pairs[:, 1], minlength=len(part_b)).max()
    return int(deg_a), int(deg_b)


# ---------------------------------------------------------------------------
# text format


def _fmt(x):
    return format(float(x), ".17g")


def dumps(partition: Partition) -> str:
    """One cap per line: ``kind k t_lo t_hi s_lo s_hi delta``."""
    lines = []
    for c in partition:
        k = "near" if c.near else ("-" if c.k is None else str(c.k))
        lines.append(" ".join([c.kind, k, _fmt(c.t_lo), _fmt(c.t_hi), _fmt(c.s_lo), _fmt(c.s_hi), _fmt(c.delta)]))
    return "\n".join(lines) + "\n"


def loads(text: str, curve: geo.Curve | None = None, params: tuple = ()) -> Partition:
    """Parse :func:`dumps` output; closed ends are restored from the extremes."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError("empty partition file")
    kind = rows[0][0]
    if not params:
        params = {"cone": (CONE_COEFFICIENT,), "tube": (1.0, 0.0, 0.0)}.get(kind, ())
    t_hi_max = max(float(r[3]) for r in rows)
    s_hi_max = max(float(r[5]) for r in rows)
    t_lo_min = min(float(r[2]) for r in rows)
    s_lo_min = min(float(r[4]) for r in rows)
    caps = []
    for r in rows:
        if r[0] != kind:
            raise ValueError("mixed cap kinds in one partition file")
        k = None if r[1] in ("near", "-") else int(r[1])
        t_lo, t_hi, s_lo, s_hi, delta = map(float, r[2:7])
        normal = {"tangent": "binormal", "cylinder": "xi2", "tube": "transverse"}.get(kind, "vertical")
        caps.append(
            Cap(
                kind,
                t_lo,
                t_hi,
                s_lo,
                s_hi,
                delta,
                k=k,
                t_closed=(t_hi == t_hi_max),
                s_closed=(s_hi == s_hi_max) if kind not in ("moment", "tangent") else (k == 0),
                t_first=(t_lo == t_lo_min),
                s_first=(s_lo == s_lo_min) and math.isfinite(s_lo),
                normal=normal,
                params=params,
                curve=curve,
            )
        )
    return Partition(caps[0].delta, _indexed(caps), kind, curve, params)
