"""L^p norms of lattice exponential sums, decoupling ratios and exponent fits.

Norms are taken over one period cell ``[0, 1/eta)^3`` with normalised
(probability) measure.  This stands in for ``L^p(R^3)``: the ratios this
module reports are scale-free, so the normalisation cancels.

Two methods are offered.

``grid``
    Equal-weight mean of ``|f|^p`` over a grid of ``R_1 x R_2 x R_3``
    points of the cell.  Since ``|f|`` is unchanged by shifting every
    frequency, only the *span* of the frequency set in lattice units
    matters.  For ``p = 2q`` the grid mean equals the integral once
    ``R_i >= q * span_i + 1``.  Small problems are evaluated by FFT on
    the grid; large sparse ones through the discrete Parseval identity
    ``mean |f|^(2q) = sum |coefficients of f^q|^2`` on the same grid,
    which never materialises it.
``monte-carlo``
    Batched uniform sampling of the cell with a standard error from the
    spread of at least 16 batch means.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from ._validation import check_positive_pairs
from .exceptions import ResolutionError, UnassignedFrequencyError
from .partition import Partition, full_partition, tube_partition
from .synth import TestFunction, assign, bump_indicator_tube, evaluate, lattice_packet, random_sign_packet

MAX_GRID_POINTS = 2**24
MIN_BATCHES = 16
ODD_P_AGREEMENT = 5e-3
SPARSE_CHUNK = 2**22


@dataclass(frozen=True)
class NormEstimate:
    value: float
    method: str
    stderr: float = 0.0
    resolution: tuple | int | None = None
    backend: str = ""
    flagged: bool = False


@dataclass(frozen=True)
class DecouplingEstimate:
    """``ratio = norm / sqrt(sum(cap_norms ** 2))``."""

    delta: float
    p: float
    ratio: float
    norm: NormEstimate
    cap_norms: np.ndarray
    n_caps: int
    descriptor: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def recompute(self) -> float:
        return self.norm.value / math.sqrt(float(np.sum(self.cap_norms**2)))

    @property
    def floor(self) -> float:
        """Cauchy-Schwarz floor ``|P|^(-1/2)``."""
        return self.n_caps**-0.5


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    rss: float
    x: np.ndarray
    y: np.ndarray

    def predict(self, scale):
        return np.exp(self.intercept) * np.asarray(scale, dtype=float) ** self.slope


def _even_order(p):
    q = p / 2
    return int(q) if float(q).is_integer() and q >= 1 else None


def _span(f: TestFunction):
    if len(f) == 0:
        return np.zeros(3, dtype=np.int64)
    return f.nodes.max(axis=0) - f.nodes.min(axis=0)


def nyquist_resolution(f: TestFunction, p) -> tuple:
    """Smallest per-axis grid for which the grid mean of ``|f|^p`` is exact.

    For non-even ``p`` no finite grid is exact; ``2 span + 1`` is used as
    the baseline and checked against its double.
    """
    q = _even_order(p)
    factor = q if q is not None else 2
    return tuple(int(factor * s + 1) for s in _span(f))


def _as_resolution(resolution):
    if resolution is None:
        return None
    if np.ndim(resolution) == 0:
        return (int(resolution),) * 3
    return tuple(int(r) for r in resolution)


def _grid_mean_fft(f: TestFunction, p, res):
    rel = f.nodes - f.nodes.min(axis=0)
    a = np.zeros(res, dtype=complex)
    np.add.at(a, (rel[:, 0] % res[0], rel[:, 1] % res[1], rel[:, 2] % res[2]), f.coeffs)
    vals = scipy.fft.ifftn(a, norm="forward", workers=1)
    return float(np.mean(np.abs(vals) ** p))


def _sparse_power(f: TestFunction, q, base):
    """Coefficients of ``f**q`` keyed by a mixed-radix encoding of the nodes."""
    rel = f.nodes - f.nodes.min(axis=0)
    keys = rel[:, 0] + base[0] * (rel[:, 1] + base[1] * rel[:, 2])
    gk, gc = keys, f.coeffs
    for _ in range(q - 1):
        acc_k, acc_c = [], []
        step = max(1, SPARSE_CHUNK // max(len(keys), 1))
        for i in range(0, len(gk), step):
            kk = (gk[i : i + step, None] + keys[None, :]).ravel()
            cc = (gc[i : i + step, None] * f.coeffs[None, :]).ravel()
            u, inv = np.unique(kk, return_inverse=True)
            acc_k.append(u)
            acc_c.append(np.bincount(inv, cc.real, len(u)) + 1j * np.bincount(inv, cc.imag, len(u)))
        kk = np.concatenate(acc_k)
        cc = np.concatenate(acc_c)
        gk, inv = np.unique(kk, return_inverse=True)
        gc = np.bincount(inv, cc.real, len(gk)) + 1j * np.bincount(inv, cc.imag, len(gk))
    return gk, gc


def _grid_mean_sparse(f: TestFunction, q, res):
    # on an alias-free grid the discrete Parseval identity gives the mean exactly
    base = [int(r) for r in res]
    _, gc = _sparse_power(f, q, base)
    return float(np.sum(np.abs(gc) ** 2))


def _lp_grid(f, p, resolution, max_points):
    need = nyquist_resolution(f, p)
    q = _even_order(p)
    res = _as_resolution(resolution)
    if res is None:
        res = tuple(scipy.fft.next_fast_len(r) for r in need)
    elif q is not None and any(r < n for r, n in zip(res, need)):
        raise ResolutionError(f"grid {res} is below the alias-free size {need} for p={p}")
    if len(f) == 0:
        return NormEstimate(0.0, "grid", 0.0, res, "empty")
    n_points = math.prod(res)
    if q is not None:
        if n_points <= max_points:
            mean = _grid_mean_fft(f, p, res)
            backend = "fft"
        else:
            mean = _grid_mean_sparse(f, q, res)
            backend = "parseval"
        return NormEstimate(mean ** (1 / p), "grid", 0.0, res, backend)
    fine = tuple(2 * r for r in res)
    if math.prod(fine) > max_points:
        raise ResolutionError(f"grid {fine} exceeds {max_points} points; use method='monte-carlo'")
    coarse = _grid_mean_fft(f, p, res) ** (1 / p)
    value = _grid_mean_fft(f, p, fine) ** (1 / p)
    flagged = abs(value - coarse) > ODD_P_AGREEMENT * max(value, 1e-300)
    return NormEstimate(value, "grid", 0.0, fine, "fft", flagged)


def _lp_monte_carlo(f, p, n_samples, n_batches, seed):
    if n_batches < MIN_BATCHES:
        raise ValueError(f"monte-carlo needs at least {MIN_BATCHES} batches")
    per = max(1, n_samples // n_batches)
    rng = np.random.default_rng(seed)
    means = np.empty(n_batches)
    for b in range(n_batches):
        x = rng.random((per, 3)) * f.period
        means[b] = np.mean(np.abs(evaluate(f, x)) ** p)
    mean = float(np.mean(means))
    se_mean = float(np.std(means, ddof=1) / math.sqrt(n_batches))
    value = mean ** (1 / p)
    se = value * se_mean / (p * mean) if mean > 0 else 0.0
    return NormEstimate(value, "monte-carlo", se, per * n_batches, "sampling")


def lp_norm(f: TestFunction, p, method="grid", *, resolution=None, n_samples=2**16, n_batches=MIN_BATCHES,
            seed=0, max_points=MAX_GRID_POINTS) -> NormEstimate:
    """``(mean over the period cell of |f|^p)^(1/p)``.

    Raises
    ------
    ResolutionError
        For ``method='grid'`` when an explicit ``resolution`` is below the
        alias-free size for even ``p``, or when a non-even ``p`` needs a
        grid larger than ``max_points``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if method == "grid":
        return _lp_grid(f, p, resolution, max_points)
    if method in ("monte-carlo", "mc"):
        return _lp_monte_carlo(f, p, n_samples, n_batches, seed)
    raise ValueError(f"unknown method {method!r}")


def crosscheck(f: TestFunction, p, n_samples=2**18, seed=0):
    """Grid value, Monte-Carlo estimate and their distance in standard errors."""
    g = lp_norm(f, p, "grid")
    m = lp_norm(f, p, "monte-carlo", n_samples=n_samples, seed=seed)
    z = abs(g.value - m.value) / m.stderr if m.stderr > 0 else (0.0 if g.value == m.value else math.inf)
    return g, m, z


def _cap_seed(seed, index):
    return int(np.random.SeedSequence([0 if seed is None else int(seed), int(index)]).generate_state(1)[0])


def decoupling_ratio(f: TestFunction, partition: Partition, p, method="grid", *, threads=1,
                     descriptor="", crosscheck_samples=None, **norm_kw) -> DecouplingEstimate:
    """Empirical decoupling ratio of ``f`` against ``partition``.

    With ``crosscheck_samples`` and the grid method, the total norm is also
    estimated by Monte-Carlo and the discrepancy in standard errors is
    stored under ``extra["crosscheck_z"]``.

    Raises
    ------
    UnassignedFrequencyError
        If some frequency of ``f`` lies in no cap.
    """
    labels = assign(f, partition)
    groups = {}
    for j, lab in enumerate(labels.tolist()):
        groups.setdefault(lab, []).append(j)
    seed = norm_kw.pop("seed", f.seed if f.seed is not None else 0)

    def cap_norm(i):
        idx = groups.get(i)
        if not idx:
            return 0.0
        kw = dict(norm_kw)
        if method != "grid":
            kw["seed"] = _cap_seed(seed, i)
        return lp_norm(f.subset(np.array(idx)), p, method, **kw).value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cap_norms = np.array(list(pool.map(cap_norm, range(len(partition)))))
    else:
        cap_norms = np.array([cap_norm(i) for i in range(len(partition))])
    kw = dict(norm_kw)
    if method != "grid":
        kw["seed"] = seed
    total = lp_norm(f, p, method, **kw)
    denom = math.sqrt(float(np.sum(cap_norms**2)))
    if denom == 0:
        raise UnassignedFrequencyError("test function has no frequencies")
    extra = {}
    if crosscheck_samples and method == "grid":
        mc = lp_norm(f, p, "monte-carlo", n_samples=crosscheck_samples, seed=seed)
        extra["crosscheck_mc"] = mc.value
        extra["crosscheck_z"] = abs(total.value - mc.value) / mc.stderr if mc.stderr > 0 else 0.0
    return DecouplingEstimate(
        float(partition.delta), float(p), total.value / denom, total, cap_norms, len(partition),
        descriptor or str(f.meta.get("family", "")), f.seed, extra,
    )


def exponent_fit(points) -> ExponentFit:
    """Least-squares line through ``(log scale, log D)``."""
    pts = check_positive_pairs(points)
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("scales must not all coincide")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    rss = float(np.sum((y - intercept - slope * x) ** 2))
    return ExponentFit(slope, intercept, rss, x, y)


def decoupling_sweep(surface, delta_list, p, family="random-sign", seed=0, *, method="grid", density=1,
                     threads=1, curve=None, **norm_kw):
    """Decoupling ratios over a decreasing list of dyadic ``delta``."""
    out = []
    for delta in delta_list:
        part = full_partition(delta, surface, curve)
        if family == "random-sign":
            f = random_sign_packet(part, seed)
        elif family == "lattice":
            f = lattice_packet(part, density, seed)
        else:
            raise ValueError(f"unknown family {family!r}")
        out.append(decoupling_ratio(f, part, p, method, threads=threads, descriptor=family, **norm_kw))
    return out


def sharpness_sweep(n_list, p, delta=1 / 256, *, direction=(1.0, 0.0, 0.0), eta=None, method="grid",
                    threads=1, **norm_kw):
    """Ratios for the smooth tube cut into ``N`` pieces, one per ``N``."""
    f = bump_indicator_tube(direction, 1, delta, eta)
    out = []
    for n in n_list:
        part = tube_partition(n, delta, direction)
        est = decoupling_ratio(f, part, p, method, threads=threads, descriptor=f"tube N={n}", **norm_kw)
        est.extra["n_tubes"] = int(n)
        out.append(est)
    return out
