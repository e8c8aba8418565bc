"""Band-limited test functions with lattice frequency support.

A :class:`TestFunction` is a finite exponential sum
``f(x) = sum_j c_j exp(2 pi i x . xi_j)`` whose frequencies sit on the
lattice ``eta Z^3``.  Such an ``f`` is periodic with period ``1/eta`` in
every coordinate, which is what makes its L^p norms computable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SamplingError, UnassignedFrequencyError
from .partition import Cap, Partition, lift_params, sample_cap, tube_frame

LATTICE_TOL = 1e-12


@dataclass(frozen=True)
class TestFunction:
    """Frequencies ``nodes * eta`` with complex coefficients."""

    __test__ = False  # not a pytest class

    nodes: np.ndarray
    coeffs: np.ndarray
    eta: float
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.int64).reshape(-1, 3)
        coeffs = np.array(self.coeffs, dtype=complex).reshape(-1)
        if len(nodes) != len(coeffs):
            raise ValueError("one coefficient per frequency")
        if not self.eta > 0:
            raise ValueError("lattice spacing must be positive")
        if len(nodes) and len(np.unique(nodes, axis=0)) != len(nodes):
            raise ValueError("frequencies must be pairwise distinct")
        nodes.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "eta", float(self.eta))

    @classmethod
    def from_frequencies(cls, freqs, coeffs, eta, *, snap=False, seed=None, meta=None):
        freqs = np.asarray(freqs, dtype=float).reshape(-1, 3)
        nodes = np.rint(freqs / eta)
        if not snap and np.any(np.abs(nodes * eta - freqs) > LATTICE_TOL):
            raise ValueError("frequencies are not on the lattice eta Z^3")
        return cls(nodes.astype(np.int64), coeffs, eta, seed, meta or {})

    @property
    def freqs(self) -> np.ndarray:
        return self.nodes * self.eta

    @property
    def period(self) -> float:
        return 1.0 / self.eta

    def __len__(self):
        return len(self.coeffs)

    def subset(self, mask) -> "TestFunction":
        mask = np.asarray(mask)
        return TestFunction(self.nodes[mask], self.coeffs[mask], self.eta, self.seed, dict(self.meta))

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if other.eta != self.eta:
            raise ValueError("lattices differ")
        nodes = np.concatenate([self.nodes, other.nodes])
        coeffs = np.concatenate([self.coeffs, other.coeffs])
        uniq, inv = np.unique(nodes, axis=0, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=complex)
        np.add.at(summed, inv.ravel(), coeffs)
        return TestFunction(uniq, summed, self.eta, self.seed)

    def scale(self, a) -> "TestFunction":
        return TestFunction(self.nodes, a * self.coeffs, self.eta, self.seed, dict(self.meta))


def _unit_phases(rng, n):
    return np.exp(2j * np.pi * rng.random(n))


def _default_eta(delta):
    return float(delta) / 4.0


def random_sign_packet(partition: Partition, seed=0, eta=None) -> TestFunction:
    """One lattice frequency per cap, at the image of the cap's parameter centre.

    Coefficients are unit complex numbers with phases drawn from
    ``numpy.random.default_rng(seed)``.
    """
    if len(partition) == 0:
        raise ValueError("empty partition")
    eta = _default_eta(partition.delta) if eta is None else float(eta)
    centers = np.stack([lift_params(c, c.t_center, _finite_center(c), 0.0) for c in partition])
    rng = np.random.default_rng(seed)
    f = TestFunction.from_frequencies(
        centers, _unit_phases(rng, len(centers)), eta, snap=True, seed=seed, meta={"family": "random-sign"}
    )
    return f


def _finite_center(cap: Cap):
    if math.isfinite(cap.s_lo) and math.isfinite(cap.s_hi):
        return cap.s_center
    return 0.0


def lattice_packet(partition: Partition, density=1, seed=0, eta=None, max_rounds=64) -> TestFunction:
    """``density`` distinct lattice frequencies inside every cap.

    Candidates are drawn uniformly from each cap's parameter box, snapped
    to the lattice and kept only if the cap still contains them.

    Raises
    ------
    SamplingError
        If some cap cannot host ``density`` lattice points.
    """
    if density < 1:
        raise ValueError("density must be at least 1")
    eta = _default_eta(partition.delta) if eta is None else float(eta)
    rng = np.random.default_rng(seed)
    all_nodes = []
    for cap in partition:
        found = np.empty((0, 3), dtype=np.int64)
        for _ in range(max_rounds):
            cand = np.rint(sample_cap(cap, 4 * density + 16, rng) / eta).astype(np.int64)
            cand = cand[cap.contains(cand * eta)]
            found = np.unique(np.concatenate([found, cand]), axis=0)
            if len(found) >= density:
                break
        if len(found) < density:
            raise SamplingError(f"cap {cap.index} holds fewer than {density} lattice points at eta={eta}")
        pick = rng.choice(len(found), size=density, replace=False)
        all_nodes.append(found[np.sort(pick)])
    nodes = np.concatenate(all_nodes)
    return TestFunction(nodes, _unit_phases(rng, len(nodes)), eta, seed, {"family": "lattice", "density": density})


def smooth_bump(u):
    """``exp(1 - 1/(1 - u^2))`` on ``|u| < 1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def tube_profile(xi, direction, delta):
    """Smooth approximation of the indicator of the tube around the unit segment."""
    d, e1, e2 = tube_frame(direction)
    xi = np.asarray(xi, dtype=float)
    return smooth_bump(2.0 * (xi @ d)) * smooth_bump((xi @ e1) / delta) * smooth_bump((xi @ e2) / delta)


def bump_indicator_tube(direction=(1.0, 0.0, 0.0), length_N=1, delta=1 / 256, eta=None) -> TestFunction:
    """Lattice samples of a smooth bump filling the ``delta``-tube of a unit segment.

    The segment is ``{u d : |u| <= 1/2}``.  Coefficients are the product of
    a bump of width 1 along the segment and two bumps of width ``delta``
    across it.  ``length_N`` records how many tubes the segment is cut
    into; :func:`devdecouple.partition.tube_partition` builds them.
    """
    if length_N < 1:
        raise ValueError("need at least one tube")
    eta = _default_eta(delta) if eta is None else float(eta)
    if eta > delta / 4 * (1 + 1e-12):
        raise ValueError("lattice spacing must satisfy eta <= delta / 4")
    d, e1, e2 = tube_frame(direction)
    corners = np.array([su * 0.5 * d + a * delta * e1 + b * delta * e2 for su in (-1, 1) for a in (-1, 1) for b in (-1, 1)])
    lo = np.floor(corners.min(axis=0) / eta).astype(np.int64)
    hi = np.ceil(corners.max(axis=0) / eta).astype(np.int64)
    ny = np.arange(lo[1], hi[1] + 1)
    nz = np.arange(lo[2], hi[2] + 1)
    grid_yz = np.stack(np.meshgrid(ny, nz, indexing="ij"), axis=-1).reshape(-1, 2)
    nodes, vals = [], []
    for x in range(lo[0], hi[0] + 1):
        cand = np.column_stack([np.full(len(grid_yz), x), grid_yz])
        prof = tube_profile(cand * eta, d, delta)
        keep = prof > 0
        if keep.any():
            nodes.append(cand[keep])
            vals.append(prof[keep])
    nodes = np.concatenate(nodes)
    vals = np.concatenate(vals)
    meta = {"family": "tube", "n_tubes": int(length_N), "delta": float(delta), "direction": tuple(map(float, d))}
    return TestFunction(nodes, vals.astype(complex), eta, None, meta)


def restrict(f: TestFunction, cap: Cap) -> TestFunction:
    """Fourier restriction of ``f`` to ``cap``: keep the frequencies it contains."""
    if len(f) == 0:
        return f
    return f.subset(cap.contains(f.freqs))


def assign(f: TestFunction, partition: Partition, *, strict=True) -> np.ndarray:
    """Cap index of every frequency (``-1`` for none).

    Raises
    ------
    UnassignedFrequencyError
        With ``strict`` when some frequency lies in no cap.
    """
    labels = partition.locate(f.freqs) if len(f) else np.empty(0, dtype=np.int64)
    if strict and np.any(labels < 0):
        raise UnassignedFrequencyError(f"{int(np.sum(labels < 0))} frequencies lie outside every cap")
    return labels


def evaluate(f: TestFunction, x, chunk=4096) -> np.ndarray:
    """``sum_j c_j exp(2 pi i x . xi_j)`` for points ``x`` of shape ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 3)
    out = np.empty(len(pts), dtype=complex)
    freqs = f.freqs
    for i in range(0, len(pts), chunk):
        phase = pts[i : i + chunk] @ freqs.T
        out[i : i + chunk] = np.exp(2j * np.pi * phase) @ f.coeffs
    return out.reshape(shape)


def evaluate_naive(f: TestFunction, x) -> complex:
    """Term-by-term sum at a single point; reference for :func:`evaluate`."""
    x1, x2, x3 = (float(c) for c in x)
    total = 0j
    for (a, b, c), coef in zip(f.freqs.tolist(), f.coeffs.tolist()):
        total += coef * cmath.exp(2j * math.pi * (x1 * a + x2 * b + x3 * c))
    return total


def dumps(f: TestFunction) -> str:
    """Header with ``eta`` and ``seed`` then one ``xi1 xi2 xi3 re im`` row per frequency."""
    lines = [f"# eta {format(f.eta, '.17g')}", f"# seed {'' if f.seed is None else f.seed}".rstrip()]
    for xi, c in zip(f.freqs, f.coeffs):
        lines.append(" ".join(format(float(v), ".17g") for v in (*xi, c.real, c.imag)))
    return "\n".join(lines) + "\n"


def loads(text: str) -> TestFunction:
    eta = None
    seed = None
    rows = []
    for ln in text.splitlines():
        if ln.startswith("#"):
            parts = ln[1:].split()
            if parts and parts[0] == "eta":
                eta = float(parts[1])
            elif parts and parts[0] == "seed" and len(parts) > 1:
                seed = int(parts[1])
        elif ln.strip():
            rows.append([float(v) for v in ln.split()])
    if eta is None:
        raise ValueError("missing eta header")
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return TestFunction.from_frequencies(arr[:, :3], arr[:, 3] + 1j * arr[:, 4], eta, seed=seed)
