import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devdecouple import norms as N
from devdecouple import partition as P
from devdecouple import synth as S
from devdecouple.exceptions import ResolutionError, UnassignedFrequencyError


def rand_function(seed, m=10, spread=20, eta=1 / 64):
    rng = np.random.default_rng(seed)
    nodes = np.unique(rng.integers(-spread, spread, (m, 3)), axis=0)
    coeffs = np.exp(2j * np.pi * rng.random(len(nodes))) * rng.uniform(0.5, 1.5, len(nodes))
    return S.TestFunction(nodes, coeffs, eta, seed)


def brute_mean(f, p, res):
    """Mean of |f|^p on an equispaced grid by direct summation."""
    axes = [np.arange(r) * f.period / r for r in res]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return np.mean(np.abs(S.evaluate(f, grid)) ** p)


def test_single_frequency_norm_is_one():
    f = S.TestFunction([[4, -7, 2]], [1.0], 1 / 32)
    for p in (1, 2, 3.5, 4, 6):
        assert N.lp_norm(f, p).value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [1, 5, 17])
def test_p2_is_root_m(m):
    f = S.TestFunction(np.arange(m)[:, None] * np.array([[3, 1, -2]]), np.ones(m), 1 / 32)
    assert N.lp_norm(f, 2).value == pytest.approx(math.sqrt(m), rel=1e-12)


@pytest.mark.parametrize("p", [2, 4, 6])
def test_grid_matches_brute_force(p):
    f = rand_function(1, 6, spread=4)
    res = N.nyquist_resolution(f, p)
    assert N.lp_norm(f, p).value ** p == pytest.approx(brute_mean(f, p, res), rel=1e-10)


def test_sparse_parseval_matches_fft():
    f = rand_function(2, 12)
    for p in (2, 4, 6):
        dense = N.lp_norm(f, p)
        sparse = N.lp_norm(f, p, max_points=1)
        assert dense.backend == "fft" and sparse.backend == "parseval"
        assert sparse.value == pytest.approx(dense.value, rel=1e-10)


def test_fourth_moment_combinatorial_oracle():
    # mean |f|^4 = sum over a+b=c+d of c_a c_b conj(c_c c_d)
    f = rand_function(3, 8)
    n, c = f.nodes, f.coeffs
    total = 0j
    for i in range(len(c)):
        for j in range(len(c)):
            for k in range(len(c)):
                target = n[i] + n[j] - n[k]
                hit = np.flatnonzero(np.all(n == target, axis=1))
                for l in hit:
                    total += c[i] * c[j] * np.conj(c[k] * c[l])
    assert N.lp_norm(f, 4).value ** 4 == pytest.approx(total.real, rel=1e-10)


def test_resolution_error():
    f = rand_function(4, 6)
    need = N.nyquist_resolution(f, 4)
    with pytest.raises(ResolutionError):
        N.lp_norm(f, 4, resolution=tuple(r - 1 for r in need))
    ok = N.lp_norm(f, 4, resolution=need)
    assert ok.value == pytest.approx(N.lp_norm(f, 4).value, rel=1e-12)


def test_odd_p_flagging():
    f = rand_function(5, 6, spread=5)
    est = N.lp_norm(f, 3)
    assert not est.flagged
    assert est.value == pytest.approx(N.lp_norm(f, 3, "monte-carlo", n_samples=2**18).value, rel=0.02)


def test_monte_carlo_batches():
    f = rand_function(6)
    est = N.lp_norm(f, 4, "monte-carlo", n_samples=2**14)
    assert est.stderr > 0 and est.method == "monte-carlo"
    with pytest.raises(ValueError):
        N.lp_norm(f, 4, "monte-carlo", n_batches=8)
    again = N.lp_norm(f, 4, "monte-carlo", n_samples=2**14)
    assert again == est


def test_grid_vs_dense_monte_carlo():
    f = rand_function(7, 10)
    g, m, z = N.crosscheck(f, 4, n_samples=2**20, seed=11)
    assert z <= 3, (g.value, m.value, m.stderr)


def test_invalid_p_and_method():
    f = rand_function(8)
    with pytest.raises(ValueError):
        N.lp_norm(f, 0.5)
    with pytest.raises(ValueError):
        N.lp_norm(f, 2, "quadrature")


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_monotone_in_p(seed):
    f = rand_function(seed, 6, spread=6)
    vals = [N.lp_norm(f, p).value for p in (1, 2, 4, 6)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000), st.sampled_from([2, 4, 6]))
@settings(max_examples=25, deadline=None)
def test_triangle_inequality(seed, p):
    f = rand_function(seed, 6, spread=6)
    g = rand_function(seed + 1, 6, spread=6)
    assert N.lp_norm(f + g, p).value <= N.lp_norm(f, p).value + N.lp_norm(g, p).value + 1e-9


def test_decoupling_ratio_p2_disjoint():
    part = P.full_partition(2.0**-6)
    f = S.lattice_packet(part, 3, seed=1)
    est = N.decoupling_ratio(f, part, 2)
    assert est.ratio == pytest.approx(1.0, abs=1e-12)
    assert est.recompute() == pytest.approx(est.ratio, abs=1e-12)


def test_decoupling_ratio_single_cap():
    part = P.full_partition(2.0**-6)
    f = S.restrict(S.lattice_packet(part, 5, seed=2), part[7])
    assert N.decoupling_ratio(f, part, 6).ratio == pytest.approx(1.0, abs=1e-12)


def test_decoupling_ratio_unassigned():
    part = P.full_partition(2.0**-6)
    f = S.TestFunction.from_frequencies([[0.0, 1.0, 0.0]], [1.0], part.delta / 4, snap=True)
    with pytest.raises(UnassignedFrequencyError):
        N.decoupling_ratio(f, part, 4)


def test_decoupling_ratio_threads_identical():
    part = P.full_partition(2.0**-7)
    f = S.random_sign_packet(part, 3)
    a = N.decoupling_ratio(f, part, 6, threads=1)
    b = N.decoupling_ratio(f, part, 6, threads=3)
    assert a.ratio == b.ratio and np.array_equal(a.cap_norms, b.cap_norms)


def test_decoupling_ratio_floor_and_recompute():
    for e in (4, 6, 8):
        part = P.full_partition(2.0**-e)
        est = N.decoupling_ratio(S.random_sign_packet(part, e), part, 6)
        assert est.ratio >= est.floor
        assert abs(est.recompute() - est.ratio) <= 1e-12


def test_tube_ratio_near_prediction():
    est = N.sharpness_sweep([16], 6)[0]
    assert 16 ** (1 / 3) / 2 <= est.ratio <= 2 * 16 ** (1 / 3)


def test_exponent_fit_examples():
    assert N.exponent_fit([(1, 1), (2, 2), (4, 4)]).slope == pytest.approx(1.0, abs=1e-14)
    assert N.exponent_fit([(1, 3), (2, 3), (4, 3)]).slope == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        N.exponent_fit([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        N.exponent_fit([(1, 1), (2, -2), (3, 3)])


@given(st.lists(st.tuples(st.floats(0.01, 100), st.floats(0.01, 100)), min_size=3, max_size=12, unique_by=lambda x: x[0]))
def test_exponent_fit_matches_polyfit(points):
    fit = N.exponent_fit(points)
    arr = np.log(np.array(points))
    slope, intercept = np.polyfit(arr[:, 0], arr[:, 1], 1)
    assert fit.slope == pytest.approx(slope, rel=1e-6, abs=1e-8)
    assert fit.intercept == pytest.approx(intercept, rel=1e-6, abs=1e-8)


def test_sweep_length_one_matches_direct():
    d = 2.0**-6
    est = N.decoupling_sweep("moment", [d], 4, seed=3)[0]
    part = P.full_partition(d)
    direct = N.decoupling_ratio(S.random_sign_packet(part, 3), part, 4)
    assert est.ratio == direct.ratio


def test_sweep_p2_ratios_at_most_one():
    for est in N.decoupling_sweep("moment", [2.0**-e for e in range(4, 9)], 2, seed=1):
        assert est.ratio <= 1 + 1e-9


def test_sweep_lattice_family_deterministic():
    a = N.decoupling_sweep("moment", [2.0**-4, 2.0**-5], 4, "lattice", seed=2, density=2)
    b = N.decoupling_sweep("moment", [2.0**-4, 2.0**-5], 4, "lattice", seed=2, density=2)
    assert [x.ratio for x in a] == [x.ratio for x in b]
    with pytest.raises(ValueError):
        N.decoupling_sweep("moment", [2.0**-4], 4, "gaussian")


def test_crosscheck_recorded():
    part = P.full_partition(2.0**-5)
    est = N.decoupling_ratio(S.random_sign_packet(part, 0), part, 4, crosscheck_samples=2**15)
    assert est.extra["crosscheck_z"] <= 3
