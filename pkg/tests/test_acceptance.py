"""Acceptance criteria, one test each.

Every test prints ``[ACCEPT n] PASS|FAIL ...``; the lines are repeated in
the pytest terminal summary.  Run as a script for the lines alone::

    python tests/test_acceptance.py
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import record  # noqa: E402

from devdecouple import cli, norms  # noqa: E402
from devdecouple import geometry as geo  # noqa: E402
from devdecouple import partition as P  # noqa: E402
from devdecouple import verify as V  # noqa: E402

DELTAS_6_12 = [2.0**-e for e in range(6, 13)]


def test_accept_1_cone_identity():
    start = time.perf_counter()
    rep = V.check_cone_identity(10**6, seed=0)
    took = time.perf_counter() - start
    ok = rep.passed and rep.residual <= 1e-12 and took < 10
    assert record(1, ok, f"cone identity max residual {rep.residual:.3g} over 1e6 points in {took:.2f}s")


def test_accept_2_cylinder_containment():
    start = time.perf_counter()
    reps = [V.check_cylinder_containment(d, 100_000, seed=i) for i, d in enumerate(DELTAS_6_12)]
    took = time.perf_counter() - start
    worst = max(r.residual for r in reps)
    ok = all(r.passed for r in reps) and took < 30
    assert record(2, ok, f"cylinder containment worst excess {worst:.3g} for delta 2^-6..2^-12 in {took:.2f}s")


def test_accept_3_jacobian():
    rng = np.random.default_rng(3)
    n = 10_000
    t, s, v = rng.uniform(-0.5, 0.5, n), rng.uniform(0, 2, n), rng.uniform(-0.01, 0.01, n)
    h = 1e-5
    cols = []
    for axis in range(3):
        step = np.zeros((3, 1))
        step[axis] = h
        plus = geo.psi(t + step[0], s + step[1], v + step[2])
        minus = geo.psi(t - step[0], s - step[1], v - step[2])
        cols.append((plus - minus) / (2 * h))
    det = np.abs(np.linalg.det(np.stack(cols, axis=-1)))
    rel = np.abs(det - 2 * s) / (2 * s)
    rel_api = np.abs(geo.jacobian_psi(t, s, v) - det) / (2 * s)
    worst = float(max(rel.max(), rel_api.max()))
    assert record(3, worst <= 1e-6, f"|det DPsi| vs 2s worst relative error {worst:.3g} on 1e4 points")


def test_accept_4_overlap():
    worst = (0, 0)
    for d in DELTAS_6_12:
        a, b = P.overlap_count(P.near_partition(d), P.cylinder_partition(d ** (2 / 3)), samples=2000)
        worst = (max(worst[0], a), max(worst[1], b))
    ok = max(worst) <= 2
    assert record(4, ok, f"near vs cylinder caps max overlap {worst} for delta 2^-6..2^-12")


def test_accept_5_ray_separation():
    reps = [V.check_ray_separation(j, (1000, 100)) for j in range(5)]
    margin = min(-r.residual for r in reps)
    ok = all(r.passed for r in reps)
    assert record(5, ok, f"ray separation smallest margin {margin:.3g} on 1000x100 grids for j=0..4")


def test_accept_6_frenet():
    windows = [2.0**-e for e in range(3, 9)]
    helix = V.check_frenet_expansion(geo.helix(), window_list=windows)
    moment = V.check_frenet_expansion(geo.moment_curve(), window_list=windows)
    orders = (helix.extra["order"], moment.extra["order"])
    ok = helix.passed and moment.passed and min(orders) >= 3.5
    assert record(6, ok, f"Frenet remainder order helix {orders[0]:.4f}, moment curve {orders[1]:.4f}")


def test_accept_7_flatness():
    start = time.perf_counter()
    certs = V.flatness_sweep([P.full_partition(d) for d in DELTAS_6_12], n_samples=2000, seed=7)
    took = time.perf_counter() - start
    cs = np.array([c.C for c in certs])
    spread = cs.max() / cs.min()
    ok = spread <= 20
    detail = f"flatness C in [{cs.min():.3g}, {cs.max():.3g}] over {len(cs)} annulus caps, max/min {spread:.3g} in {took:.1f}s"
    assert record(7, ok, detail)


def test_accept_8_sharpness():
    start = time.perf_counter()
    parts = []
    ok = True
    for p in (4, 6):
        ests = norms.sharpness_sweep([8, 16, 32, 64], p)
        fit = norms.exponent_fit([(e.extra["n_tubes"], e.ratio) for e in ests])
        target = 0.5 - 1 / p
        ok &= abs(fit.slope - target) <= 0.1
        parts.append(f"p={p} slope {fit.slope:.4f} (target {target:.4f})")
    took = time.perf_counter() - start
    ok &= took < 600
    assert record(8, ok, "tube sweep " + ", ".join(parts) + f" in {took:.1f}s")


def test_accept_9_orthogonality():
    ests = norms.decoupling_sweep("moment", [2.0**-e for e in range(4, 10)], 2, seed=9)
    worst = max(abs(e.ratio - 1) for e in ests)
    assert record(9, worst <= 1e-9, f"p=2 random-sign ratio max |D-1| = {worst:.3g} over delta 2^-4..2^-9")


def test_accept_10_growth():
    start = time.perf_counter()
    ests = norms.decoupling_sweep("moment", [2.0**-e for e in range(4, 10)], 6, seed=10)
    fit = norms.exponent_fit([(1 / e.delta, e.ratio) for e in ests])
    above = all(e.ratio >= e.floor for e in ests)
    took = time.perf_counter() - start
    ok = fit.slope <= 0.1 and above and took < 1800
    ratios = ", ".join(f"{e.ratio:.3f}" for e in ests)
    assert record(10, ok, f"p=6 growth exponent {fit.slope:.4f}, ratios [{ratios}], floor held={above}, {took:.1f}s")


def test_accept_11_determinism(tmp_path):
    configs = {
        "sweep": 'deltas = [0.0625, 0.03125, 0.015625, 0.0078125]\np = [2.0, 6.0]\ncrosscheck_samples = 4096\n',
        "sharpness": "n_tubes = [8, 16, 32]\n",
        "partition": "deltas = [0.001953125]\n",
        "verify": "samples = 5000\nflatness_samples = 300\n",
    }
    same = True
    for kind, text in configs.items():
        cfg = tmp_path / f"{kind}.toml"
        cfg.write_text(text)
        blobs = []
        for i, threads in enumerate(["1", "4", "1"]):
            out = tmp_path / f"{kind}-{i}"
            cli.main([kind, "--config", str(cfg), "--out", str(out), "--threads", threads, "--seed", "11"])
            blobs.append((out / "results.csv").read_bytes())
        same &= blobs[0] == blobs[1] == blobs[2]
    assert record(11, same, "results.csv byte-identical across reruns and threads 1/4 for all four experiments")


if __name__ == "__main__":
    import tempfile

    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_accept_") and callable(fn):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
