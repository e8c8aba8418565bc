"""Batch experiment runner.

Usage::

    devdecouple {partition,verify,sweep,sharpness} [--config FILE] [--out DIR]
                [--threads N] [--seed U64]

The config is a TOML document of flat keys (see ``DEFAULTS``).  Every run
writes ``results.csv`` (rewritten, byte-identical for identical config and
seed), ``fit.svg`` when a fit exists, and appends one JSON line per record
to ``records.jsonl``.  Exit status is 0 when every embedded check passes,
1 when some check fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import geometry as geo
from . import norms, partition, verify
from ._validation import is_dyadic
from .exceptions import ConfigError

KINDS = ("partition", "verify", "sweep", "sharpness")
CSV_COLUMNS = ("kind", "delta", "k", "p", "n_caps", "value", "stderr", "seed")
U64_MAX = 2**64 - 1

DEFAULTS = {
    "kind": None,
    "surface": "moment",
    "deltas": [2.0**-e for e in range(4, 10)],
    "p": [6.0],
    "family": "random-sign",
    "density": 1,
    "seed": 0,
    "method": "grid",
    "out": "results",
    "n_tubes": [8, 16, 32, 64],
    "tube_delta": 1 / 256,
    "samples": 100_000,
    "flatness_samples": 2000,
    "crosscheck_samples": 2**16,
}
KIND_DEFAULTS = {
    "partition": {"deltas": [2.0**-12]},
    "verify": {"deltas": [2.0**-9]},
    "sharpness": {"p": [4.0, 6.0]},
}
FAMILIES = ("random-sign", "lattice")
METHODS = ("grid", "monte-carlo")
SHARPNESS_TOL = 0.1
FLOOR_SLACK = 1e-12
FLAT_TUBE_FACTOR = 0.5
FLATNESS_SPREAD = 20.0


# ---------------------------------------------------------------------------
# configuration


def load_config(path=None, kind=None, overrides=None) -> dict:
    """Merge defaults, the TOML file at ``path`` and ``overrides``; validate.

    Raises
    ------
    ConfigError
        On unreadable files, unknown keys or out-of-range values.
    """
    raw = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if kind is not None and raw.get("kind", kind) != kind:
        raise ConfigError(f"config kind {raw['kind']!r} does not match subcommand {kind!r}")
    cfg = dict(DEFAULTS)
    cfg.update(KIND_DEFAULTS.get(kind or raw.get("kind"), {}))
    cfg.update(raw)
    if kind is not None:
        cfg["kind"] = kind
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    return validate_config(cfg)


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def validate_config(cfg: dict) -> dict:
    cfg = dict(cfg)
    if cfg.get("kind") not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    try:
        deltas = [float(d) for d in _as_list(cfg["deltas"])]
        ps = [float(p) for p in _as_list(cfg["p"])]
        n_tubes = [int(n) for n in _as_list(cfg["n_tubes"])]
        tube_delta = float(cfg["tube_delta"])
        density = int(cfg["density"])
        samples = int(cfg["samples"])
        flat_samples = int(cfg["flatness_samples"])
        cross = int(cfg["crosscheck_samples"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed numeric field: {exc}") from exc
    if not deltas or any(not (0 < d < 1 and is_dyadic(d)) for d in deltas):
        raise ConfigError("deltas must be non-empty powers of two in (0, 1)")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ConfigError("deltas must be strictly decreasing")
    if not ps or any(not 2 <= p <= 6 for p in ps):
        raise ConfigError("every p must lie in [2, 6]")
    if not (0 < tube_delta < 1 and is_dyadic(tube_delta)):
        raise ConfigError("tube_delta must be a power of two in (0, 1)")
    if any(n < 1 for n in n_tubes) or len(set(n_tubes)) != len(n_tubes):
        raise ConfigError("n_tubes must be distinct positive integers")
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) <= U64_MAX:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["family"] not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}")
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if cfg["surface"] not in ("moment", "helix"):
        raise ConfigError("surface must be 'moment' or 'helix'")
    if density < 1 or samples < 1 or flat_samples < 1 or cross < 16:
        raise ConfigError("density and sample counts must be positive")
    cfg.update(
        deltas=deltas, p=ps, n_tubes=n_tubes, tube_delta=tube_delta, density=density, seed=int(seed),
        samples=samples, flatness_samples=flat_samples, crosscheck_samples=cross, out=str(cfg["out"]),
    )
    return cfg


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of ``cfg``."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# records


@dataclass
class Row:
    kind: str
    delta: float | None = None
    k: int | str | None = None
    p: float | None = None
    n_caps: int | None = None
    value: float | None = None
    stderr: float | None = None
    seed: int | None = None
    payload: dict = field(default_factory=dict)


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def emit_csv(records, path) -> None:
    """Write ``records`` under the fixed header ``kind,delta,k,p,n_caps,value,stderr,seed``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot(fit: norms.ExponentFit, path, *, xlabel="scale", ylabel="D") -> None:
    """Standalone SVG: log-log scatter of the fitted points and the fitted line."""
    if fit is None or len(fit.x) == 0:
        raise ValueError("nothing to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "devdecouple"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        xs = np.exp(fit.x)
        ax.loglog(xs, np.exp(fit.y), "o", label="data")
        grid = np.exp(np.linspace(fit.x.min(), fit.x.max(), 50))
        ax.loglog(grid, fit.predict(grid), "-", label="fit")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(f"slope = {fit.slope:.4f}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def append_records(path, cfg, rows, reports):
    """Append one JSON line per row and per check report."""
    h = config_hash(cfg)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
    with open(path, "a") as fh:
        for r in rows:
            payload = {c: getattr(r, c) for c in CSV_COLUMNS} | r.payload
            fh.write(json.dumps({"config_hash": h, "config": cfg, "timestamp": stamp, "record": "row", "payload": payload}, default=_json_default) + "\n")
        for rep in reports:
            payload = {"name": rep.name, "passed": rep.passed, "residual": rep.residual, "tolerance": rep.tolerance,
                       "witness": list(rep.witness), "samples": rep.samples}
            fh.write(json.dumps({"config_hash": h, "config": cfg, "timestamp": stamp, "record": "check", "payload": payload}, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def validate_record(line: str) -> bool:
    """Whether a ``records.jsonl`` line's hash matches its stored config."""
    rec = json.loads(line)
    return config_hash(rec["config"]) == rec["config_hash"]


# ---------------------------------------------------------------------------
# experiments


def _surface(cfg):
    return geo.helix() if cfg["surface"] == "helix" else "moment"


def _run_partition(cfg, out: Path, threads):
    rows, texts = [], []
    for delta in cfg["deltas"]:
        part = partition.full_partition(delta, _surface(cfg))
        texts.append(f"# delta {delta!r}\n" + partition.dumps(part))
        groups = {}
        for cap in part:
            groups.setdefault("near" if cap.near else cap.k, []).append(cap)
        for k, caps in groups.items():
            rows.append(Row("partition", delta, k, None, len(caps), caps[0].t_hi - caps[0].t_lo))
        rows.append(Row("partition-total", delta, None, None, len(part), float(len(part))))
    (out / "partition.txt").write_text("".join(texts))
    return rows, [], None


def _run_verify(cfg, out, threads):
    seed, n = cfg["seed"], cfg["samples"]
    rows, reports = [], []
    curve = geo.helix() if cfg["surface"] == "helix" else None
    for delta in cfg["deltas"]:
        for rep in verify.standard_checks(delta, n, seed):
            reports.append(rep)
            k = rep.extra.get("j", rep.extra.get("k"))
            rows.append(Row(f"check:{rep.name}", delta, k, None, None, rep.residual, None, seed))
        part = partition.full_partition(delta, curve or "moment")
        certs = verify.flatness_sweep([part], cfg["flatness_samples"], seed, threads=threads)
        cs = np.array([c.C for c in certs])
        rows.append(Row("flatness-min", delta, None, None, len(certs), float(cs.min()), None, seed))
        rows.append(Row("flatness-max", delta, None, None, len(certs), float(cs.max()), None, seed))
        reports.append(verify.make_report("flatness_spread", cs.max() / cs.min(), FLATNESS_SPREAD, (delta,), len(certs)))
    return rows, reports, None


def _floor_report(est):
    return verify.make_report("cauchy_schwarz_floor", est.floor - est.ratio, FLOOR_SLACK, (est.delta, est.p), est.n_caps)


def _run_sweep(cfg, out, threads):
    rows, reports, fits = [], [], []
    seed = cfg["seed"]
    curve = geo.helix() if cfg["surface"] == "helix" else None
    for p in cfg["p"]:
        ests = norms.decoupling_sweep(
            curve if curve is not None else "moment", cfg["deltas"], p, cfg["family"], seed,
            method=cfg["method"], density=cfg["density"], threads=threads,
            crosscheck_samples=cfg["crosscheck_samples"] if cfg["method"] == "grid" else None,
        )
        for e in ests:
            rows.append(Row("decoupling", e.delta, None, p, e.n_caps, e.ratio, e.norm.stderr, seed,
                            {"family": cfg["family"], "backend": e.norm.backend, **e.extra}))
            reports.append(_floor_report(e))
            if p == 2 and cfg["method"] == "grid":
                reports.append(verify.make_report("orthogonality", abs(e.ratio - 1), 1e-9, (e.delta,), e.n_caps))
        if len(ests) >= 3:
            fit = norms.exponent_fit([(1 / e.delta, e.ratio) for e in ests])
            rows.append(Row("fit", None, None, p, None, fit.slope, None, seed, {"intercept": fit.intercept, "rss": fit.rss}))
            fits.append(fit)
    return rows, reports, (fits[-1] if fits else None, "1/delta")


def _run_sharpness(cfg, out, threads):
    rows, reports, fits = [], [], []
    for p in cfg["p"]:
        ests = norms.sharpness_sweep(cfg["n_tubes"], p, cfg["tube_delta"], method=cfg["method"], threads=threads,
                                     seed=cfg["seed"])
        target = 0.5 - 1 / p
        for e in ests:
            n = e.extra["n_tubes"]
            rows.append(Row("sharpness", e.delta, n, p, e.n_caps, e.ratio, e.norm.stderr, cfg["seed"]))
            reports.append(_floor_report(e))
            reports.append(verify.make_report(
                "flat_tube_lower_bound", FLAT_TUBE_FACTOR * n**target - e.ratio, 0.0, (n, p), e.n_caps
            ))
        if len(ests) >= 3:
            fit = norms.exponent_fit([(e.extra["n_tubes"], e.ratio) for e in ests])
            rows.append(Row("fit", cfg["tube_delta"], None, p, None, fit.slope, None, cfg["seed"],
                            {"target": target, "intercept": fit.intercept}))
            reports.append(verify.make_report("sharpness_exponent", abs(fit.slope - target), SHARPNESS_TOL, (p,), len(ests)))
            fits.append(fit)
    return rows, reports, (fits[-1] if fits else None, "N")


RUNNERS = {"partition": _run_partition, "verify": _run_verify, "sweep": _run_sweep, "sharpness": _run_sharpness}


def run(cfg: dict, threads=1, stdout=None) -> int:
    """Execute one validated experiment; return the process exit code."""
    stdout = stdout or sys.stdout
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows, reports, fit_info = RUNNERS[cfg["kind"]](cfg, out, threads)
    emit_csv(rows, out / "results.csv")
    if fit_info and fit_info[0] is not None:
        emit_plot(fit_info[0], out / "fit.svg", xlabel=fit_info[1])
    append_records(out / "records.jsonl", cfg, rows, reports)
    failed = [r for r in reports if not r.passed]
    print(f"{cfg['kind']}: {len(rows)} rows, {len(reports)} checks, {len(failed)} failed -> {out}", file=stdout)
    for r in failed:
        print(str(r), file=stdout)
    return 1 if failed else 0


def build_parser():
    ap = argparse.ArgumentParser(prog="devdecouple", description="Decoupling geometry experiments.")
    ap.add_argument("command", choices=KINDS)
    ap.add_argument("--config", type=Path, default=None, help="TOML experiment config")
    ap.add_argument("--out", type=str, default=None, help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = load_config(args.config, args.command, {"out": args.out, "seed": args.seed})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg, args.threads)


if __name__ == "__main__":
    sys.exit(main())
