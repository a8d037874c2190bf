"""Command-line front end: config ingestion, sweeps, cross-engine comparison.

Exit codes: 0 ok, 1 usage, 2 validation, 3 comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import chain as chain_mod
from . import netmodel, occupancy, packetized, reduction
from .netmodel import ErasureNetwork, NetworkError
from .stats import batch_means, intervals_overlap

ENGINES = ("packetized", "occupancy", "chain", "reduced")
CSV_FIELDS = ["buffer_size", "engine", "epochs_or_k", "throughput", "ci95_halfwidth", "seed", "wall_ms", "status"]

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_COMPARE = 0, 1, 2, 3


class ParseError(ValueError):
    pass


class MismatchedSweep(ValueError):
    pass


@dataclass
class ExperimentConfig:
    network_path: str
    engine: str = "occupancy"
    buffers: list[int] | None = None
    k: int = 10_000
    epochs: int = 200_000
    seed: int | None = None
    out: str | None = None
    tolerance: float = 0.02
    w: int = 16
    timing: bool = False
    extra: dict = field(default_factory=dict)

    def check(self) -> None:
        if self.engine not in ENGINES:
            raise ParseError(f"engine must be one of {', '.join(ENGINES)}, got {self.engine!r}")
        if self.seed is None:
            raise ParseError("a seed is required (no wall-clock seeding)")
        if self.buffers is not None and any(b <= 0 for b in self.buffers):
            raise ParseError(f"buffer sizes must be positive, got {self.buffers}")
        if self.k < 1 or self.epochs < 1:
            raise ParseError("k and epochs must be positive")

    def resolved(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return data


def parse_config(path: str) -> tuple[ExperimentConfig, ErasureNetwork]:
    """Read a network file with an optional ``experiment`` block."""
    data = _load_json(path)
    try:
        network = netmodel.validate(data)
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc}") from exc
    exp = data.get("experiment", {}) or {}
    known = {"engine", "buffers", "k", "epochs", "seed", "out", "tolerance", "w"}
    try:
        cfg = ExperimentConfig(
            network_path=str(path),
            engine=str(exp.get("engine", "occupancy")),
            buffers=[int(b) for b in exp["buffers"]] if "buffers" in exp else None,
            k=int(exp.get("k", 10_000)),
            epochs=int(exp.get("epochs", 200_000)),
            seed=int(exp["seed"]) if "seed" in exp else None,
            out=exp.get("out"),
            tolerance=float(exp.get("tolerance", 0.02)),
            w=int(exp.get("w", 16)),
            extra={k: v for k, v in exp.items() if k not in known},
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: experiment block: {exc}") from exc
    return cfg, network


# -- engines ------------------------------------------------------------------


def _reduced_throughput(network: ErasureNetwork, epochs: int, seed: int) -> dict:
    warmup = occupancy.default_warmup(network)
    if epochs <= warmup:
        raise ValueError(f"epochs ({epochs}) must exceed the warmup ({warmup})")
    engine = reduction.ReducedEngine(network)
    channel, _ = netmodel.seed_streams(seed)
    counts = np.empty(epochs, dtype=np.int64)
    reals = netmodel.sample_realizations(network, channel, epochs)
    for t in range(epochs):
        counts[t] = engine.step(reals[t])
    mean, half = batch_means(counts[warmup:])
    return {"throughput": mean, "ci95": half}


def run_point(network: ErasureNetwork, engine: str, k: int, epochs: int, seed: int, w: int = 16) -> tuple[str, float, float]:
    """(epochs_or_k, throughput, ci95 half-width) for one engine on one network."""
    if engine == "occupancy":
        r = occupancy.monte_carlo_throughput(network, epochs, seed)
        return str(epochs), r["throughput"], r["ci95"]
    if engine == "packetized":
        r = packetized.run_throughput(network, k, seed, w=w)
        return str(k), r["throughput"], r["ci95"]
    if engine == "chain":
        c = chain_mod.build_chain(network)
        pi = chain_mod.steady_state(c)
        return "", chain_mod.exact_throughput(c, pi), 0.0
    if engine == "reduced":
        r = _reduced_throughput(network, epochs, seed)
        return str(epochs), r["throughput"], r["ci95"]
    raise ParseError(f"unknown engine {engine!r}")


def _all_lossy_cut(network: ErasureNetwork) -> bool:
    return netmodel.min_cut_capacity(network) == 0


def _row(args) -> dict:
    network, engine, m, cfg = args
    start = time.perf_counter()
    row = {"buffer_size": m, "engine": engine, "seed": cfg.seed, "status": "ok"}
    try:
        if _all_lossy_cut(network) and engine in ("packetized", "occupancy", "reduced"):
            # no packet can ever cross a zero-capacity cut
            size = str(cfg.k) if engine == "packetized" else str(cfg.epochs)
            row.update(epochs_or_k=size, throughput=0.0, ci95_halfwidth=0.0)
        else:
            size, tput, half = run_point(network, engine, cfg.k, cfg.epochs, cfg.seed, cfg.w)
            row.update(epochs_or_k=size, throughput=tput, ci95_halfwidth=half)
    except (RuntimeError, ValueError, MemoryError) as exc:
        row.update(epochs_or_k="", throughput=float("nan"), ci95_halfwidth=float("nan"))
        row["status"] = f"error:{type(exc).__name__}"
    elapsed = (time.perf_counter() - start) * 1000
    row["wall_ms"] = f"{elapsed:.0f}" if cfg.timing else ""
    return row


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RLNC_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(cfg: ExperimentConfig, network: ErasureNetwork, engine: str | None = None) -> list[dict]:
    """One row per buffer size; rows come back in sweep order."""
    engine = engine or cfg.engine
    sizes = cfg.buffers if cfg.buffers else [None]
    jobs = []
    for m in sizes:
        net = network.with_buffers(m) if m is not None else network
        label = m if m is not None else ",".join(str(b) for b in network.buffers)
        jobs.append((net, engine, label, cfg))
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_row, jobs))
    return [_row(j) for j in jobs]


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if np.isnan(x) else format(x, ".10g")
    return str(x)


def render_csv(cfg: ExperimentConfig, network: ErasureNetwork, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg.resolved(), sort_keys=True) + "\n")
    buf.write("# network: " + json.dumps(netmodel.serialize(network), sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(r.get(k, "")) for k in CSV_FIELDS})
    return buf.getvalue()


def read_csv(path: str) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = []
    for r in csv.DictReader(lines):
        r["throughput"] = float(r["throughput"])
        r["ci95_halfwidth"] = float(r["ci95_halfwidth"])
        rows.append(r)
    return rows


# -- compare ------------------------------------------------------------------


def compare(rows_a: list[dict], rows_b: list[dict], tolerance: float = 0.02) -> list[dict]:
    """Per buffer size: both throughputs, gaps and a PASS/FAIL verdict.

    A point passes when the relative gap is within ``tolerance`` or the two
    95% intervals overlap.
    """
    sizes_a = [str(r["buffer_size"]) for r in rows_a]
    sizes_b = [str(r["buffer_size"]) for r in rows_b]
    if sizes_a != sizes_b:
        raise MismatchedSweep(f"buffer sweeps differ: {sizes_a} vs {sizes_b}")
    report = []
    for a, b in zip(rows_a, rows_b):
        ta, tb = float(a["throughput"]), float(b["throughput"])
        ha, hb = float(a["ci95_halfwidth"]), float(b["ci95_halfwidth"])
        gap = abs(ta - tb)
        scale = max(abs(ta), abs(tb))
        rel = gap / scale if scale > 0 else 0.0
        overlap = intervals_overlap(ta, 0.0 if np.isnan(ha) else ha, tb, 0.0 if np.isnan(hb) else hb)
        ok = not (np.isnan(ta) or np.isnan(tb)) and (rel <= tolerance or overlap)
        report.append(
            {
                "buffer_size": a["buffer_size"],
                "engine_a": a["engine"],
                "engine_b": b["engine"],
                "throughput_a": ta,
                "throughput_b": tb,
                "ci95_a": ha,
                "ci95_b": hb,
                "abs_gap": gap,
                "rel_gap": rel,
                "ci_overlap": overlap,
                "verdict": "PASS" if ok else "FAIL",
            }
        )
    return report


def render_report(report: list[dict]) -> str:
    lines = [
        f"{'m':>4} {'A':>11} {'B':>11} {'thr_A':>9} {'thr_B':>9} {'abs_gap':>9} {'rel_gap':>8} {'overlap':>7}  verdict"
    ]
    for r in report:
        lines.append(
            f"{r['buffer_size']!s:>4} {r['engine_a']:>11} {r['engine_b']:>11} {r['throughput_a']:9.5f} "
            f"{r['throughput_b']:9.5f} {r['abs_gap']:9.5f} {r['rel_gap']:8.4f} {str(r['ci_overlap']):>7}  {r['verdict']}"
        )
    return "\n".join(lines) + "\n"


# -- argument handling --------------------------------------------------------


def _buffers(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad buffer list {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("buffer sizes must be positive integers")
    return vals


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlncsim", description="Finite-buffer RLNC simulator and analyzer")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, engine=True):
        sp.add_argument("--config", required=True, help="network/experiment JSON file")
        if engine:
            sp.add_argument("--engine", choices=ENGINES)
        sp.add_argument("--buffers", type=_buffers, help="uniform buffer sizes, e.g. 1,2,3")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--block-size", type=int, dest="k")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--tolerance", type=float)
        sp.add_argument("--timing", action="store_true", help="fill the wall_ms column")

    common(sub.add_parser("validate", help="check a network file"), engine=False)
    common(sub.add_parser("mincut", help="max-flow capacity"), engine=False)
    common(sub.add_parser("sweep", help="throughput per buffer size"))
    cp = sub.add_parser("compare", help="compare two engines or two sweep CSVs")
    cp.add_argument("csv", nargs="*", help="two sweep CSVs (instead of --config)")
    cp.add_argument("--config")
    cp.add_argument("--engine", choices=ENGINES)
    cp.add_argument("--against", choices=ENGINES)
    cp.add_argument("--buffers", type=_buffers)
    cp.add_argument("--epochs", type=int)
    cp.add_argument("--block-size", type=int, dest="k")
    cp.add_argument("--seed", type=int)
    cp.add_argument("--out")
    cp.add_argument("--tolerance", type=float)
    cp.add_argument("--json", action="store_true", help="machine-readable report")
    cp.add_argument("--timing", action="store_true")
    common(sub.add_parser("census", help="visited and reachable occupancy states"), engine=False)
    common(sub.add_parser("classify", help="layers, class verdict and tracked subsets"), engine=False)
    common(sub.add_parser("chain", help="exact Markov-chain throughput"), engine=False)
    return p


def _merge(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    for name in ("engine", "buffers", "epochs", "k", "seed", "out", "tolerance"):
        val = getattr(args, name, None)
        if val is not None:
            updates[name] = val
    if getattr(args, "timing", False):
        updates["timing"] = True
    return replace(cfg, **updates)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_validate(cfg, net, args) -> int:
    relays = ", ".join(f"{net.label(i)}(m={net.buffer(i)})" for i in net.relays)
    order = " ".join(net.edge_label(e) for e in net.edges)
    _emit(f"valid: n={net.n} relays: {relays}\nedge order: {order}\n", cfg.out)
    return EXIT_OK


def _cmd_mincut(cfg, net, args) -> int:
    c = netmodel.min_cut_capacity(net)
    _emit(f"{c.numerator}/{c.denominator} {float(c):.10g}\n", cfg.out)
    return EXIT_OK


def _cmd_sweep(cfg, net, args) -> int:
    cfg.check()
    rows = run_sweep(cfg, net)
    _emit(render_csv(cfg, net, rows), cfg.out)
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.csv:
        if len(args.csv) != 2:
            raise ParseError("compare takes exactly two CSV files")
        rows_a, rows_b = read_csv(args.csv[0]), read_csv(args.csv[1])
        tol = args.tolerance if args.tolerance is not None else 0.02
    else:
        if not args.config or not args.engine or not args.against:
            raise ParseError("compare needs --config, --engine and --against (or two CSV files)")
        cfg, net = parse_config(args.config)
        cfg = _merge(cfg, args)
        cfg.check()
        rows_a = run_sweep(cfg, net, args.engine)
        rows_b = run_sweep(cfg, net, args.against)
        tol = cfg.tolerance
    report = compare(rows_a, rows_b, tol)
    text = json.dumps(report, indent=2) + "\n" if args.json else render_report(report)
    _emit(text, args.out)
    return EXIT_OK if all(r["verdict"] == "PASS" for r in report) else EXIT_COMPARE


def _cmd_census(cfg, net, args) -> int:
    if cfg.seed is None:
        raise ParseError("a seed is required (no wall-clock seeding)")
    sizes = cfg.buffers or [None]
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg.resolved(), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["buffer_size", "epochs", "visited", "transient_only", "reachable", "recurrent", "upper_bound"])
    for m in sizes:
        n_m = net.with_buffers(m) if m is not None else net
        cen = occupancy.state_census(n_m, cfg.epochs, cfg.seed)
        try:
            counts = chain_mod.census_counts(chain_mod.build_chain(n_m))
        except chain_mod.StateBudgetExceeded:
            counts = {"reachable": "", "recurrent": ""}
        label = m if m is not None else ",".join(map(str, net.buffers))
        writer.writerow([label, cfg.epochs, cen["visited_count"], cen["transient_only_count"],
                         counts["reachable"], counts["recurrent"], cen["upper_bound"]])
    _emit(buf.getvalue(), cfg.out)
    return EXIT_OK


def _cmd_classify(cfg, net, args) -> int:
    lines = []
    for k, layer in reduction.layered_partition(net).items():
        lines.append(f"H_{k}: " + " ".join(net.label(v) for v in sorted(layer)))
    layered = reduction.is_in_class_N(net)
    lines.append(f"layered (class N): {'yes' if layered else 'no'}")
    family = reduction.enumerate_A(net)
    lines.append(f"tracked subsets ({len(family)} of {1 << net.n}):")
    for s in family:
        members = ",".join(net.label(v) for v in occupancy.mask_members(s))
        lines.append("  {" + members + "}")
    _emit("\n".join(lines) + "\n", cfg.out)
    return EXIT_OK


def _cmd_chain(cfg, net, args) -> int:
    sizes = cfg.buffers or [None]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["buffer_size", "states", "recurrent", "throughput"])
    for m in sizes:
        n_m = net.with_buffers(m) if m is not None else net
        c = chain_mod.build_chain(n_m)
        pi = chain_mod.steady_state(c)
        label = m if m is not None else ",".join(map(str, net.buffers))
        writer.writerow([label, c.size, len(c.recurrent_states()), format(chain_mod.exact_throughput(c, pi), ".12g")])
    _emit(buf.getvalue(), cfg.out)
    return EXIT_OK


COMMANDS = {
    "validate": _cmd_validate,
    "mincut": _cmd_mincut,
    "sweep": _cmd_sweep,
    "census": _cmd_census,
    "classify": _cmd_classify,
    "chain": _cmd_chain,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "compare":
            return _cmd_compare(args)
        cfg, net = parse_config(args.config)
        cfg = _merge(cfg, args)
        return COMMANDS[args.command](cfg, net, args)
    except (NetworkError, ParseError) as exc:
        print(f"validation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MismatchedSweep as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
