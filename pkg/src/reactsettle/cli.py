"""Command-line interface: ``reactsettle run`` and ``reactsettle convergence``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .errors import SimulationError
from .simulator import COMPONENTS, RunRecord, Scenario, relative_difference, run, self_difference

log = logging.getLogger("reactsettle")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

PROFILE_HEADER = ["t", "z", *COMPONENTS, "X", "W"]
SERIES_HEADER = (["t"] + [f"C_e_{c}" for c in COMPONENTS[:6]] + [f"S_e_{c}" for c in COMPONENTS[6:]]
                 + [f"C_u_{c}" for c in COMPONENTS[:6]] + [f"S_u_{c}" for c in COMPONENTS[6:]])


def _fmt(v: float) -> str:
    return f"{v:.17e}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(float(v)) for v in row) + "\n")


def profile_rows(record: RunRecord):
    geom = record.geometry
    z = geom.cell_centres()
    p = record.settling
    for snap in record.snapshots:
        X = snap.C.sum(axis=1)
        W = p.rho_f * (1.0 - X / p.rho_s) - snap.S.sum(axis=1)
        block = np.column_stack([np.full(geom.N, snap.t), z, snap.C, snap.S, X, W])
        yield from block


def write_outputs(record: RunRecord, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "profiles.csv", PROFILE_HEADER, profile_rows(record))
    series = np.column_stack([record.series_t, record.series]) if len(record.series_t) else []
    _write_csv(out / "boundary_series.csv", SERIES_HEADER, series)
    with open(out / "audit.json", "w", encoding="utf-8") as fh:
        json.dump(record.audit_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_time(text: str) -> float:
    """Seconds from '3600', '3600s' or '1h'."""
    t = text.strip().lower()
    if t.endswith("h"):
        return float(t[:-1]) * 3600.0
    if t.endswith("s"):
        return float(t[:-1])
    return float(t)


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if getattr(args, "cells", None):
        sc = sc.with_cells(args.cells)
    if getattr(args, "reactions", None):
        sc = sc.with_reactions(args.reactions)
    if getattr(args, "snapshot_every", None):
        sc = replace(sc, snapshot_every=float(args.snapshot_every))
    return sc


def cmd_run(args) -> int:
    sc = _apply_overrides(parse_config(args.config), args)
    record = run(sc, args.scheme)
    write_outputs(record, Path(args.out))
    log.info("run finished: %d snapshots, tau=%.6g s, %.1f s wall", len(record.snapshots),
             record.tau, record.wall_seconds)
    return EXIT_OK


def _snapshot_times(sc: Scenario, at: float) -> float:
    end = sc.stages[-1].t_end
    if at > end + 1e-9:
        raise ConfigError(f"--at {at} s lies beyond the end of the schedule ({end} s)")
    return at


def _with_final_time(sc: Scenario, at: float) -> Scenario:
    # make sure the requested time is a snapshot: truncate the schedule there
    stages = []
    for st in sc.stages:
        if st.t_start >= at - 1e-9:
            break
        if st.t_end > at + 1e-9:
            st = replace(st, t_end_h=at / 3600.0)
        stages.append(st)
    return replace(sc, stages=tuple(stages))


def _job(payload):
    sc, mode, at = payload
    if mode == "split-vs-unsplit":
        a = run(sc, "split")
        b = run(sc, "unsplit")
        return relative_difference(b, a, a.final.t if at is None else at)
    rec = run(sc, "split")
    return rec


def convergence_table(sc: Scenario, cells: list[int], at: float, mode: str, workers: int) -> list[tuple]:
    at = _snapshot_times(sc, at)
    base = _with_final_time(sc, at)
    end = base.stages[-1].t_end
    jobs = [(base.with_cells(n), mode, end) for n in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    rows = []
    if mode == "split-vs-unsplit":
        prev = None
        for n, d in zip(cells, results):
            rows.append((n, d, (prev / d) if prev and d else float("nan")))
            prev = d
        return rows
    prev = None
    for i in range(len(cells) - 1):
        d = self_difference(results[i], results[i + 1], end)
        rows.append((cells[i], d, (prev / d) if prev and d else float("nan")))
        prev = d
    return rows


def worker_count() -> int:
    env = os.environ.get("RS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("RS_THREADS must be an integer") from None
    return os.cpu_count() or 1


def cmd_convergence(args) -> int:
    cells = [int(c) for c in args.cells.split(",") if c.strip()]
    if args.mode == "self" and len(cells) < 2:
        raise ConfigError("self mode needs at least two cell counts")
    if not cells:
        raise ConfigError("no cell counts given")
    sc = parse_config(args.config)
    if args.reactions:
        sc = sc.with_reactions(args.reactions)
    try:
        at = parse_time(args.at)
    except ValueError:
        raise ConfigError(f"cannot parse --at {args.at!r}") from None
    rows = convergence_table(sc, cells, at, args.mode, worker_count())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n", encoding="ascii") as fh:
        fh.write("N,value,ratio_to_previous\n")
        for n, v, r in rows:
            fh.write(f"{n},{_fmt(v)},{_fmt(r)}\n")
    for n, v, r in rows:
        print(f"N={n:5d}  value={v:.6e}  ratio={r:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reactsettle", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write CSV/JSON outputs")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--cells", type=int)
    r.add_argument("--scheme", choices=("split", "unsplit"), default="split")
    r.add_argument("--snapshot-every", type=float, metavar="SECONDS")
    r.add_argument("--reactions", choices=("asm1", "zero"))
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convergence", help="split-vs-unsplit differences or self-convergence")
    c.add_argument("--config", required=True)
    c.add_argument("--cells", required=True, help="comma-separated cell counts")
    c.add_argument("--at", required=True, help="evaluation time, seconds or e.g. '6h'")
    c.add_argument("--mode", choices=("split-vs-unsplit", "self"), default="split-vs-unsplit")
    c.add_argument("--out", default="convergence.csv")
    c.add_argument("--reactions", choices=("asm1", "zero"))
    c.set_defaults(func=cmd_convergence)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
