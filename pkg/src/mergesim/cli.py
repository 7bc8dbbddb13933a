"""Command-line front end: single runs, penetration/volume sweeps, validation.

    mergesim run   --config <path-or-preset> [--seed N] [--out DIR]
    mergesim sweep --config <path-or-preset> --penetrations 0,0.5,1
                   --volumes 900,1200,1500 --replications R [--jobs J] --out DIR
    mergesim check --config <path-or-preset>

Configs are single JSON documents with the SimConfig field names; the
bundled presets "paper-sim" (full-scale parameter set) and "paper-lab"
(scaled testbed parameter set) can be named in place of a path. All CSV
output is UTF-8 with a header row and '.' decimal separator; floats carry
9 significant digits, which makes outputs byte-identical per (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import multiprocessing
import os
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .engine import ConfigError, SimConfig, config_from_dict, run
from .metrics import RunMetrics, compute_run_metrics, safety_audit

PRESETS = {"paper-sim": "paper_sim.json", "paper-lab": "paper_lab.json"}


def fmt(x) -> str:
    """Serialize one CSV/JSON scalar; floats get 9 significant digits."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def load_config(path_or_name: str) -> SimConfig:
    """Load a config from a file path or a bundled preset name."""
    p = Path(path_or_name)
    if p.is_file():
        doc = json.loads(p.read_text(encoding="utf-8"))
    elif path_or_name in PRESETS:
        text = resources.files("mergesim.presets").joinpath(PRESETS[path_or_name]).read_text("utf-8")
        doc = json.loads(text)
    else:
        raise FileNotFoundError(f"config not found: {path_or_name}")
    return config_from_dict(doc)


# -- run ---------------------------------------------------------------------


def write_run_outputs(log, cfg: SimConfig, out_dir: Path) -> RunMetrics:
    """Write trajectories.csv, events.csv, and metrics.json for one run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trajectories.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "id", "class", "road", "p", "v", "u", "plan_epoch", "replanned"])
        for r in log.records:
            w.writerow([fmt(r[0]), r[1], r[2], r[3], fmt(r[4]), fmt(r[5]), fmt(r[6]), fmt(r[7]), r[8]])

    findings = safety_audit(log, cfg.limits)
    with open(out_dir / "events.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["source", "kind", "t", "id_i", "id_k", "gap", "required"])
        for ev in log.events:
            w.writerow(["engine", ev.kind, fmt(ev.t), ev.vehicle_id, fmt(ev.other_id), fmt(ev.value), ""])
        for a in findings:
            w.writerow(["audit", a.kind, fmt(a.t), a.id_i, a.id_k, fmt(a.gap), fmt(a.required)])

    rm = compute_run_metrics(log, cfg.limits)
    doc = {
        "avg_travel_time": float(fmt(rm.avg_travel_time)),
        "output_flux": float(fmt(rm.output_flux)),
        "mean_energy": float(fmt(rm.mean_energy)),
        "violations": rm.violations,
        "replan_count": rm.replan_count,
    }
    (out_dir / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return rm


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    log = run(cfg)
    rm = write_run_outputs(log, cfg, Path(args.out))
    print(
        f"vehicles={len(log.summaries)} avg_travel_time={rm.avg_travel_time:.3f} s "
        f"output_flux={rm.output_flux:.1f} veh/h mean_energy={rm.mean_energy:.3f} "
        f"violations={sum(rm.violations.values())} replans={rm.replan_count}"
    )
    return 0


# -- sweep -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """Grid of penetration rates and traffic volumes with seeded replications."""

    penetrations: tuple[float, ...]
    volumes: tuple[float, ...]
    replications: int
    base: SimConfig
    out_dir: Path
    jobs: int = 0  # 0 = machine parallelism

    def __post_init__(self) -> None:
        if not self.penetrations or not self.volumes:
            raise ValueError("penetrations and volumes must be nonempty")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")


def derive_run_seed(base_seed: int, penetration: float, volume: float, replication: int) -> int:
    """Stable 63-bit seed for one sweep cell replication."""
    key = f"{base_seed}|{penetration:.9g}|{volume:.9g}|{replication}".encode("ascii")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


def _sweep_cell(task: tuple[SimConfig, float, float, int]) -> dict:
    base, pen, vol, rep = task
    row = {"penetration": pen, "volume": vol, "replication": rep}
    cfg = replace(
        base, penetration=pen, volume=vol,
        seed=derive_run_seed(base.seed, pen, vol, rep),
    )
    row["seed"] = cfg.seed
    try:
        log = run(cfg)
        rm = compute_run_metrics(log, cfg.limits)
        row.update(
            status="ok",
            avg_travel_time=rm.avg_travel_time,
            output_flux=rm.output_flux,
            mean_energy=rm.mean_energy,
            violations=sum(rm.violations.values()),
            replans=rm.replan_count,
        )
    except Exception as e:  # partial failures are recorded, the sweep continues
        row.update(status=f"error: {e}", avg_travel_time=None, output_flux=None,
                   mean_energy=None, violations=None, replans=None)
    return row


SWEEP_COLUMNS = [
    "penetration", "volume", "replication", "seed", "status",
    "avg_travel_time", "output_flux", "mean_energy", "violations", "replans",
]


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Execute the whole grid and write sweep.csv / aggregate.csv.

    Rows are computed in a worker pool but written sorted by
    (penetration, volume, replication), so output bytes do not depend on
    scheduling.
    """
    tasks = [
        (spec.base, pen, vol, rep)
        for pen in spec.penetrations
        for vol in spec.volumes
        for rep in range(spec.replications)
    ]
    jobs = spec.jobs if spec.jobs > 0 else (os.cpu_count() or 1)
    if jobs > 1 and len(tasks) > 1:
        with multiprocessing.Pool(min(jobs, len(tasks))) as pool:
            rows = pool.map(_sweep_cell, tasks)
    else:
        rows = [_sweep_cell(t) for t in tasks]
    rows.sort(key=lambda r: (r["penetration"], r["volume"], r["replication"]))

    spec.out_dir.mkdir(parents=True, exist_ok=True)
    with open(spec.out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([fmt(row[c]) for c in SWEEP_COLUMNS])

    cells: dict[tuple[float, float], list[dict]] = {}
    for row in rows:
        if row["status"] == "ok":
            cells.setdefault((row["penetration"], row["volume"]), []).append(row)
    with open(spec.out_dir / "aggregate.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["penetration", "volume", "runs",
                    "mean_avg_travel_time", "mean_output_flux",
                    "mean_violations", "mean_replans"])
        for (pen, vol) in sorted(cells):
            ok = cells[(pen, vol)]
            n = len(ok)
            mean = lambda key: sum(r[key] for r in ok) / n
            w.writerow([fmt(pen), fmt(vol), n,
                        fmt(mean("avg_travel_time")), fmt(mean("output_flux")),
                        fmt(mean("violations")), fmt(mean("replans"))])
    return rows


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip() != "")


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    spec = SweepSpec(
        penetrations=_parse_floats(args.penetrations),
        volumes=_parse_floats(args.volumes),
        replications=args.replications,
        base=base,
        out_dir=Path(args.out),
        jobs=args.jobs,
    )
    rows = run_sweep(spec)
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"sweep complete: {len(rows)} runs, {failed} failed -> {spec.out_dir}")
    return 0


def cmd_check(args) -> int:
    load_config(args.config)
    print("config ok")
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mergesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and export logs and metrics")
    p_run.add_argument("--config", required=True, help="config path or preset name")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a penetration x volume grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--penetrations", required=True, help="comma-separated fractions")
    p_sweep.add_argument("--volumes", required=True, help="comma-separated vehicles/hour")
    p_sweep.add_argument("--replications", type=int, default=1)
    p_sweep.add_argument("--jobs", type=int, default=0, help="worker processes (0 = all cores)")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default="out")
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("check", help="validate a config and exit")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
