"""Command-line front end.

Every run writes its tables plus ``manifest.json`` into the output directory.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .capacity import Preparation, blocked_capacity, joint_and_separate, mother_rates
from .decoupling import SWEEP_HEADER, converse_slack, threshold_sweep
from .io import atomic_write, config_hash, emit_csv
from .measures import PartitionSpec, coherent_information, mutual_information
from .optimize import OptimizerConfig
from .specs import parse_channel, parse_state
from .states import DimensionCapExceeded, von_neumann_entropy
from .superactivation import activation_search, candidate_state_library, ppt_check

log = logging.getLogger("chanstate")

COMMANDS = ("capacity", "compare", "sweep", "decouple", "superact", "info")
INFO_QUANTITIES = ("entropy", "coherent", "mutual", "ppt", "mother")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CAPACITY_SCHEMA = [
    ("channel", str), ("state", str), ("block", int), ("seed", int), ("restarts", int),
    ("joint_rate", float), ("evaluations", int), ("converged", bool),
]
COMPARE_SCHEMA = [
    ("channel", str), ("state", str), ("seed", int),
    ("joint_rate", float), ("separate_rate", float), ("gap", float),
]
SWEEP_SCHEMA = [
    ("channel", str), ("state", str), ("param", str), ("value", float),
    ("joint_rate", float), ("separate_rate", float), ("gap", float),
]
DECOUPLE_SCHEMA = [
    ("n", int), ("log_S_per_n", float), ("mean_error", float),
    ("stderr", float), ("acceptance", float), ("trials", int),
]
TRIALS_SCHEMA = [
    ("n", int), ("log_S", float), ("seed", int), ("decoupling_error", float), ("decoder_fidelity", float),
    ("converse_epsilon", float), ("decoded_coherent_info", float), ("converse_slack", float),
]
SUPERACT_SCHEMA = [
    ("state_id", str), ("channel", str), ("joint_rate", float), ("separate_rate", float),
    ("gap", float), ("ppt", bool), ("seed", int),
]
INFO_SCHEMA = [("quantity", str), ("state", str), ("value", float)]

assert tuple(name for name, _ in DECOUPLE_SCHEMA) == SWEEP_HEADER


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        super().__init__(message)
        self.line = line
        self.source = source

    def __str__(self) -> str:
        where = ""
        if self.source:
            where = f"{self.source}:{self.line}: " if self.line else f"{self.source}: "
        return where + super().__str__()


@dataclass
class RunConfig:
    command: str
    channels: list[str] = field(default_factory=list)
    states: list[str] = field(default_factory=list)
    seed: int = 0
    restarts: int = 32
    max_evals: int = 20_000
    tol: float = 1e-7
    block_level: int = 1
    grid: str | None = None
    trials: int = 100
    decode: bool = False
    quantity: str = "entropy"
    out: str = "chanstate-out"
    jobs: int = 1

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(self.seed, self.restarts, self.max_evals, self.tol, self.jobs)

    def hashable(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("jobs")  # the worker count does not change results
        d.pop("out")
        return d


# ---------------------------------------------------------------------------
# Config ingestion
# ---------------------------------------------------------------------------


def _key_line(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if re.search(r'"%s"\s*:' % re.escape(key), line):
            return i
    return None


_FILE_KEYS = {
    "command", "channel", "channels", "state", "states", "seed", "optimizer", "block_level",
    "grid", "trials", "decode", "quantity", "out", "jobs", "restarts", "max_evals", "tol",
}


def load_config_file(path: str) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=path) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, path) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", 1, path)
    flat: dict[str, Any] = {}
    for key, value in doc.items():
        if key not in _FILE_KEYS:
            raise ConfigError(f"unknown key {key!r}", _key_line(text, key), path)
        if key == "optimizer":
            if not isinstance(value, dict):
                raise ConfigError("'optimizer' must be an object", _key_line(text, key), path)
            for k, v in value.items():
                if k not in ("seed", "restarts", "max_evals", "tol"):
                    raise ConfigError(f"unknown optimizer key {k!r}", _key_line(text, k), path)
                flat[k] = v
        elif key in ("channel", "state"):
            flat[key + "s"] = [value] if isinstance(value, str) else value
        else:
            flat[key] = value
    flat["_lines"] = {k: _key_line(text, k) for k in list(doc) + list(doc.get("optimizer", {}) or {})}
    flat["_source"] = path
    return flat


_FLAG_NAMES = {"channels": "channel", "states": "state"}


def build_config(args: argparse.Namespace) -> RunConfig:
    base: dict[str, Any] = {}
    if getattr(args, "config", None):
        base = load_config_file(args.config)
    lines = base.pop("_lines", {})
    source = base.pop("_source", None)
    if "command" in base and base.pop("command") != args.command:
        raise ConfigError(f"config is for another command, not {args.command!r}", lines.get("command"), source)
    overrides = {
        "channels": args.channel,
        "states": args.state,
        "seed": args.seed,
        "restarts": args.restarts,
        "max_evals": getattr(args, "max_evals", None),
        "block_level": getattr(args, "block_level", None),
        "grid": getattr(args, "grid", None),
        "trials": getattr(args, "trials", None),
        "decode": getattr(args, "decode", None) or None,
        "quantity": getattr(args, "quantity", None),
        "out": args.out,
        "jobs": args.jobs,
    }
    merged = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    if "channels" in merged and isinstance(merged["channels"], str):
        merged["channels"] = [merged["channels"]]
    if "states" in merged and isinstance(merged["states"], str):
        merged["states"] = [merged["states"]]

    def fail(key: str, message: str):
        flag = "--" + _FLAG_NAMES.get(key, key).replace("_", "-")
        if key in base:
            raise ConfigError(message, lines.get(key.rstrip("s")) or lines.get(key), source)
        raise ConfigError(message, source=flag)

    for key, kind in (("seed", int), ("restarts", int), ("max_evals", int), ("trials", int), ("block_level", int), ("jobs", int)):
        if key in merged and (not isinstance(merged[key], int) or isinstance(merged[key], bool)):
            fail(key, f"{key} must be an integer, got {merged[key]!r}")
    if "tol" in merged and not isinstance(merged["tol"], (int, float)):
        fail("tol", f"tol must be a number, got {merged['tol']!r}")
    if "seed" in merged and not 0 <= merged["seed"] < 2**64:
        fail("seed", "seed must be a 64-bit unsigned integer")
    if merged.get("restarts", 1) < 1:
        fail("restarts", "restarts must be >= 1")
    if merged.get("trials", 1) < 1:
        fail("trials", "trials must be >= 1")
    if merged.get("block_level", 1) not in (1, 2):
        fail("block_level", "block level must be 1 or 2")
    merged.setdefault("jobs", os.cpu_count() or 1)
    if merged["jobs"] < 1:
        fail("jobs", "jobs must be >= 1")

    cfg = RunConfig(command=args.command, **merged)
    needs_channel = cfg.command in ("capacity", "compare", "sweep", "decouple", "superact")
    if needs_channel and not cfg.channels:
        raise ConfigError("a channel is required (--channel or 'channel' in the config)", source="--channel")
    if cfg.command in ("capacity", "compare", "sweep", "decouple", "info") and not cfg.states:
        raise ConfigError("a state is required (--state or 'state' in the config)", source="--state")
    if cfg.command in ("sweep", "decouple") and not cfg.grid:
        raise ConfigError("a non-empty --grid is required for this command", source="--grid")
    # parse specs now so mistakes surface as config errors
    for spec in cfg.channels if cfg.command != "sweep" else []:
        try:
            parse_channel(spec)
        except (ValueError, KeyError, OSError) as exc:
            fail("channels", f"bad channel spec {spec!r}: {exc}")
    for spec in cfg.states:
        try:
            parse_state(spec)
        except (ValueError, KeyError, OSError) as exc:
            fail("states", f"bad state spec {spec!r}: {exc}")
    return cfg


def parse_values(text: str) -> list[float]:
    """``"0,0.1,0.25"`` or ``"start:stop:step"`` (inclusive stop)."""
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def parse_grid(text: str) -> dict[str, list[float]]:
    """``"n=1,2,3;rate=0:1:0.2"`` -> {"n": [...], "rate": [...]}."""
    grid: dict[str, list[float]] = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        key, eq, values = part.partition("=")
        if not eq:
            raise ValueError(f"malformed grid entry {part!r}")
        vals = parse_values(values)
        if not vals:
            raise ValueError(f"grid entry {key!r} is empty")
        grid[key.strip()] = vals
    if not grid:
        raise ValueError("grid is empty")
    return grid


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _cmd_capacity(cfg: RunConfig, out: Path) -> list[str]:
    ch, rho = parse_channel(cfg.channels[0]), parse_state(cfg.states[0])
    est = blocked_capacity(ch, rho, cfg.block_level, cfg.optimizer)
    row = {
        "channel": cfg.channels[0], "state": cfg.states[0], "block": cfg.block_level, "seed": cfg.seed,
        "restarts": est.restarts, "joint_rate": est.value, "evaluations": est.evaluations,
        "converged": est.converged,
    }
    emit_csv([row], CAPACITY_SCHEMA, out / "capacity.csv")
    print(f"joint_rate {_fmt(est.value)}")
    if not est.converged:
        print("warning: best restart hit the evaluation budget before converging", file=sys.stderr)
    return ["capacity.csv"]


def _cmd_compare(cfg: RunConfig, out: Path) -> list[str]:
    ch, rho = parse_channel(cfg.channels[0]), parse_state(cfg.states[0])
    est, separate = joint_and_separate(ch, rho, cfg.optimizer)
    row = {
        "channel": cfg.channels[0], "state": cfg.states[0], "seed": cfg.seed,
        "joint_rate": est.value, "separate_rate": separate, "gap": est.value - separate,
    }
    emit_csv([row], COMPARE_SCHEMA, out / "compare.csv")
    print(f"joint_rate {_fmt(est.value)}")
    print(f"separate_rate {_fmt(separate)}")
    print(f"gap {_fmt(est.value - separate)}")
    return ["compare.csv"]


def _cmd_sweep(cfg: RunConfig, out: Path) -> list[str]:
    grid = parse_grid(cfg.grid)
    if len(grid) != 1:
        raise ConfigError("sweep takes exactly one grid parameter, e.g. p=0:0.5:0.1", source="--grid")
    (param, values), = grid.items()
    rho = parse_state(cfg.states[0])
    base = cfg.channels[0]
    rows = []
    for value in values:
        sep = "," if ":" in base else ":"
        spec = f"{base}{sep}{param}={value:g}"
        ch = parse_channel(spec)
        est, separate = joint_and_separate(ch, rho, cfg.optimizer)
        rows.append({
            "channel": spec, "state": cfg.states[0], "param": param, "value": value,
            "joint_rate": est.value, "separate_rate": separate, "gap": est.value - separate,
        })
        print(f"{spec} joint {_fmt(est.value)} separate {_fmt(separate)}")
    emit_csv(rows, SWEEP_SCHEMA, out / "sweep.csv")
    return ["sweep.csv"]


def _cmd_decouple(cfg: RunConfig, out: Path) -> list[str]:
    grid = parse_grid(cfg.grid)
    unknown = set(grid) - {"n", "rate"}
    if unknown or "n" not in grid or "rate" not in grid:
        raise ConfigError("decouple grid needs n=... and rate=... (log|S|/n)", source="--grid")
    ch, rho = parse_channel(cfg.channels[0]), parse_state(cfg.states[0])
    prep = Preparation.maximally_entangled(ch.din, rho.dims[0])
    n_list = [int(n) for n in grid["n"]]
    kept: list | None = [] if cfg.decode else None
    rows = threshold_sweep(ch, rho, prep, n_list, grid["rate"], cfg.trials, cfg.seed, cfg.decode, kept)
    emit_csv(rows, DECOUPLE_SCHEMA, out / "decouple.csv")
    written = ["decouple.csv"]
    if kept:
        trial_rows = [
            {
                "n": t.n, "log_S": t.log_S, "seed": t.seed, "decoupling_error": t.decoupling_error,
                "decoder_fidelity": t.decoder_fidelity, "converse_epsilon": t.converse_epsilon,
                "decoded_coherent_info": t.decoded_coherent_info, "converse_slack": converse_slack(t),
            }
            for t in kept
            if not t.failed
        ]
        emit_csv(trial_rows, TRIALS_SCHEMA, out / "decouple_trials.csv")
        written.append("decouple_trials.csv")
    for r in rows:
        print(f"n={r['n']} rate={_fmt(r['log_S_per_n'])} error={_fmt(r['mean_error'])} +/- {_fmt(r['stderr'])}")
    return written


def _cmd_superact(cfg: RunConfig, out: Path) -> list[str]:
    channels = [(spec, parse_channel(spec)) for spec in cfg.channels]
    if cfg.states:
        states = [(spec, parse_state(spec)) for spec in cfg.states]
    else:
        states = [(sid, rho) for sid, rho, _ in candidate_state_library()]
    reports = activation_search(channels, states, cfg.optimizer)
    rows, written = [], ["superact.csv"]
    for r in reports:
        rows.append({
            "state_id": r.state_id, "channel": r.channel_desc, "joint_rate": r.joint_rate,
            "separate_rate": r.separate_rate, "gap": r.gap, "ppt": r.ppt_certified, "seed": r.seeds[0],
        })
        name = "detail_" + re.sub(r"[^A-Za-z0-9.=_-]+", "_", f"{r.state_id}__{r.channel_desc}") + ".json"
        detail = {"state_id": r.state_id, "channel": r.channel_desc, "seed": r.seeds[0], "error": r.error, **r.details}
        atomic_write(out / name, json.dumps(detail, indent=2, sort_keys=True, default=float) + "\n")
        written.append(name)
    emit_csv(rows, SUPERACT_SCHEMA, out / "superact.csv")
    for r in reports:
        print(f"{r.state_id} | {r.channel_desc}: gap {_fmt(r.gap)} ppt={'true' if r.ppt_certified else 'false'}")
    return written


def _cmd_info(cfg: RunConfig, out: Path) -> list[str]:
    spec = cfg.states[0]
    rho = parse_state(spec)
    rows = []
    if cfg.quantity == "entropy":
        rows.append(("entropy", von_neumann_entropy(rho)))
    elif cfg.quantity in ("coherent", "mutual", "ppt"):
        if len(rho.systems) != 2:
            raise ConfigError(f"{cfg.quantity} needs a bipartite state", source="--state")
        part = PartitionSpec([rho.labels[0]], [rho.labels[1]])
        if cfg.quantity == "coherent":
            rows.append(("coherent", coherent_information(rho, part)))
        elif cfg.quantity == "mutual":
            rows.append(("mutual", mutual_information(rho, part)))
        else:
            rows.append(("min_pt_eig", ppt_check(rho, part)[1]))
    elif cfg.quantity == "mother":
        rate, cost = mother_rates(rho)
        rows += [("mother_rate", rate), ("mother_qubit_cost", cost)]
    else:
        raise ConfigError(f"unknown info quantity {cfg.quantity!r}", source="info")
    for name, value in rows:
        print(_fmt(value) if len(rows) == 1 else f"{name} {_fmt(value)}")
    emit_csv([{"quantity": n, "state": spec, "value": v} for n, v in rows], INFO_SCHEMA, out / "info.csv")
    return ["info.csv"]


_DISPATCH = {
    "capacity": _cmd_capacity,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "decouple": _cmd_decouple,
    "superact": _cmd_superact,
    "info": _cmd_info,
}


def _failing_operation(exc: BaseException) -> str:
    """Innermost chanstate function on the traceback."""
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if f"{os.sep}chanstate{os.sep}" in f.filename]
    if not frames:
        return "unknown operation"
    f = frames[-1]
    return f"{Path(f.filename).stem}.{f.name}"


def run(cfg: RunConfig) -> int:
    """Execute one configured command; returns the process exit status."""
    out = Path(cfg.out)
    start = time.perf_counter()
    try:
        outputs = _DISPATCH[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionCapExceeded as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"numerical failure in {_failing_operation(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = {
        "tool": "chanstate",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.hashable(),
        "config_hash": config_hash(cfg.hashable()),
        "seed": cfg.seed,
        "jobs": cfg.jobs,
        "wall_time_s": round(time.perf_counter() - start, 3),
        "outputs": outputs,
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--max-evals", type=int, dest="max_evals")
    common.add_argument("--out", help="output directory (default: chanstate-out)")
    common.add_argument("--jobs", type=int, help="worker threads (default: number of cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chanstate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"chanstate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, multi=False):
        p = sub.add_parser(name, parents=[common], help=help_)
        action = "append" if multi else None
        p.add_argument("--channel", action=action, help="channel spec, e.g. erasure:p=0.25")
        p.add_argument("--state", action=action, help="state spec, e.g. bell or isotropic:F=0.8")
        return p

    p = add("capacity", "optimize I(A1A2>B1B2) over preparations")
    p.add_argument("--block-level", type=int, choices=(1, 2), dest="block_level")
    add("compare", "joint rate versus channel coding plus distillation")
    p = add("sweep", "compare over a channel parameter grid")
    p.add_argument("--grid", help="one parameter, e.g. p=0:0.5:0.1")
    p = add("decouple", "random-subspace decoupling simulation")
    p.add_argument("--grid", help="e.g. n=1,2,3;rate=0:1:0.2")
    p.add_argument("--trials", type=int)
    p.add_argument("--decode", action="store_true", help="also run the decoder and write per-trial converse data")
    p = add("superact", "joint-versus-separate gap search", multi=True)
    p = add("info", "entropic quantities of a state")
    p.add_argument("quantity", choices=INFO_QUANTITIES)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    for attr in ("channel", "state"):
        value = getattr(args, attr, None)
        if isinstance(value, str):
            setattr(args, attr, [value])
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
