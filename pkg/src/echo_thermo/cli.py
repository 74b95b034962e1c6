"""Command-line front end.

Every subcommand reads an optional JSON experiment configuration, writes its
outputs and a ``manifest.json`` into ``--out`` and exits non-zero with a JSON
error record on failure.

Subcommands: ``lattice``, ``echoes``, ``wick``, ``scan``, ``mc``, ``report``.
"""
from __future__ import annotations

import argparse
import ast
import csv
import json
import logging
import math
import operator
import os
import platform
import secrets
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import dynamics, experiments
from .dynamics import SpinConfig, TimeGrid, TimeSeries
from .lattice import Lattice, TfimParams, build_lattice, critical_beta
from .sampler import WeightProvider
from .shots import ShotModel, noisify
from .wick import WickConfig, wick_weight

log = logging.getLogger("echo_thermo")

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_quantity", "main"]

UNITS = "# units: energies and fields in J, times in 1/J, beta in 1/J; errors and m2 dimensionless"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}
_NAMES = {"pi": math.pi, "beta_c": critical_beta()}


def parse_quantity(value) -> float:
    """Number, or arithmetic string such as ``"16/pi"`` or ``"4*beta_c/3"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"cannot evaluate {value!r}")

    try:
        return float(ev(ast.parse(value, mode="eval")))
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse {value!r}") from exc


def _state(spec, n: int) -> SpinConfig:
    if spec in (None, "all_up"):
        return SpinConfig.all_up(n)
    if spec == "all_down":
        return SpinConfig.all_down(n)
    psi = SpinConfig.from_string(str(spec))
    if psi.n != n:
        raise ConfigError(f"state {spec!r} has {psi.n} sites, lattice has {n}")
    return psi


@dataclass
class ExperimentConfig:
    """Everything a run needs; see the README for the JSON layout."""

    lattice: str = "honeycomb10"
    J: float = 1.0
    hx: float = 1.0
    time_grid: dict = field(default_factory=lambda: {"rate": "16/pi", "t_max": "4*pi"})
    state: str | None = None
    shots: dict | None = None
    wick: dict = field(default_factory=dict)
    trotter: dict = field(default_factory=dict)
    provider: str = "wick_pipeline"
    chains: dict = field(default_factory=dict)
    betas: list = field(default_factory=lambda: ["beta_c"])
    scan: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if any(b < 0 for b in self.beta_values()):
            raise ConfigError("betas must be non-negative")
        self.build_lattice()
        self.grid()
        if self.provider not in ("exact", "classical", "wick_pipeline"):
            raise ConfigError(f"unknown provider {self.provider!r}")

    def build_lattice(self) -> Lattice:
        try:
            return build_lattice(self.lattice)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def params(self) -> TfimParams:
        return TfimParams(parse_quantity(self.J), parse_quantity(self.hx))

    def beta_values(self) -> list[float]:
        return [parse_quantity(b) for b in self.betas]

    def grid(self) -> TimeGrid:
        g = {k: parse_quantity(v) for k, v in self.time_grid.items()}
        if set(g) == {"rate", "t_max"}:
            return TimeGrid.from_rate(g["rate"], g["t_max"])
        if set(g) == {"dt", "n_t"}:
            return TimeGrid(g["dt"], int(g["n_t"]))
        if set(g) == {"n_t", "t_max"}:
            return TimeGrid(g["t_max"] / g["n_t"], int(g["n_t"]))
        raise ConfigError("time_grid needs {rate, t_max}, {dt, n_t} or {n_t, t_max}")

    def wick_config(self, lattice: Lattice | None = None) -> WickConfig:
        doc = dict(self.wick)
        bound = doc.get("omega_bound")
        if bound == "spectral":
            lo, hi = dynamics.extremal_energies(lattice or self.build_lattice(), self.params())
            doc["omega_bound"] = max(abs(lo), abs(hi))
        elif bound is not None:
            doc["omega_bound"] = parse_quantity(bound)
        if doc.get("delta") is not None:
            doc["delta"] = parse_quantity(doc["delta"])
        try:
            return WickConfig(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad wick settings: {exc}") from exc

    def shot_model(self, root_seed: int) -> ShotModel | None:
        if not self.shots:
            return None
        doc = dict(self.shots)
        seed = doc.pop("seed", None)
        if seed is None:
            seed = experiments.derive_seed(root_seed, 1)
        return ShotModel(int(parse_quantity(doc.pop("n_shots"))), doc.pop("mode", "gaussian"), int(seed))

    def trotter_settings(self) -> tuple[int | None, float | None]:
        n = self.trotter.get("n_trotter")
        step = self.trotter.get("max_step")
        return (None if n is None else int(n)), (None if step is None else parse_quantity(step))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def _write_csv(path: Path, rows: list[dict]) -> None:
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with path.open("w", newline="") as fh:
        fh.write(UNITS + "\n")
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _manifest(out: Path, command: str, cfg: ExperimentConfig, seed: int, argv, extra=None) -> None:
    from . import __version__

    doc = {
        "command": command,
        "argv": list(argv),
        "config": asdict(cfg),
        "seed": seed,
        "versions": {
            "echo_thermo": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, default=str))


def _provider(cfg: ExperimentConfig, lattice, params, seed) -> WeightProvider:
    n_trotter, max_step = cfg.trotter_settings()
    return WeightProvider(
        cfg.provider,
        lattice,
        params,
        grid=cfg.grid() if cfg.provider == "wick_pipeline" else None,
        wick=cfg.wick_config(lattice),
        shots=cfg.shot_model(seed),
        n_trotter=n_trotter,
        max_step=max_step,
    )


def cmd_lattice(cfg, args, out, seed):
    lat = cfg.build_lattice()
    summary = lat.summary()
    print(summary)
    (out / "lattice.json").write_text(json.dumps(lat.to_json(), indent=1))
    return {"n_sites": lat.n_sites, "n_bonds": lat.n_bonds}


def cmd_echoes(cfg, args, out, seed):
    lat, params, grid = cfg.build_lattice(), cfg.params(), cfg.grid()
    psi = _state(cfg.state, lat.n_sites)
    n_trotter, max_step = cfg.trotter_settings()
    if n_trotter is not None or max_step is not None:
        series = dynamics.trotter_echoes(psi, grid, lat, params, n_trotter, max_step)
    else:
        series = dynamics.exact_echoes(psi, grid, lat, params)
    model = cfg.shot_model(seed)
    if model is not None:
        series = noisify(series, model)
    path = out / "series.json"
    series.save(path)
    return {"series": str(path), "state": psi.to_string()}


def cmd_wick(cfg, args, out, seed):
    if args.series is None:
        raise ConfigError("wick needs --series PATH")
    series = TimeSeries.load(args.series)
    lat, params = cfg.build_lattice(), cfg.params()
    wick = cfg.wick_config(lat)
    psi = _state(cfg.state, lat.n_sites)
    betas = cfg.beta_values()
    max_abs = None
    if wick.method == "gaussian_filter" and wick.cap_delta:
        lo, hi = dynamics.extremal_energies(lat, params)
        max_abs = max(abs(lo), abs(hi))
    weights, density = wick_weight(series, np.array(betas), wick, dynamics.moments(psi, lat, params), max_abs)
    density.save(out / "density.json", dt=series.grid.dt)
    rows = [{"beta": b, "weight": float(w)} for b, w in zip(betas, np.atleast_1d(weights))]
    _write_csv(out / "weights.csv", rows)
    return {"method": wick.method}


def cmd_scan(cfg, args, out, seed):
    axis = args.axis or cfg.scan.get("axis")
    if axis is None:
        raise ConfigError("scan needs --axis or scan.axis in the config")
    values = cfg.scan.get("values")
    if not values:
        raise ConfigError("scan needs scan.values in the config")
    lat, params = cfg.build_lattice(), cfg.params()
    n_trotter, max_step = cfg.trotter_settings()
    shots = cfg.shot_model(seed)
    if axis == "shots" and shots is None:
        shots = ShotModel(1, "gaussian", experiments.derive_seed(seed, 1))
    rows = experiments.scan(
        axis,
        [parse_quantity(v) for v in values],
        lattice=lat,
        params=params,
        psi=_state(cfg.state, lat.n_sites),
        grid=cfg.grid(),
        betas=cfg.beta_values(),
        wick=cfg.wick_config(lat),
        shots=shots,
        realizations=int(cfg.scan.get("realizations", 1)),
        n_trotter=n_trotter,
        max_step=max_step,
    )
    _write_csv(out / f"scan_{axis}.csv", rows)
    return {"axis": axis, "rows": len(rows)}


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("ECHO_THERMO_WORKERS", "1"))


def _run_mc(cfg, args, out, seed):
    lat, params = cfg.build_lattice(), cfg.params()
    provider = _provider(cfg, lat, params, seed)
    ch = dict(cfg.chains)
    n_chains = int(ch.get("n_chains", 4))
    initial = ch.get("initial")
    if initial is not None:
        initial = [_state(s, lat.n_sites) for s in initial]
    results = experiments.run_mc(
        provider,
        cfg.beta_values(),
        n_chains=n_chains,
        n_samples=int(ch.get("n_samples", 512)),
        burn_in=int(ch.get("burn_in", 32)),
        proposal=ch.get("proposal", "wolff"),
        initial=initial,
        seed=int(ch.get("seed", experiments.derive_seed(seed, 2))),
        workers=_workers(args),
    )
    chain_dir = out / "chains"
    chain_dir.mkdir(exist_ok=True)
    for i, r in enumerate(results):
        for c, rec in enumerate(r.records):
            rec.to_jsonl(chain_dir / f"beta{i:02d}_chain{c}.jsonl")
    return lat, params, results, provider


def cmd_mc(cfg, args, out, seed):
    lat, params, results, provider = _run_mc(cfg, args, out, seed)
    rows = [
        {
            "beta": r.beta,
            "m2": r.mean,
            "m2_err": r.error,
            "unique_fraction": r.unique_fraction,
            "acceptance": r.acceptance,
        }
        for r in results
    ]
    _write_csv(out / "mc.csv", rows)
    return {"nonpositive_weights": provider.nonpositive}


def cmd_report(cfg, args, out, seed):
    lat, params = cfg.build_lattice(), cfg.params()
    results = None
    extra = {}
    if not args.no_mc:
        lat, params, results, provider = _run_mc(cfg, args, out, seed)
        extra["nonpositive_weights"] = provider.nonpositive
    rows = experiments.report_rows(lat, params, cfg.beta_values(), results)
    _write_csv(out / "report.csv", rows)
    return extra


COMMANDS = {
    "lattice": cmd_lattice,
    "echoes": cmd_echoes,
    "wick": cmd_wick,
    "scan": cmd_scan,
    "mc": cmd_mc,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment configuration")
    common.add_argument("--out", type=Path, help="output directory (default: config 'out' or '.')")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit); drawn and recorded if absent")
    common.add_argument("--workers", type=int, help="worker processes (default: $ECHO_THERMO_WORKERS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="echo-thermo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("lattice", parents=[common], help="print a lattice summary")
    sub.add_parser("echoes", parents=[common], help="write an echo time series")
    p = sub.add_parser("wick", parents=[common], help="weights and density from a series file")
    p.add_argument("--series", type=Path)
    p = sub.add_parser("scan", parents=[common], help="weight error against one setting")
    p.add_argument("--axis", choices=experiments.SCAN_AXES)
    sub.add_parser("mc", parents=[common], help="Monte Carlo chains and aggregate table")
    p = sub.add_parser("report", parents=[common], help="m2 against beta with reference columns")
    p.add_argument("--no-mc", action="store_true", help="only the exact and classical columns")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = None
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        seed = args.seed if args.seed is not None else cfg.seed
        if seed is None:
            seed = secrets.randbits(64)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg.seed = seed
        out = Path(args.out or cfg.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        log.info("running %s into %s (seed %d)", args.command, out, seed)
        extra = COMMANDS[args.command](cfg, args, out, seed)
        _manifest(out, args.command, cfg, seed, argv, extra)
        return 0
    except Exception as exc:  # every failure becomes a machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        if out is not None and out.is_dir():
            (out / "error.json").write_text(json.dumps(record, indent=1))
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
