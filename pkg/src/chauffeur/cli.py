"""Command-line front end: geometry export, classification, single runs, sweeps.

Configuration is an INI-style key-value document with sections [game],
[initial], [integrator], [sweep] and [output]; unknown keys or sections are
rejected so stale configs fail loudly.  Exit codes: 0 success, 2 config
error, 3 numerical failure, 4 non-capture.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass

from .core import GameParams, RelState, validate_params
from .deception import sweep as run_sweep
from .sim import Scenario, run_closed_loop
from .solution import EqualCostBracketError, get_geometry
from .strategy import EvaderPolicy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NO_CAPTURE = 4

WORKERS_ENV = "CHAUFFEUR_WORKERS"

_SCHEMA = {
    "game": {"mu1", "mu2", "l", "evader", "pursuer"},
    "initial": {"x0", "y0"},
    "integrator": {"dt", "t_max"},
    "sweep": {"x_min", "x_max", "y_min", "y_max", "spacing", "workers"},
    "output": {"directory", "prefix"},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    mu1: float
    l: float
    mu2: float | None = None
    evader: str = "truthful"
    pursuer: str = "informed"
    x0: float | None = None
    y0: float | None = None
    dt: float = 1e-3
    t_max: float = 60.0
    x_min: float | None = None
    x_max: float | None = None
    y_min: float | None = None
    y_max: float | None = None
    spacing: float = 0.25
    workers: int = 1
    directory: str = "."
    prefix: str = "chauffeur"

    def params1(self) -> GameParams:
        return validate_params(self.mu1, self.l)

    def params2(self) -> GameParams | None:
        if self.mu2 is None:
            return None
        return validate_params(self.mu2, self.l)

    def initial(self) -> RelState:
        if self.x0 is None or self.y0 is None:
            raise ConfigError("[initial] section with x0 and y0 is required for this command")
        return RelState(self.x0, self.y0)


def _getfloat(cp: configparser.ConfigParser, section: str, key: str, line_hint: str) -> float:
    raw = cp.get(section, key)
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{line_hint}: key '{key}' in [{section}] is not a number: {raw!r}") from exc


def parse_config(text: str, command: str, source: str = "<config>") -> RunConfig:
    """Parse and fully validate a config document for ``command``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in cp.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")

    if not cp.has_section("game"):
        raise ConfigError(f"{source}: missing [game] section")
    for key in ("mu1", "l"):
        if not cp.has_option("game", key):
            raise ConfigError(f"{source}: missing key '{key}' in [game]")

    cfg = RunConfig(
        command=command,
        mu1=_getfloat(cp, "game", "mu1", source),
        l=_getfloat(cp, "game", "l", source),
    )
    if cp.has_option("game", "mu2"):
        cfg.mu2 = _getfloat(cp, "game", "mu2", source)
    if cp.has_option("game", "evader"):
        cfg.evader = cp.get("game", "evader").strip()
        if cfg.evader not in ("truthful", "deceptive"):
            raise ConfigError(f"{source}: evader must be 'truthful' or 'deceptive', got {cfg.evader!r}")
    if cp.has_option("game", "pursuer"):
        cfg.pursuer = cp.get("game", "pursuer").strip()
        if cfg.pursuer not in ("informed", "estimating"):
            raise ConfigError(f"{source}: pursuer must be 'informed' or 'estimating', got {cfg.pursuer!r}")
    if cp.has_section("initial"):
        for key in ("x0", "y0"):
            if not cp.has_option("initial", key):
                raise ConfigError(f"{source}: missing key '{key}' in [initial]")
        cfg.x0 = _getfloat(cp, "initial", "x0", source)
        cfg.y0 = _getfloat(cp, "initial", "y0", source)
    if cp.has_section("integrator"):
        if cp.has_option("integrator", "dt"):
            cfg.dt = _getfloat(cp, "integrator", "dt", source)
        if cp.has_option("integrator", "t_max"):
            cfg.t_max = _getfloat(cp, "integrator", "t_max", source)
    if cp.has_section("sweep"):
        for key in ("x_min", "x_max", "y_min", "y_max"):
            if cp.has_option("sweep", key):
                setattr(cfg, key, _getfloat(cp, "sweep", key, source))
        if cp.has_option("sweep", "spacing"):
            cfg.spacing = _getfloat(cp, "sweep", "spacing", source)
        if cp.has_option("sweep", "workers"):
            cfg.workers = int(_getfloat(cp, "sweep", "workers", source))
    if cp.has_section("output"):
        if cp.has_option("output", "directory"):
            cfg.directory = cp.get("output", "directory").strip()
        if cp.has_option("output", "prefix"):
            cfg.prefix = cp.get("output", "prefix").strip()

    # Cross-key invariants: every referenced parameter pair must be legal
    # before any computation starts.
    validate_params(cfg.mu1, cfg.l)
    if cfg.mu2 is not None:
        validate_params(cfg.mu2, cfg.l)
        if cfg.mu1 < cfg.mu2:
            raise ConfigError(
                f"{source}: mu1={cfg.mu1} must be >= mu2={cfg.mu2} (mu1 is the faster bound)"
            )
    if cfg.dt <= 0 or cfg.dt >= 0.01:
        raise ConfigError(f"{source}: dt={cfg.dt} outside (0, 0.01)")
    if cfg.t_max <= 0:
        raise ConfigError(f"{source}: t_max={cfg.t_max} must be positive")

    if command in ("classify", "simulate"):
        cfg.initial()  # raises with a named key when missing
    if command == "simulate" and (cfg.evader == "deceptive" or cfg.pursuer == "estimating"):
        if cfg.mu2 is None:
            raise ConfigError(f"{source}: deceptive/estimating simulate needs mu2 in [game]")
    if command == "sweep":
        if cfg.mu2 is None:
            raise ConfigError(f"{source}: sweep needs mu2 in [game]")
        for key in ("x_min", "x_max", "y_min", "y_max"):
            if getattr(cfg, key) is None:
                raise ConfigError(f"{source}: missing key '{key}' in [sweep]")
        if cfg.spacing <= 0:
            raise ConfigError(f"{source}: spacing must be positive")
    return cfg


def render_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to the documented key-value layout."""
    out = ["[game]", f"mu1 = {cfg.mu1:.9g}"]
    if cfg.mu2 is not None:
        out.append(f"mu2 = {cfg.mu2:.9g}")
    out.append(f"l = {cfg.l:.9g}")
    out.append(f"evader = {cfg.evader}")
    out.append(f"pursuer = {cfg.pursuer}")
    if cfg.x0 is not None and cfg.y0 is not None:
        out += ["", "[initial]", f"x0 = {cfg.x0:.9g}", f"y0 = {cfg.y0:.9g}"]
    out += ["", "[integrator]", f"dt = {cfg.dt:.9g}", f"t_max = {cfg.t_max:.9g}"]
    if cfg.x_min is not None:
        out += [
            "",
            "[sweep]",
            f"x_min = {cfg.x_min:.9g}",
            f"x_max = {cfg.x_max:.9g}",
            f"y_min = {cfg.y_min:.9g}",
            f"y_max = {cfg.y_max:.9g}",
            f"spacing = {cfg.spacing:.9g}",
            f"workers = {cfg.workers}",
        ]
    out += ["", "[output]", f"directory = {cfg.directory}", f"prefix = {cfg.prefix}", ""]
    return "\n".join(out)


def _out_path(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.directory, exist_ok=True)
    return os.path.join(cfg.directory, f"{cfg.prefix}_{name}")


def execute(cfg: RunConfig, out=sys.stdout) -> int:
    """Run one command; returns the process exit code."""
    try:
        if cfg.command == "geometry":
            for label, params in (("mu1", cfg.params1()), ("mu2", cfg.params2())):
                if params is None:
                    continue
                geom = get_geometry(params)
                path = _out_path(cfg, f"geometry_{label}.csv")
                geom.to_csv(path)
                print(f"{label}: wrote {path}", file=out)
            return EXIT_OK

        if cfg.command == "classify":
            s = cfg.initial()
            tags = []
            for params in (cfg.params1(), cfg.params2()):
                if params is None:
                    continue
                tags.append(get_geometry(params).classify(s).tag)
            for tag in tags:
                print(tag, file=out)
            return EXIT_OK

        if cfg.command == "simulate":
            p1 = cfg.params1()
            p2 = cfg.params2() or p1
            policy = (
                EvaderPolicy(kind="deceptive", mu_low=p2.mu, mu_high=p1.mu)
                if cfg.evader == "deceptive"
                else EvaderPolicy(kind="truthful")
            )
            sc = Scenario(
                params_truth=p1,
                params_low=p2,
                initial_rel=cfg.initial(),
                evader_policy=policy,
                pursuer_mode=cfg.pursuer,
                dt=cfg.dt,
                t_max=cfg.t_max,
            )
            traj = run_closed_loop(sc)
            path = _out_path(cfg, "trajectory.csv")
            traj.to_csv(path)
            kinds = {}
            for e in traj.events:
                kinds[e.kind] = kinds.get(e.kind, 0) + 1
            ev = " ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
            if traj.capture_time is None:
                print(f"no capture within t_max={cfg.t_max:.9g} ({ev}) wrote {path}", file=out)
                return EXIT_NO_CAPTURE
            print(f"capture_time={traj.capture_time:.9g} {ev} wrote {path}", file=out)
            return EXIT_OK

        if cfg.command == "sweep":
            workers = cfg.workers
            env = os.environ.get(WORKERS_ENV)
            if env:
                try:
                    workers = int(env)
                except ValueError:
                    print(f"ignoring non-integer {WORKERS_ENV}={env!r}", file=out)
            amap = run_sweep(
                cfg.mu1,
                cfg.mu2,
                cfg.l,
                window=(cfg.x_min, cfg.x_max, cfg.y_min, cfg.y_max),
                spacing=cfg.spacing,
                dt=cfg.dt,
                workers=max(1, workers),
            )
            path = _out_path(cfg, "advantage_map.csv")
            amap.to_csv(path)
            mg = amap.max_gain()
            print(
                f"cells={len(amap.cells)} advantageous={amap.advantageous_cells()} "
                f"max_gain={'' if mg is None else format(mg, '.9g')} "
                f"failures={len(amap.failures)} wrote {path}",
                file=out,
            )
            incomplete = any(c.incomplete for c in amap.cells)
            if amap.failures:
                return EXIT_NUMERICAL
            if incomplete:
                return EXIT_NO_CAPTURE
            return EXIT_OK

        raise ConfigError(f"unknown command {cfg.command!r}")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EqualCostBracketError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chauffeur",
        description="Pursuit-evasion solution geometry, simulation and deception sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("geometry", "export barrier/equivocal curves and characteristic fans to CSV"),
        ("classify", "print the region tag of the configured initial condition"),
        ("simulate", "run one closed-loop scenario and export the trajectory"),
        ("sweep", "evaluate the deception gain over a lattice of initial conditions"),
    ):
        s = sub.add_parser(name, help=doc)
        s.add_argument("config", help="path to the INI-style run configuration")
    args = parser.parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.command, source=args.config)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
