"""Truthful-vs-deceptive comparisons and advantage-region sweeps.

Case 1 ("truthful"): the pursuer knows the evader's true speed bound from the
start and both play the fast game's equilibrium.  Case 2 ("deceptive"): the
pursuer estimates the bound from observed motion while the evader mimics the
slow game's equilibrium at the low speed, switching to the full speed at the
first crossing of the fast game's pocket wall.  The gain is the capture-time
difference; positive gain means the deception paid.

An estimating-pursuer truthful baseline is also recorded; it coincides with
the informed baseline because the estimator converges on the first
observation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GameParams, RelState, validate_params
from .sim import Scenario, run_closed_loop
from .solution import SolutionGeometry, get_geometry
from .strategy import EvaderPolicy

ADVANTAGE_CSV_HEADER = "x0,y0,region_mu1,region_mu2,t_truthful,t_deceptive,gain,switch_x,switch_y"


@dataclass(frozen=True)
class DeceptionReport:
    initial_rel: RelState
    t_truthful: float | None
    t_deceptive: float | None
    gain: float | None
    region_mu1: str
    region_mu2: str
    switch_point: tuple[float, float] | None
    t_truthful_estimating: float | None = None
    incomplete: bool = False


@dataclass
class AdvantageMap:
    mu1: float
    mu2: float
    l: float
    window: tuple[float, float, float, float]
    spacing: float
    xs: np.ndarray
    ys: np.ndarray
    cells: list[DeceptionReport]
    failures: list[tuple[float, float, str]] = field(default_factory=list)

    def max_gain(self) -> float | None:
        gains = [c.gain for c in self.cells if c.gain is not None]
        return max(gains) if gains else None

    def advantageous_cells(self, threshold: float = 0.0) -> int:
        return sum(1 for c in self.cells if c.gain is not None and c.gain > threshold)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ADVANTAGE_CSV_HEADER.split(","))
            for c in self.cells:
                sx = f"{c.switch_point[0]:.9g}" if c.switch_point else ""
                sy = f"{c.switch_point[1]:.9g}" if c.switch_point else ""
                w.writerow(
                    [
                        f"{c.initial_rel.x:.9g}",
                        f"{c.initial_rel.y:.9g}",
                        c.region_mu1,
                        c.region_mu2,
                        "" if c.t_truthful is None else f"{c.t_truthful:.9g}",
                        "" if c.t_deceptive is None else f"{c.t_deceptive:.9g}",
                        "" if c.gain is None else f"{c.gain:.9g}",
                        sx,
                        sy,
                    ]
                )


def _case1_scenario(p1: GameParams, p2: GameParams, s0: RelState, dt: float, t_max: float) -> Scenario:
    return Scenario(
        params_truth=p1,
        params_low=p2,
        initial_rel=s0,
        evader_policy=EvaderPolicy(kind="truthful"),
        pursuer_mode="informed",
        dt=dt,
        t_max=t_max,
    )


def _case2_scenario(p1: GameParams, p2: GameParams, s0: RelState, dt: float, t_max: float) -> Scenario:
    return Scenario(
        params_truth=p1,
        params_low=p2,
        initial_rel=s0,
        evader_policy=EvaderPolicy(kind="deceptive", mu_low=p2.mu, mu_high=p1.mu),
        pursuer_mode="estimating",
        dt=dt,
        t_max=t_max,
    )


def _default_horizon(geom1: SolutionGeometry, s0: RelState) -> float:
    try:
        v = geom1.value(s0)
    except Exception:
        v = 10.0
    return max(20.0, 10.0 * v)


def deception_gain(
    mu1: float,
    mu2: float,
    l: float,
    s0: RelState,
    dt: float = 1e-3,
    t_max: float | None = None,
    geom1: SolutionGeometry | None = None,
    geom2: SolutionGeometry | None = None,
    with_estimating_baseline: bool = True,
) -> DeceptionReport:
    """Run the truthful and deceptive cases from ``s0`` and compare.

    Both parameter pairs must be legal and ``mu1 > mu2`` (equal speeds are
    allowed and degenerate to zero gain).  Runs share ``dt``; a run that hits
    the horizon leaves its time as None and flags the report incomplete.
    """
    if mu1 < mu2:
        raise ValueError(f"mu1={mu1} must not be below mu2={mu2}")
    p1 = validate_params(mu1, l)
    p2 = validate_params(mu2, l)
    if geom1 is None:
        geom1 = get_geometry(p1)
    if geom2 is None:
        geom2 = geom1 if p2 == p1 else get_geometry(p2)
    if t_max is None:
        t_max = _default_horizon(geom1, s0)

    tr1 = run_closed_loop(_case1_scenario(p1, p2, s0, dt, t_max), geom1, geom2)
    tr2 = run_closed_loop(_case2_scenario(p1, p2, s0, dt, t_max), geom1, geom2)
    t_est = None
    if with_estimating_baseline:
        sc = Scenario(
            params_truth=p1,
            params_low=p2,
            initial_rel=s0,
            evader_policy=EvaderPolicy(kind="truthful"),
            pursuer_mode="estimating",
            dt=dt,
            t_max=t_max,
        )
        tr_est = run_closed_loop(sc, geom1, geom2)
        t_est = tr_est.capture_time

    switch = None
    for e in tr2.events:
        if e.kind == "switch":
            switch = e.location
            break
    t1, t2 = tr1.capture_time, tr2.capture_time
    return DeceptionReport(
        initial_rel=s0,
        t_truthful=t1,
        t_deceptive=t2,
        gain=None if (t1 is None or t2 is None) else t2 - t1,
        region_mu1=geom1.classify(s0).tag,
        region_mu2=geom2.classify(s0).tag,
        switch_point=switch,
        t_truthful_estimating=t_est,
        incomplete=(t1 is None or t2 is None),
    )


def _cell_worker(args) -> tuple[int, DeceptionReport | None, str | None]:
    idx, mu1, mu2, l, x0, y0, dt, t_max = args
    try:
        rep = deception_gain(
            mu1, mu2, l, RelState(x0, y0), dt=dt, t_max=t_max, with_estimating_baseline=False
        )
        return idx, rep, None
    except Exception as exc:  # per-cell failures recorded, sweep continues
        return idx, None, f"{type(exc).__name__}: {exc}"


def default_window(geom1: SolutionGeometry, geom2: SolutionGeometry) -> tuple[float, float, float, float]:
    """Bounding box of both games' pocket walls, padded by one turn radius."""
    walls = np.concatenate(
        [geom1.barrier.points, geom1.equivocal.points, geom2.barrier.points, geom2.equivocal.points]
    )
    return (
        -(float(walls[:, 0].max()) + 1.0),
        float(walls[:, 0].max()) + 1.0,
        float(walls[:, 1].min()) - 1.0,
        float(walls[:, 1].max()) + 1.0,
    )


def sweep(
    mu1: float,
    mu2: float,
    l: float,
    window: tuple[float, float, float, float] | None = None,
    spacing: float = 0.25,
    dt: float = 1e-3,
    t_max: float | None = None,
    workers: int = 1,
) -> AdvantageMap:
    """Evaluate :func:`deception_gain` over a lattice of initial conditions.

    ``window`` is (x_min, x_max, y_min, y_max); the default covers the two
    games' pocket walls padded by one turn radius (the interesting
    superposition region lies there).  Lattice points inside the capture
    circle are skipped.  Results are keyed by lattice index, so worker-pool
    scheduling cannot reorder them.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    p1 = validate_params(mu1, l)
    p2 = validate_params(mu2, l)
    geom1 = get_geometry(p1)
    geom2 = geom1 if p2 == p1 else get_geometry(p2)
    if window is None:
        window = default_window(geom1, geom2)
    x_min, x_max, y_min, y_max = window
    xs = np.arange(x_min, x_max + spacing * 0.5, spacing)
    ys = np.arange(y_min, y_max + spacing * 0.5, spacing)
    if t_max is None:
        far = max(abs(x_max), abs(x_min)) + abs(y_min) + abs(y_max)
        t_max = max(40.0, 4.0 * (2.0 * math.pi + far / (1.0 - mu1)))

    lattice = [
        (float(x), float(y))
        for x in xs
        for y in ys
        if x * x + y * y > l * l
    ]
    jobs = [
        (k, mu1, mu2, l, x, y, dt, t_max) for k, (x, y) in enumerate(lattice)
    ]
    results: dict[int, tuple[DeceptionReport | None, str | None]] = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, rep, err in pool.map(_cell_worker, jobs, chunksize=8):
                results[idx] = (rep, err)
    else:
        for job in jobs:
            idx, rep, err = _cell_worker(job)
            results[idx] = (rep, err)

    cells: list[DeceptionReport] = []
    failures: list[tuple[float, float, str]] = []
    for k, (x, y) in enumerate(lattice):
        rep, err = results[k]
        if rep is None:
            failures.append((x, y, err or "unknown failure"))
        else:
            cells.append(rep)
    return AdvantageMap(
        mu1=mu1,
        mu2=mu2,
        l=l,
        window=window,
        spacing=spacing,
        xs=xs,
        ys=ys,
        cells=cells,
        failures=failures,
    )
