"""Lap-based evaluation: consecutive-lap timing, sweeps, and comparisons.

The protocol mirrors how the controllers are judged end to end: run a
fixed number of consecutive laps, count a lap as complete only if every
step stayed inside the corridor, time laps by interpolating the
start-line crossing between control steps, and report lap statistics,
teacher-activation counts, tracking error, and steering smoothness.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import raceline as rl
from .vehicle import SimConfig, VehicleState, collision_check, control_step


@dataclass
class LapRecord:
    lap: int
    time: float
    completed: bool


@dataclass
class LapReport:
    """Statistics over one multi-lap evaluation run."""

    laps: list[LapRecord] = field(default_factory=list)
    teacher_steps: int = 0
    total_steps: int = 0
    mean_abs_lateral_error: float = math.nan
    steering_rate_rms: float = math.nan

    @property
    def completed(self) -> int:
        return sum(1 for lap in self.laps if lap.completed)

    @property
    def attempted(self) -> int:
        return len(self.laps)

    def completed_times(self) -> list[float]:
        return [lap.time for lap in self.laps if lap.completed]

    def stats(self) -> dict:
        times = self.completed_times()
        if not times:
            return {"mean": math.nan, "std": math.nan,
                    "min": math.nan, "max": math.nan}
        arr = np.asarray(times)
        return {"mean": float(arr.mean()), "std": float(arr.std(ddof=0)),
                "min": float(arr.min()), "max": float(arr.max())}

    @property
    def teacher_fraction(self) -> float:
        return self.teacher_steps / self.total_steps if self.total_steps else 0.0

    def teacher_summary(self) -> str:
        return (f"{self.teacher_steps}/{self.total_steps} steps "
                f"({100.0 * self.teacher_fraction:.3f}%)")


def _start_state(raceline: rl.Raceline, sim_config: SimConfig,
                 start_index: int = 0) -> VehicleState:
    j = (start_index + 1) % raceline.n
    heading = math.atan2(raceline.y[j] - raceline.y[start_index],
                         raceline.x[j] - raceline.x[start_index])
    return VehicleState(float(raceline.x[start_index]),
                        float(raceline.y[start_index]),
                        heading,
                        0.5 * float(raceline.v_max[start_index]))


def run_laps(controller, raceline: rl.Raceline, sim_config: SimConfig,
             laps: int = 10, max_lap_time: float = 120.0,
             trace_path=None, start_index: int = 0) -> LapReport:
    """Drive ``laps`` consecutive laps from the start waypoint.

    A collision (or exceeding ``max_lap_time``) marks the current lap
    incomplete and restarts the run from the start line. Lap split times
    interpolate the crossing between the two straddling control steps.

    ``trace_path`` optionally streams one CSV row per control step.
    """
    if laps < 1:
        raise ValueError("laps must be >= 1")
    dt = sim_config.dt_control
    n = raceline.n
    max_lap_steps = int(math.ceil(max_lap_time / dt))

    report = LapReport()
    trace_file = None
    writer = None
    if trace_path is not None:
        trace_file = open(str(trace_path) + ".tmp", "w", newline="")
        writer = csv.writer(trace_file)
        writer.writerow(["step", "time", "lap", "index", "x", "y", "v",
                         "lookahead", "gain", "kappa_max", "gamma",
                         "lateral_error", "mode"])

    abs_lat_sum = 0.0
    steer_rate_sq_sum = 0.0
    global_step = 0

    state = _start_state(raceline, sim_config, start_index)
    controller.reset()
    prev_delta = 0.0
    prev_index = start_index

    lap_no = 1
    lap_progress = 0
    lap_start_time = 0.0
    lap_steps = 0
    clock = 0.0

    while lap_no <= laps:
        output = controller.step(state, clock)
        new_state, applied_delta = control_step(state, output.command,
                                                prev_delta, sim_config)
        steer_rate_sq_sum += ((applied_delta - prev_delta) / dt) ** 2
        state = new_state
        prev_delta = applied_delta
        clock += dt
        lap_steps += 1
        global_step += 1

        index = rl.nearest_index(raceline, state.position)
        advance = rl.progress_count(prev_index, index, n)
        prev_index = index
        lat = rl.lateral_error(raceline, state.position)
        abs_lat_sum += abs(lat)
        if output.mode == "teacher":
            report.teacher_steps += 1
        report.total_steps += 1

        if writer is not None:
            params = output.params
            preview = rl.taps(raceline, index)
            writer.writerow([global_step, f"{clock:.6f}", lap_no, index,
                             f"{state.x:.6f}", f"{state.y:.6f}", f"{state.v:.6f}",
                             "" if params is None else f"{params.lookahead:.6f}",
                             "" if params is None else f"{params.gain:.6f}",
                             f"{preview.kappa_max:.6f}",
                             f"{output.command.delta:.6f}", f"{lat:.6f}",
                             output.mode])

        crashed = collision_check(raceline, state)
        timed_out = lap_steps >= max_lap_steps
        if crashed or timed_out:
            report.laps.append(LapRecord(lap_no, math.nan, False))
            lap_no += 1
            state = _start_state(raceline, sim_config, start_index)
            controller.reset()
            prev_delta = 0.0
            prev_index = start_index
            lap_progress = 0
            lap_start_time = clock
            lap_steps = 0
            continue

        before = lap_progress
        lap_progress += advance
        while lap_progress >= n and lap_no <= laps:
            # Interpolate the start-line crossing inside this control step.
            frac = (n - before) / (lap_progress - before) \
                if lap_progress > before else 1.0
            crossing = clock - dt + frac * dt
            report.laps.append(LapRecord(lap_no, crossing - lap_start_time, True))
            lap_no += 1
            lap_start_time = crossing
            lap_progress -= n
            before = 0
            lap_steps = 0

    if trace_file is not None:
        trace_file.close()
        os.replace(str(trace_path) + ".tmp", trace_path)

    if report.total_steps:
        report.mean_abs_lateral_error = abs_lat_sum / report.total_steps
        report.steering_rate_rms = math.sqrt(steer_rate_sq_sum / report.total_steps)
    return report


def write_laps_csv(report: LapReport, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["lap", "time", "completed"])
        for lap in report.laps:
            writer.writerow([lap.lap,
                             "" if math.isnan(lap.time) else f"{lap.time:.6f}",
                             int(lap.completed)])
    os.replace(tmp, path)


def report_from_laps_csv(path) -> list[LapRecord]:
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            time = float(row["time"]) if row["time"] else math.nan
            records.append(LapRecord(int(row["lap"]), time, bool(int(row["completed"]))))
    return records


@dataclass
class SweepEntry:
    multiplier: float
    report: LapReport


@dataclass
class SweepResult:
    entries: list[SweepEntry]
    best_multiplier: float | None
    fully_completing: bool

    def best_entry(self) -> SweepEntry | None:
        for entry in self.entries:
            if entry.multiplier == self.best_multiplier:
                return entry
        return None


def sweep_multipliers(build_controller_fn, base_raceline: rl.Raceline,
                      sim_config: SimConfig, grid, laps: int = 10,
                      max_lap_time: float = 120.0, refine_step: float = 0.0) -> SweepResult:
    """Find the largest speed multiplier with full lap completion.

    ``build_controller_fn(raceline)`` must return a fresh controller bound
    to the scaled raceline. The grid must be ascending. With
    ``refine_step`` > 0 the boundary between the best passing and the next
    grid point is refined at that resolution. If no multiplier fully
    completes, the entry with the most completions is reported and the
    result is flagged.
    """
    grid = [float(m) for m in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("multiplier grid must be strictly ascending")

    def evaluate(multiplier: float) -> SweepEntry:
        scaled = rl.scale_speeds(base_raceline, multiplier)
        controller = build_controller_fn(scaled)
        report = run_laps(controller, scaled, sim_config, laps=laps,
                          max_lap_time=max_lap_time)
        return SweepEntry(multiplier, report)

    entries = [evaluate(m) for m in grid]
    passing = [e for e in entries if e.report.completed == laps]
    if not passing:
        best = max(entries, key=lambda e: (e.report.completed, e.multiplier))
        return SweepResult(entries, best.multiplier, False)

    best = max(passing, key=lambda e: e.multiplier)
    if refine_step > 0.0:
        above = [m for m in grid if m > best.multiplier]
        ceiling = min(above) if above else best.multiplier + 5 * refine_step
        candidate = best.multiplier + refine_step
        while candidate < ceiling - 1e-12:
            entry = evaluate(round(candidate, 10))
            entries.append(entry)
            if entry.report.completed == laps:
                best = entry
            candidate += refine_step
        entries.sort(key=lambda e: e.multiplier)

    return SweepResult(entries, best.multiplier, True)


def format_comparison(rows: list[tuple[str, LapReport]]) -> str:
    """Plain-text table of lap-time statistics per controller."""
    header = f"{'Controller':<32}{'Mean':>8}{'Std':>8}{'Min':>8}{'Max':>8}{'Laps':>8}"
    lines = [header, "-" * len(header)]
    for name, report in rows:
        stats = report.stats()
        lines.append(
            f"{name:<32}"
            f"{stats['mean']:>8.2f}{stats['std']:>8.2f}"
            f"{stats['min']:>8.2f}{stats['max']:>8.2f}"
            f"{report.completed:>5d}/{report.attempted:<2d}"
        )
    return "\n".join(lines)


def write_comparison_csv(rows: list[tuple[str, LapReport]], path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["controller", "mean", "std", "min", "max",
                         "completed", "attempted", "teacher_steps",
                         "total_steps", "mean_abs_lateral_error",
                         "steering_rate_rms"])
        for name, report in rows:
            stats = report.stats()
            writer.writerow([name, stats["mean"], stats["std"], stats["min"],
                             stats["max"], report.completed, report.attempted,
                             report.teacher_steps, report.total_steps,
                             report.mean_abs_lateral_error,
                             report.steering_rate_rms])
    os.replace(tmp, path)
