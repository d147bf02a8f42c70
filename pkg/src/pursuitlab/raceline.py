"""Closed reference racelines: loading, synthesis, and geometric queries.

A raceline is a closed loop of waypoints, each carrying position, signed
curvature, and a reference speed. It is the shared reference for every
controller in this package: Pure Pursuit walks it for lookahead targets,
the curvature taps feed the learned policy's observation, and the MPC
tracker samples it for its horizon reference.

Racelines are immutable after construction and safe to query concurrently.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

# Waypoint-index offsets of the near/mid/far curvature preview taps.
TAP_OFFSETS = (0, 5, 12)

# Window (in waypoints, centered on the nearest index) used to smooth the
# local curvature reported to the reward.
LOCAL_CURVATURE_WINDOW = 5

MIN_WAYPOINTS = 20
SPACING_RANGE = (0.05, 1.0)
CLOSURE_FACTOR = 3.0


@dataclass(frozen=True)
class Waypoint:
    """One raceline sample: position [m], signed curvature [1/m], speed [m/s]."""

    x: float
    y: float
    kappa: float
    v_max: float


@dataclass(frozen=True)
class CurvatureTaps:
    """Absolute curvature previews at the fixed near/mid/far index offsets."""

    kappa0: float
    kappa1: float
    kappa2: float
    dkappa: float
    kappa_max: float


class Raceline:
    """A closed loop of waypoints with a scaled reference speed profile.

    Args:
        x, y: waypoint positions [m], arrays of equal length N >= 20.
        kappa: signed curvature at each waypoint [1/m] (left turns positive).
        v_base: unscaled reference speed at each waypoint [m/s], all > 0.
        half_width: lateral corridor half-width [m].
        speed_scale: uniform multiplier applied to ``v_base``; kept separate
            so repeated scaling composes exactly.
    """

    def __init__(self, x, y, kappa, v_base, half_width, speed_scale=1.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        kappa = np.asarray(kappa, dtype=float)
        v_base = np.asarray(v_base, dtype=float)

        n = len(x)
        if not (len(y) == len(kappa) == len(v_base) == n):
            raise ValueError("waypoint arrays must have equal length")
        if n < MIN_WAYPOINTS:
            raise ValueError(f"raceline needs at least {MIN_WAYPOINTS} waypoints, got {n}")
        for name, arr in (("x", x), ("y", y), ("kappa", kappa), ("v_max", v_base)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite value in column {name}")
        if np.any(v_base <= 0.0):
            raise ValueError("every v_max must be > 0")
        if half_width <= 0.0:
            raise ValueError("half_width must be > 0")
        if speed_scale <= 0.0:
            raise ValueError("speed_scale must be > 0")

        # Segment i joins waypoint i to (i+1) mod N; the last entry closes
        # the loop across the seam.
        dx = np.roll(x, -1) - x
        dy = np.roll(y, -1) - y
        seg_len = np.hypot(dx, dy)
        if np.any(seg_len <= 0.0):
            bad = int(np.argmin(seg_len))
            raise ValueError(f"zero-length segment after waypoint {bad} (duplicate point?)")

        mean_spacing = float(np.mean(seg_len[:-1]))
        if not (SPACING_RANGE[0] <= mean_spacing <= SPACING_RANGE[1]):
            raise ValueError(
                f"mean waypoint spacing {mean_spacing:.4f} m outside "
                f"[{SPACING_RANGE[0]}, {SPACING_RANGE[1]}] m"
            )
        closure = float(seg_len[-1])
        if closure > CLOSURE_FACTOR * mean_spacing:
            raise ValueError(
                f"loop-closure violation: last-to-first distance {closure:.4f} m "
                f"exceeds {CLOSURE_FACTOR}x mean spacing {mean_spacing:.4f} m"
            )

        self.x = x
        self.y = y
        self.kappa = kappa
        self.v_base = v_base
        self.speed_scale = float(speed_scale)
        self.v_max = v_base * self.speed_scale
        self.half_width = float(half_width)
        self.n = n
        self.seg_len = seg_len
        self.mean_spacing = mean_spacing
        # Cumulative arc length at each waypoint, plus the total lap length.
        self.cum_s = np.concatenate(([0.0], np.cumsum(seg_len)))
        self.total_length = float(self.cum_s[-1])
        # Segment endpoint caches for the lateral-error scan.
        self._seg_dx = dx
        self._seg_dy = dy
        self._seg_len2 = seg_len * seg_len

        for a in (self.x, self.y, self.kappa, self.v_base, self.v_max,
                  self.seg_len, self.cum_s):
            a.setflags(write=False)

    def waypoint(self, i: int) -> Waypoint:
        return Waypoint(float(self.x[i]), float(self.y[i]),
                        float(self.kappa[i]), float(self.v_max[i]))

    @property
    def waypoints(self) -> list[Waypoint]:
        return [self.waypoint(i) for i in range(self.n)]


def load_raceline(source: str, half_width: float = 1.1) -> Raceline:
    """Parse delimited-text raceline content into a :class:`Raceline`.

    ``source`` is the file content (not a path): comma-separated with a
    header row naming columns ``x, y, kappa, v_max`` (extra columns are
    ignored) and one waypoint per data row. Do not duplicate the closing
    waypoint; the loop seam is implicit.

    Raises ``ValueError`` naming the offending 1-based data row for
    malformed rows, missing columns, non-finite values, or non-positive
    speeds; structural problems (too few rows, loop-closure violations)
    are reported without a row index.
    """
    reader = csv.reader(io.StringIO(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty raceline source") from None
    header = [h.strip() for h in header]
    required = ("x", "y", "kappa", "v_max")
    missing = [c for c in required if c not in header]
    if missing:
        raise ValueError(f"missing column(s): {', '.join(missing)}")
    cols = {c: header.index(c) for c in required}

    rows = {c: [] for c in required}
    for row_idx, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise ValueError(f"row {row_idx}: expected {len(header)} fields, got {len(row)}")
        for c in required:
            cell = row[cols[c]].strip()
            try:
                value = float(cell)
            except ValueError:
                raise ValueError(f"row {row_idx}: malformed {c} value {cell!r}") from None
            if not math.isfinite(value):
                raise ValueError(f"row {row_idx}: non-finite {c} value")
            rows[c].append(value)
        if rows["v_max"][-1] <= 0.0:
            raise ValueError(f"row {row_idx}: v_max must be > 0")
        if row_idx >= 2:
            dx = rows["x"][-1] - rows["x"][-2]
            dy = rows["y"][-1] - rows["y"][-2]
            if dx == 0.0 and dy == 0.0:
                raise ValueError(f"row {row_idx}: duplicates the previous waypoint")

    return Raceline(rows["x"], rows["y"], rows["kappa"], rows["v_max"], half_width)


def load_raceline_file(path, half_width: float = 1.1) -> Raceline:
    """Read ``path`` and parse it with :func:`load_raceline`."""
    with open(path, "r", encoding="utf-8") as f:
        return load_raceline(f.read(), half_width)


def _segment_plan(kind, straight, radius, length_x, length_y):
    """Return [(type, length, signed curvature), ...] for a closed layout."""
    if radius <= 0.0:
        raise ValueError("radius must be > 0")
    k = 1.0 / radius
    if kind == "oval":
        if straight <= 0.0:
            raise ValueError("straight length must be > 0")
        half_turn = math.pi * radius
        return [("line", straight, 0.0), ("arc", half_turn, k),
                ("line", straight, 0.0), ("arc", half_turn, k)]
    if kind == "rounded_rectangle":
        if length_x <= 0.0 or length_y <= 0.0:
            raise ValueError("side lengths must be > 0")
        quarter_turn = 0.5 * math.pi * radius
        plan = []
        for side in (length_x, length_y, length_x, length_y):
            plan.append(("line", side, 0.0))
            plan.append(("arc", quarter_turn, k))
        return plan
    raise ValueError(f"unknown track kind {kind!r}")


def synthesize_track(kind: str, *, straight: float = 10.0, radius: float = 3.0,
                     length_x: float = 12.0, length_y: float = 6.0,
                     spacing: float = 0.25, half_width: float = 1.1,
                     v_cap: float = 12.0, a_lat_max: float = 3.0) -> Raceline:
    """Build a closed analytic raceline with an exact curvature profile.

    Two layouts are supported: ``oval`` (two straights of length ``straight``
    joined by half-circle arcs of ``radius``) and ``rounded_rectangle``
    (straights ``length_x``/``length_y`` joined by quarter-circle arcs).
    Curvature is exactly 0 on straights and 1/radius on arcs (left-handed
    loop, so arcs are positive). The reference speed at each waypoint is
    ``min(v_cap, sqrt(a_lat_max / |kappa|))``.

    The requested ``spacing`` is adjusted slightly so the perimeter divides
    into a whole number of uniform steps and the loop closes exactly.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be > 0")
    if v_cap <= 0.0 or a_lat_max <= 0.0:
        raise ValueError("v_cap and a_lat_max must be > 0")

    plan = _segment_plan(kind, straight, radius, length_x, length_y)
    min_arc = min(length for seg, length, _ in plan if seg == "arc")
    if spacing > min_arc:
        raise ValueError(
            f"spacing {spacing} m exceeds the shortest arc length {min_arc:.4f} m"
        )

    perimeter = sum(length for _, length, _ in plan)
    n = max(int(round(perimeter / spacing)), MIN_WAYPOINTS)
    ds = perimeter / n

    xs = np.empty(n)
    ys = np.empty(n)
    ks = np.empty(n)

    # March the plan once to record each segment's start pose and arc offset.
    segments = []
    px, py, heading = 0.0, 0.0, 0.0
    s_acc = 0.0
    for seg_kind, seg_length, seg_kappa in plan:
        segments.append((s_acc, px, py, heading, seg_kind, seg_kappa))
        if seg_kind == "line":
            px += seg_length * math.cos(heading)
            py += seg_length * math.sin(heading)
        else:
            r = 1.0 / seg_kappa
            cx = px - r * math.sin(heading)
            cy = py + r * math.cos(heading)
            sweep = seg_length * seg_kappa
            a = (heading - math.pi / 2.0) + sweep
            px = cx + r * math.cos(a)
            py = cy + r * math.sin(a)
            heading += sweep
        s_acc += seg_length

    ptr = 0
    boundaries = [seg[0] for seg in segments] + [perimeter]
    for i in range(n):
        s = i * ds
        while ptr + 1 < len(segments) and s >= boundaries[ptr + 1] - 1e-12:
            ptr += 1
        s0, sx, sy, sh, seg_kind, seg_kappa = segments[ptr]
        local = s - s0
        if seg_kind == "line":
            xs[i] = sx + local * math.cos(sh)
            ys[i] = sy + local * math.sin(sh)
            ks[i] = 0.0
        else:
            r = 1.0 / seg_kappa
            cx = sx - r * math.sin(sh)
            cy = sy + r * math.cos(sh)
            a = (sh - math.pi / 2.0) + local * seg_kappa
            xs[i] = cx + r * math.cos(a)
            ys[i] = cy + r * math.sin(a)
            ks[i] = seg_kappa

    with np.errstate(divide="ignore"):
        v = np.where(ks == 0.0, v_cap, np.minimum(v_cap, np.sqrt(a_lat_max / np.abs(ks))))

    return Raceline(xs, ys, ks, v, half_width)


def nearest_index(raceline: Raceline, p) -> int:
    """Index of the waypoint closest to position ``p``; ties take the smaller index."""
    dx = raceline.x - p[0]
    dy = raceline.y - p[1]
    return int(np.argmin(dx * dx + dy * dy))


def taps(raceline: Raceline, i: int) -> CurvatureTaps:
    """Absolute curvature at the preview offsets ahead of waypoint ``i``."""
    n = raceline.n
    k0 = abs(float(raceline.kappa[(i + TAP_OFFSETS[0]) % n]))
    k1 = abs(float(raceline.kappa[(i + TAP_OFFSETS[1]) % n]))
    k2 = abs(float(raceline.kappa[(i + TAP_OFFSETS[2]) % n]))
    return CurvatureTaps(k0, k1, k2, k1 - k0, max(k0, k1, k2))


def local_curvature(raceline: Raceline, i: int, window: int = LOCAL_CURVATURE_WINDOW) -> float:
    """Mean absolute curvature over a ``window``-waypoint span centred on ``i``."""
    half = window // 2
    idx = (np.arange(i - half, i - half + window)) % raceline.n
    return float(np.mean(np.abs(raceline.kappa[idx])))


def lookahead_target(raceline: Raceline, p, lookahead: float):
    """Point ``lookahead`` metres along the polyline ahead of the waypoint nearest ``p``.

    Walks forward from the nearest waypoint, wrapping across the loop seam,
    and interpolates linearly inside the segment where the accumulated arc
    length crosses ``lookahead``. Returns an (x, y) array.
    """
    if lookahead <= 0.0:
        raise ValueError("lookahead must be > 0")
    i = nearest_index(raceline, p)
    s = (raceline.cum_s[i] + lookahead) % raceline.total_length
    j = int(np.searchsorted(raceline.cum_s, s, side="right")) - 1
    j = min(j, raceline.n - 1)
    frac = (s - raceline.cum_s[j]) / raceline.seg_len[j]
    jn = (j + 1) % raceline.n
    return np.array([
        raceline.x[j] + frac * (raceline.x[jn] - raceline.x[j]),
        raceline.y[j] + frac * (raceline.y[jn] - raceline.y[j]),
    ])


def scale_speeds(raceline: Raceline, multiplier: float) -> Raceline:
    """New raceline with every reference speed multiplied; geometry is shared."""
    if multiplier <= 0.0:
        raise ValueError("multiplier must be > 0")
    return Raceline(raceline.x, raceline.y, raceline.kappa, raceline.v_base,
                    raceline.half_width, raceline.speed_scale * multiplier)


def progress_count(prev_index: int, new_index: int, n: int) -> int:
    """Waypoints newly passed going from ``prev_index`` to ``new_index``.

    Forward advance with wrap; apparent advances larger than half the loop
    are treated as backward motion and count as 0.
    """
    d = (new_index - prev_index) % n
    return 0 if d > n // 2 else d


def lateral_error(raceline: Raceline, p) -> float:
    """Signed perpendicular distance from ``p`` to the nearest raceline segment.

    Positive on the left of the local travel direction.
    """
    rx = p[0] - raceline.x
    ry = p[1] - raceline.y
    t = (rx * raceline._seg_dx + ry * raceline._seg_dy) / raceline._seg_len2
    np.clip(t, 0.0, 1.0, out=t)
    ex = rx - t * raceline._seg_dx
    ey = ry - t * raceline._seg_dy
    d2 = ex * ex + ey * ey
    k = int(np.argmin(d2))
    cross = raceline._seg_dx[k] * ry[k] - raceline._seg_dy[k] * rx[k]
    sign = 1.0 if cross >= 0.0 else -1.0
    return sign * math.sqrt(float(d2[k]))
