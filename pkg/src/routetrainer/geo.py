"""Geodesy primitives for pedestrian traces.

Distances are great-circle meters on a sphere. Projection onto a polyline is
done in a local planar frame, which is accurate to well under a percent at
walking scales, and supports an along-track window so that callers tracking
progress do not snap to a far-away part of a self-crossing path.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ContractViolation, InsufficientData, OrderingError

EARTH_RADIUS_M = 6_371_000.0  # mean Earth radius in meters

# meters per degree of latitude on the sphere above
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

TRACE_CSV_HEADER = ("ts_ms", "lat_deg", "lon_deg", "accuracy_m")


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84-style coordinate in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ContractViolation(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ContractViolation(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class GpsFix:
    """A timestamped position sample.

    Args:
        point: where the receiver thinks it is.
        ts: milliseconds since the epoch.
        accuracy: reported 1-sigma accuracy in meters, if the receiver gave one.
    """

    point: GeoPoint
    ts: int
    accuracy: float | None = None

    def __post_init__(self):
        if self.accuracy is not None and self.accuracy < 0:
            raise ContractViolation("accuracy must be >= 0")


@dataclass(frozen=True)
class ProjectedPosition:
    """Result of projecting a point onto a polyline.

    along_track is distance from the line start in meters, cross_track the
    distance from the point to the nearest permitted spot on the line.
    """

    segment_index: int
    along_track: float
    cross_track: float


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters.

    Args:
        a: first point.
        b: second point.

    Returns:
        Distance in meters; zero for identical points, symmetric in arguments.
    """
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlambda = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlambda / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth from a to b in degrees, normalized to [0, 360)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlambda = math.radians(b.lon - a.lon)
    y = math.sin(dlambda) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlambda)
    return (math.degrees(math.atan2(y, x)) + 360.0) % 360.0


def destination_point(start: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached from start after distance_m along a constant bearing."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(start.lat)
    lambda1 = math.radians(start.lon)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lambda2 = lambda1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon = math.degrees(lambda2)
    if lon > 180.0:
        lon -= 360.0
    elif lon < -180.0:
        lon += 360.0
    return GeoPoint(math.degrees(phi2), lon)


class Polyline:
    """An ordered sequence of at least two vertices with no consecutive repeats.

    Cumulative along-track distances are computed once at construction so that
    projection and interpolation stay cheap.
    """

    __slots__ = ("vertices", "cumulative")

    def __init__(self, vertices: Sequence[GeoPoint]):
        vertices = tuple(vertices)
        if len(vertices) < 2:
            raise InsufficientData("a polyline needs at least 2 vertices")
        for a, b in zip(vertices, vertices[1:]):
            if a == b:
                raise ContractViolation("consecutive identical vertices")
        cumulative = [0.0]
        for a, b in zip(vertices, vertices[1:]):
            cumulative.append(cumulative[-1] + haversine_distance(a, b))
        self.vertices = vertices
        self.cumulative = tuple(cumulative)

    @property
    def length_m(self) -> float:
        return self.cumulative[-1]

    def __eq__(self, other):
        return isinstance(other, Polyline) and self.vertices == other.vertices

    def __hash__(self):
        return hash(self.vertices)

    def __repr__(self):
        return f"Polyline({len(self.vertices)} vertices, {self.length_m:.1f} m)"

    def _segment_range(self, lo: float, hi: float) -> range:
        """Indices of segments whose along-track span intersects [lo, hi]."""
        import bisect

        cum = self.cumulative
        first = max(bisect.bisect_right(cum, lo) - 1, 0)
        last = min(bisect.bisect_left(cum, hi), len(cum) - 1)
        return range(first, max(last, first + 1))

    def point_at(self, along_m: float) -> GeoPoint:
        """Interpolated point at an along-track distance, clamped to the line."""
        import bisect

        cum = self.cumulative
        s = min(max(along_m, 0.0), self.length_m)
        i = min(max(bisect.bisect_right(cum, s) - 1, 0), len(self.vertices) - 2)
        seg_len = cum[i + 1] - cum[i]
        t = 0.0 if seg_len <= 0.0 else (s - cum[i]) / seg_len
        a, b = self.vertices[i], self.vertices[i + 1]
        return GeoPoint(a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon))

    def bearing_at(self, along_m: float) -> float:
        """Bearing of the segment containing the given along-track distance."""
        import bisect

        cum = self.cumulative
        s = min(max(along_m, 0.0), self.length_m)
        i = min(max(bisect.bisect_right(cum, s) - 1, 0), len(self.vertices) - 2)
        return initial_bearing_deg(self.vertices[i], self.vertices[i + 1])


def _local_xy(p: GeoPoint, anchor: GeoPoint, cos_lat: float) -> tuple[float, float]:
    # equirectangular approximation about the anchor; fine below a few km
    return (
        (p.lon - anchor.lon) * M_PER_DEG * cos_lat,
        (p.lat - anchor.lat) * M_PER_DEG,
    )


def _point_segment_offset(
    p: GeoPoint, a: GeoPoint, b: GeoPoint
) -> tuple[float, float]:
    """(clamped fraction along a->b, meters from p to that clamped point)."""
    anchor = GeoPoint((a.lat + b.lat) / 2.0, (a.lon + b.lon) / 2.0)
    cos_lat = math.cos(math.radians(anchor.lat))
    ax, ay = _local_xy(a, anchor, cos_lat)
    bx, by = _local_xy(b, anchor, cos_lat)
    px, py = _local_xy(p, anchor, cos_lat)
    dx, dy = bx - ax, by - ay
    seg_sq = dx * dx + dy * dy
    if seg_sq <= 1e-12:
        return 0.0, math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg_sq
    t = min(max(t, 0.0), 1.0)
    cx, cy = ax + t * dx, ay + t * dy
    return t, math.hypot(px - cx, py - cy)


def project_onto_polyline(
    p: GeoPoint,
    line: Polyline,
    window: tuple[float, float] | None = None,
) -> ProjectedPosition:
    """Project a point onto the polyline, optionally restricted to a window.

    Args:
        p: point to project.
        line: target polyline.
        window: optional (lo, hi) in along-track meters; only positions inside
            it are considered. Defaults to the whole line.

    Returns:
        The ProjectedPosition with the smallest cross-track distance among the
        segments that intersect the window; ties resolve to the earliest
        segment. along_track is always inside the window.

    Raises:
        ContractViolation: if the window is empty or misses the line entirely.
    """
    if window is None:
        lo, hi = 0.0, line.length_m
    else:
        lo, hi = window
        if lo > hi:
            raise ContractViolation(f"empty projection window ({lo}, {hi})")
        lo = max(lo, 0.0)
        hi = min(hi, line.length_m)
        if lo > hi:
            raise ContractViolation("projection window misses the line")

    cum = line.cumulative
    best: ProjectedPosition | None = None
    for i in line._segment_range(lo, hi):
        seg_start, seg_end = cum[i], cum[i + 1]
        if seg_end < lo or seg_start > hi:
            continue
        a, b = line.vertices[i], line.vertices[i + 1]
        t, _ = _point_segment_offset(p, a, b)
        seg_len = seg_end - seg_start
        along = seg_start + t * seg_len
        along = min(max(along, max(lo, seg_start)), min(hi, seg_end))
        # recompute the offset against the window-clamped spot on the segment
        t2 = 0.0 if seg_len <= 0.0 else (along - seg_start) / seg_len
        spot = GeoPoint(a.lat + t2 * (b.lat - a.lat), a.lon + t2 * (b.lon - a.lon))
        cross = haversine_distance(p, spot)
        if best is None or cross < best.cross_track:
            best = ProjectedPosition(i, along, cross)
    if best is None:
        raise ContractViolation("projection window misses the line")
    return best


def within_geofence(p: GeoPoint, center: GeoPoint, radius_m: float) -> bool:
    """True when p is inside or exactly on the circle boundary.

    Raises:
        ContractViolation: if radius_m is not positive.
    """
    if radius_m <= 0:
        raise ContractViolation("geofence radius must be > 0")
    return haversine_distance(p, center) <= radius_m


def _max_deviation(points: Sequence[GeoPoint], first: int, last: int) -> tuple[float, int]:
    """Largest offset of interior points from the chord points[first]..points[last]."""
    a, b = points[first], points[last]
    worst_d, worst_i = -1.0, first
    for i in range(first + 1, last):
        if a == b:
            d = haversine_distance(points[i], a)
        else:
            _, d = _point_segment_offset(points[i], a, b)
        if d > worst_d:
            worst_d, worst_i = d, i
    return worst_d, worst_i


def simplify_trace(fixes: Sequence[GpsFix], tolerance_m: float = 5.0) -> Polyline:
    """Reduce a raw trace to a polyline within tolerance of every input fix.

    Uses the classic divide-and-conquer reduction: keep the endpoints, recurse
    on the farthest outlier until all interior points sit within tolerance of
    their covering chord.

    Args:
        fixes: at least two timestamped fixes in strictly increasing ts order.
        tolerance_m: maximum allowed cross-track deviation of dropped fixes.

    Returns:
        A Polyline whose first and last vertices are the first and last fixes.

    Raises:
        InsufficientData: fewer than 2 fixes, or the trace collapses to a point.
        OrderingError: timestamps not strictly increasing.
        ContractViolation: non-positive tolerance.
    """
    if tolerance_m <= 0:
        raise ContractViolation("tolerance must be > 0")
    if len(fixes) < 2:
        raise InsufficientData("need at least 2 fixes to simplify")
    for f, g in zip(fixes, fixes[1:]):
        if g.ts <= f.ts:
            raise OrderingError("fix timestamps must be strictly increasing")

    points = [f.point for f in fixes]
    keep = [False] * len(points)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        worst_d, worst_i = _max_deviation(points, first, last)
        if worst_d > tolerance_m:
            keep[worst_i] = True
            stack.append((first, worst_i))
            stack.append((worst_i, last))

    kept: list[GeoPoint] = []
    for flag, pt in zip(keep, points):
        if flag and (not kept or kept[-1] != pt):
            kept.append(pt)
    if len(kept) < 2:
        raise InsufficientData("trace collapses to a single point")
    return Polyline(kept)


def fixes_to_csv_text(fixes: Sequence[GpsFix]) -> str:
    """Render fixes in the interchange CSV format."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_CSV_HEADER)
    for f in fixes:
        acc = "" if f.accuracy is None else repr(f.accuracy)
        writer.writerow([f.ts, repr(f.point.lat), repr(f.point.lon), acc])
    return buf.getvalue()


def fixes_from_csv_text(text: str) -> list[GpsFix]:
    """Parse the interchange CSV format back into fixes.

    Raises:
        ContractViolation: wrong header or malformed row.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ContractViolation("empty trace file") from None
    if tuple(header) != TRACE_CSV_HEADER:
        raise ContractViolation(f"bad trace header: {header!r}")
    fixes: list[GpsFix] = []
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            raise ContractViolation(f"bad trace row: {row!r}")
        ts, lat, lon, acc = row
        fixes.append(
            GpsFix(
                point=GeoPoint(float(lat), float(lon)),
                ts=int(ts),
                accuracy=None if acc == "" else float(acc),
            )
        )
    return fixes


def write_trace_csv(path: str | Path, fixes: Sequence[GpsFix]) -> None:
    Path(path).write_text(fixes_to_csv_text(fixes), encoding="utf-8")


def read_trace_csv(path: str | Path) -> list[GpsFix]:
    return fixes_from_csv_text(Path(path).read_text(encoding="utf-8"))
