"""Exploration-trace analytics.

Traces are the JSONL event logs the server ingests: timestamped pan / zoom /
click / pin / unpin / focus / generate events with map coordinates. The
classifier segments them into four behaviors:

  jump      one move whose normalized displacement exceeds a threshold
  wander    a run of small moves with at least one click/pin inside it
  revisit   returning near a previously visited anchor after leaving it
  fixation  one region holding a large share of dwell time or of pins

Every threshold is normalized by the map diagonal, so uniformly scaling a
trace and its map changes no classification. Camera position (pan/zoom/focus
events) is the trajectory signal; click and pin events attach as markers and
as anchor/collection evidence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cartograph import AtlasMap
from .geometry import point_in_convex

EVENT_KINDS = ("pan", "zoom", "click", "pin", "unpin", "focus", "generate")
CAMERA_KINDS = ("pan", "zoom", "focus")
_ARTWORK_KINDS = ("click", "pin", "unpin", "focus")
_ANCHOR_KINDS = ("click", "pin", "focus", "generate")
_MARKER_KINDS = ("click", "pin", "generate")


class TraceError(ValueError):
    """Raised when an event record violates the trace schema."""


@dataclass(frozen=True)
class TrajectoryEvent:
    t_ms: int
    kind: str
    x: float
    y: float
    zoom: float
    artwork_id: Optional[str] = None
    prompt: Optional[str] = None


@dataclass
class Trace:
    session_id: str
    events: list[TrajectoryEvent]
    diagonal: float

    def __post_init__(self) -> None:
        if not self.events:
            raise TraceError("trace has no events")
        if self.diagonal <= 0:
            raise TraceError("map diagonal must be positive")


@dataclass(frozen=True)
class BehaviorSegment:
    kind: str  # jump | wander | revisit | fixation
    start_idx: int
    end_idx: int
    anchor: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Move:
    from_idx: int
    to_idx: int
    src: tuple[float, float]
    dst: tuple[float, float]
    displacement_norm: float


@dataclass(frozen=True)
class BandStats:
    bands: list[dict]
    empty_collection: bool = False


@dataclass(frozen=True)
class Thresholds:
    theta_jump: float = 0.15
    theta_small: float = 0.05
    min_run: int = 3
    r_return: float = 0.08
    r_away: float = 0.20
    theta_time: float = 0.40
    theta_collect: float = 0.50


def parse_event(record: dict) -> TrajectoryEvent:
    """Validate one event record; raises TraceError naming the violation."""
    kind = record.get("kind")
    if kind not in EVENT_KINDS:
        raise TraceError(f"unknown event kind: {kind!r}")
    try:
        t_ms = int(record["t_ms"])
        x = float(record["x"])
        y = float(record["y"])
        zoom = float(record["zoom"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"event missing numeric field: {exc}") from exc
    if t_ms < 0:
        raise TraceError("t_ms must be non-negative")
    if not all(math.isfinite(v) for v in (x, y, zoom)):
        raise TraceError("coordinates must be finite")
    artwork_id = record.get("artwork_id")
    prompt = record.get("prompt")
    if kind in _ARTWORK_KINDS and not artwork_id:
        raise TraceError(f"{kind} event requires artwork_id")
    if kind not in _ARTWORK_KINDS and artwork_id is not None:
        raise TraceError(f"{kind} event must not carry artwork_id")
    if kind == "generate" and not prompt:
        raise TraceError("generate event requires prompt")
    if kind != "generate" and prompt is not None:
        raise TraceError(f"{kind} event must not carry prompt")
    return TrajectoryEvent(
        t_ms=t_ms, kind=kind, x=x, y=y, zoom=zoom, artwork_id=artwork_id, prompt=prompt
    )


def parse_event_batch(records: Sequence[dict]) -> list[TrajectoryEvent]:
    """Parse a batch atomically: timestamps must be non-decreasing."""
    events = [parse_event(r) for r in records]
    for prev, cur in zip(events, events[1:]):
        if cur.t_ms < prev.t_ms:
            raise TraceError("timestamps must be non-decreasing within a batch")
    return events


def load_trace(events_path: str | Path, session_id: str, diagonal: float) -> Trace:
    events = []
    with open(events_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(parse_event(json.loads(line)))
    return Trace(session_id=session_id, events=events, diagonal=diagonal)


def segment_moves(trace: Trace) -> list[Move]:
    """One move per consecutive camera-position change (pan/zoom/focus)."""
    moves = []
    prev_idx = None
    for idx, event in enumerate(trace.events):
        if event.kind not in CAMERA_KINDS:
            continue
        if prev_idx is not None:
            prev = trace.events[prev_idx]
            dist = math.hypot(event.x - prev.x, event.y - prev.y)
            moves.append(
                Move(
                    from_idx=prev_idx,
                    to_idx=idx,
                    src=(prev.x, prev.y),
                    dst=(event.x, event.y),
                    displacement_norm=dist / trace.diagonal,
                )
            )
        prev_idx = idx
    return moves


def classify_jumps(moves: Sequence[Move], theta_jump: float = 0.15) -> list[BehaviorSegment]:
    return [
        BehaviorSegment(kind="jump", start_idx=m.from_idx, end_idx=m.to_idx)
        for m in moves
        if m.displacement_norm > theta_jump
    ]


def classify_wander(
    trace: Trace,
    moves: Sequence[Move],
    theta_small: float = 0.05,
    min_run: int = 3,
) -> list[BehaviorSegment]:
    """Maximal runs of >= min_run small moves containing a click or pin."""
    segments = []
    run: list[Move] = []

    def flush() -> None:
        if len(run) >= min_run:
            t0 = trace.events[run[0].from_idx].t_ms
            t1 = trace.events[run[-1].to_idx].t_ms
            interacted = any(
                e.kind in ("click", "pin") and t0 <= e.t_ms <= t1
                for e in trace.events
            )
            if interacted:
                segments.append(
                    BehaviorSegment(
                        kind="wander", start_idx=run[0].from_idx, end_idx=run[-1].to_idx
                    )
                )
        run.clear()

    for move in moves:
        if move.displacement_norm <= theta_small:
            run.append(move)
        else:
            flush()
    flush()
    return segments


def detect_revisits(
    trace: Trace, r_return: float = 0.08, r_away: float = 0.20
) -> list[BehaviorSegment]:
    """Anchor automaton over interaction sites.

    Every interaction drops an anchor at the current camera position. An
    anchor fires one revisit when the camera, after having been farther than
    r_away * diagonal from it, comes back within r_return * diagonal.
    """
    diag = trace.diagonal
    anchors: list[dict] = []
    segments = []
    camera: Optional[tuple[float, float]] = None
    for idx, event in enumerate(trace.events):
        if event.kind in CAMERA_KINDS:
            camera = (event.x, event.y)
            for anchor in anchors:
                if anchor["fired"]:
                    continue
                d = math.hypot(camera[0] - anchor["point"][0], camera[1] - anchor["point"][1]) / diag
                if d > r_away:
                    anchor["left"] = True
                elif anchor["left"] and d <= r_return:
                    anchor["fired"] = True
                    segments.append(
                        BehaviorSegment(
                            kind="revisit",
                            start_idx=idx,
                            end_idx=idx,
                            anchor=anchor["point"],
                        )
                    )
        if event.kind in _ANCHOR_KINDS:
            point = camera if camera is not None else (event.x, event.y)
            anchors.append({"point": point, "left": False, "fired": False})
    return segments


def _region_lookup(atlas: AtlasMap):
    region_of_artwork = {}
    for region in atlas.regions:
        for aid in region.member_ids:
            region_of_artwork[aid] = region.id

    def region_at(point: tuple[float, float]) -> Optional[int]:
        for region in atlas.regions:
            if point_in_convex(region.polygon, point, margin=0.0):
                return region.id
        return None

    return region_of_artwork, region_at


def detect_fixation(
    trace: Trace,
    atlas: AtlasMap,
    theta_time: float = 0.40,
    theta_collect: float = 0.50,
) -> list[BehaviorSegment]:
    """Regions holding >= theta_time of dwell time, or >= theta_collect of
    pins (given at least 2 pins overall)."""
    region_of_artwork, region_at = _region_lookup(atlas)
    events = trace.events
    total_time = events[-1].t_ms - events[0].t_ms

    dwell: dict[int, float] = {}
    span: dict[int, list[int]] = {}
    camera_region: Optional[int] = None
    for idx, event in enumerate(events):
        if event.kind in CAMERA_KINDS:
            camera_region = region_at((event.x, event.y))
        if camera_region is not None:
            span.setdefault(camera_region, [idx, idx])[1] = idx
            if idx + 1 < len(events) and total_time > 0:
                dwell[camera_region] = dwell.get(camera_region, 0.0) + (
                    events[idx + 1].t_ms - event.t_ms
                )

    pinned: dict[str, Optional[int]] = {}
    for idx, event in enumerate(events):
        if event.kind != "pin":
            continue
        rid = region_of_artwork.get(event.artwork_id)
        if rid is None:
            rid = region_at((event.x, event.y))
        pinned[event.artwork_id] = rid
        if rid is not None:
            span.setdefault(rid, [idx, idx])[1] = idx
    pin_counts: dict[int, int] = {}
    for rid in pinned.values():
        if rid is not None:
            pin_counts[rid] = pin_counts.get(rid, 0) + 1
    total_pins = len(pinned)

    centroid = {r.id: (float(r.centroid_2d[0]), float(r.centroid_2d[1])) for r in atlas.regions}
    segments = []
    for region in atlas.regions:
        rid = region.id
        time_share = dwell.get(rid, 0.0) / total_time if total_time > 0 else 0.0
        collect_share = pin_counts.get(rid, 0) / total_pins if total_pins else 0.0
        if time_share >= theta_time or (total_pins >= 2 and collect_share >= theta_collect):
            lo, hi = span.get(rid, [0, len(events) - 1])
            segments.append(
                BehaviorSegment(kind="fixation", start_idx=lo, end_idx=hi, anchor=centroid[rid])
            )
    return segments


def classify_trace(
    trace: Trace, atlas: AtlasMap, thresholds: Thresholds = Thresholds()
) -> list[BehaviorSegment]:
    moves = segment_moves(trace)
    segments = classify_jumps(moves, thresholds.theta_jump)
    segments += classify_wander(trace, moves, thresholds.theta_small, thresholds.min_run)
    segments += detect_revisits(trace, thresholds.r_return, thresholds.r_away)
    segments += detect_fixation(trace, atlas, thresholds.theta_time, thresholds.theta_collect)
    return segments


def marginal_band_stats(
    atlas: AtlasMap,
    collected_ids: Iterable[str],
    band_pcts: Sequence[float] = (5, 10, 15, 20),
) -> BandStats:
    """Share of all placements vs. collected placements in the outer p% frame
    of the map rectangle, for each p."""
    rect = atlas.bounds
    collected = [aid for aid in collected_ids if aid in atlas.placements]
    all_xy = np.array([atlas.placements[a] for a in sorted(atlas.placements)])
    col_xy = np.array([atlas.placements[a] for a in collected]) if collected else np.zeros((0, 2))

    def band_share(xy: np.ndarray, pct: float) -> float:
        if len(xy) == 0:
            return 0.0
        dx = rect.width * pct / 100.0
        dy = rect.height * pct / 100.0
        inner = (
            (xy[:, 0] >= rect.minx + dx)
            & (xy[:, 0] <= rect.maxx - dx)
            & (xy[:, 1] >= rect.miny + dy)
            & (xy[:, 1] <= rect.maxy - dy)
        )
        return float(np.count_nonzero(~inner)) / len(xy)

    bands = [
        {
            "band_pct": float(p),
            "artwork_share": band_share(all_xy, p),
            "collection_share": band_share(col_xy, p),
        }
        for p in band_pcts
    ]
    return BandStats(bands=bands, empty_collection=not collected)


def collected_from_trace(trace: Trace) -> list[str]:
    """Final pinned set of a trace: pins minus later unpins, in pin order."""
    pinned: dict[str, None] = {}
    for event in trace.events:
        if event.kind == "pin":
            pinned[event.artwork_id] = None
        elif event.kind == "unpin":
            pinned.pop(event.artwork_id, None)
    return list(pinned)


# ---------------------------------------------------------------------------
# Reports


def _time_color(t: float) -> str:
    """Yellow (start) to blue (end), t in [0, 1]."""
    r = round(240 * (1.0 - t) + 30 * t)
    g = round(200 * (1.0 - t) + 60 * t)
    b = round(60 * (1.0 - t) + 220 * t)
    return f"rgb({r},{g},{b})"


def trajectory_svg(trace: Trace, atlas: Optional[AtlasMap] = None, size: int = 800) -> str:
    """Camera polyline colored by time; one marker per click/pin/generate."""
    if atlas is not None:
        rect = atlas.bounds
        minx, miny = rect.minx, rect.miny
        width, height = rect.width, rect.height
    else:
        xs = [e.x for e in trace.events]
        ys = [e.y for e in trace.events]
        minx, miny = min(xs), min(ys)
        width = max(max(xs) - minx, 1e-9)
        height = max(max(ys) - miny, 1e-9)

    def to_screen(x: float, y: float) -> tuple[float, float]:
        sx = (x - minx) / width * size
        sy = size - (y - miny) / height * size
        return sx, sy

    t0, t1 = trace.events[0].t_ms, trace.events[-1].t_ms
    tspan = max(t1 - t0, 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#f8f6f0"/>',
    ]
    camera_points = [
        (e.t_ms, *to_screen(e.x, e.y)) for e in trace.events if e.kind in CAMERA_KINDS
    ]
    for (ta, xa, ya), (tb, xb, yb) in zip(camera_points, camera_points[1:]):
        color = _time_color(((ta + tb) / 2 - t0) / tspan)
        parts.append(
            f'<line x1="{xa:.1f}" y1="{ya:.1f}" x2="{xb:.1f}" y2="{yb:.1f}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
    for event in trace.events:
        if event.kind not in _MARKER_KINDS:
            continue
        sx, sy = to_screen(event.x, event.y)
        if event.kind == "click":
            parts.append(
                f'<circle class="marker" cx="{sx:.1f}" cy="{sy:.1f}" r="3" '
                f'fill="none" stroke="#555"/>'
            )
        elif event.kind == "pin":
            parts.append(
                f'<rect class="marker" x="{sx - 3:.1f}" y="{sy - 3:.1f}" width="6" height="6" '
                f'fill="#c0392b" transform="rotate(45 {sx:.1f} {sy:.1f})"/>'
            )
        else:  # generate
            parts.append(
                f'<circle class="marker" cx="{sx:.1f}" cy="{sy:.1f}" r="4" fill="#e67e22"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)


def emit_report(
    trace: Trace,
    segments: Sequence[BehaviorSegment],
    stats: BandStats,
    out_dir: str | Path,
    atlas: Optional[AtlasMap] = None,
) -> dict[str, Path]:
    """Write report.json and trajectory.svg; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "session_id": trace.session_id,
        "n_events": len(trace.events),
        "event_counts": {
            kind: sum(1 for e in trace.events if e.kind == kind) for kind in EVENT_KINDS
        },
        "segments": [
            {
                "kind": s.kind,
                "start_idx": s.start_idx,
                "end_idx": s.end_idx,
                "anchor": list(s.anchor) if s.anchor is not None else None,
            }
            for s in segments
        ],
        "band_stats": {
            "empty_collection": stats.empty_collection,
            "bands": stats.bands,
        },
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    svg_path = out / "trajectory.svg"
    svg_path.write_text(trajectory_svg(trace, atlas), encoding="utf-8")
    return {"report": report_path, "svg": svg_path}


def parse_report(path: str | Path) -> dict:
    report = json.loads(Path(path).read_text("utf-8"))
    for key in ("session_id", "n_events", "segments", "band_stats"):
        if key not in report:
            raise TraceError(f"report missing key {key}")
    return report
