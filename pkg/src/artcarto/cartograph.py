"""Regionize a global projection into a hierarchical atlas.

Pipeline: scale the global layout into the map frame, nudge outliers inward,
k-means the placements into regions, clip Voronoi cells, merge adjacent
regions into countries by fused-vector similarity, re-fit each region's local
projection into its cell, then pick representatives and assemble the map.

The whole build is a pure function of (corpus hash, configs, seeds); atlas
JSON uses canonical key order and 6-significant-digit floats so re-serializing
a parsed atlas is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import CorpusBundle, corpus_hash
from .curate import FusedCorpus, FusionConfig, curate_corpus
from .geometry import (
    Rect,
    dedupe_sites,
    largest_inscribed_rect,
    point_in_convex,
    polygon_area,
    shared_edge_length,
    voronoi_cells,
)
from .project import Projection2D, ProjectionConfig, project_global, project_local

DEFAULT_MAP_RECT = Rect(0.0, 0.0, 1000.0, 1000.0)


class AtlasInvariantError(RuntimeError):
    """An atlas invariant failed during assembly; names the broken invariant."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(f"atlas invariant violated: {invariant}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class CartographyConfig:
    n_regions: int = 64
    n_countries: int = 8
    map_rect: Rect = DEFAULT_MAP_RECT
    outlier_mad: float = 3.0
    min_separation: float = 0.5
    kmeans_max_iter: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_regions < 1 or self.n_countries < 1:
            raise ValueError("region and country counts must be positive")
        if self.n_countries > self.n_regions:
            raise ValueError("n_countries must not exceed n_regions")
        if self.outlier_mad <= 0 or self.min_separation <= 0:
            raise ValueError("outlier_mad and min_separation must be positive")


@dataclass
class Region:
    id: int
    polygon: np.ndarray
    centroid_2d: np.ndarray
    member_ids: tuple[str, ...]
    representative_id: str
    country_id: int


@dataclass
class AtlasMap:
    bounds: Rect
    countries: list[dict]
    regions: list[Region]
    placements: dict[str, tuple[float, float]]
    build_meta: dict


@dataclass(frozen=True)
class ViewportQuery:
    bbox: Rect
    zoom: float
    budget: int

    def __post_init__(self) -> None:
        if self.zoom < 0:
            raise ValueError("zoom must be >= 0")
        if self.budget < 1:
            raise ValueError("budget must be positive")


def kmeans_2d(
    points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with seeded k-means++ init.

    Converges when no assignment changes; empty clusters are repaired by
    stealing the farthest point from the largest cluster.
    """
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")
    rng = np.random.Generator(np.random.PCG64(seed))

    centroids = np.empty((k, 2))
    centroids[0] = X[int(rng.integers(n))]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = float(rng.random()) * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centroids[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[c]) ** 2, axis=1))

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dist2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist2, axis=1)  # ties resolve to the lower index

        counts = np.bincount(new_assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            donor = int(np.argmax(counts))
            members = np.flatnonzero(new_assign == donor)
            far = members[int(np.argmax(np.sum((X[members] - centroids[donor]) ** 2, axis=1)))]
            new_assign[far] = empty
            counts = np.bincount(new_assign, minlength=k)

        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            members = np.flatnonzero(assignments == c)
            centroids[c] = X[members].mean(axis=0)
    return assignments, centroids


def merge_regions(
    polygons: Sequence[np.ndarray],
    member_vectors: Sequence[np.ndarray],
    target_count: int,
    fallback_centroids: Optional[np.ndarray] = None,
) -> tuple[dict[int, int], bool]:
    """Iteratively merge adjacent regions into countries.

    Each step merges the adjacent pair of countries whose mean fused vectors
    are closest in Euclidean distance (ties to the smaller id pair). When the
    adjacency graph cannot reach target_count, the nearest non-adjacent pair
    by 2D centroid is merged instead and the fallback is flagged.

    Returns (region id -> country id, used_disconnected_fallback).
    """
    n = len(polygons)
    if target_count > n:
        raise ValueError("target_count exceeds region count")
    scale = max(
        (float(np.abs(p).max()) for p in polygons if len(p)), default=1.0
    )
    tol = 1e-9 * max(scale, 1.0)
    adjacency: dict[int, set[int]] = {i: set() for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if shared_edge_length(polygons[i], polygons[j], tol) > tol:
                adjacency[i].add(j)
                adjacency[j].add(i)

    means = {}
    sizes = {}
    for i, vecs in enumerate(member_vectors):
        v = np.asarray(vecs, dtype=np.float64)
        means[i] = v.mean(axis=0) if v.size else np.zeros(1)
        sizes[i] = max(len(v), 1)
    if fallback_centroids is None:
        fallback_centroids = np.array(
            [p.mean(axis=0) if len(p) else np.zeros(2) for p in polygons]
        )
    centroid2d = {i: np.asarray(fallback_centroids[i], dtype=np.float64) for i in range(n)}

    group: dict[int, int] = {i: i for i in range(n)}  # region -> country
    active = set(range(n))
    used_fallback = False

    def merge_pair(a: int, b: int) -> None:
        keep, drop = min(a, b), max(a, b)
        wa, wb = sizes[keep], sizes[drop]
        means[keep] = (means[keep] * wa + means[drop] * wb) / (wa + wb)
        centroid2d[keep] = (centroid2d[keep] * wa + centroid2d[drop] * wb) / (wa + wb)
        sizes[keep] = wa + wb
        adjacency[keep] = (adjacency[keep] | adjacency[drop]) - {keep, drop}
        for other in adjacency[drop]:
            adjacency[other].discard(drop)
            if other != keep:
                adjacency[other].add(keep)
        del adjacency[drop], means[drop], sizes[drop], centroid2d[drop]
        active.discard(drop)
        for region, country in group.items():
            if country == drop:
                group[region] = keep

    while len(active) > target_count:
        best = None
        for a in sorted(active):
            for b in sorted(adjacency[a]):
                if b <= a:
                    continue
                d = float(np.linalg.norm(means[a] - means[b]))
                key = (d, a, b)
                if best is None or key < best:
                    best = key
        if best is not None:
            merge_pair(best[1], best[2])
            continue
        # Disconnected adjacency graph: merge the nearest non-adjacent pair.
        used_fallback = True
        ordered = sorted(active)
        best = None
        for ai, a in enumerate(ordered):
            for b in ordered[ai + 1 :]:
                d = float(np.linalg.norm(centroid2d[a] - centroid2d[b]))
                key = (d, a, b)
                if best is None or key < best:
                    best = key
        merge_pair(best[1], best[2])
    return dict(group), used_fallback


def fit_local_layout(
    polygon: np.ndarray,
    centroid_2d: np.ndarray,
    local: Projection2D,
    min_separation: float = 0.5,
) -> dict[str, tuple[float, float]]:
    """Fit a local frame into a region polygon.

    Coordinates are affinely mapped into the polygon's largest inscribed
    axis-aligned rectangle; anything that still lands outside (or on the
    boundary) is nudged toward the region centroid in min_separation steps.
    Single members place at the centroid.
    """
    ids = local.ids
    if len(ids) == 1:
        return {ids[0]: (float(centroid_2d[0]), float(centroid_2d[1]))}
    box = largest_inscribed_rect(polygon)
    coords = np.asarray(local.coords, dtype=np.float64)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = hi - lo
    out = np.empty_like(coords)
    for axis, (bmin, bmax) in enumerate(((box.minx, box.maxx), (box.miny, box.maxy))):
        if span[axis] <= 0:
            out[:, axis] = (bmin + bmax) / 2.0
        else:
            out[:, axis] = bmin + (coords[:, axis] - lo[axis]) / span[axis] * (bmax - bmin)

    bbox_diag = float(np.hypot(*(polygon.max(axis=0) - polygon.min(axis=0))))
    margin = min(1e-3 * bbox_diag, min_separation / 10.0)
    placements = {}
    for row, artwork_id in enumerate(ids):
        p = out[row]
        guard = 0
        while not point_in_convex(polygon, p, margin=margin):
            to_center = centroid_2d - p
            gap = float(np.hypot(to_center[0], to_center[1]))
            if gap <= min_separation or guard > 10_000:
                p = np.asarray(centroid_2d, dtype=np.float64).copy()
                break
            p = p + to_center / gap * min_separation
            guard += 1
        placements[artwork_id] = (float(p[0]), float(p[1]))
    return placements


def mad_outlier_flags(points: np.ndarray, rect: Rect, outlier_mad: float) -> np.ndarray:
    """Flag points beyond outlier_mad * MAD of either coordinate median, or
    outside rect. A zero MAD disables that axis (degenerate distribution)."""
    pts = np.asarray(points, dtype=np.float64)
    flags = np.zeros(len(pts), dtype=bool)
    for axis in range(2):
        med = float(np.median(pts[:, axis]))
        mad = float(np.median(np.abs(pts[:, axis] - med)))
        if mad > 0:
            flags |= np.abs(pts[:, axis] - med) > outlier_mad * mad
    flags |= (pts[:, 0] < rect.minx) | (pts[:, 0] > rect.maxx)
    flags |= (pts[:, 1] < rect.miny) | (pts[:, 1] > rect.maxy)
    return flags


def nudge_outliers(
    points: np.ndarray,
    rect: Rect,
    outlier_mad: float = 3.0,
    min_separation: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull outliers inward along the ray to the map center.

    Each flagged point steps 1% of its ray length toward the center until it
    lies inside rect inset by min_separation. Non-outliers are untouched.
    Returns (new points, moved mask).
    """
    pts = np.array(points, dtype=np.float64, copy=True)
    flags = mad_outlier_flags(pts, rect, outlier_mad)
    inner = rect.inset(min_separation)
    center = rect.center
    moved = np.zeros(len(pts), dtype=bool)
    for i in np.flatnonzero(flags):
        p = pts[i]
        ray = center - p
        length = float(np.hypot(ray[0], ray[1]))
        if length == 0.0:
            continue
        step = ray / length * (length / 100.0)
        k = 0
        while not inner.contains(p) and k < 100:
            p = p + step
            k += 1
        if k > 0:
            pts[i] = p
            moved[i] = True
    return pts, moved


def choose_representative(
    member_ids: Sequence[str],
    placements: Mapping[str, tuple[float, float]],
    centroid_2d: np.ndarray,
) -> str:
    """Member closest to the region centroid; distance ties take the smaller id."""
    if not member_ids:
        raise ValueError("region has no members")
    best = None
    for artwork_id in member_ids:
        x, y = placements[artwork_id]
        d = float(np.hypot(x - centroid_2d[0], y - centroid_2d[1]))
        key = (d, artwork_id)
        if best is None or key < best:
            best = key
    return best[1]


def _to_map_frame(coords: np.ndarray, rect: Rect, outlier_mad: float, min_separation: float) -> np.ndarray:
    """Robust affine from the raw projection frame into the map rectangle:
    median +/- outlier_mad * MAD per axis maps onto rect inset by
    min_separation, so only robust outliers land outside (and get nudged)."""
    pts = np.array(coords, dtype=np.float64, copy=True)
    inner = rect.inset(min_separation)
    targets = ((inner.minx, inner.maxx), (inner.miny, inner.maxy))
    for axis in range(2):
        med = float(np.median(pts[:, axis]))
        mad = float(np.median(np.abs(pts[:, axis] - med)))
        half = outlier_mad * mad
        if half <= 0:
            half = max(float(np.abs(pts[:, axis] - med).max()), 1e-9)
        lo, hi = targets[axis]
        pts[:, axis] = lo + (pts[:, axis] - (med - half)) / (2.0 * half) * (hi - lo)
    return pts


def build_atlas(
    bundle: CorpusBundle,
    fusion_cfg: FusionConfig = FusionConfig(),
    projection_cfg: ProjectionConfig = ProjectionConfig(),
    cartography_cfg: CartographyConfig = CartographyConfig(),
    salient_k: int = 500,
) -> AtlasMap:
    """Run the full map-making pipeline on a loaded corpus."""
    reduced, fused, selected = curate_corpus(bundle, fusion_cfg, k_target=salient_k)
    return assemble_atlas(
        reduced, fused, fusion_cfg, projection_cfg, cartography_cfg,
        n_selected=len(selected),
    )


def assemble_atlas(
    reduced: CorpusBundle,
    fused: FusedCorpus,
    fusion_cfg: FusionConfig,
    projection_cfg: ProjectionConfig,
    cfg: CartographyConfig,
    n_selected: int = 0,
) -> AtlasMap:
    rect = cfg.map_rect
    ids = list(fused.ids)
    n = len(ids)
    if n < 2:
        raise ValueError("need at least 2 artworks to build an atlas")

    global_proj = project_global(fused, projection_cfg)
    placed = _to_map_frame(global_proj.coords, rect, cfg.outlier_mad, cfg.min_separation)
    placed, _ = nudge_outliers(placed, rect, cfg.outlier_mad, cfg.min_separation)

    n_regions = min(cfg.n_regions, n)
    n_countries = min(cfg.n_countries, n_regions)
    assignments, centroids = kmeans_2d(
        placed, n_regions, seed=cfg.seed, max_iter=cfg.kmeans_max_iter
    )
    # Coincident centroids (degenerate clusters) are perturbed once here so
    # region centroids and their Voronoi sites stay the same points.
    centroids = dedupe_sites(centroids, rect, cfg.min_separation)
    polygons = voronoi_cells(centroids, rect, cfg.min_separation)

    id_index = {aid: i for i, aid in enumerate(ids)}
    member_lists = [
        sorted(aid for aid in ids if assignments[id_index[aid]] == r)
        for r in range(n_regions)
    ]
    member_vectors = [
        fused.matrix[[id_index[a] for a in members]] for members in member_lists
    ]
    country_of, used_fallback = merge_regions(
        polygons, member_vectors, n_countries, fallback_centroids=centroids
    )

    placements: dict[str, tuple[float, float]] = {}
    regions: list[Region] = []
    for r in range(n_regions):
        members = member_lists[r]
        if not members:
            raise AtlasInvariantError("hierarchy", f"region {r} is empty")
        if len(members) == 1:
            local = Projection2D(ids=(members[0],), coords=np.zeros((1, 2)))
        else:
            local = project_local(
                fused.matrix[[id_index[a] for a in members]],
                projection_cfg,
                ids=members,
                seed_offset=r + 1,
            )
        fitted = fit_local_layout(polygons[r], centroids[r], local, cfg.min_separation)
        placements.update(fitted)
        rep = choose_representative(members, fitted, centroids[r])
        regions.append(
            Region(
                id=r,
                polygon=polygons[r],
                centroid_2d=centroids[r],
                member_ids=tuple(members),
                representative_id=rep,
                country_id=country_of[r],
            )
        )

    country_ids = sorted(set(country_of.values()))
    countries = [
        {
            "id": cid,
            "color_index": color,
            "region_ids": sorted(r for r, c in country_of.items() if c == cid),
        }
        for color, cid in enumerate(country_ids)
    ]

    build_meta = {
        "corpus_hash": corpus_hash(reduced),
        "fusion": {
            "w_visual": fusion_cfg.w_visual,
            "w_joint": fusion_cfg.w_joint,
            "w_text": fusion_cfg.w_text,
            "alpha_keyword": fusion_cfg.alpha_keyword,
        },
        "projection": {
            "n_neighbors": projection_cfg.n_neighbors,
            "min_dist": projection_cfg.min_dist,
            "n_epochs": projection_cfg.n_epochs,
            "seed": projection_cfg.seed,
            "metric": projection_cfg.metric,
        },
        "cartography": {
            "n_regions": cfg.n_regions,
            "n_countries": cfg.n_countries,
            "map_rect": [rect.minx, rect.miny, rect.maxx, rect.maxy],
            "outlier_mad": cfg.outlier_mad,
            "min_separation": cfg.min_separation,
            "kmeans_max_iter": cfg.kmeans_max_iter,
            "seed": cfg.seed,
        },
        "seed": cfg.seed,
        "flags": {"disconnected_merge": used_fallback},
        "n_salient_keywords": n_selected,
        "block_offsets": [list(span) for span in fused.block_offsets],
    }
    atlas = AtlasMap(
        bounds=rect,
        countries=countries,
        regions=regions,
        placements=placements,
        build_meta=build_meta,
    )
    validate_atlas(atlas)
    return atlas


def validate_atlas(atlas: AtlasMap) -> None:
    """Check the structural invariants; raises AtlasInvariantError naming the
    first violated one."""
    rect = atlas.bounds
    area = sum(abs(polygon_area(r.polygon)) for r in atlas.regions)
    if abs(area - rect.area) / rect.area > 1e-6:
        raise AtlasInvariantError("tiling", f"cell area sum {area} vs rect {rect.area}")

    seen: set[str] = set()
    strict = 1e-9 * max(rect.width, rect.height)
    for region in atlas.regions:
        if region.representative_id not in region.member_ids:
            raise AtlasInvariantError("representative", f"region {region.id}")
        for artwork_id in region.member_ids:
            if artwork_id in seen:
                raise AtlasInvariantError("hierarchy", f"{artwork_id} in two regions")
            seen.add(artwork_id)
            if artwork_id not in atlas.placements:
                raise AtlasInvariantError("placement", f"{artwork_id} missing")
            p = atlas.placements[artwork_id]
            if not point_in_convex(region.polygon, p, margin=strict):
                raise AtlasInvariantError(
                    "containment", f"{artwork_id} outside region {region.id}"
                )
            if not rect.contains(p):
                raise AtlasInvariantError("containment", f"{artwork_id} outside map")
    if seen != set(atlas.placements):
        raise AtlasInvariantError("placement", "placements and memberships differ")

    region_country = {r.id: r.country_id for r in atlas.regions}
    for country in atlas.countries:
        for rid in country["region_ids"]:
            if region_country.get(rid) != country["id"]:
                raise AtlasInvariantError("hierarchy", f"region {rid} country mismatch")


# ---------------------------------------------------------------------------
# Level-of-detail selection


def _grid_size(zoom: float) -> int:
    # Doubling ladder: successive zoom bands refine the grid 2x, so coarser
    # grids nest inside finer ones and the zoom-subset guarantee below holds.
    return min(32, 4 * (2 ** int(zoom)))


class AtlasIndex:
    """Numpy-backed view of an atlas for fast viewport queries."""

    def __init__(self, atlas: AtlasMap):
        self.atlas = atlas
        self.ids = sorted(atlas.placements)
        self.id_rank = {aid: i for i, aid in enumerate(self.ids)}
        self.xy = np.array([atlas.placements[a] for a in self.ids], dtype=np.float64)
        region_of = {}
        region_size = {}
        reps = set()
        for region in atlas.regions:
            reps.add(region.representative_id)
            region_size[region.id] = len(region.member_ids)
            for aid in region.member_ids:
                region_of[aid] = region.id
        self.region_of = region_of
        self.is_rep = np.array([a in reps for a in self.ids], dtype=bool)
        self.region_ids = np.array([region_of[a] for a in self.ids], dtype=np.int64)
        self.region_sizes = np.array(
            [region_size[region_of[a]] for a in self.ids], dtype=np.int64
        )
        self.hash = atlas_hash(atlas)


def lod_select(
    index: AtlasIndex | AtlasMap,
    query: ViewportQuery,
    pinned: frozenset[str] | set[str] = frozenset(),
) -> list[str]:
    """Deterministic level-of-detail artwork selection for a viewport.

    A G x G occupancy grid (G = 4 * 2^floor(zoom), capped at 32) covers the
    query bbox. Cells rank candidates: region representatives, then pinned
    artworks, then members of larger regions, ties by id. One artwork per
    occupied cell is taken in raster order; further rounds refill round-robin
    until the budget is met or candidates run out.

    With budget equal to the occupied-cell count at each zoom (the saturation
    schedule), the rendered set at zoom z is a subset of the set at any
    z' > z: grids nest, so a cell winner stays the winner of its sub-cell.
    """
    if isinstance(index, AtlasMap):
        index = AtlasIndex(index)
    bbox = query.bbox
    if not index.atlas.bounds.intersects(bbox):
        return []
    G = _grid_size(query.zoom)
    xy = index.xy
    mask = (
        (xy[:, 0] >= bbox.minx)
        & (xy[:, 0] <= bbox.maxx)
        & (xy[:, 1] >= bbox.miny)
        & (xy[:, 1] <= bbox.maxy)
    )
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        return []
    ix = np.clip(((xy[cand, 0] - bbox.minx) / bbox.width * G).astype(np.int64), 0, G - 1)
    iy = np.clip(((xy[cand, 1] - bbox.miny) / bbox.height * G).astype(np.int64), 0, G - 1)
    cells = iy * G + ix
    klass = np.full(cand.size, 2, dtype=np.int64)
    if pinned:
        pin_mask = np.array([index.ids[i] in pinned for i in cand], dtype=bool)
        klass[pin_mask] = 1
    klass[index.is_rep[cand]] = 0
    order = np.lexsort((cand, -index.region_sizes[cand], klass, cells))
    sorted_cells = cells[order]
    sorted_cand = cand[order]

    # Rank within cell = position in the cell's priority list; round r takes
    # each cell's rank-r candidate in raster (cell) order.
    boundaries = np.flatnonzero(np.diff(sorted_cells)) + 1
    starts = np.concatenate(([0], boundaries))
    within = np.arange(len(sorted_cells)) - np.repeat(starts, np.diff(np.concatenate((starts, [len(sorted_cells)]))))
    chosen: list[str] = []
    max_round = int(within.max()) if within.size else 0
    for round_no in range(max_round + 1):
        take = sorted_cand[within == round_no]
        for idx in take:
            chosen.append(index.ids[int(idx)])
            if len(chosen) >= query.budget:
                return chosen
    return chosen


# ---------------------------------------------------------------------------
# Canonical atlas JSON


def _canonical(value) -> str:
    if isinstance(value, dict):
        inner = ",".join(
            f"{json.dumps(str(k))}:{_canonical(value[k])}" for k in sorted(value)
        )
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v == 0.0:
            v = 0.0  # normalize -0.0
        return format(v, ".6g")
    if value is None:
        return "null"
    return json.dumps(value, ensure_ascii=False)


def atlas_to_dict(atlas: AtlasMap) -> dict:
    return {
        "bounds": {
            "minx": atlas.bounds.minx,
            "miny": atlas.bounds.miny,
            "maxx": atlas.bounds.maxx,
            "maxy": atlas.bounds.maxy,
        },
        "build_meta": atlas.build_meta,
        "countries": sorted(atlas.countries, key=lambda c: c["id"]),
        "regions": [
            {
                "id": r.id,
                "country_id": r.country_id,
                "centroid": [float(r.centroid_2d[0]), float(r.centroid_2d[1])],
                "polygon": [[float(x), float(y)] for x, y in r.polygon],
                "member_ids": list(r.member_ids),
                "representative_id": r.representative_id,
            }
            for r in sorted(atlas.regions, key=lambda r: r.id)
        ],
        "placements": {aid: [x, y] for aid, (x, y) in atlas.placements.items()},
    }


def atlas_to_json(atlas: AtlasMap | dict) -> str:
    data = atlas if isinstance(atlas, dict) else atlas_to_dict(atlas)
    return _canonical(data)


def atlas_hash(atlas: AtlasMap | dict) -> str:
    return hashlib.sha256(atlas_to_json(atlas).encode("utf-8")).hexdigest()


def save_atlas(atlas: AtlasMap, path: str | Path) -> None:
    Path(path).write_text(atlas_to_json(atlas), encoding="utf-8")


def parse_atlas(source: str | Path | dict) -> AtlasMap:
    """Parse atlas JSON (text, path, or pre-parsed dict) back into an AtlasMap."""
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if isinstance(source, Path) or not text.lstrip().startswith("{"):
            text = Path(source).read_text("utf-8")
        data = json.loads(text)
    b = data["bounds"]
    regions = [
        Region(
            id=int(r["id"]),
            polygon=np.asarray(r["polygon"], dtype=np.float64),
            centroid_2d=np.asarray(r["centroid"], dtype=np.float64),
            member_ids=tuple(r["member_ids"]),
            representative_id=r["representative_id"],
            country_id=int(r["country_id"]),
        )
        for r in data["regions"]
    ]
    return AtlasMap(
        bounds=Rect(float(b["minx"]), float(b["miny"]), float(b["maxx"]), float(b["maxy"])),
        countries=data["countries"],
        regions=regions,
        placements={aid: (float(p[0]), float(p[1])) for aid, p in data["placements"].items()},
        build_meta=data["build_meta"],
    )
