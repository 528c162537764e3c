"""Planar geometry for the regional map: clipped Voronoi cells, containment,
inscribed rectangles.

Cells are built by clipping the map rectangle against perpendicular-bisector
half-planes, which tiles the rectangle exactly (up to float rounding) and
keeps every polygon convex. Polygons are (m, 2) arrays of CCW vertices
without a repeated closing vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    minx: float
    miny: float
    maxx: float
    maxy: float

    def __post_init__(self) -> None:
        if not (self.maxx > self.minx and self.maxy > self.miny):
            raise ValueError("rectangle is degenerate")

    @property
    def width(self) -> float:
        return self.maxx - self.minx

    @property
    def height(self) -> float:
        return self.maxy - self.miny

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.minx + self.maxx) / 2.0, (self.miny + self.maxy) / 2.0])

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.minx, self.miny],
                [self.maxx, self.miny],
                [self.maxx, self.maxy],
                [self.minx, self.maxy],
            ]
        )

    def contains(self, p, margin: float = 0.0) -> bool:
        x, y = float(p[0]), float(p[1])
        return (
            self.minx + margin <= x <= self.maxx - margin
            and self.miny + margin <= y <= self.maxy - margin
        )

    def inset(self, margin: float) -> "Rect":
        return Rect(
            self.minx + margin, self.miny + margin, self.maxx - margin, self.maxy - margin
        )

    def intersects(self, other: "Rect") -> bool:
        return not (
            other.maxx < self.minx
            or other.minx > self.maxx
            or other.maxy < self.miny
            or other.miny > self.maxy
        )


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def clip_halfplane(poly: np.ndarray, point: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to {p : (p - point).normal <= 0}."""
    if len(poly) == 0:
        return poly
    d = (poly - point) @ normal
    out: list[np.ndarray] = []
    m = len(poly)
    for a in range(m):
        b = (a + 1) % m
        da, db = d[a], d[b]
        if da <= 0:
            out.append(poly[a])
        if (da < 0 < db) or (db < 0 < da):
            t = da / (da - db)
            out.append(poly[a] + t * (poly[b] - poly[a]))
    if not out:
        return np.zeros((0, 2))
    return np.asarray(out)


def point_in_convex(poly: np.ndarray, p, margin: float = 0.0) -> bool:
    """True when p sits inside a CCW convex polygon, at least margin from every edge."""
    p = np.asarray(p, dtype=np.float64)
    m = len(poly)
    for a in range(m):
        b = (a + 1) % m
        edge = poly[b] - poly[a]
        length = float(np.hypot(edge[0], edge[1]))
        if length == 0.0:
            continue
        # CCW: interior lies left of every edge; cross/|edge| is signed distance.
        cross = edge[0] * (p[1] - poly[a][1]) - edge[1] * (p[0] - poly[a][0])
        if cross / length < margin:
            return False
    return True


def dedupe_sites(
    centroids: np.ndarray, rect: Rect, min_separation: float = 0.5
) -> np.ndarray:
    """Deterministically perturb coincident sites by min_separation/100 steps.

    Idempotent on already-distinct inputs. Voronoi construction needs distinct
    sites (a duplicate's cell would vanish), and callers keeping site
    coordinates around must use the perturbed ones.
    """
    pts = np.array(centroids, dtype=np.float64, copy=True)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("centroids must be (n, 2)")
    for i, p in enumerate(pts):
        if not rect.contains(p):
            raise ValueError(f"centroid {i} outside rect")
    seen: dict[tuple[float, float], int] = {}
    for i in range(len(pts)):
        key = (float(pts[i, 0]), float(pts[i, 1]))
        bump = 0
        while key in seen:
            bump += 1
            step = (min_separation / 100.0) * bump
            cand = pts[i] + np.array([step, step * 0.5])
            if not rect.contains(cand):
                cand = pts[i] - np.array([step, step * 0.5])
            pts[i] = cand
            key = (float(pts[i, 0]), float(pts[i, 1]))
        seen[key] = i
    return pts


def voronoi_cells(
    centroids: np.ndarray, rect: Rect, min_separation: float = 0.5
) -> list[np.ndarray]:
    """One convex cell per centroid, clipped to rect; cells tile rect exactly.

    Coincident centroids are deterministically perturbed (see dedupe_sites)
    before clipping.
    """
    pts = dedupe_sites(centroids, rect, min_separation)
    cells = []
    base = rect.corners()
    for i in range(len(pts)):
        poly = base
        for j in range(len(pts)):
            if i == j:
                continue
            normal = pts[j] - pts[i]
            midpoint = (pts[i] + pts[j]) / 2.0
            poly = clip_halfplane(poly, midpoint, normal)
            if len(poly) == 0:
                break
        cells.append(poly)
    return cells


def shared_edge_length(poly_a: np.ndarray, poly_b: np.ndarray, tol: float = 1e-9) -> float:
    """Total length of boundary the two convex cells share (0 when not adjacent)."""
    total = 0.0
    for a in range(len(poly_a)):
        a2 = (a + 1) % len(poly_a)
        pa, pb = poly_a[a], poly_a[a2]
        seg = pb - pa
        seg_len = float(np.hypot(seg[0], seg[1]))
        if seg_len <= tol:
            continue
        direction = seg / seg_len
        normal = np.array([-direction[1], direction[0]])
        for c in range(len(poly_b)):
            c2 = (c + 1) % len(poly_b)
            qa, qb = poly_b[c], poly_b[c2]
            # Both endpoints of the other edge must lie on this edge's line.
            if abs((qa - pa) @ normal) > tol or abs((qb - pa) @ normal) > tol:
                continue
            t0 = float((qa - pa) @ direction)
            t1 = float((qb - pa) @ direction)
            lo, hi = max(0.0, min(t0, t1)), min(seg_len, max(t0, t1))
            if hi - lo > tol:
                total += hi - lo
    return total


def largest_inscribed_rect(poly: np.ndarray, resolution: int = 100) -> Rect:
    """Largest axis-aligned rectangle inside a convex polygon, grid search at
    1/resolution of the bounding box.

    Grid cells count as inside only when all four corners clear the polygon
    edges by a small inset, so the result is strictly interior.
    """
    minx, miny = poly.min(axis=0)
    maxx, maxy = poly.max(axis=0)
    if maxx - minx <= 0 or maxy - miny <= 0:
        raise ValueError("polygon bounding box is degenerate")
    xs = np.linspace(minx, maxx, resolution + 1)
    ys = np.linspace(miny, maxy, resolution + 1)
    inset = 1e-3 * float(np.hypot(maxx - minx, maxy - miny))

    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    inside = np.ones_like(gx, dtype=bool)
    m = len(poly)
    for a in range(m):
        b = (a + 1) % m
        edge = poly[b] - poly[a]
        length = float(np.hypot(edge[0], edge[1]))
        if length == 0.0:
            continue
        cross = edge[0] * (gy - poly[a][1]) - edge[1] * (gx - poly[a][0])
        inside &= cross / length >= inset
    # Cell (i, j) usable iff all four of its corner nodes are inside (convexity
    # then guarantees the whole cell is).
    cell_ok = inside[:-1, :-1] & inside[1:, :-1] & inside[:-1, 1:] & inside[1:, 1:]

    # Largest all-true rectangle via the histogram-stack sweep.
    nx, ny = cell_ok.shape
    best_area = 0
    best = None
    heights = np.zeros(ny, dtype=np.int64)
    for i in range(nx):
        heights = np.where(cell_ok[i], heights + 1, 0)
        stack: list[int] = []
        for j in range(ny + 1):
            h = int(heights[j]) if j < ny else 0
            while stack and int(heights[stack[-1]]) >= h:
                top = stack.pop()
                height = int(heights[top])
                left = stack[-1] + 1 if stack else 0
                area = height * (j - left)
                if area > best_area:
                    best_area = area
                    best = (i - height + 1, left, i, j - 1)
            stack.append(j)
    if best is None:
        # No interior cell at this resolution; degenerate sliver. Collapse to
        # a tiny box around the polygon centroid.
        c = poly.mean(axis=0)
        eps = 1e-6
        return Rect(c[0] - eps, c[1] - eps, c[0] + eps, c[1] + eps)
    i0, j0, i1, j1 = best
    return Rect(xs[i0], ys[j0], xs[i1 + 1], ys[j1 + 1])
