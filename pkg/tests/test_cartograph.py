import numpy as np
import pytest

from artcarto.cartograph import (
    AtlasIndex,
    CartographyConfig,
    ViewportQuery,
    assemble_atlas,
    atlas_hash,
    atlas_to_json,
    build_atlas,
    choose_representative,
    fit_local_layout,
    kmeans_2d,
    lod_select,
    mad_outlier_flags,
    merge_regions,
    nudge_outliers,
    parse_atlas,
)
from artcarto.curate import FusionConfig, curate_corpus
from artcarto.geometry import (
    Rect,
    point_in_convex,
    polygon_area,
    voronoi_cells,
)
from artcarto.project import Projection2D, ProjectionConfig
from artcarto.synth import synthetic_bundle

RECT = Rect(0.0, 0.0, 1000.0, 1000.0)


def small_atlas(n_artworks=60, n_regions=6, n_countries=3, seed=5):
    bundle = synthetic_bundle(n_artworks=n_artworks, n_keywords=6, seed=seed)
    fusion = FusionConfig()
    reduced, fused, selected = curate_corpus(bundle, fusion, k_target=6)
    atlas = assemble_atlas(
        reduced,
        fused,
        fusion,
        ProjectionConfig(n_neighbors=8, n_epochs=60, seed=seed),
        CartographyConfig(n_regions=n_regions, n_countries=n_countries, seed=seed),
        n_selected=len(selected),
    )
    return atlas


class TestKmeans:
    def test_k_equals_n(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 2)) * 10
        assign, cents = kmeans_2d(X, 6, seed=1)
        assert sorted(assign.tolist()) == list(range(6))
        got = {tuple(np.round(c, 9)) for c in cents}
        want = {tuple(np.round(p, 9)) for p in X}
        assert got == want

    def test_two_separated_pairs(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [100.0, 100.0], [101.0, 100.0]])
        assign, cents = kmeans_2d(X, 2, seed=0)
        assert assign[0] == assign[1] and assign[2] == assign[3]
        assert assign[0] != assign[2]
        mids = sorted(map(tuple, np.round(cents, 9)))
        assert mids == [(0.5, 0.0), (100.5, 100.0)]

    def test_objective_beats_random_assignments(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 100, size=(200, 2))
        assign, cents = kmeans_2d(X, 5, seed=3)
        objective = float(np.sum((X - cents[assign]) ** 2))
        for trial in range(50):
            rand_assign = rng.integers(0, 5, size=200)
            rand_obj = 0.0
            for c in range(5):
                members = X[rand_assign == c]
                if len(members):
                    rand_obj += float(np.sum((members - members.mean(axis=0)) ** 2))
            assert objective <= rand_obj

    def test_k_above_n_errors(self):
        with pytest.raises(ValueError):
            kmeans_2d(np.zeros((3, 2)), 4)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(0, 10, size=(80, 2))
        a1, c1 = kmeans_2d(X, 7, seed=42)
        a2, c2 = kmeans_2d(X, 7, seed=42)
        assert np.array_equal(a1, a2) and np.array_equal(c1, c2)

    def test_empty_cluster_repair(self):
        # nine coincident points and one far away, k=3 forces empties
        X = np.vstack([np.zeros((9, 2)), [[50.0, 50.0]]])
        assign, cents = kmeans_2d(X, 3, seed=0)
        assert len(set(assign.tolist())) == 3


class TestVoronoi:
    def test_single_centroid_cell_is_rect(self):
        cells = voronoi_cells(np.array([[400.0, 600.0]]), RECT)
        assert abs(abs(polygon_area(cells[0])) - RECT.area) < 1e-6

    def test_two_symmetric_centroids_halve_rect(self):
        cells = voronoi_cells(np.array([[250.0, 500.0], [750.0, 500.0]]), RECT)
        for cell in cells:
            assert abs(abs(polygon_area(cell)) - RECT.area / 2) / RECT.area < 1e-9
        assert max(p[0] for p in cells[0]) == pytest.approx(500.0)
        assert min(p[0] for p in cells[1]) == pytest.approx(500.0)

    def test_grid_points_match_nearest_centroid(self):
        rng = np.random.default_rng(4)
        cents = rng.uniform(50, 950, size=(10, 2))
        cells = voronoi_cells(cents, RECT)
        xs = np.linspace(5, 995, 50)
        ys = np.linspace(5, 995, 50)
        for x in xs:
            for y in ys:
                owner = int(np.argmin(np.sum((cents - [x, y]) ** 2, axis=1)))
                assert point_in_convex(cells[owner], (x, y), margin=-1e-9)

    def test_tiling_and_centroid_containment(self):
        rng = np.random.default_rng(8)
        cents = rng.uniform(10, 990, size=(25, 2))
        cells = voronoi_cells(cents, RECT)
        area = sum(abs(polygon_area(c)) for c in cells)
        assert abs(area - RECT.area) / RECT.area <= 1e-6
        for cent, cell in zip(cents, cells):
            assert point_in_convex(cell, cent, margin=0.0)

    def test_duplicate_centroids_perturbed(self):
        cents = np.array([[500.0, 500.0], [500.0, 500.0], [100.0, 100.0]])
        cells = voronoi_cells(cents, RECT, min_separation=0.5)
        assert all(len(c) >= 3 for c in cells)
        area = sum(abs(polygon_area(c)) for c in cells)
        assert abs(area - RECT.area) / RECT.area <= 1e-6

    def test_centroid_outside_rect_errors(self):
        with pytest.raises(ValueError):
            voronoi_cells(np.array([[2000.0, 0.0]]), RECT)


class TestMergeRegions:
    def _row_cells(self, n):
        cents = np.array([[100.0 + 200.0 * i, 500.0] for i in range(n)])
        return voronoi_cells(cents, RECT), cents

    def test_identity_merge(self):
        cells, cents = self._row_cells(3)
        vectors = [np.ones((2, 4)) * i for i in range(3)]
        country, fallback = merge_regions(cells, vectors, 3, cents)
        assert country == {0: 0, 1: 1, 2: 2}
        assert not fallback

    def test_similar_adjacent_pair_merges_first(self):
        cells, cents = self._row_cells(3)
        vectors = [
            np.array([[1.0, 0.0]]),
            np.array([[1.01, 0.0]]),
            np.array([[50.0, 50.0]]),
        ]
        country, _ = merge_regions(cells, vectors, 2, cents)
        assert country[0] == country[1] == 0
        assert country[2] == 2

    def test_merge_all_into_one(self):
        cells, cents = self._row_cells(4)
        rng = np.random.default_rng(1)
        vectors = [rng.standard_normal((3, 5)) for _ in range(4)]
        country, _ = merge_regions(cells, vectors, 1, cents)
        assert set(country.values()) == {0}

    def test_merge_count_invariant(self):
        rng = np.random.default_rng(3)
        cents = rng.uniform(50, 950, size=(12, 2))
        cells = voronoi_cells(cents, RECT)
        vectors = [rng.standard_normal((2, 6)) for _ in range(12)]
        for target in (1, 3, 6, 12):
            country, fallback = merge_regions(cells, vectors, target, cents)
            assert len(set(country.values())) == target
            assert not fallback  # Voronoi adjacency over a rect is connected


class TestFitLocalLayout:
    def test_square_polygon_preserves_relative_positions(self):
        poly = np.array([[0.0, 0.0], [100.0, 0.0], [100.0, 100.0], [0.0, 100.0]])
        local = Projection2D(
            ids=("a", "b", "c"),
            coords=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        )
        placements = fit_local_layout(poly, np.array([50.0, 50.0]), local)
        ax, ay = placements["a"]
        bx, by = placements["b"]
        cx, cy = placements["c"]
        assert bx > ax and abs(by - ay) < 1e-9
        assert cy > ay and abs(cx - ax) < 1e-9
        for p in placements.values():
            assert point_in_convex(poly, p, margin=1e-9)

    def test_single_member_at_centroid(self):
        poly = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
        local = Projection2D(ids=("solo",), coords=np.zeros((1, 2)))
        placements = fit_local_layout(poly, np.array([4.0, 6.0]), local)
        assert placements["solo"] == (4.0, 6.0)

    def test_thin_triangle_all_members_inside(self):
        poly = np.array([[0.0, 0.0], [300.0, 0.0], [8.0, 40.0]])
        centroid = poly.mean(axis=0)
        rng = np.random.default_rng(6)
        local = Projection2D(
            ids=tuple(f"m{i}" for i in range(20)),
            coords=rng.standard_normal((20, 2)),
        )
        placements = fit_local_layout(poly, centroid, local)
        for p in placements.values():
            assert point_in_convex(poly, p, margin=1e-9)


class TestNudgeOutliers:
    def test_identity_when_all_inside_band(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(400, 600, size=(50, 2))
        out, moved = nudge_outliers(pts, RECT, 3.0, 0.5)
        assert not moved.any()
        assert np.array_equal(out, pts)

    def test_far_point_pulled_onto_ray(self):
        pts = np.vstack([np.random.default_rng(1).uniform(450, 550, (30, 2)),
                         [[10000.0, 500.0]]])
        out, moved = nudge_outliers(pts, RECT, 3.0, 0.5)
        assert moved[-1]
        p = out[-1]
        assert RECT.contains(p)
        # final position on the segment between original point and center
        orig = np.array([10000.0, 500.0])
        center = RECT.center
        t = (orig[0] - p[0]) / (orig[0] - center[0])
        assert 0.0 < t <= 1.0
        assert p[1] == pytest.approx(500.0)

    def test_moved_set_equals_independent_mad_flags(self):
        # uniform core keeps every inlier within the MAD band; the fringe is
        # far outside both the band and the rect
        rng = np.random.default_rng(7)
        core = rng.uniform(400, 600, size=(200, 2))
        fringe = rng.uniform(1500, 4000, size=(12, 2)) * rng.choice([-1, 1], size=(12, 2))
        pts = np.vstack([core, 500 + fringe])
        out, moved = nudge_outliers(pts, RECT, 3.0, 0.5)

        med = np.median(pts, axis=0)
        mad = np.median(np.abs(pts - med), axis=0)
        flags = (
            (np.abs(pts[:, 0] - med[0]) > 3.0 * mad[0])
            | (np.abs(pts[:, 1] - med[1]) > 3.0 * mad[1])
            | (pts[:, 0] < RECT.minx) | (pts[:, 0] > RECT.maxx)
            | (pts[:, 1] < RECT.miny) | (pts[:, 1] > RECT.maxy)
        )
        assert np.array_equal(moved, flags)
        inner = RECT.inset(0.5)
        for p in out[moved]:
            assert inner.contains(p)
        assert np.array_equal(out[~moved], pts[~moved])

    def test_mad_flag_helper_matches(self):
        rng = np.random.default_rng(8)
        pts = np.vstack([rng.normal(500, 20, (100, 2)), [[0.0, 0.0], [999.0, 2.0]]])
        flags = mad_outlier_flags(pts, RECT, 3.0)
        med = np.median(pts, axis=0)
        mad = np.median(np.abs(pts - med), axis=0)
        want = (
            (np.abs(pts[:, 0] - med[0]) > 3.0 * mad[0])
            | (np.abs(pts[:, 1] - med[1]) > 3.0 * mad[1])
        )
        assert np.array_equal(flags, want)


class TestChooseRepresentative:
    def test_single_member(self):
        assert choose_representative(["x"], {"x": (1.0, 2.0)}, np.zeros(2)) == "x"

    def test_tie_takes_smaller_id(self):
        placements = {"b": (1.0, 0.0), "a": (-1.0, 0.0)}
        assert choose_representative(["b", "a"], placements, np.zeros(2)) == "a"

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(3)
        ids = [f"id{i}" for i in range(5)]
        placements = {aid: tuple(rng.uniform(0, 100, 2)) for aid in ids}
        centroid = np.array([50.0, 50.0])
        want = min(
            ids,
            key=lambda a: (np.hypot(placements[a][0] - 50, placements[a][1] - 50), a),
        )
        assert choose_representative(ids, placements, centroid) == want

    def test_empty_region_errors(self):
        with pytest.raises(ValueError):
            choose_representative([], {}, np.zeros(2))


class TestAtlasAssembly:
    def test_toy_corpus_end_to_end_containment(self):
        atlas = small_atlas(n_artworks=10, n_regions=3, n_countries=2, seed=11)
        region_of = {}
        for region in atlas.regions:
            for aid in region.member_ids:
                region_of[aid] = region
        assert set(region_of) == set(atlas.placements)
        for aid, p in atlas.placements.items():
            assert point_in_convex(region_of[aid].polygon, p, margin=0.0)
            assert atlas.bounds.contains(p)

    def test_serialize_parse_serialize_byte_identical(self):
        atlas = small_atlas()
        js = atlas_to_json(atlas)
        js2 = atlas_to_json(parse_atlas(js))
        assert js == js2

    def test_rebuild_same_seed_identical(self):
        a = small_atlas(seed=21)
        b = small_atlas(seed=21)
        assert atlas_hash(a) == atlas_hash(b)
        assert atlas_to_json(a) == atlas_to_json(b)

    def test_build_meta_records_configs(self):
        atlas = small_atlas()
        meta = atlas.build_meta
        assert set(meta["fusion"]) == {"w_visual", "w_joint", "w_text", "alpha_keyword"}
        assert meta["projection"]["n_neighbors"] == 8
        assert meta["cartography"]["n_regions"] == 6
        assert "corpus_hash" in meta and len(meta["corpus_hash"]) == 64

    def test_build_atlas_wrapper(self):
        bundle = synthetic_bundle(n_artworks=24, n_keywords=4, seed=2)
        atlas = build_atlas(
            bundle,
            FusionConfig(),
            ProjectionConfig(n_neighbors=6, n_epochs=40, seed=1),
            CartographyConfig(n_regions=4, n_countries=2, seed=1),
            salient_k=4,
        )
        assert len(atlas.placements) == 24


def occupied_cells(index: AtlasIndex, bbox: Rect, zoom: float) -> int:
    """Independent occupancy oracle: distinct grid cells holding artworks."""
    G = min(32, 4 * 2 ** int(zoom))
    xy = index.xy
    inside = (
        (xy[:, 0] >= bbox.minx) & (xy[:, 0] <= bbox.maxx)
        & (xy[:, 1] >= bbox.miny) & (xy[:, 1] <= bbox.maxy)
    )
    pts = xy[inside]
    if not len(pts):
        return 0
    ix = np.clip(((pts[:, 0] - bbox.minx) / bbox.width * G).astype(int), 0, G - 1)
    iy = np.clip(((pts[:, 1] - bbox.miny) / bbox.height * G).astype(int), 0, G - 1)
    return len(set(zip(ix.tolist(), iy.tolist())))


def cell_of(index, bbox, zoom, aid):
    G = min(32, 4 * 2 ** int(zoom))
    x, y = index.atlas.placements[aid]
    ix = min(G - 1, max(0, int((x - bbox.minx) / bbox.width * G)))
    iy = min(G - 1, max(0, int((y - bbox.miny) / bbox.height * G)))
    return (ix, iy)


@pytest.fixture(scope="module")
def lod_atlas():
    return small_atlas(n_artworks=120, n_regions=10, n_countries=4, seed=33)


class TestLodSelect:
    @pytest.fixture()
    def atlas(self, lod_atlas):
        return lod_atlas

    def test_zoom0_representatives_win_their_cells(self, atlas):
        # Wherever a coarse cell contains any representative, the selection
        # must be a representative. (The acceptance atlas, with 64 regions,
        # has a representative in every occupied cell, making the selection
        # representatives-only; this small fixture does not.)
        index = AtlasIndex(atlas)
        budget = occupied_cells(index, atlas.bounds, 0.0)
        out = lod_select(index, ViewportQuery(bbox=atlas.bounds, zoom=0.0, budget=budget))
        assert out
        reps = {r.representative_id for r in atlas.regions}
        rep_cells = {cell_of(index, atlas.bounds, 0.0, r) for r in reps}
        for aid in out:
            if cell_of(index, atlas.bounds, 0.0, aid) in rep_cells:
                assert aid in reps
        cells = [cell_of(index, atlas.bounds, 0.0, a) for a in out]
        assert len(cells) == len(set(cells))

    def test_high_zoom_saturation_returns_all_members(self, atlas):
        index = AtlasIndex(atlas)
        region = max(atlas.regions, key=lambda r: len(r.member_ids))
        xs = [atlas.placements[a][0] for a in region.member_ids]
        ys = [atlas.placements[a][1] for a in region.member_ids]
        bbox = Rect(min(xs) - 1, min(ys) - 1, max(xs) + 1, max(ys) + 1)
        out = lod_select(index, ViewportQuery(bbox=bbox, zoom=10.0, budget=10_000))
        assert set(region.member_ids) <= set(out)

    def test_zoom_subset_monotonicity(self, atlas):
        index = AtlasIndex(atlas)
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(200):
            x0, y0 = rng.uniform(0, 500, 2)
            w, h = rng.uniform(200, 500, 2)
            bbox = Rect(x0, y0, x0 + w, y0 + h)
            z1 = float(rng.uniform(0, 4))
            z2 = float(z1 + rng.uniform(0.5, 4))
            b1 = occupied_cells(index, bbox, z1)
            b2 = occupied_cells(index, bbox, z2)
            if b1 == 0:
                continue
            out1 = lod_select(index, ViewportQuery(bbox=bbox, zoom=z1, budget=b1))
            out2 = lod_select(index, ViewportQuery(bbox=bbox, zoom=z2, budget=b2))
            assert set(out1) <= set(out2)
            cells1 = [cell_of(index, bbox, z1, a) for a in out1]
            assert len(cells1) == len(set(cells1))
            checked += 1
        assert checked > 100

    def test_empty_intersection_empty_list(self, atlas):
        out = lod_select(atlas, ViewportQuery(bbox=Rect(-50.0, -50.0, -1.0, -1.0), zoom=0, budget=5))
        assert out == []

    def test_pinned_priority_within_cell(self, atlas):
        index = AtlasIndex(atlas)
        region = max(atlas.regions, key=lambda r: len(r.member_ids))
        non_rep = [a for a in region.member_ids if a != region.representative_id]
        target = non_rep[-1]
        out_without = lod_select(index, ViewportQuery(bbox=atlas.bounds, zoom=0.0, budget=16))
        out_with = lod_select(
            index,
            ViewportQuery(bbox=atlas.bounds, zoom=0.0, budget=16),
            pinned=frozenset({target}),
        )
        assert len(out_with) == len(out_without)
