import numpy as np
import pytest

from artcarto.corpus import EmbeddingBlock
from artcarto.curate import (
    FusionConfig,
    SalienceTable,
    compose_text_embedding,
    curate_corpus,
    fuse,
    fuse_corpus,
    reduce_corpus,
    salience_score,
    select_salient_keywords,
)
from artcarto.synth import synthetic_bundle


def greedy_oracle(coverage, salience, k_target):
    """Independent brute-force simulator of the selection contract."""
    remaining = sorted(coverage)
    if not remaining:
        return []
    best_sal = max(salience.get(k, 0.0) for k in remaining)
    if best_sal <= 0.0:
        return []
    first = sorted(k for k in remaining if salience.get(k, 0.0) == best_sal)[0]
    picks = [first]
    covered = set(coverage[first])
    remaining.remove(first)
    while len(picks) < k_target and remaining:
        scored = []
        for k in remaining:
            gain = len(set(coverage[k]) - covered)
            scored.append((gain, salience.get(k, 0.0), k))
        max_gain = max(s[0] for s in scored)
        if max_gain == 0:
            break
        cands = [s for s in scored if s[0] == max_gain]
        max_sal = max(s[1] for s in cands)
        winner = sorted(s[2] for s in cands if s[1] == max_sal)[0]
        picks.append(winner)
        covered |= set(coverage[winner])
        remaining.remove(winner)
    return picks


def random_instance(rng):
    n_art = int(rng.integers(1, 41))
    n_kw = int(rng.integers(1, 13))
    artworks = [f"a{i}" for i in range(n_art)]
    coverage = {}
    for k in range(n_kw):
        size = int(rng.integers(0, n_art + 1))
        members = sorted(rng.choice(artworks, size=size, replace=False).tolist())
        coverage[f"k{k:02d}"] = members
    salience = {k: salience_score(len(v), n_art) for k, v in coverage.items()}
    return coverage, salience, n_art


class TestSalience:
    def test_formula(self):
        assert salience_score(100, 16000) == 0.625

    def test_zero_count(self):
        assert salience_score(0, 16000) == 0.0

    def test_full_coverage_identity(self):
        for total in (1, 7, 16000):
            assert salience_score(total, total) == float(total)

    def test_total_zero_errors(self):
        with pytest.raises(ValueError):
            salience_score(1, 0)

    def test_count_above_total_errors(self):
        with pytest.raises(ValueError):
            salience_score(5, 4)

    def test_table_from_keywords(self):
        bundle = synthetic_bundle(n_artworks=20, n_keywords=4, seed=2)
        table = SalienceTable.from_keywords(bundle.keywords, bundle.n_artworks)
        for kid, entry in bundle.keywords.items():
            assert table.entries[kid] == salience_score(entry.count, 20)


class TestGreedySelection:
    def test_hand_simulated_example(self):
        coverage = {"A": ["1", "2", "3"], "B": ["3", "4"], "C": ["1", "2"]}
        salience = {"A": 9.0, "B": 4.0, "C": 4.0}
        assert select_salient_keywords(coverage, salience, 2) == ["A", "B"]

    def test_single_keyword_exhaustion(self):
        assert select_salient_keywords({"only": ["x"]}, {"only": 1.0}, 5) == ["only"]

    def test_tie_breaks_lexicographic(self):
        coverage = {"A": ["1", "2"], "bb": ["3"], "aa": ["4"]}
        salience = {"A": 4.0, "bb": 1.0, "aa": 1.0}
        assert select_salient_keywords(coverage, salience, 3) == ["A", "aa", "bb"]

    def test_k_target_zero_errors(self):
        with pytest.raises(ValueError):
            select_salient_keywords({"a": ["1"]}, {"a": 1.0}, 0)

    def test_stops_when_nothing_new(self):
        coverage = {"A": ["1", "2"], "B": ["1", "2"], "C": ["2"]}
        salience = {"A": 2.0, "B": 2.0, "C": 0.5}
        assert select_salient_keywords(coverage, salience, 3) == ["A"]

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            coverage, salience, _ = random_instance(rng)
            k_target = int(rng.integers(1, 14))
            got = select_salient_keywords(coverage, salience, k_target)
            want = greedy_oracle(coverage, salience, k_target)
            assert got == want

    def test_greedy_prefix_property(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            coverage, salience, _ = random_instance(rng)
            prev = select_salient_keywords(coverage, salience, 1)
            for k in range(2, 8):
                cur = select_salient_keywords(coverage, salience, k)
                assert cur[: len(prev)] == prev
                prev = cur

    def test_every_pick_maximizes_gain(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            coverage, salience, _ = random_instance(rng)
            picks = select_salient_keywords(coverage, salience, 10)
            covered = set()
            for step, pick in enumerate(picks):
                gain = len(set(coverage[pick]) - covered)
                if step > 0:
                    best = max(
                        len(set(coverage[k]) - covered)
                        for k in coverage
                        if k not in picks[:step]
                    )
                    assert gain == best
                covered |= set(coverage[pick])


class TestReduceCorpus:
    def test_reduction_keeps_covered(self):
        bundle = synthetic_bundle(n_artworks=30, n_keywords=5, seed=9)
        selected = ["kw-000", "kw-001"]
        reduced, primary = reduce_corpus(bundle, selected)
        covered = set(bundle.keywords["kw-000"].artwork_ids) | set(
            bundle.keywords["kw-001"].artwork_ids
        )
        assert set(reduced.artworks) == covered
        assert set(primary) == covered
        for aid, kid in primary.items():
            assert kid in selected
            assert kid in bundle.artworks[aid].tags
        # every block filtered consistently
        for block in reduced.blocks.values():
            assert set(block.ids) == covered

    def test_identity_when_everything_covered(self):
        bundle = synthetic_bundle(n_artworks=20, n_keywords=3, seed=3, n_clusters=3)
        reduced, _ = reduce_corpus(bundle, list(bundle.keywords))
        assert set(reduced.artworks) == set(bundle.artworks)

    def test_primary_is_highest_salience(self):
        bundle = synthetic_bundle(n_artworks=40, n_keywords=6, seed=4)
        table = SalienceTable.from_keywords(bundle.keywords, bundle.n_artworks)
        selected = sorted(bundle.keywords)
        _, primary = reduce_corpus(bundle, selected)
        for aid, kid in primary.items():
            tagged = [k for k in bundle.artworks[aid].tags if k in selected]
            best = max(table.entries[k] for k in tagged)
            winners = sorted(k for k in tagged if table.entries[k] == best)
            assert kid == winners[0]

    def test_empty_selection_errors(self):
        bundle = synthetic_bundle(n_artworks=5, n_keywords=2, seed=1)
        with pytest.raises(ValueError):
            reduce_corpus(bundle, [])

    def test_reduction_soundness(self):
        bundle = synthetic_bundle(n_artworks=50, n_keywords=8, seed=12)
        selected = ["kw-000"]
        reduced, _ = reduce_corpus(bundle, selected)
        sel_set = set(bundle.keywords["kw-000"].artwork_ids)
        for aid in bundle.artworks:
            if aid in reduced.artworks:
                assert aid in sel_set
            else:
                assert aid not in sel_set


class TestComposeText:
    def test_endpoints(self):
        kw = np.array([2.0, 0.0])
        meta = np.array([0.0, 2.0])
        assert np.array_equal(compose_text_embedding(kw, meta, 1.0), kw)
        assert np.array_equal(compose_text_embedding(kw, meta, 0.0), meta)

    def test_midpoint(self):
        out = compose_text_embedding(np.array([2.0, 0.0]), np.array([0.0, 2.0]), 0.5)
        assert np.array_equal(out, np.array([1.0, 1.0]))

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dim mismatch"):
            compose_text_embedding(np.zeros(3), np.zeros(4), 0.5)


class TestFuse:
    def test_stock_dims_give_3456(self):
        cfg = FusionConfig()
        out = fuse(np.ones(2048), np.ones(1024), np.ones(384), cfg)
        assert out.vector.shape == (3456,)
        assert out.block_offsets == ((0, 2048), (2048, 1024), (3072, 384))

    def test_blocks_normalized_then_weighted(self):
        cfg = FusionConfig(w_visual=3.0, w_joint=1.0, w_text=1.0)
        out = fuse(np.array([4.0, 0.0]), np.array([0.0, 5.0]), np.array([6.0, 8.0]), cfg)
        assert np.allclose(out.vector[:2], [3.0, 0.0])
        assert np.allclose(out.vector[2:4], [0.0, 1.0])
        assert np.allclose(out.vector[4:], [0.6, 0.8])

    def test_zero_vector_passes_through(self):
        out = fuse(np.zeros(3), np.ones(2), np.zeros(2), FusionConfig())
        assert np.array_equal(out.vector[:3], np.zeros(3))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            fuse(np.array([np.nan]), np.ones(1), np.ones(1), FusionConfig())

    def test_config_requires_positive_weight(self):
        with pytest.raises(ValueError):
            FusionConfig(w_visual=0.0, w_joint=0.0, w_text=0.0)


def knn_orderings(matrix, k):
    d2 = ((matrix[:, None, :] - matrix[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    idx = np.arange(matrix.shape[0])
    return [tuple(np.lexsort((idx, row))[:k]) for row in d2]


class TestFusionNeighborInvariance:
    def test_uniform_scaling_preserves_knn(self):
        bundle = synthetic_bundle(n_artworks=60, n_keywords=5, seed=21)
        reduced, primary = reduce_corpus(bundle, sorted(bundle.keywords))
        for c in (2.0, 0.5, 3.0):
            base = fuse_corpus(reduced, FusionConfig(1.0, 1.0, 1.0), primary)
            scaled = fuse_corpus(reduced, FusionConfig(c, c, c), primary)
            assert knn_orderings(base.matrix, 10) == knn_orderings(scaled.matrix, 10)

    def test_zero_text_weight_matches_visual_joint_only(self):
        bundle = synthetic_bundle(n_artworks=50, n_keywords=5, seed=22)
        reduced, primary = reduce_corpus(bundle, sorted(bundle.keywords))
        no_text = fuse_corpus(reduced, FusionConfig(1.0, 1.0, 0.0), primary)
        full = fuse_corpus(reduced, FusionConfig(1.0, 1.0, 1.0), primary)
        text_span = full.span("text")
        assert np.array_equal(no_text.matrix[:, text_span], np.zeros_like(full.matrix[:, text_span]))
        # neighbors under w_text=0 equal neighbors of the truncated matrix
        truncated = full.matrix.copy()
        truncated[:, text_span] = 0.0
        assert knn_orderings(no_text.matrix, 10) == knn_orderings(truncated, 10)


class TestCurateEndToEnd:
    def test_full_pass(self):
        bundle = synthetic_bundle(n_artworks=40, n_keywords=6, seed=30)
        reduced, fused, selected = curate_corpus(bundle, FusionConfig(), k_target=4)
        assert len(selected) <= 4
        assert fused.matrix.shape[0] == reduced.n_artworks
        assert fused.ids == tuple(sorted(reduced.artworks))
        dims = [b.dim for b in (bundle.blocks["visual"], bundle.blocks["joint"], bundle.blocks["text_meta"])]
        assert fused.matrix.shape[1] == sum(dims)
