"""Keyword salience, greedy coverage selection, corpus reduction, fusion.

A keyword's salience is count * (count / total_artworks): niche keywords
score low because they cover little, and redundant broad keywords are demoted
later by the coverage-greedy selection rather than by the score itself.

Fusion builds one vector per artwork by L2-normalizing each embedding block,
scaling it by a manipulable weight, and concatenating visual / joint / text
spans. With the stock block dims (2048, 1024, 384) the fused vector has
3456 dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import BLOCK_KINDS, CorpusBundle, EmbeddingBlock, KeywordEntry

DEFAULT_SALIENT_K = 500
DEFAULT_ALPHA_KEYWORD = 0.5


def salience_score(count: int, total: int) -> float:
    """count^2 / total. Zero-count keywords score zero; count == total scores total."""
    if total <= 0:
        raise ValueError("total must be positive")
    if count < 0 or count > total:
        raise ValueError(f"count {count} outside [0, total={total}]")
    return count * (count / total)


@dataclass(frozen=True)
class SalienceTable:
    entries: Mapping[str, float]
    total_artworks: int

    @classmethod
    def from_keywords(
        cls, keywords: Mapping[str, KeywordEntry], total_artworks: int
    ) -> "SalienceTable":
        return cls(
            entries={
                kid: salience_score(entry.count, total_artworks)
                for kid, entry in keywords.items()
            },
            total_artworks=total_artworks,
        )


def select_salient_keywords(
    coverage: Mapping[str, Iterable[str]],
    salience: Mapping[str, float],
    k_target: int = DEFAULT_SALIENT_K,
) -> list[str]:
    """Greedy salient-keyword selection.

    The first pick is the most salient keyword outright; every later pick
    maximizes the number of previously uncovered artworks, breaking ties by
    higher salience and then by lexicographically smaller id. Stops after
    k_target picks or as soon as no candidate covers anything new.
    """
    if k_target <= 0:
        raise ValueError("k_target must be positive")
    cover_sets = {kid: frozenset(ids) for kid, ids in coverage.items()}
    remaining = set(cover_sets)
    if not remaining or max(salience.get(k, 0.0) for k in remaining) <= 0.0:
        return []

    first = min(remaining, key=lambda k: (-salience.get(k, 0.0), k))
    chosen = [first]
    covered = set(cover_sets[first])
    remaining.discard(first)

    while len(chosen) < k_target and remaining:
        best = None
        best_key = None
        for kid in remaining:
            gain = len(cover_sets[kid] - covered)
            key = (-gain, -salience.get(kid, 0.0), kid)
            if best_key is None or key < best_key:
                best_key = key
                best = kid
        if best is None or -best_key[0] == 0:
            break
        chosen.append(best)
        covered |= cover_sets[best]
        remaining.discard(best)
    return chosen


def reduce_corpus(
    bundle: CorpusBundle, selected: Sequence[str]
) -> tuple[CorpusBundle, dict[str, str]]:
    """Keep only artworks covered by a selected keyword; assign each a primary.

    The primary salient keyword of an artwork is the selected keyword tagging
    it with the highest salience (ties to the lexicographically smaller id).
    Returns the reduced bundle and the artwork -> primary keyword map.
    """
    if not selected:
        raise ValueError("selected keyword list is empty")
    table = SalienceTable.from_keywords(bundle.keywords, max(bundle.n_artworks, 1))
    selected_set = [k for k in selected if k in bundle.keywords]

    primary: dict[str, str] = {}
    for kid in selected_set:
        for artwork_id in bundle.keywords[kid].artwork_ids:
            incumbent = primary.get(artwork_id)
            if incumbent is None:
                primary[artwork_id] = kid
            else:
                a, b = table.entries[kid], table.entries[incumbent]
                if a > b or (a == b and kid < incumbent):
                    primary[artwork_id] = kid

    retained = set(primary)
    artworks = {aid: art for aid, art in bundle.artworks.items() if aid in retained}
    # Keyword lists shrink to retained artworks so bidirectional consistency holds.
    keywords = {}
    retained_tags = set()
    for art in artworks.values():
        retained_tags.update(art.tags)
    for kid, entry in bundle.keywords.items():
        kept = tuple(a for a in entry.artwork_ids if a in retained)
        if kid in retained_tags or kept:
            keywords[kid] = replace(entry, artwork_ids=kept)

    blocks = {}
    for kind, block in bundle.blocks.items():
        keep = [i for i, aid in enumerate(block.ids) if aid in retained]
        blocks[kind] = EmbeddingBlock(
            dim=block.dim,
            rows=block.rows[keep],
            ids=tuple(block.ids[i] for i in keep),
            kind=block.kind,
        )
    return CorpusBundle(artworks=artworks, keywords=keywords, blocks=blocks), primary


def compose_text_embedding(
    keyword_vec: np.ndarray, meta_vec: np.ndarray, alpha_keyword: float = DEFAULT_ALPHA_KEYWORD
) -> np.ndarray:
    """alpha * keyword_vec + (1 - alpha) * meta_vec; a plain average at 0.5."""
    keyword_vec = np.asarray(keyword_vec, dtype=np.float64)
    meta_vec = np.asarray(meta_vec, dtype=np.float64)
    if keyword_vec.shape != meta_vec.shape:
        raise ValueError(
            f"dim mismatch: {keyword_vec.shape} vs {meta_vec.shape}"
        )
    if not 0.0 <= alpha_keyword <= 1.0:
        raise ValueError("alpha_keyword must be in [0, 1]")
    return alpha_keyword * keyword_vec + (1.0 - alpha_keyword) * meta_vec


@dataclass(frozen=True)
class FusionConfig:
    w_visual: float = 1.0
    w_joint: float = 1.0
    w_text: float = 1.0
    alpha_keyword: float = DEFAULT_ALPHA_KEYWORD

    def __post_init__(self) -> None:
        weights = (self.w_visual, self.w_joint, self.w_text)
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("weights must be non-negative with at least one positive")
        if not 0.0 <= self.alpha_keyword <= 1.0:
            raise ValueError("alpha_keyword must be in [0, 1]")


@dataclass(frozen=True)
class FusedEmbedding:
    id: str
    vector: np.ndarray
    block_offsets: tuple[tuple[int, int], ...]  # (offset, length) for visual, joint, text


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec if norm == 0.0 else vec / norm  # zero vectors pass through


def fuse(
    visual: np.ndarray,
    joint: np.ndarray,
    text: np.ndarray,
    cfg: FusionConfig,
    artwork_id: str = "",
) -> FusedEmbedding:
    """Normalize each block, scale by its weight, concatenate visual|joint|text."""
    spans = []
    parts = []
    offset = 0
    for vec, weight in ((visual, cfg.w_visual), (joint, cfg.w_joint), (text, cfg.w_text)):
        vec = np.asarray(vec, dtype=np.float64)
        if not np.isfinite(vec).all():
            raise ValueError("non-finite input block")
        parts.append(weight * _unit(vec))
        spans.append((offset, vec.shape[0]))
        offset += vec.shape[0]
    return FusedEmbedding(
        id=artwork_id, vector=np.concatenate(parts), block_offsets=tuple(spans)
    )


@dataclass(frozen=True)
class FusedCorpus:
    """Fused vectors for every retained artwork, row-aligned with ids."""

    ids: tuple[str, ...]
    matrix: np.ndarray  # (n, dim) float64
    block_offsets: tuple[tuple[int, int], ...]
    primary_keyword: Mapping[str, str]

    def span(self, name: str) -> slice:
        index = {"visual": 0, "joint": 1, "text": 2}[name]
        offset, length = self.block_offsets[index]
        return slice(offset, offset + length)


def fuse_corpus(bundle: CorpusBundle, cfg: FusionConfig,
                primary_keyword: Mapping[str, str] | None = None) -> FusedCorpus:
    """Fuse every artwork of an (already reduced) bundle.

    Text span = alpha-average of the artwork's salient-keyword text row and
    its remaining-metadata text row, normalized and weighted like the rest.
    """
    for kind in BLOCK_KINDS:
        if kind not in bundle.blocks:
            raise ValueError(f"bundle missing block {kind}")
    ids = tuple(sorted(bundle.artworks))
    visual, joint = bundle.blocks["visual"], bundle.blocks["joint"]
    kw_block, meta_block = bundle.blocks["text_keyword"], bundle.blocks["text_meta"]
    rows = []
    offsets = None
    for aid in ids:
        text = compose_text_embedding(
            kw_block.row_for(aid), meta_block.row_for(aid), cfg.alpha_keyword
        )
        fused = fuse(visual.row_for(aid), joint.row_for(aid), text, cfg, artwork_id=aid)
        rows.append(fused.vector)
        offsets = fused.block_offsets
    matrix = np.vstack(rows) if rows else np.zeros((0, 0))
    return FusedCorpus(
        ids=ids,
        matrix=matrix,
        block_offsets=offsets or ((0, 0), (0, 0), (0, 0)),
        primary_keyword=dict(primary_keyword or {}),
    )


def curate_corpus(
    bundle: CorpusBundle,
    cfg: FusionConfig = FusionConfig(),
    k_target: int = DEFAULT_SALIENT_K,
) -> tuple[CorpusBundle, FusedCorpus, list[str]]:
    """Full curation pass: salience, greedy selection, reduction, fusion."""
    table = SalienceTable.from_keywords(bundle.keywords, max(bundle.n_artworks, 1))
    coverage = {kid: entry.artwork_ids for kid, entry in bundle.keywords.items()}
    selected = select_salient_keywords(coverage, table.entries, k_target)
    if not selected:
        raise ValueError("no keyword covers any artwork; nothing to curate")
    reduced, primary = reduce_corpus(bundle, selected)
    fused = fuse_corpus(reduced, cfg, primary)
    return reduced, fused, selected
