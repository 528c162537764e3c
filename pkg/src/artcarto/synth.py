"""Synthetic corpora for tests and demos.

Artworks are drawn from a handful of Gaussian "movements" in embedding space
so the atlas pipeline has real cluster structure to find. Block dims default
to small sizes to keep fixtures fast; pass dims=(2048, 1024, 384) for the
production geometry.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import BLOCK_KINDS, CorpusBundle, EmbeddingBlock, write_embeddings
from .corpus import Artwork, KeywordEntry


def synthetic_bundle(
    n_artworks: int = 60,
    n_keywords: int = 8,
    dims: tuple[int, int, int] = (32, 16, 8),
    n_clusters: int = 3,
    seed: int = 7,
    cluster_spread: float = 0.05,
) -> CorpusBundle:
    """Build an in-memory corpus of n_artworks spread over n_clusters movements."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dim_visual, dim_joint, dim_text = dims
    labels = rng.integers(0, n_clusters, size=n_artworks)
    centers = {
        kind: rng.standard_normal((n_clusters, dim))
        for kind, dim in (("visual", dim_visual), ("joint", dim_joint), ("text", dim_text))
    }

    ids = [f"art-{i:04d}" for i in range(n_artworks)]
    keyword_ids = [f"kw-{k:03d}" for k in range(n_keywords)]
    tags: dict[str, list[str]] = {aid: [] for aid in ids}
    keyword_members: dict[str, list[str]] = {kid: [] for kid in keyword_ids}
    for i, aid in enumerate(ids):
        # Keyword by cluster plus an occasional extra tag, so coverage overlaps.
        kid = keyword_ids[int(labels[i]) % n_keywords]
        tags[aid].append(kid)
        keyword_members[kid].append(aid)
        if n_keywords > n_clusters and rng.random() < 0.3:
            extra = keyword_ids[n_clusters + int(rng.integers(n_keywords - n_clusters))]
            if extra not in tags[aid]:
                tags[aid].append(extra)
                keyword_members[extra].append(aid)

    artworks = {
        aid: Artwork(
            id=aid,
            title=f"Study no. {i}",
            artist=f"Atelier {int(labels[i])}",
            year=1800 + int(rng.integers(0, 150)),
            medium="oil on canvas",
            tags=tuple(tags[aid]),
            image_uri=f"https://images.example/{aid}.jpg",
            license="public-domain",
        )
        for i, aid in enumerate(ids)
    }
    keywords = {
        kid: KeywordEntry(id=kid, label=kid.replace("kw-", "term "), artwork_ids=tuple(members))
        for kid, members in keyword_members.items()
    }

    def block(kind: str, dim: int, center_key: str) -> EmbeddingBlock:
        rows = centers[center_key][labels] + cluster_spread * rng.standard_normal(
            (n_artworks, dim)
        )
        return EmbeddingBlock(dim=dim, rows=rows.astype(np.float32), ids=tuple(ids), kind=kind)

    blocks = {
        "visual": block("visual", dim_visual, "visual"),
        "joint": block("joint", dim_joint, "joint"),
        "text_keyword": block("text_keyword", dim_text, "text"),
        "text_meta": block("text_meta", dim_text, "text"),
    }
    return CorpusBundle(artworks=artworks, keywords=keywords, blocks=blocks)


def write_corpus(bundle: CorpusBundle, directory: str | Path) -> Path:
    """Write a bundle to disk in manifest + JSON + AEM1 form; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    artworks = [
        {
            "id": a.id,
            "title": a.title,
            "artist": a.artist,
            "year": a.year,
            "medium": a.medium,
            "tags": list(a.tags),
            "image_uri": a.image_uri,
            "license": a.license,
            **({"caption": a.caption} if a.caption else {}),
        }
        for a in bundle.artworks.values()
    ]
    (directory / "artworks.json").write_text(json.dumps(artworks, indent=1), "utf-8")
    keywords = [
        {"id": k.id, "label": k.label, "artwork_ids": list(k.artwork_ids)}
        for k in bundle.keywords.values()
    ]
    (directory / "keywords.json").write_text(json.dumps(keywords, indent=1), "utf-8")
    block_paths = {}
    for kind in BLOCK_KINDS:
        name = f"{kind}.aem"
        write_embeddings(bundle.blocks[kind], directory / name)
        block_paths[kind] = name
    manifest = {
        "artworks": "artworks.json",
        "keywords": "keywords.json",
        "blocks": block_paths,
    }
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1), "utf-8")
    return manifest_path
