import pytest

from artcarto.cartograph import CartographyConfig, assemble_atlas
from artcarto.curate import FusionConfig, curate_corpus
from artcarto.project import ProjectionConfig
from artcarto.synth import synthetic_bundle

ACCEPTANCE_SEED = 7


@pytest.fixture(scope="session")
def acceptance_corpus():
    """1,000 artworks with production block dims (2048, 1024, 384)."""
    return synthetic_bundle(
        n_artworks=1000,
        n_keywords=24,
        dims=(2048, 1024, 384),
        n_clusters=8,
        seed=101,
    )


@pytest.fixture(scope="session")
def acceptance_build(acceptance_corpus):
    """Full pipeline output on the acceptance corpus, shared across criteria."""
    import time

    fusion = FusionConfig()
    t0 = time.monotonic()
    reduced, fused, selected = curate_corpus(acceptance_corpus, fusion, k_target=500)
    atlas = assemble_atlas(
        reduced,
        fused,
        fusion,
        ProjectionConfig(seed=ACCEPTANCE_SEED),
        CartographyConfig(seed=ACCEPTANCE_SEED),
        n_selected=len(selected),
    )
    elapsed = time.monotonic() - t0
    return {
        "bundle": acceptance_corpus,
        "reduced": reduced,
        "fused": fused,
        "fusion_cfg": fusion,
        "atlas": atlas,
        "build_seconds": elapsed,
    }
