"""artcarto: embedding-atlas engine for artwork corpora.

Curates a corpus by keyword salience, fuses multimodal embedding blocks,
projects them into a hierarchical 2D map with Voronoi regions, serves the map
over HTTP, and classifies exploration traces.
"""

from .cartograph import (
    AtlasMap,
    CartographyConfig,
    Region,
    ViewportQuery,
    build_atlas,
    lod_select,
    parse_atlas,
    save_atlas,
)
from .corpus import (
    Artwork,
    CorpusBundle,
    EmbeddingBlock,
    KeywordEntry,
    load_corpus,
    read_embeddings,
    write_embeddings,
)
from .curate import (
    FusedEmbedding,
    FusionConfig,
    SalienceTable,
    compose_text_embedding,
    curate_corpus,
    fuse,
    reduce_corpus,
    salience_score,
    select_salient_keywords,
)
from .geometry import Rect, voronoi_cells
from .project import (
    NeighborGraph,
    Projection2D,
    ProjectionConfig,
    knn_graph,
    project_global,
    project_local,
    trustworthiness,
)
from .trails import (
    BandStats,
    BehaviorSegment,
    Thresholds,
    Trace,
    TrajectoryEvent,
    classify_jumps,
    classify_trace,
    classify_wander,
    detect_fixation,
    detect_revisits,
    emit_report,
    marginal_band_stats,
    segment_moves,
)

__version__ = "0.1.0"
