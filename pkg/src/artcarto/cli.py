"""Command-line entry points: build an atlas, serve it, analyze traces."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .cartograph import CartographyConfig, build_atlas, parse_atlas, save_atlas
from .corpus import load_corpus
from .curate import FusionConfig
from .geometry import Rect
from .project import ProjectionConfig
from .trails import (
    Thresholds,
    classify_trace,
    collected_from_trace,
    emit_report,
    load_trace,
    marginal_band_stats,
)


def _add_build_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w-visual", type=float, default=1.0)
    p.add_argument("--w-joint", type=float, default=1.0)
    p.add_argument("--w-text", type=float, default=1.0)
    p.add_argument("--alpha-keyword", type=float, default=0.5)
    p.add_argument("--salient-k", type=int, default=500)
    p.add_argument("--n-neighbors", type=int, default=15)
    p.add_argument("--min-dist", type=float, default=0.1)
    p.add_argument("--n-epochs", type=int, default=200)
    p.add_argument("--n-regions", type=int, default=64)
    p.add_argument("--n-countries", type=int, default=8)
    p.add_argument("--map-size", type=float, default=1000.0, help="square map side in map units")
    p.add_argument("--seed", type=int, default=0)


def _configs_from_args(args) -> tuple[FusionConfig, ProjectionConfig, CartographyConfig]:
    fusion = FusionConfig(
        w_visual=args.w_visual,
        w_joint=args.w_joint,
        w_text=args.w_text,
        alpha_keyword=args.alpha_keyword,
    )
    projection = ProjectionConfig(
        n_neighbors=args.n_neighbors,
        min_dist=args.min_dist,
        n_epochs=args.n_epochs,
        seed=args.seed,
    )
    cartography = CartographyConfig(
        n_regions=args.n_regions,
        n_countries=args.n_countries,
        map_rect=Rect(0.0, 0.0, args.map_size, args.map_size),
        seed=args.seed,
    )
    return fusion, projection, cartography


def cmd_build(args) -> int:
    bundle = load_corpus(args.manifest)
    fusion, projection, cartography = _configs_from_args(args)
    atlas = build_atlas(bundle, fusion, projection, cartography, salient_k=args.salient_k)
    save_atlas(atlas, args.out)
    print(f"wrote atlas with {len(atlas.placements)} artworks, "
          f"{len(atlas.regions)} regions, {len(atlas.countries)} countries -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import ServerState, AtlasState, create_app, state_from_corpus
    from .curate import curate_corpus

    manifest = args.manifest or os.environ.get("ARTCARTO_CORPUS")
    if not manifest:
        print("serve requires --manifest or ARTCARTO_CORPUS", file=sys.stderr)
        return 2
    data_dir = args.data_dir or os.environ.get("ARTCARTO_DATA_DIR", "./artcarto-data")
    atlas_path = args.atlas or os.environ.get("ARTCARTO_ATLAS")
    gen_url = os.environ.get("ARTCARTO_GEN_URL")

    bundle = load_corpus(manifest)
    fusion, projection, cartography = _configs_from_args(args)

    gen_client = None
    if gen_url:
        from .genclient import BlockDims, HttpGenerationClient

        gen_client = HttpGenerationClient(
            gen_url,
            BlockDims(
                visual=bundle.blocks["visual"].dim,
                joint=bundle.blocks["joint"].dim,
                text=bundle.blocks["text_meta"].dim,
            ),
        )

    if atlas_path and Path(atlas_path).exists():
        atlas = parse_atlas(Path(atlas_path))
        meta = atlas.build_meta["fusion"]
        fusion = FusionConfig(**meta)
        reduced, fused, _ = curate_corpus(bundle, fusion, k_target=args.salient_k)
        state = ServerState(
            bundle=bundle,
            atlas_state=AtlasState(atlas, reduced, fused),
            data_dir=data_dir,
            gen_client=gen_client,
            salient_k=args.salient_k,
        )
    else:
        state = state_from_corpus(
            bundle, data_dir, fusion, projection, cartography,
            salient_k=args.salient_k, gen_client=gen_client,
        )
        if atlas_path:
            save_atlas(state.atlas_state.atlas, atlas_path)

    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_analyze(args) -> int:
    atlas = parse_atlas(Path(args.atlas))
    rect = atlas.bounds
    diagonal = (rect.width**2 + rect.height**2) ** 0.5
    session_id = Path(args.events).stem
    trace = load_trace(args.events, session_id=session_id, diagonal=diagonal)
    thresholds = Thresholds(
        theta_jump=args.theta_jump,
        theta_small=args.theta_small,
        min_run=args.min_run,
        r_return=args.r_return,
        r_away=args.r_away,
        theta_time=args.theta_time,
        theta_collect=args.theta_collect,
    )
    segments = classify_trace(trace, atlas, thresholds)
    stats = marginal_band_stats(atlas, collected_from_trace(trace))
    paths = emit_report(trace, segments, stats, args.out, atlas=atlas)
    counts = {}
    for seg in segments:
        counts[seg.kind] = counts.get(seg.kind, 0) + 1
    print(json.dumps({"segments": counts, "report": str(paths["report"])}, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="artcarto")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build an atlas from a corpus manifest")
    p_build.add_argument("--manifest", required=True)
    p_build.add_argument("--out", default="atlas.json")
    _add_build_flags(p_build)
    p_build.set_defaults(func=cmd_build)

    p_serve = sub.add_parser("serve", help="serve an atlas over HTTP")
    p_serve.add_argument("--manifest")
    p_serve.add_argument("--atlas")
    p_serve.add_argument("--data-dir")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    _add_build_flags(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    p_an = sub.add_parser("analyze", help="classify an exploration trace")
    p_an.add_argument("--atlas", required=True)
    p_an.add_argument("--events", required=True)
    p_an.add_argument("--out", default="report")
    p_an.add_argument("--theta-jump", type=float, default=0.15)
    p_an.add_argument("--theta-small", type=float, default=0.05)
    p_an.add_argument("--min-run", type=int, default=3)
    p_an.add_argument("--r-return", type=float, default=0.08)
    p_an.add_argument("--r-away", type=float, default=0.20)
    p_an.add_argument("--theta-time", type=float, default=0.40)
    p_an.add_argument("--theta-collect", type=float, default=0.50)
    p_an.set_defaults(func=cmd_analyze)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
