"""HTTP service over a built atlas.

Sessions are opaque 128-bit tokens passed in the X-Session-Token header (no
accounts). Pins and trajectory events persist as append-only JSONL under the
data directory and are replayed on startup. Reads work against an immutable
atlas snapshot grabbed once per request, so a concurrent rebuild can swap the
atlas atomically without any request observing a mix; every response carries
the snapshot's hash.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .cartograph import (
    AtlasIndex,
    AtlasMap,
    CartographyConfig,
    Rect,
    ViewportQuery,
    _canonical,
    assemble_atlas,
    lod_select,
)
from .corpus import CorpusBundle
from .curate import FusedCorpus, FusionConfig, curate_corpus, fuse
from .genclient import BlockDims, GenerationError, MockGenerationClient
from .project import ProjectionConfig
from .trails import TraceError, parse_event_batch

SESSION_HEADER = "X-Session-Token"


class AtlasState:
    """One immutable atlas snapshot plus derived lookup structures."""

    def __init__(self, atlas: AtlasMap, reduced: CorpusBundle, fused: FusedCorpus):
        self.atlas = atlas
        self.reduced = reduced
        self.fused = fused
        self.index = AtlasIndex(atlas)
        self.hash = self.index.hash
        self.region_by_id = {r.id: r for r in atlas.regions}
        self.region_of = dict(self.index.region_of)
        self._visual_cols = fused.span("visual")
        joint = fused.span("joint")
        text = fused.span("text")
        self._semantic_cols = np.r_[joint, text]
        self._row_of = {aid: i for i, aid in enumerate(fused.ids)}
        self._neighbor_cache: dict[tuple[str, str], tuple[str, ...]] = {}
        self._cache_lock = threading.Lock()
        self.map_payload = self._render_map_payload()

    def _render_map_payload(self) -> str:
        atlas = self.atlas
        summary = {
            "atlas_hash": self.hash,
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
                    "representative_id": r.representative_id,
                    "member_count": len(r.member_ids),
                }
                for r in sorted(atlas.regions, key=lambda r: r.id)
            ],
        }
        return _canonical(summary)

    def _span_matrix(self, which: str) -> np.ndarray:
        cols = self._visual_cols if which == "visual" else self._semantic_cols
        return self.fused.matrix[:, cols]

    def neighbors_of_vector(self, fused_vec: np.ndarray, which: str, k: int = 5,
                            exclude: Optional[str] = None) -> list[str]:
        M = self._span_matrix(which)
        q = fused_vec[self._visual_cols if which == "visual" else self._semantic_cols]
        d2 = np.einsum("ij,ij->i", M - q, M - q)
        order = np.lexsort((np.arange(len(d2)), d2))
        out = []
        for row in order:
            aid = self.fused.ids[int(row)]
            if aid == exclude:
                continue
            out.append(aid)
            if len(out) == k:
                break
        return out

    def neighbors_of_artwork(self, artwork_id: str, which: str, k: int = 5) -> list[str]:
        key = (artwork_id, which)
        with self._cache_lock:
            if key in self._neighbor_cache:
                return list(self._neighbor_cache[key])
        vec = self.fused.matrix[self._row_of[artwork_id]]
        out = self.neighbors_of_vector(vec, which, k=k, exclude=artwork_id)
        with self._cache_lock:
            self._neighbor_cache[key] = tuple(out)
        return out


@dataclass
class Session:
    id: str
    created_at: float
    pins: dict[str, bool] = field(default_factory=dict)  # artwork id -> stale
    generated: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class BuildJob:
    id: str
    status: str = "running"  # running | done | failed
    error: Optional[str] = None
    atlas_hash: Optional[str] = None


class ServerState:
    """Mutable server-side state shared across requests."""

    def __init__(
        self,
        bundle: CorpusBundle,
        atlas_state: Optional[AtlasState],
        data_dir: str | Path,
        gen_client=None,
        salient_k: int = 500,
    ):
        self.bundle = bundle
        self.atlas_state = atlas_state
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "events").mkdir(exist_ok=True)
        self.salient_k = salient_k
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.build_job: Optional[BuildJob] = None
        self.jobs: dict[str, BuildJob] = {}
        if gen_client is None and bundle is not None:
            gen_client = MockGenerationClient(
                BlockDims(
                    visual=bundle.blocks["visual"].dim,
                    joint=bundle.blocks["joint"].dim,
                    text=bundle.blocks["text_meta"].dim,
                )
            )
        self.gen_client = gen_client
        self._replay_pins()

    # -- persistence -------------------------------------------------------

    @property
    def pins_path(self) -> Path:
        return self.data_dir / "pins.jsonl"

    def events_path(self, session_id: str) -> Path:
        return self.data_dir / "events" / f"{session_id}.jsonl"

    def _replay_pins(self) -> None:
        if not self.pins_path.exists():
            return
        with open(self.pins_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                session = self.sessions.get(rec["session"])
                if session is None:
                    session = Session(id=rec["session"], created_at=rec.get("ts", 0.0))
                    self.sessions[rec["session"]] = session
                if rec["op"] == "pin":
                    session.pins.setdefault(rec["artwork_id"], False)
                elif rec["op"] == "unpin":
                    session.pins.pop(rec["artwork_id"], None)
        self._revalidate_pins()

    def _append_pin_record(self, session_id: str, op: str, artwork_id: str) -> None:
        rec = {"ts": time.time(), "session": session_id, "op": op, "artwork_id": artwork_id}
        with open(self.pins_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

    def _revalidate_pins(self) -> None:
        # Pins to artworks the current atlas dropped are flagged stale, kept.
        snapshot = self.atlas_state
        if snapshot is None:
            return
        placements = snapshot.atlas.placements
        for session in self.sessions.values():
            for aid in list(session.pins):
                session.pins[aid] = aid not in placements

    # -- sessions ----------------------------------------------------------

    def new_session(self) -> Session:
        token = secrets.token_hex(16)  # 128 bits
        session = Session(id=token, created_at=time.time())
        with self.lock:
            self.sessions[token] = session
        return session

    def session_for(self, request: Request) -> Optional[Session]:
        token = request.headers.get(SESSION_HEADER)
        if not token:
            return None
        with self.lock:
            return self.sessions.get(token)

    # -- rebuild -----------------------------------------------------------

    def start_rebuild(
        self,
        fusion_cfg: FusionConfig,
        projection_cfg: ProjectionConfig,
        cartography_cfg: CartographyConfig,
    ) -> BuildJob:
        with self.lock:
            if self.build_job is not None and self.build_job.status == "running":
                raise RuntimeError("build in progress")
            job = BuildJob(id=uuid.uuid4().hex)
            self.build_job = job
            self.jobs[job.id] = job

        def run() -> None:
            try:
                reduced, fused, selected = curate_corpus(
                    self.bundle, fusion_cfg, k_target=self.salient_k
                )
                atlas = assemble_atlas(
                    reduced, fused, fusion_cfg, projection_cfg, cartography_cfg,
                    n_selected=len(selected),
                )
                new_state = AtlasState(atlas, reduced, fused)
                with self.lock:
                    self.atlas_state = new_state
                    self._revalidate_pins()
                    job.atlas_hash = new_state.hash
                    job.status = "done"
            except Exception as exc:  # surfaced via job status
                with self.lock:
                    job.error = str(exc)
                    job.status = "failed"

        threading.Thread(target=run, daemon=True).start()
        return job


def _err(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, **extra})


def _parse_float(value: Optional[str], name: str) -> float:
    if value is None:
        raise ValueError(f"missing query parameter {name}")
    try:
        out = float(value)
    except ValueError as exc:
        raise ValueError(f"malformed {name}: {value!r}") from exc
    if not np.isfinite(out):
        raise ValueError(f"non-finite {name}")
    return out


def create_app(state: ServerState) -> FastAPI:
    app = FastAPI(title="artcarto atlas server")
    app.state.engine = state

    def snapshot() -> Optional[AtlasState]:
        return state.atlas_state

    @app.post("/api/session")
    async def create_session():
        session = state.new_session()
        return {"session_id": session.id}

    @app.get("/api/map")
    async def get_map():
        snap = snapshot()
        if snap is None:
            return _err(503, "no atlas loaded")
        return Response(
            content=snap.map_payload,
            media_type="application/json",
            headers={"ETag": f'"{snap.hash}"'},
        )

    @app.get("/api/viewport")
    async def viewport(request: Request):
        snap = snapshot()
        if snap is None:
            return _err(503, "no atlas loaded")
        q = request.query_params
        try:
            minx = _parse_float(q.get("minx"), "minx")
            miny = _parse_float(q.get("miny"), "miny")
            maxx = _parse_float(q.get("maxx"), "maxx")
            maxy = _parse_float(q.get("maxy"), "maxy")
            zoom = _parse_float(q.get("zoom", "0"), "zoom")
            budget = int(q.get("budget", "400"))
            if budget < 1:
                raise ValueError("budget must be positive")
            if zoom < 0:
                raise ValueError("zoom must be >= 0")
            bbox = Rect(minx, miny, maxx, maxy)
        except ValueError as exc:
            return _err(400, f"malformed bbox: {exc}")
        if not snap.atlas.bounds.intersects(bbox):
            return _err(400, "bbox outside atlas bounds")

        query = ViewportQuery(bbox=bbox, zoom=zoom, budget=budget)
        session = state.session_for(request)
        pinned = frozenset(session.pins) if session else frozenset()
        chosen = lod_select(snap.index, query, pinned=pinned)
        chosen_set = set(chosen)
        # Pins render regardless of the LOD budget, clipped to the bbox.
        for aid in pinned:
            if aid in chosen_set or aid not in snap.atlas.placements:
                continue
            x, y = snap.atlas.placements[aid]
            if bbox.contains((x, y)):
                chosen.append(aid)
                chosen_set.add(aid)

        artworks = []
        for aid in chosen:
            x, y = snap.atlas.placements[aid]
            art = snap.reduced.artworks[aid]
            artworks.append(
                {
                    "id": aid,
                    "x": x,
                    "y": y,
                    "thumbnail": art.image_uri,
                    "region_id": snap.region_of[aid],
                    "pinned": aid in pinned,
                }
            )
        return {"atlas_hash": snap.hash, "artworks": artworks}

    @app.get("/api/region/{region_id}")
    async def region_detail(region_id: int):
        snap = snapshot()
        if snap is None:
            return _err(503, "no atlas loaded")
        region = snap.region_by_id.get(region_id)
        if region is None:
            return _err(404, f"unknown region {region_id}")
        cx, cy = float(region.centroid_2d[0]), float(region.centroid_2d[1])

        def sort_key(aid: str):
            x, y = snap.atlas.placements[aid]
            return ((x - cx) ** 2 + (y - cy) ** 2, aid)

        members = sorted(region.member_ids, key=sort_key)
        entries = []
        for aid in members:
            art = snap.reduced.artworks[aid]
            x, y = snap.atlas.placements[aid]
            entries.append(
                {"id": aid, "title": art.title, "artist": art.artist, "x": x, "y": y}
            )
        return {
            "atlas_hash": snap.hash,
            "region_id": region.id,
            "country_id": region.country_id,
            "representative_id": region.representative_id,
            "members": entries,
        }

    @app.get("/api/artwork/{artwork_id}")
    async def artwork_detail(artwork_id: str):
        snap = snapshot()
        if snap is None:
            return _err(503, "no atlas loaded")
        if artwork_id not in snap.atlas.placements:
            return _err(404, f"unknown artwork {artwork_id}")
        art = snap.reduced.artworks[artwork_id]
        x, y = snap.atlas.placements[artwork_id]
        return {
            "atlas_hash": snap.hash,
            "id": art.id,
            "title": art.title,
            "artist": art.artist,
            "year": art.year,
            "medium": art.medium,
            "caption": art.caption,
            "tags": list(art.tags),
            "image_uri": art.image_uri,
            "license": art.license,
            "x": x,
            "y": y,
            "region_id": snap.region_of[artwork_id],
            "visual_neighbor_ids": snap.neighbors_of_artwork(artwork_id, "visual"),
            "semantic_neighbor_ids": snap.neighbors_of_artwork(artwork_id, "semantic"),
        }

    # -- pins ---------------------------------------------------------------

    @app.get("/api/pins")
    async def list_pins(request: Request):
        session = state.session_for(request)
        if session is None:
            return _err(401, "missing or unknown session")
        with session.lock:
            pins = [{"artwork_id": aid, "stale": stale} for aid, stale in session.pins.items()]
        return {"pins": pins}

    @app.post("/api/pins")
    async def add_pin(request: Request):
        session = state.session_for(request)
        if session is None:
            return _err(401, "missing or unknown session")
        snap = snapshot()
        if snap is None:
            return _err(503, "no atlas loaded")
        try:
            body = await request.json()
            artwork_id = body["artwork_id"]
        except Exception:
            return _err(400, "body must be JSON with artwork_id")
        if artwork_id not in snap.atlas.placements:
            return _err(404, f"unknown artwork {artwork_id}")
        with session.lock:
            already = artwork_id in session.pins
            if not already:
                session.pins[artwork_id] = False
                state._append_pin_record(session.id, "pin", artwork_id)
        return {"pins": sorted(session.pins), "added": not already}

    @app.delete("/api/pins/{artwork_id}")
    async def remove_pin(artwork_id: str, request: Request):
        session = state.session_for(request)
        if session is None:
            return _err(401, "missing or unknown session")
        with session.lock:
            existed = artwork_id in session.pins
            if existed:
                del session.pins[artwork_id]
                state._append_pin_record(session.id, "unpin", artwork_id)
        return {"pins": sorted(session.pins), "removed": existed}

    # -- generation ---------------------------------------------------------

    @app.post("/api/generate")
    def generate(request_body: dict, request: Request):
        session = state.session_for(request)
        if session is None:
            return _err(401, "missing or unknown session")
        snap = snapshot()
        if snap is None:
            return _err(503, "no atlas loaded")
        prompt = (request_body or {}).get("prompt", "")
        if not isinstance(prompt, str) or not prompt.strip():
            return _err(400, "prompt must be a non-empty string")
        if state.gen_client is None:
            return _err(503, "no generation backend configured")
        try:
            result = state.gen_client.generate(prompt)
        except GenerationError as exc:
            return JSONResponse(
                status_code=502,
                content={"error": str(exc)},
                headers={"Retry-After": "5"},
            )

        meta = snap.atlas.build_meta
        fusion = meta["fusion"]
        fused_vec = fuse(
            result.visual_vec,
            result.joint_vec,
            result.text_vec,
            FusionConfig(
                w_visual=fusion["w_visual"],
                w_joint=fusion["w_joint"],
                w_text=fusion["w_text"],
                alpha_keyword=fusion["alpha_keyword"],
            ),
        ).vector
        visual_neighbors = snap.neighbors_of_vector(fused_vec, "visual", k=5)
        semantic_neighbors = snap.neighbors_of_vector(fused_vec, "semantic", k=5)

        gen_id = uuid.uuid4().hex
        anchor = np.array(
            [snap.atlas.placements[a] for a in visual_neighbors], dtype=np.float64
        ).mean(axis=0)
        min_sep = float(meta["cartography"]["min_separation"])
        jitter_rng = np.random.Generator(
            np.random.PCG64(int.from_bytes(hashlib.blake2b(gen_id.encode(), digest_size=8).digest(), "little"))
        )
        angle = jitter_rng.random() * 2.0 * np.pi
        radius = jitter_rng.random() * 2.0 * min_sep
        pos = anchor + radius * np.array([np.cos(angle), np.sin(angle)])
        inner = snap.atlas.bounds.inset(min_sep)
        pos[0] = min(max(pos[0], inner.minx), inner.maxx)
        pos[1] = min(max(pos[1], inner.miny), inner.maxy)

        placed = {
            "id": gen_id,
            "prompt": prompt,
            "image_ref": result.image_ref,
            "position": [float(pos[0]), float(pos[1])],
            "visual_neighbor_ids": visual_neighbors,
            "semantic_neighbor_ids": semantic_neighbors,
            "flagged_generated": True,
        }
        with session.lock:
            session.generated.append(placed)
        return {"atlas_hash": snap.hash, **placed}

    # -- events ---------------------------------------------------------------

    @app.post("/api/events")
    async def ingest_events(request: Request):
        session = state.session_for(request)
        if session is None:
            return _err(401, "missing or unknown session")
        try:
            body = await request.json()
        except Exception:
            return _err(400, "body must be a JSON array of events")
        if not isinstance(body, list):
            return _err(400, "body must be a JSON array of events")
        try:
            events = parse_event_batch(body)
        except TraceError as exc:
            return _err(400, str(exc))
        # Atomic append: the whole validated batch goes in under the session lock.
        with session.lock:
            with open(state.events_path(session.id), "a", encoding="utf-8") as fh:
                for event, raw in zip(events, body):
                    fh.write(json.dumps(raw, sort_keys=True) + "\n")
                fh.flush()
        return {"accepted": len(events)}

    # -- rebuild ---------------------------------------------------------------

    @app.post("/api/rebuild")
    def rebuild(request_body: dict):
        snap = snapshot()
        body = request_body or {}
        try:
            fusion_args = dict(body.get("fusion", {}))
            projection_args = dict(body.get("projection", {}))
            cartography_args = dict(body.get("cartography", {}))
            if snap is not None:
                base = snap.atlas.build_meta
                fusion_args = {**base["fusion"], **fusion_args}
                proj_base = dict(base["projection"])
                projection_args = {**proj_base, **projection_args}
                carto_base = {
                    k: v for k, v in base["cartography"].items() if k != "map_rect"
                }
                rect_vals = base["cartography"]["map_rect"]
                cartography_args = {**carto_base, **cartography_args}
                cartography_args.setdefault("map_rect", rect_vals)
            rect_vals = cartography_args.pop("map_rect", [0.0, 0.0, 1000.0, 1000.0])
            fusion_cfg = FusionConfig(**fusion_args)
            projection_cfg = ProjectionConfig(**projection_args)
            cartography_cfg = CartographyConfig(
                map_rect=Rect(*[float(v) for v in rect_vals]), **cartography_args
            )
        except (TypeError, ValueError) as exc:
            return _err(400, f"invalid config: {exc}")
        try:
            job = state.start_rebuild(fusion_cfg, projection_cfg, cartography_cfg)
        except RuntimeError:
            return _err(409, "a build is already running")
        return {"job_id": job.id, "status": job.status}

    @app.get("/api/rebuild/{job_id}")
    async def rebuild_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            return _err(404, f"unknown job {job_id}")
        return {
            "job_id": job.id,
            "status": job.status,
            "error": job.error,
            "atlas_hash": job.atlas_hash,
        }

    return app


def state_from_corpus(
    bundle: CorpusBundle,
    data_dir: str | Path,
    fusion_cfg: FusionConfig = FusionConfig(),
    projection_cfg: ProjectionConfig = ProjectionConfig(),
    cartography_cfg: CartographyConfig = CartographyConfig(),
    salient_k: int = 500,
    gen_client=None,
) -> ServerState:
    """Curate, build, and wrap a corpus into ready-to-serve state."""
    reduced, fused, selected = curate_corpus(bundle, fusion_cfg, k_target=salient_k)
    atlas = assemble_atlas(
        reduced, fused, fusion_cfg, projection_cfg, cartography_cfg,
        n_selected=len(selected),
    )
    return ServerState(
        bundle=bundle,
        atlas_state=AtlasState(atlas, reduced, fused),
        data_dir=data_dir,
        gen_client=gen_client,
        salient_k=salient_k,
    )
