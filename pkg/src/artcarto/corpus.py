"""Corpus ingestion: artwork metadata, keyword cross-references, embedding blocks.

Embedding matrices travel in the AEM1 binary format, which is bit-exact and
seekable:

    bytes 0-3    magic "AEM1"
    bytes 4-7    row count, uint32 little-endian
    bytes 8-11   dim, uint32 little-endian
    id table     count entries, each uint16-LE byte length + UTF-8 bytes
    payload      count * dim float32 little-endian, row-major

Metadata and keyword files are UTF-8 JSON; a manifest ties them together
with one AEM1 file per embedding block kind.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"AEM1"

# Every corpus must ship all four blocks; fusion composes the two text blocks.
BLOCK_KINDS = ("visual", "text_keyword", "text_meta", "joint")


class CorpusError(ValueError):
    """Raised when corpus files are inconsistent (dangling refs, duplicates, ...)."""


class EmbeddingFormatError(ValueError):
    """Raised when an AEM1 file is malformed or disagrees with expectations."""


@dataclass(frozen=True)
class Artwork:
    id: str
    title: str
    artist: str
    image_uri: str
    license: str
    tags: tuple[str, ...] = ()
    year: Optional[int] = None
    medium: Optional[str] = None
    caption: Optional[str] = None


@dataclass(frozen=True)
class KeywordEntry:
    id: str
    label: str
    artwork_ids: tuple[str, ...] = ()

    @property
    def count(self) -> int:
        return len(self.artwork_ids)


@dataclass
class EmbeddingBlock:
    """One encoder's matrix: row i is the vector for artwork ids[i]."""

    dim: int
    rows: np.ndarray  # (n, dim) float32
    ids: tuple[str, ...]
    kind: Optional[str] = None

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float32)
        if self.rows.ndim != 2 or self.rows.shape[1] != self.dim:
            raise EmbeddingFormatError(
                f"rows shape {self.rows.shape} does not match dim {self.dim}"
            )
        if len(self.ids) != self.rows.shape[0]:
            raise EmbeddingFormatError(
                f"{len(self.ids)} ids for {self.rows.shape[0]} rows"
            )

    def row_for(self, artwork_id: str) -> np.ndarray:
        return self.rows[self._index()[artwork_id]]

    def _index(self) -> dict[str, int]:
        if not hasattr(self, "_id_to_row"):
            self._id_to_row = {a: i for i, a in enumerate(self.ids)}
        return self._id_to_row


@dataclass
class CorpusBundle:
    artworks: dict[str, Artwork]
    keywords: dict[str, KeywordEntry]
    blocks: dict[str, EmbeddingBlock] = field(default_factory=dict)

    @property
    def n_artworks(self) -> int:
        return len(self.artworks)

    @property
    def n_keywords(self) -> int:
        return len(self.keywords)


def write_embeddings(block: EmbeddingBlock, path: str | Path) -> None:
    """Write an AEM1 file; read_embeddings round-trips it bit-exactly."""
    rows = np.ascontiguousarray(block.rows, dtype=np.float32)
    if not np.isfinite(rows).all():
        raise EmbeddingFormatError("non-finite values cannot be stored")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", rows.shape[0], block.dim)
    for artwork_id in block.ids:
        raw = artwork_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingFormatError(f"id too long: {artwork_id[:32]}...")
        out += struct.pack("<H", len(raw))
        out += raw
    out += rows.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def read_embeddings(
    path: str | Path,
    expected_dim: Optional[int] = None,
    kind: Optional[str] = None,
) -> EmbeddingBlock:
    """Read an AEM1 file.

    ``expected_dim``, when given, must match the header dim. ``kind`` is not
    stored in the file; pass it to label the block.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic")
    count, dim = struct.unpack_from("<II", data, 4)
    if expected_dim is not None and dim != expected_dim:
        raise EmbeddingFormatError(
            f"{path}: dim {dim} does not match expected {expected_dim}"
        )
    offset = 12
    ids = []
    for _ in range(count):
        if offset + 2 > len(data):
            raise EmbeddingFormatError(f"{path}: truncated id table")
        (nbytes,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + nbytes > len(data):
            raise EmbeddingFormatError(f"{path}: truncated id table")
        ids.append(data[offset : offset + nbytes].decode("utf-8"))
        offset += nbytes
    payload = count * dim * 4
    if len(data) - offset < payload:
        raise EmbeddingFormatError(f"{path}: truncated payload")
    if len(data) - offset > payload:
        raise EmbeddingFormatError(f"{path}: trailing bytes after payload")
    rows = np.frombuffer(data, dtype="<f4", count=count * dim, offset=offset)
    rows = rows.reshape(count, dim).copy()
    if not np.isfinite(rows).all():
        raise EmbeddingFormatError(f"{path}: non-finite values in payload")
    return EmbeddingBlock(dim=dim, rows=rows, ids=tuple(ids), kind=kind)


def _parse_artwork(record: dict) -> Artwork:
    # Optional fields stay absent (None); empty-string sentinels are not used.
    return Artwork(
        id=record["id"],
        title=record.get("title", ""),
        artist=record.get("artist", ""),
        image_uri=record.get("image_uri", ""),
        license=record.get("license", ""),
        tags=tuple(record.get("tags", ())),
        year=record.get("year"),
        medium=record.get("medium"),
        caption=record.get("caption"),
    )


def load_corpus(manifest_path: str | Path) -> CorpusBundle:
    """Load and validate a corpus from a JSON manifest.

    Manifest schema::

        {"artworks": "artworks.json",
         "keywords": "keywords.json",
         "blocks": {"visual": "visual.aem", "text_keyword": ..., ...}}

    Paths are resolved relative to the manifest. Raises CorpusError on any
    cross-reference violation and EmbeddingFormatError on malformed blocks.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise CorpusError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text("utf-8"))
    base = manifest_path.parent

    def resolve(rel: str) -> Path:
        p = base / rel
        if not p.exists():
            raise CorpusError(f"missing file: {p}")
        return p

    artworks: dict[str, Artwork] = {}
    for record in json.loads(resolve(manifest["artworks"]).read_text("utf-8")):
        art = _parse_artwork(record)
        if art.id in artworks:
            raise CorpusError(f"duplicate artwork id: {art.id}")
        if not art.license:
            raise CorpusError(f"artwork {art.id} has no license")
        artworks[art.id] = art

    keywords: dict[str, KeywordEntry] = {}
    for record in json.loads(resolve(manifest["keywords"]).read_text("utf-8")):
        entry = KeywordEntry(
            id=record["id"],
            label=record.get("label", record["id"]),
            artwork_ids=tuple(record.get("artwork_ids", ())),
        )
        if entry.id in keywords:
            raise CorpusError(f"duplicate keyword id: {entry.id}")
        keywords[entry.id] = entry

    _check_cross_references(artworks, keywords)

    block_paths = manifest.get("blocks", {})
    for kind in BLOCK_KINDS:
        if kind not in block_paths:
            raise CorpusError(f"manifest missing block kind: {kind}")
    blocks: dict[str, EmbeddingBlock] = {}
    for kind in BLOCK_KINDS:
        block = read_embeddings(resolve(block_paths[kind]), kind=kind)
        seen = set()
        for artwork_id in block.ids:
            if artwork_id not in artworks:
                raise CorpusError(f"block {kind}: unknown artwork id {artwork_id}")
            if artwork_id in seen:
                raise CorpusError(f"block {kind}: duplicate row for {artwork_id}")
            seen.add(artwork_id)
        for artwork_id in artworks:
            if artwork_id not in seen:
                raise CorpusError(
                    f"artwork {artwork_id} has no embedding row in block {kind}"
                )
        blocks[kind] = block

    return CorpusBundle(artworks=artworks, keywords=keywords, blocks=blocks)


def _check_cross_references(
    artworks: dict[str, Artwork], keywords: dict[str, KeywordEntry]
) -> None:
    # a in k.artwork_ids  <=>  k.id in a.tags, both directions checked.
    for art in artworks.values():
        for tag in art.tags:
            if tag not in keywords:
                raise CorpusError(
                    f"artwork {art.id} tagged with unknown keyword id {tag}"
                )
            if art.id not in keywords[tag].artwork_ids:
                raise CorpusError(
                    f"keyword {tag} does not list artwork {art.id} back"
                )
    for entry in keywords.values():
        if len(set(entry.artwork_ids)) != len(entry.artwork_ids):
            raise CorpusError(f"keyword {entry.id} lists duplicate artworks")
        for artwork_id in entry.artwork_ids:
            if artwork_id not in artworks:
                raise CorpusError(
                    f"keyword {entry.id} lists unknown artwork {artwork_id}"
                )
            if entry.id not in artworks[artwork_id].tags:
                raise CorpusError(
                    f"artwork {artwork_id} does not tag keyword {entry.id} back"
                )


def corpus_hash(bundle: CorpusBundle) -> str:
    """Stable content hash of a bundle, recorded in atlas build_meta."""
    import hashlib

    h = hashlib.sha256()
    for artwork_id in sorted(bundle.artworks):
        art = bundle.artworks[artwork_id]
        h.update(
            json.dumps(
                {
                    "id": art.id,
                    "title": art.title,
                    "artist": art.artist,
                    "tags": sorted(art.tags),
                    "license": art.license,
                },
                sort_keys=True,
            ).encode("utf-8")
        )
    for keyword_id in sorted(bundle.keywords):
        entry = bundle.keywords[keyword_id]
        h.update(keyword_id.encode("utf-8"))
        h.update(json.dumps(sorted(entry.artwork_ids)).encode("utf-8"))
    for kind in sorted(bundle.blocks):
        block = bundle.blocks[kind]
        h.update(kind.encode("utf-8"))
        h.update("\x00".join(block.ids).encode("utf-8"))
        h.update(np.ascontiguousarray(block.rows, dtype="<f4").tobytes())
    return h.hexdigest()
