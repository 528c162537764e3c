"""Client contract for the external text-to-image + embedding service.

The live backend answers POST {"prompt": ...} with an image reference and one
embedding vector per block; the mock backend derives every vector from a
64-bit hash of (prompt, block kind), so tests get unlimited reproducible
prompts without any model.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import httpx
import numpy as np


class GenerationError(RuntimeError):
    """The generation backend failed or returned an unusable payload."""


@dataclass(frozen=True)
class GenerationResult:
    image_ref: str
    visual_vec: np.ndarray
    joint_vec: np.ndarray
    text_vec: np.ndarray


@dataclass(frozen=True)
class BlockDims:
    visual: int
    joint: int
    text: int


def _prompt_seed(prompt: str, kind: str) -> int:
    digest = hashlib.blake2b(f"{kind}\x00{prompt}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


class MockGenerationClient:
    """Deterministic offline backend: generate() is a pure function of prompt."""

    def __init__(self, dims: BlockDims):
        self.dims = dims

    def generate(self, prompt: str) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        vecs = {}
        for kind, dim in (("visual", self.dims.visual), ("joint", self.dims.joint), ("text", self.dims.text)):
            rng = np.random.Generator(np.random.PCG64(_prompt_seed(prompt, kind)))
            v = rng.standard_normal(dim)
            norm = float(np.linalg.norm(v))
            vecs[kind] = v / norm if norm > 0 else v
        ref = hashlib.blake2b(prompt.encode("utf-8"), digest_size=12).hexdigest()
        return GenerationResult(
            image_ref=f"mock://generated/{ref}",
            visual_vec=vecs["visual"],
            joint_vec=vecs["joint"],
            text_vec=vecs["text"],
        )


class HttpGenerationClient:
    """Live backend. POSTs the prompt, validates dims, caps concurrency."""

    def __init__(self, base_url: str, dims: BlockDims, timeout: float = 30.0, max_concurrent: int = 2):
        self.base_url = base_url.rstrip("/")
        self.dims = dims
        self.timeout = timeout
        self._gate = threading.Semaphore(max_concurrent)
        self._client = httpx.Client(timeout=timeout)

    def generate(self, prompt: str) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        with self._gate:
            try:
                resp = self._client.post(f"{self.base_url}/generate", json={"prompt": prompt})
                resp.raise_for_status()
                payload = resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                raise GenerationError(f"generation service failure: {exc}") from exc
        try:
            visual = np.asarray(payload["visual"], dtype=np.float64)
            joint = np.asarray(payload["joint"], dtype=np.float64)
            text = np.asarray(payload["text"], dtype=np.float64)
            image_ref = str(payload["image_ref"])
        except (KeyError, TypeError) as exc:
            raise GenerationError(f"malformed generation payload: {exc}") from exc
        for name, vec, want in (
            ("visual", visual, self.dims.visual),
            ("joint", joint, self.dims.joint),
            ("text", text, self.dims.text),
        ):
            if vec.shape != (want,):
                raise GenerationError(
                    f"{name} block has dim {vec.shape}, corpus expects {want}"
                )
            if not np.isfinite(vec).all():
                raise GenerationError(f"{name} block contains non-finite values")
        return GenerationResult(image_ref=image_ref, visual_vec=visual, joint_vec=joint, text_vec=text)
