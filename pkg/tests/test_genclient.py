import json
import threading

import httpx
import numpy as np
import pytest

from artcarto.genclient import (
    BlockDims,
    GenerationError,
    HttpGenerationClient,
    MockGenerationClient,
)

DIMS = BlockDims(visual=16, joint=8, text=4)


class TestMockClient:
    def test_same_prompt_identical(self):
        client = MockGenerationClient(DIMS)
        a = client.generate("bowl of fruit")
        b = client.generate("bowl of fruit")
        assert a.image_ref == b.image_ref
        assert np.array_equal(a.visual_vec, b.visual_vec)
        assert np.array_equal(a.joint_vec, b.joint_vec)
        assert np.array_equal(a.text_vec, b.text_vec)

    def test_different_prompts_differ(self):
        client = MockGenerationClient(DIMS)
        a = client.generate("bowl of fruit")
        b = client.generate("stormy sea")
        assert not np.array_equal(a.visual_vec, b.visual_vec)
        assert a.image_ref != b.image_ref

    def test_vectors_unit_norm(self):
        client = MockGenerationClient(DIMS)
        out = client.generate("quiet garden")
        for vec, dim in ((out.visual_vec, 16), (out.joint_vec, 8), (out.text_vec, 4)):
            assert vec.shape == (dim,)
            assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_blocks_use_distinct_seeds(self):
        client = MockGenerationClient(BlockDims(visual=8, joint=8, text=8))
        out = client.generate("x")
        assert not np.array_equal(out.visual_vec, out.joint_vec)
        assert not np.array_equal(out.joint_vec, out.text_vec)

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            MockGenerationClient(DIMS).generate("")


def _client_with_transport(handler) -> HttpGenerationClient:
    client = HttpGenerationClient("http://gen.test", DIMS)
    client._client = httpx.Client(transport=httpx.MockTransport(handler), timeout=5.0)
    return client


class TestHttpClient:
    def test_valid_payload(self):
        def handler(request):
            body = json.loads(request.content)
            assert body == {"prompt": "sunset"}
            return httpx.Response(200, json={
                "image_ref": "https://img/1.png",
                "visual": [0.0] * 16,
                "joint": [1.0] * 8,
                "text": [2.0] * 4,
            })

        out = _client_with_transport(handler).generate("sunset")
        assert out.image_ref == "https://img/1.png"
        assert out.joint_vec.shape == (8,)

    def test_wrong_dim_rejected(self):
        def handler(request):
            return httpx.Response(200, json={
                "image_ref": "x", "visual": [0.0] * 3, "joint": [0.0] * 8, "text": [0.0] * 4,
            })

        with pytest.raises(GenerationError, match="visual block has dim"):
            _client_with_transport(handler).generate("sunset")

    def test_network_failure_surfaces(self):
        def handler(request):
            raise httpx.ConnectError("boom")

        with pytest.raises(GenerationError, match="service failure"):
            _client_with_transport(handler).generate("sunset")

    def test_http_error_surfaces(self):
        def handler(request):
            return httpx.Response(500, text="oops")

        with pytest.raises(GenerationError):
            _client_with_transport(handler).generate("sunset")

    def test_concurrency_cap(self):
        seen = []
        gate = threading.Semaphore(0)

        def handler(request):
            seen.append(1)
            return httpx.Response(200, json={
                "image_ref": "x", "visual": [0.0] * 16, "joint": [0.0] * 8, "text": [0.0] * 4,
            })

        client = _client_with_transport(handler)
        threads = [threading.Thread(target=lambda: client.generate("p")) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(seen) == 4
        gate.release()
