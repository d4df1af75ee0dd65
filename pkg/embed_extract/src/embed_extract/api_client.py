"""Batched client for OpenAI-compatible text-embedding endpoints.

Every embedding is cached on disk keyed by (model, content hash), so
reruns are free and byte-deterministic even though the remote service is
not guaranteed to be. Transient failures retry with exponential backoff
before failing the job.
"""

from __future__ import annotations

import hashlib
import os
import time
from pathlib import Path

import httpx
import numpy as np

from .backbones import API_MODEL_DIMS
from .writer import ConversionError

DEFAULT_ENDPOINT = "https://api.openai.com/v1/embeddings"
RETRYABLE_STATUS = (429, 500, 502, 503, 504)


class CredentialsError(ConversionError):
    """The configured credentials reference resolves to nothing."""


class EmbeddingServiceError(RuntimeError):
    """The endpoint kept failing after the configured retries."""


class EmbeddingClient:
    def __init__(
        self,
        model: str,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key_env: str = "OPENAI_API_KEY",
        batch_size: int = 64,
        cache_dir=None,
        max_retries: int = 3,
        backoff_seconds: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 60.0,
    ):
        if model not in API_MODEL_DIMS:
            raise ConversionError(f"unknown embedding model {model!r}")
        self.model = model
        self.dim = API_MODEL_DIMS[model]
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.batch_size = batch_size
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._client = httpx.Client(transport=transport, timeout=timeout)

    # -- cache ------------------------------------------------------------

    def _cache_path(self, text: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(f"{self.model}\x00{text}".encode("utf-8")).hexdigest()
        return self.cache_dir / digest[:2] / f"{digest}.npy"

    def _cache_get(self, text: str):
        path = self._cache_path(text)
        if path is not None and path.exists():
            return np.load(path)
        return None

    def _cache_put(self, text: str, vector: np.ndarray) -> None:
        path = self._cache_path(text)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npy")
        np.save(tmp, vector.astype(np.float32))
        tmp.replace(path)

    # -- transport --------------------------------------------------------

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise CredentialsError(
                f"no API key found in environment variable {self.api_key_env!r}"
            )
        return key

    def _post_batch(self, texts) -> np.ndarray:
        payload = {"model": self.model, "input": list(texts)}
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.endpoint, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_error = EmbeddingServiceError(
                    f"endpoint returned {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise EmbeddingServiceError(
                    f"endpoint returned {response.status_code}: {response.text[:200]}"
                )
            data = response.json().get("data")
            if data is None or len(data) != len(texts):
                raise EmbeddingServiceError("endpoint response missing embedding data")
            vectors = np.asarray(
                [row["embedding"] for row in sorted(data, key=lambda r: r["index"])],
                dtype=np.float64,
            )
            if vectors.shape[1] != self.dim:
                raise ConversionError(
                    f"model {self.model!r} returned width {vectors.shape[1]}, "
                    f"published width is {self.dim}"
                )
            return vectors
        raise EmbeddingServiceError(
            f"embedding request failed after {self.max_retries + 1} attempts: {last_error}"
        )

    # -- public -----------------------------------------------------------

    def embed_texts(self, texts) -> np.ndarray:
        """(len(texts), dim) float64 matrix, served from cache where possible."""
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        missing: list[int] = []
        for i, text in enumerate(texts):
            cached = self._cache_get(text)
            if cached is not None:
                out[i] = cached.astype(np.float64)
            else:
                missing.append(i)
        for start in range(0, len(missing), self.batch_size):
            chunk = missing[start : start + self.batch_size]
            vectors = self._post_batch([texts[i] for i in chunk])
            for row, i in enumerate(chunk):
                self._cache_put(texts[i], vectors[row])
                # float32 round-trip so cached and fresh runs emit identical bytes
                out[i] = vectors[row].astype(np.float32).astype(np.float64)
        return out

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
