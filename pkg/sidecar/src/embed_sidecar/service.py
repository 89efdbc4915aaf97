"""HTTP sidecar exposing a sentence-embedding model.

Wire protocol (shared with the benchmark toolkit's similarity scorer):

* ``POST /embed`` with ``{"texts": ["...", ...]}`` returns
  ``{"dim": 384, "embeddings": [[...], ...]}`` with one unit-norm vector per
  input text, in request order.
* ``GET /health`` returns ``{"status": "ok", "dim": 384}`` once the model is
  loaded, 503 before that.

Errors: 400 malformed body, 413 over limits (more than 256 texts or any text
longer than 8192 bytes), 503 model not loaded.

Configuration via environment variables:

* ``EMBED_SIDECAR_BACKEND``: ``minilm`` (default) or ``hash``. The hash
  backend is a deterministic bag-of-token-hashes embedding for environments
  without model weights; same dimension, same wire contract.
* ``EMBED_SIDECAR_MODEL``: model name or local path for the minilm backend
  (default ``sentence-transformers/all-MiniLM-L6-v2``).
* ``EMBED_SIDECAR_HOST`` / ``EMBED_SIDECAR_PORT``: listen address for
  ``python -m embed_sidecar`` (defaults 127.0.0.1:8094).
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
from typing import Protocol, Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

MAX_TEXTS = 256
MAX_TEXT_BYTES = 8192
DIM = 384

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class Backend(Protocol):
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashBackend:
    """Deterministic fallback: lowercased tokens hashed into buckets, L2-normalized."""

    dim = DIM

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in _TOKEN_RE.findall(text.lower()):
                digest = hashlib.sha1(token.encode("utf-8")).digest()
                out[row, int.from_bytes(digest[:8], "little") % self.dim] += 1.0
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class MiniLMBackend:
    """all-MiniLM-L6-v2 via sentence-transformers, normalized server-side."""

    def __init__(self, model_name: str = "sentence-transformers/all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self._model.encode(list(texts), normalize_embeddings=True, show_progress_bar=False)
        return np.asarray(vectors, dtype=np.float64)


def _backend_from_env() -> Backend:
    kind = os.environ.get("EMBED_SIDECAR_BACKEND", "minilm")
    if kind == "hash":
        return HashBackend()
    if kind == "minilm":
        model = os.environ.get("EMBED_SIDECAR_MODEL", "sentence-transformers/all-MiniLM-L6-v2")
        return MiniLMBackend(model)
    raise ValueError(f"unknown EMBED_SIDECAR_BACKEND {kind!r}")


def _normalize(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return vectors / safe


def create_app(backend: Backend | None = None, load_async: bool = False) -> FastAPI:
    """Build the service. With ``load_async`` the backend loads in a thread
    and both endpoints answer 503 until it finishes."""
    app = FastAPI(title="embed-sidecar")
    app.state.backend = backend
    app.state.load_error = None

    if backend is None:
        if load_async:
            def _load():
                try:
                    app.state.backend = _backend_from_env()
                except Exception as exc:  # surfaced via 503 detail
                    app.state.load_error = str(exc)

            threading.Thread(target=_load, daemon=True).start()
        else:
            app.state.backend = _backend_from_env()

    def _not_ready() -> JSONResponse:
        detail = app.state.load_error or "model not loaded yet"
        return JSONResponse({"error": detail}, status_code=503)

    @app.get("/health")
    def health():
        ready = app.state.backend is not None
        if not ready:
            return _not_ready()
        return {"status": "ok", "dim": app.state.backend.dim}

    @app.post("/embed")
    async def embed(request: Request):
        current = app.state.backend
        if current is None:
            return _not_ready()
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        texts = body.get("texts") if isinstance(body, dict) else None
        if not isinstance(texts, list) or not texts or not all(isinstance(t, str) for t in texts):
            return JSONResponse({"error": "texts must be a non-empty list of strings"}, status_code=400)
        if len(texts) > MAX_TEXTS:
            return JSONResponse({"error": f"at most {MAX_TEXTS} texts per request"}, status_code=413)
        for text in texts:
            if len(text.encode("utf-8")) > MAX_TEXT_BYTES:
                return JSONResponse({"error": f"texts must be at most {MAX_TEXT_BYTES} bytes"}, status_code=413)
        vectors = _normalize(np.asarray(current.encode(texts), dtype=np.float64))
        return {"dim": current.dim, "embeddings": vectors.tolist()}

    return app
