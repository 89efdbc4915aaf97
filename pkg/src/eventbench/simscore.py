"""Caption similarity scoring for dense-captioning tasks.

Captions from predicted segments are paired with ground-truth segments by
maximum temporal IoU, then compared with cosine similarity of sentence
embeddings. The embedder is pluggable: a deterministic hashing embedder ships
as the built-in fallback, and a remote HTTP service can be used for
paper-grade sentence embeddings.

Remote wire protocol: ``POST {base_url}/embed`` with body
``{"texts": [...]}`` returns ``{"dim": int, "embeddings": [[...], ...]}``.
Any non-200 response or transport error raises :class:`EmbedderUnavailable`;
there is no silent fallback.
"""

from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from eventbench.domain import TimeInterval
from eventbench.metrics import iou

FALLBACK_DIM = 384  # matches the remote model so score files are interchangeable

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbedderUnavailable(RuntimeError):
    """The configured remote embedder could not be reached or misbehaved."""


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic bag-of-token-hashes embedding.

    Lowercased word tokens are hashed into a fixed number of buckets and the
    count vector is L2-normalized. Empty text maps to the zero vector, which
    has similarity 0 with everything.
    """

    def __init__(self, dim: int = FALLBACK_DIM):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in _TOKEN_RE.findall(text.lower()):
                digest = hashlib.sha1(token.encode("utf-8")).digest()
                bucket = int.from_bytes(digest[:8], "little") % self.dim
                out[row, bucket] += 1.0
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


def fallback_embed(texts: Sequence[str]) -> np.ndarray:
    return HashEmbedder().embed(texts)


class RemoteEmbedder:
    """Client for the sentence-embedding sidecar service."""

    def __init__(
        self,
        base_url: str,
        batch_size: int = 256,
        timeout_s: float = 30.0,
        max_in_flight: int = 4,
    ):
        self.base_url = base_url.rstrip("/")
        self.batch_size = batch_size
        self.timeout_s = timeout_s
        self.max_in_flight = max(1, max_in_flight)

    def _post_chunk(self, chunk: list[str]) -> list[list[float]]:
        try:
            response = requests.post(
                f"{self.base_url}/embed", json={"texts": chunk}, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise EmbedderUnavailable(f"embed request failed: {exc}") from exc
        if response.status_code != 200:
            raise EmbedderUnavailable(f"embed endpoint returned {response.status_code}")
        payload = response.json()
        embeddings = payload.get("embeddings")
        if not isinstance(embeddings, list) or len(embeddings) != len(chunk):
            raise EmbedderUnavailable("embed endpoint returned a malformed payload")
        return embeddings

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, FALLBACK_DIM), dtype=np.float64)
        chunks = [list(texts[i : i + self.batch_size]) for i in range(0, len(texts), self.batch_size)]
        if len(chunks) == 1:
            rows = self._post_chunk(chunks[0])
        else:
            # concurrent chunks, reassembled in request order
            rows = []
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                for part in pool.map(self._post_chunk, chunks):
                    rows.extend(part)
        return np.asarray(rows, dtype=np.float64)


@dataclass
class SimConfig:
    embedder: Embedder = field(default_factory=HashEmbedder)
    unmatched_gt_score: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.unmatched_gt_score <= 1.0:
            raise ValueError(f"unmatched_gt_score must be in [0, 1], got {self.unmatched_gt_score}")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


Captioned = Sequence[tuple[TimeInterval, str]]


def pair_segments(preds: Captioned, gts: Captioned) -> list[tuple[int, int | None]]:
    """Pair each ground-truth segment with at most one prediction.

    Candidate pairs with positive IoU are taken greedily in descending IoU
    order; leftovers stay unmatched. Ties break on segment content (gt
    boundary, gt caption, then pred boundary and caption), never on list
    position, so reordering either input list cannot change the score.
    Returns one ``(gt_index, pred_index | None)`` entry per gt.
    """
    if not gts:
        raise ValueError("gts must be non-empty")
    candidates = []
    for g_idx, (gt_iv, gt_text) in enumerate(gts):
        for p_idx, (pred_iv, pred_text) in enumerate(preds):
            value = iou(pred_iv, gt_iv)
            if value > 0.0:
                key = (-value, gt_iv.start, gt_iv.end, gt_text, pred_iv.start, pred_iv.end, pred_text)
                candidates.append((key, g_idx, p_idx))
    candidates.sort(key=lambda item: item[0])
    assigned: dict[int, int] = {}
    used_preds: set[int] = set()
    for _, g_idx, p_idx in candidates:
        if g_idx in assigned or p_idx in used_preds:
            continue
        assigned[g_idx] = p_idx
        used_preds.add(p_idx)
    return [(g_idx, assigned.get(g_idx)) for g_idx in range(len(gts))]


def sim_score(preds: Captioned, gts: Captioned, cfg: SimConfig | None = None) -> float:
    """Mean over ground truths of paired-caption cosine similarity.

    Negative cosines clamp to 0 so the score stays in [0, 1]; unmatched
    ground truths contribute ``cfg.unmatched_gt_score``.
    """
    cfg = cfg or SimConfig()
    pairs = pair_segments(preds, gts)
    matched = [(g_idx, p_idx) for g_idx, p_idx in pairs if p_idx is not None]
    if not matched:
        return cfg.unmatched_gt_score

    texts = [gts[g_idx][1] for g_idx, _ in matched] + [preds[p_idx][1] for _, p_idx in matched]
    vectors = cfg.embedder.embed(texts)
    gt_vecs = vectors[: len(matched)]
    pred_vecs = vectors[len(matched) :]

    per_gt = {g_idx: cfg.unmatched_gt_score for g_idx in range(len(gts))}
    for row, (g_idx, _) in enumerate(matched):
        per_gt[g_idx] = min(max(cosine(gt_vecs[row], pred_vecs[row]), 0.0), 1.0)
    return sum(per_gt.values()) / len(gts)
