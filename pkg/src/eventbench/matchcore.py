"""Timestamp prediction as embedding matching, as standalone numerics.

The pipeline: a per-frame attention aggregator compresses patch features into
one frame token; two small MLP heads project a query hidden state and the
frame hidden states into a shared alignment space; cosine similarity against
every frame picks the matched frame index, which converts to seconds via the
frame rate; training uses a smoothed cross-entropy matching loss whose labels
decay geometrically with distance from the target frame.

All arithmetic is float64. Analytic gradients for the loss -> cosine -> MLP
chain are implemented by hand and verified against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ShapeMismatch(ValueError):
    pass


class DegenerateInput(ValueError):
    """The query embedding is all zeros; cosine matching is undefined."""


# --- frame aggregation --------------------------------------------------------


@dataclass(frozen=True)
class AggregatorParams:
    """Channel-space projection matrices for attention scores."""

    w_q: np.ndarray  # (channels, channels)
    w_k: np.ndarray  # (channels, channels)

    def __post_init__(self):
        w_q = np.asarray(self.w_q, dtype=np.float64)
        w_k = np.asarray(self.w_k, dtype=np.float64)
        for name, mat in (("w_q", w_q), ("w_k", w_k)):
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ShapeMismatch(f"{name} must be square, got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise ShapeMismatch(f"{name} contains non-finite entries")
        if w_q.shape != w_k.shape:
            raise ShapeMismatch(f"w_q {w_q.shape} and w_k {w_k.shape} differ")
        object.__setattr__(self, "w_q", w_q)
        object.__setattr__(self, "w_k", w_k)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=axis, keepdims=True)


def aggregate_frame(patches: np.ndarray, queries: np.ndarray, params: AggregatorParams) -> np.ndarray:
    """Compress one frame's patch features into a single channel vector.

    ``patches`` is (num_patches, channels); ``queries`` is
    (num_queries, channels). Projected queries attend over projected patches
    (scores scaled by 1/sqrt(channels), softmax over patches); the attended
    patch mixture gets a residual query added, then the query axis is averaged
    away, leaving shape (1, channels).
    """
    patches = np.asarray(patches, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if patches.ndim != 2 or queries.ndim != 2:
        raise ShapeMismatch("patches and queries must be 2-D")
    channels = patches.shape[1]
    if queries.shape[1] != channels:
        raise ShapeMismatch(f"channel mismatch: patches {channels}, queries {queries.shape[1]}")
    if params.w_q.shape[0] != channels:
        raise ShapeMismatch(f"params are {params.w_q.shape[0]}-channel, inputs are {channels}-channel")

    projected_q = queries @ params.w_q.T
    projected_k = patches @ params.w_k.T
    scores = projected_q @ projected_k.T / np.sqrt(channels)
    attention = softmax(scores, axis=1)  # (num_queries, num_patches)
    mixed = attention @ patches + queries
    return mixed.mean(axis=0, keepdims=True)


# --- alignment heads ------------------------------------------------------------


@dataclass
class Mlp:
    """Two-layer perceptron, tanh between layers by default.

    ``activation="identity"`` makes the head linear, which is handy for
    analytic sanity checks (finite differences become exact to roundoff).
    """

    w1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, d_out)
    b2: np.ndarray  # (d_out,)
    activation: str = "tanh"

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        pre = x @ self.w1 + self.b1
        hidden = np.tanh(pre) if self.activation == "tanh" else pre
        out = hidden @ self.w2 + self.b2
        return out, (x, hidden)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: tuple, grad_out: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        x, hidden = cache
        grad_w2 = hidden.T @ grad_out
        grad_b2 = grad_out.sum(axis=0)
        grad_hidden = grad_out @ self.w2.T
        grad_pre = grad_hidden * (1.0 - hidden**2) if self.activation == "tanh" else grad_hidden
        grad_w1 = x.T @ grad_pre
        grad_b1 = grad_pre.sum(axis=0)
        grad_x = grad_pre @ self.w1.T
        grads = {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}
        return grads, grad_x

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    @classmethod
    def random(cls, d_in: int, hidden: int, d_out: int, rng: np.random.Generator) -> "Mlp":
        return cls(
            w1=rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, hidden)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, d_out)),
            b2=np.zeros(d_out),
        )


@dataclass
class AlignmentHeads:
    """Projection heads into the shared alignment space: one for the query
    token's hidden state, one for frame hidden states. Output dims must match."""

    vid: Mlp
    frm: Mlp

    def __post_init__(self):
        if self.vid.w2.shape[1] != self.frm.w2.shape[1]:
            raise ShapeMismatch(
                f"alignment dims differ: {self.vid.w2.shape[1]} vs {self.frm.w2.shape[1]}"
            )

    @classmethod
    def random(
        cls,
        d_in: int,
        hidden: int = 1536,
        d_out: int = 3072,
        rng: np.random.Generator | None = None,
    ) -> "AlignmentHeads":
        rng = rng or np.random.default_rng(0)
        return cls(vid=Mlp.random(d_in, hidden, d_out, rng), frm=Mlp.random(d_in, hidden, d_out, rng))


@dataclass(frozen=True)
class MatchProblem:
    """One matching instance: query hidden state, frame hidden states, target."""

    h_vid: np.ndarray  # (1, d)
    h_frm: np.ndarray  # (num_frames, d)
    t_gt: int
    alpha: float = 2.0
    frame_rate: float = 1.0

    def __post_init__(self):
        h_vid = np.atleast_2d(np.asarray(self.h_vid, dtype=np.float64))
        h_frm = np.asarray(self.h_frm, dtype=np.float64)
        if h_vid.shape[0] != 1 or h_frm.ndim != 2 or h_vid.shape[1] != h_frm.shape[1]:
            raise ShapeMismatch(f"bad shapes: h_vid {h_vid.shape}, h_frm {h_frm.shape}")
        if not 0 <= self.t_gt < h_frm.shape[0]:
            raise ShapeMismatch(f"t_gt {self.t_gt} outside [0, {h_frm.shape[0]})")
        if self.alpha <= 1.0:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.frame_rate <= 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "h_vid", h_vid)
        object.__setattr__(self, "h_frm", h_frm)


def project_align(h_vid: np.ndarray, h_frm: np.ndarray, heads: AlignmentHeads) -> tuple[np.ndarray, np.ndarray]:
    """Project hidden states into the alignment space: (1, d_out) and (T, d_out)."""
    h_vid = np.atleast_2d(np.asarray(h_vid, dtype=np.float64))
    h_frm = np.asarray(h_frm, dtype=np.float64)
    if h_vid.shape[1] != heads.vid.w1.shape[0]:
        raise ShapeMismatch(f"h_vid dim {h_vid.shape[1]} != head input {heads.vid.w1.shape[0]}")
    if h_frm.ndim != 2 or h_frm.shape[1] != heads.frm.w1.shape[0]:
        raise ShapeMismatch(f"h_frm dim {h_frm.shape} != head input {heads.frm.w1.shape[0]}")
    return heads.vid(h_vid), heads.frm(h_frm)


def match(g_vid: np.ndarray, g_frm: np.ndarray) -> tuple[np.ndarray, int]:
    """Cosine similarities against every frame plus the argmax frame index.

    All-zero frame rows get similarity 0; ties resolve to the lowest index.
    """
    g_vid = np.atleast_2d(np.asarray(g_vid, dtype=np.float64))
    g_frm = np.asarray(g_frm, dtype=np.float64)
    vid_norm = np.linalg.norm(g_vid)
    if vid_norm == 0.0:
        raise DegenerateInput("query embedding is all zeros")
    frame_norms = np.linalg.norm(g_frm, axis=1)
    similarities = np.zeros(g_frm.shape[0])
    nonzero = frame_norms > 0.0
    similarities[nonzero] = (g_frm[nonzero] @ g_vid[0]) / (frame_norms[nonzero] * vid_norm)
    return similarities, int(np.argmax(similarities))


def to_timestamp(t_match: int, frame_rate: float) -> float:
    """Frame index to seconds under uniform sampling: index i at rate r is i/r."""
    if frame_rate <= 0:
        raise ValueError(f"frame_rate must be positive, got {frame_rate}")
    return t_match / frame_rate


def smoothed_labels(num_frames: int, t_gt: int, alpha: float) -> np.ndarray:
    """Geometric label decay alpha**(-|t - t_gt|); one-hot in the alpha -> inf limit."""
    if alpha <= 1.0:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    distances = np.abs(np.arange(num_frames) - t_gt)
    return alpha ** (-distances.astype(np.float64))


def matching_loss(similarities: np.ndarray, labels: np.ndarray, mode: str = "softmax") -> float:
    """Cross-entropy-style matching loss over frames.

    ``softmax`` (default) normalizes similarities into a distribution before
    the log, which keeps the loss finite for any real similarity. ``shifted``
    instead maps cosine values through (s + 1) / 2 with a floor, for
    comparison with the raw-similarity reading.
    """
    similarities = np.asarray(similarities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if similarities.shape != labels.shape:
        raise ShapeMismatch(f"shapes differ: {similarities.shape} vs {labels.shape}")
    num = similarities.shape[0]
    if mode == "softmax":
        shifted = similarities - similarities.max()
        log_prob = shifted - np.log(np.exp(shifted).sum())
        return float(-(labels * log_prob).sum() / num)
    if mode == "shifted":
        prob = np.clip((similarities + 1.0) / 2.0, 1e-12, 1.0)
        return float(-(labels * np.log(prob)).sum() / num)
    raise ValueError(f"unknown loss mode {mode!r}")


# --- analytic gradients ---------------------------------------------------------


def loss_and_grads(
    h_vid: np.ndarray,
    h_frm: np.ndarray,
    heads: AlignmentHeads,
    labels: np.ndarray,
) -> tuple[float, dict]:
    """Loss plus gradients w.r.t. both heads' parameters and h_vid (softmax mode)."""
    h_vid = np.atleast_2d(np.asarray(h_vid, dtype=np.float64))
    h_frm = np.asarray(h_frm, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)

    g_vid, vid_cache = heads.vid.forward(h_vid)
    g_frm, frm_cache = heads.frm.forward(h_frm)

    u = g_vid[0]
    u_norm = np.linalg.norm(u)
    if u_norm == 0.0:
        raise DegenerateInput("query embedding is all zeros")
    frame_norms = np.linalg.norm(g_frm, axis=1)
    nonzero = frame_norms > 0.0
    similarities = np.zeros(g_frm.shape[0])
    similarities[nonzero] = (g_frm[nonzero] @ u) / (frame_norms[nonzero] * u_norm)

    num = similarities.shape[0]
    prob = softmax(similarities)
    loss = float(-(labels * (np.log(prob))).sum() / num)

    # d loss / d s
    grad_s = (prob * labels.sum() - labels) / num

    # cosine backward; zero rows contribute nothing
    grad_frm = np.zeros_like(g_frm)
    nz = np.flatnonzero(nonzero)
    norms_nz = frame_norms[nz]
    scaled = grad_s[nz] / norms_nz
    grad_u = (scaled @ g_frm[nz]) / u_norm - float(np.dot(grad_s[nz], similarities[nz])) * u / (u_norm**2)
    grad_frm[nz] = (
        scaled[:, None] * u[None, :] / u_norm
        - (grad_s[nz] * similarities[nz] / norms_nz**2)[:, None] * g_frm[nz]
    )

    vid_grads, grad_h_vid = heads.vid.backward(vid_cache, grad_u[None, :])
    frm_grads, _ = heads.frm.backward(frm_cache, grad_frm)
    return loss, {"vid": vid_grads, "frm": frm_grads, "h_vid": grad_h_vid}


def grad_check(
    problem: MatchProblem,
    heads: AlignmentHeads,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every parameter of both heads plus h_vid. The denominator is
    guarded at 1e-4: central differences at eps=1e-5 carry ~1e-10 absolute
    noise, so components below the guard compare on an absolute scale
    (1e-5 relative at the guard = 1e-9 absolute) instead of dividing noise
    by noise.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must be in [1e-7, 1e-3], got {eps}")
    labels = smoothed_labels(problem.h_frm.shape[0], problem.t_gt, problem.alpha)
    _, grads = loss_and_grads(problem.h_vid, problem.h_frm, heads, labels)

    def loss_fn() -> float:
        g_vid, g_frm = project_align(problem.h_vid, problem.h_frm, heads)
        similarities, _ = match(g_vid, g_frm)
        return matching_loss(similarities, labels)

    worst = 0.0

    def check_array(array: np.ndarray, analytic: np.ndarray) -> None:
        nonlocal worst
        flat = array.reshape(-1)
        analytic_flat = analytic.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + eps
            plus = loss_fn()
            flat[index] = original - eps
            minus = loss_fn()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            denom = max(abs(numeric), abs(analytic_flat[index]), 1e-4)
            worst = max(worst, abs(numeric - analytic_flat[index]) / denom)

    for head_name, head in (("vid", heads.vid), ("frm", heads.frm)):
        for param_name, array in head.params().items():
            check_array(array, grads[head_name][param_name])
    check_array(problem.h_vid, grads["h_vid"])
    return worst


# --- toy training -----------------------------------------------------------------


def make_separable_problems(
    rng: np.random.Generator,
    num_problems: int = 64,
    num_frames: int = 32,
    dim: int = 16,
    noise: float = 0.05,
    alpha: float = 2.0,
) -> list[MatchProblem]:
    """Synthetic instances where h_vid sits near a designated frame's hidden state."""
    problems = []
    for _ in range(num_problems):
        frames = rng.normal(size=(num_frames, dim))
        target = int(rng.integers(num_frames))
        query = frames[target] + noise * rng.normal(size=dim)
        problems.append(MatchProblem(query[None, :], frames, target, alpha=alpha))
    return problems


@dataclass(frozen=True)
class TraceStep:
    step: int
    loss: float
    accuracy: float


def toy_train(
    steps: int = 500,
    learning_rate: float = 2.0,
    seed: int = 0,
    *,
    num_problems: int = 64,
    num_frames: int = 32,
    dim: int = 16,
    noise: float = 0.05,
    hidden: int = 32,
    out_dim: int = 32,
    alpha: float = 2.0,
    problems: list[MatchProblem] | None = None,
    make_problems: Callable[[np.random.Generator], list[MatchProblem]] | None = None,
) -> list[TraceStep]:
    """Full-batch gradient descent on the alignment heads over synthetic data.

    Returns one trace entry per step with the pre-update loss and argmax
    accuracy. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    if problems is None:
        if make_problems is not None:
            problems = make_problems(rng)
        else:
            problems = make_separable_problems(
                rng, num_problems=num_problems, num_frames=num_frames, dim=dim, noise=noise, alpha=alpha
            )
    dim_in = problems[0].h_frm.shape[1]
    heads = AlignmentHeads.random(dim_in, hidden=hidden, d_out=out_dim, rng=rng)
    label_cache = [smoothed_labels(p.h_frm.shape[0], p.t_gt, p.alpha) for p in problems]

    trace = []
    for step in range(steps):
        total_loss = 0.0
        correct = 0
        accum = {
            "vid": {k: np.zeros_like(v) for k, v in heads.vid.params().items()},
            "frm": {k: np.zeros_like(v) for k, v in heads.frm.params().items()},
        }
        for problem, labels in zip(problems, label_cache):
            loss, grads = loss_and_grads(problem.h_vid, problem.h_frm, heads, labels)
            total_loss += loss
            g_vid, g_frm = project_align(problem.h_vid, problem.h_frm, heads)
            _, matched = match(g_vid, g_frm)
            correct += matched == problem.t_gt
            for head_name in ("vid", "frm"):
                for key, grad in grads[head_name].items():
                    accum[head_name][key] += grad
        scale = learning_rate / len(problems)
        for head_name, head in (("vid", heads.vid), ("frm", heads.frm)):
            for key, param in head.params().items():
                param -= scale * accum[head_name][key]
        trace.append(TraceStep(step, total_loss / len(problems), correct / len(problems)))
    return trace
