import math

import numpy as np
import pytest

from eventbench.matchcore import (
    AggregatorParams,
    AlignmentHeads,
    DegenerateInput,
    MatchProblem,
    Mlp,
    ShapeMismatch,
    aggregate_frame,
    grad_check,
    loss_and_grads,
    match,
    matching_loss,
    make_separable_problems,
    project_align,
    smoothed_labels,
    softmax,
    to_timestamp,
    toy_train,
)


def aggregate_oracle(patches, queries, params):
    """Straight-loop reimplementation of the aggregator, kept independent."""
    num_queries, channels = queries.shape
    num_patches = patches.shape[0]
    scores = np.zeros((num_queries, num_patches))
    for m in range(num_queries):
        pq = params.w_q @ queries[m]
        for k in range(num_patches):
            pk = params.w_k @ patches[k]
            scores[m, k] = float(np.dot(pq, pk)) / math.sqrt(channels)
    mixed = np.zeros((num_queries, channels))
    for m in range(num_queries):
        row = np.exp(scores[m] - scores[m].max())
        row /= row.sum()
        for k in range(num_patches):
            mixed[m] += row[k] * patches[k]
        mixed[m] += queries[m]
    return mixed.mean(axis=0, keepdims=True)


def mlp_oracle(mlp, x):
    out = np.zeros((x.shape[0], mlp.w2.shape[1]))
    for row in range(x.shape[0]):
        hidden = np.tanh(mlp.w1.T @ x[row] + mlp.b1)
        out[row] = mlp.w2.T @ hidden + mlp.b2
    return out


class TestAggregateFrame:
    def test_single_patch_softmax_is_one(self, rng):
        channels = 4
        patches = rng.normal(size=(1, channels))
        queries = rng.normal(size=(3, channels))
        params_a = AggregatorParams(rng.normal(size=(channels, channels)), rng.normal(size=(channels, channels)))
        params_b = AggregatorParams(params_a.w_q, rng.normal(size=(channels, channels)))
        expected = (patches[0] + queries.mean(axis=0))[None, :]
        got_a = aggregate_frame(patches, queries, params_a)
        got_b = aggregate_frame(patches, queries, params_b)
        assert np.allclose(got_a, expected)
        assert np.allclose(got_a, got_b)  # w_k cannot matter with one patch

    def test_zero_query_identity_weights_uniform_attention(self, rng):
        channels = 3
        patches = rng.normal(size=(5, channels))
        queries = np.zeros((1, channels))
        params = AggregatorParams(np.eye(channels), np.eye(channels))
        got = aggregate_frame(patches, queries, params)
        assert np.allclose(got, patches.mean(axis=0, keepdims=True))

    def test_matches_loop_oracle(self, rng):
        patches = rng.normal(size=(4, 3))
        queries = rng.normal(size=(2, 3))
        params = AggregatorParams(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
        got = aggregate_frame(patches, queries, params)
        assert got.shape == (1, 3)
        assert np.allclose(got, aggregate_oracle(patches, queries, params), atol=1e-12)

    def test_shape_mismatch(self, rng):
        params = AggregatorParams(np.eye(3), np.eye(3))
        with pytest.raises(ShapeMismatch):
            aggregate_frame(rng.normal(size=(4, 3)), rng.normal(size=(2, 5)), params)
        with pytest.raises(ShapeMismatch):
            AggregatorParams(np.eye(3), np.eye(4))


class TestProjectAlign:
    def test_zero_weights_zero_output(self):
        zero = Mlp(np.zeros((4, 5)), np.zeros(5), np.zeros((5, 6)), np.zeros(6))
        heads = AlignmentHeads(vid=zero, frm=zero)
        g_vid, g_frm = project_align(np.ones((1, 4)), np.ones((3, 4)), heads)
        assert not g_vid.any() and not g_frm.any()
        assert g_vid.shape == (1, 6) and g_frm.shape == (3, 6)

    def test_identity_config_passes_through_nonlinearity(self):
        dim = 4
        identity = Mlp(np.eye(dim), np.zeros(dim), np.eye(dim), np.zeros(dim))
        heads = AlignmentHeads(vid=identity, frm=identity)
        x = np.linspace(-1, 1, dim)[None, :]
        g_vid, _ = project_align(x, x, heads)
        assert np.allclose(g_vid, np.tanh(x))

    def test_matches_loop_oracle(self, rng):
        heads = AlignmentHeads.random(6, hidden=5, d_out=7, rng=rng)
        h_vid = rng.normal(size=(1, 6))
        h_frm = rng.normal(size=(4, 6))
        g_vid, g_frm = project_align(h_vid, h_frm, heads)
        assert np.allclose(g_vid, mlp_oracle(heads.vid, h_vid), atol=1e-12)
        assert np.allclose(g_frm, mlp_oracle(heads.frm, h_frm), atol=1e-12)

    def test_dim_mismatch(self, rng):
        heads = AlignmentHeads.random(6, hidden=5, d_out=7, rng=rng)
        with pytest.raises(ShapeMismatch):
            project_align(rng.normal(size=(1, 5)), rng.normal(size=(4, 6)), heads)


class TestMatch:
    def test_identical_row_wins(self, rng):
        g_vid = rng.normal(size=(1, 8))
        g_frm = rng.normal(size=(7, 8))
        g_frm[5] = g_vid[0]
        similarities, index = match(g_vid, g_frm)
        assert index == 5
        assert similarities[5] == pytest.approx(1.0)

    def test_all_orthogonal_ties_to_zero(self):
        g_vid = np.array([[1.0, 0.0, 0.0]])
        g_frm = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
        similarities, index = match(g_vid, g_frm)
        assert np.allclose(similarities, 0.0)
        assert index == 0

    def test_argmax_agrees_with_scan(self, rng):
        for _ in range(20):
            g_vid = rng.normal(size=(1, 5))
            g_frm = rng.normal(size=(7, 5))
            similarities, index = match(g_vid, g_frm)
            best = 0
            for t in range(7):
                if similarities[t] > similarities[best]:
                    best = t
            assert index == best

    def test_zero_frame_row_scores_zero(self, rng):
        g_vid = rng.normal(size=(1, 4))
        g_frm = np.vstack([np.zeros(4), rng.normal(size=(2, 4))])
        similarities, _ = match(g_vid, g_frm)
        assert similarities[0] == 0.0

    def test_degenerate_query(self, rng):
        with pytest.raises(DegenerateInput):
            match(np.zeros((1, 4)), rng.normal(size=(3, 4)))

    def test_scale_invariance(self, rng):
        g_vid = rng.normal(size=(1, 6))
        g_frm = rng.normal(size=(9, 6))
        _, base = match(g_vid, g_frm)
        for scale in (1e-3, 7.0, 1e4):
            _, scaled = match(scale * g_vid, g_frm)
            assert scaled == base

    def test_bounded_similarities(self, rng):
        g_vid = rng.normal(size=(1, 6))
        g_frm = rng.normal(size=(9, 6))
        similarities, _ = match(g_vid, g_frm)
        assert np.all(np.abs(similarities) <= 1 + 1e-9)


class TestToTimestamp:
    def test_one_fps(self):
        assert to_timestamp(5, 1.0) == 5.0

    def test_double_rate_halves_seconds(self):
        assert to_timestamp(10, 2.0) == 5.0

    def test_zero_index(self):
        assert to_timestamp(0, 3.7) == 0.0

    def test_rate_validated(self):
        with pytest.raises(ValueError):
            to_timestamp(1, 0.0)


class TestSmoothedLabels:
    def test_target_is_one(self):
        labels = smoothed_labels(10, 4, 2.0)
        assert labels[4] == 1.0

    def test_alpha_two_decay(self):
        labels = smoothed_labels(8, 3, 2.0)
        assert labels[2] == labels[4] == 0.5
        assert labels[0] == 0.125  # distance 3

    def test_symmetry_and_unique_max(self):
        labels = smoothed_labels(9, 4, 1.7)
        assert np.allclose(labels, labels[::-1])
        assert np.argmax(labels) == 4
        assert (labels < 1.0).sum() == 8

    def test_large_alpha_approaches_one_hot(self):
        labels = smoothed_labels(6, 2, 1e6)
        one_hot = np.eye(6)[2]
        assert np.allclose(labels, one_hot, atol=1e-6)

    def test_alpha_validated(self):
        with pytest.raises(ValueError):
            smoothed_labels(5, 2, 1.0)


def loss_oracle(similarities, labels):
    exp = [math.exp(s) for s in similarities]
    z = sum(exp)
    total = 0.0
    for s, y in zip(exp, labels):
        total += y * math.log(s / z)
    return -total / len(labels)


class TestMatchingLoss:
    def test_single_frame_zero(self):
        assert matching_loss(np.array([3.3]), np.array([1.0])) == pytest.approx(0.0)

    def test_uniform_two_frame(self):
        loss = matching_loss(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        assert loss == pytest.approx(math.log(2) / 2)

    def test_matches_loop_oracle(self, rng):
        for _ in range(20):
            similarities = rng.normal(size=5)
            labels = rng.uniform(0, 1, size=5)
            got = matching_loss(similarities, labels)
            assert got == pytest.approx(loss_oracle(similarities, labels), abs=1e-12)

    def test_finite_for_extreme_inputs(self):
        similarities = np.array([-1e6, 0.0, 1e6])
        labels = np.array([1.0, 0.0, 0.0])
        assert math.isfinite(matching_loss(similarities, labels))

    def test_one_hot_minimized_at_spike(self):
        labels = np.eye(4)[1]
        aligned = matching_loss(np.array([0.0, 30.0, 0.0, 0.0]), labels)
        misaligned = matching_loss(np.array([30.0, 0.0, 0.0, 0.0]), labels)
        uniform = matching_loss(np.zeros(4), labels)
        assert aligned < uniform < misaligned

    def test_permutation_equivariant(self, rng):
        similarities = rng.normal(size=6)
        labels = rng.uniform(0, 1, size=6)
        perm = rng.permutation(6)
        assert matching_loss(similarities[perm], labels[perm]) == pytest.approx(
            matching_loss(similarities, labels)
        )

    def test_shifted_mode(self):
        loss = matching_loss(np.array([1.0, -1.0]), np.array([1.0, 0.0]), mode="shifted")
        assert loss == pytest.approx(0.0)
        assert math.isfinite(matching_loss(np.array([-1.0, -1.0]), np.array([1.0, 1.0]), mode="shifted"))


class TestGradients:
    def test_linear_functional_of_linear_mlp_is_exact(self, rng):
        # fully linear chain: central differences agree to roundoff
        dim, hidden, out = 5, 4, 6
        mlp = Mlp(
            rng.normal(size=(dim, hidden)),
            rng.normal(size=hidden),
            rng.normal(size=(hidden, out)),
            rng.normal(size=out),
            activation="identity",
        )
        x = rng.normal(size=(3, dim))
        weights = rng.normal(size=(3, out))
        result, cache = mlp.forward(x)
        grads, _ = mlp.backward(cache, weights)
        eps = 1e-5
        for name, array in mlp.params().items():
            flat = array.reshape(-1)
            analytic = grads[name].reshape(-1)
            for index in range(flat.size):
                original = flat[index]
                flat[index] = original + eps
                plus = float((mlp(x) * weights).sum())
                flat[index] = original - eps
                minus = float((mlp(x) * weights).sum())
                flat[index] = original
                numeric = (plus - minus) / (2 * eps)
                assert abs(numeric - analytic[index]) <= 1e-8 * max(1.0, abs(analytic[index]))

    def test_linear_heads_through_matching_pipeline(self, rng):
        # heads are linear but cosine+softmax above them are not, so the
        # finite-difference bound is the method's noise floor, not exactness
        dim, hidden, out = 5, 4, 6
        def linear():
            return Mlp(
                rng.normal(size=(dim, hidden)),
                rng.normal(size=hidden),
                rng.normal(size=(hidden, out)),
                rng.normal(size=out),
                activation="identity",
            )
        heads = AlignmentHeads(vid=linear(), frm=linear())
        problem = MatchProblem(rng.normal(size=(1, dim)), rng.normal(size=(4, dim)), 2)
        assert grad_check(problem, heads) <= 1e-6

    def test_random_two_layer_heads(self, rng):
        heads = AlignmentHeads.random(8, hidden=6, d_out=6, rng=rng)
        problem = MatchProblem(rng.normal(size=(1, 8)), rng.normal(size=(6, 8)), 3)
        assert grad_check(problem, heads) <= 1e-5

    def test_near_zero_gradient_at_symmetric_stationary_point(self):
        # identical frames make the loss flat in every direction that keeps
        # the softmax uniform; the target-frame row is what would move
        dim = 4
        identity = Mlp(np.eye(dim), np.zeros(dim), np.eye(dim), np.zeros(dim))
        heads = AlignmentHeads(vid=identity, frm=Mlp(np.eye(dim), np.zeros(dim), np.eye(dim), np.zeros(dim)))
        frame = np.ones((1, dim))
        h_frm = np.repeat(frame, 3, axis=0)
        labels = np.ones(3) / 3.0  # uniform labels: already optimal
        loss, grads = loss_and_grads(frame, h_frm, heads, labels)
        assert np.linalg.norm(grads["h_vid"]) <= 1e-6
        eps = 1e-5
        for shift in (eps, -eps):
            shifted = matching_loss(match(*project_align(frame + shift, h_frm, heads))[0], labels)
            assert abs(shifted - loss) <= 1e-6

    def test_eps_range_validated(self, rng):
        heads = AlignmentHeads.random(4, hidden=3, d_out=3, rng=rng)
        problem = MatchProblem(rng.normal(size=(1, 4)), rng.normal(size=(3, 4)), 0)
        with pytest.raises(ValueError):
            grad_check(problem, heads, eps=1e-2)


class TestToyTrain:
    def test_zero_learning_rate_constant_loss(self):
        trace = toy_train(steps=25, learning_rate=0.0, seed=1, num_problems=8)
        assert len({entry.loss for entry in trace}) == 1

    def test_same_seed_identical_trace(self):
        a = toy_train(steps=30, seed=5, num_problems=8)
        b = toy_train(steps=30, seed=5, num_problems=8)
        assert a == b

    def test_loss_decreases(self):
        trace = toy_train(steps=120, seed=2, num_problems=16)
        assert trace[-1].loss < trace[0].loss
        assert trace[-1].accuracy > trace[0].accuracy

    def test_problem_validation(self, rng):
        with pytest.raises(ShapeMismatch):
            MatchProblem(rng.normal(size=(1, 4)), rng.normal(size=(3, 4)), 3)
        with pytest.raises(ValueError):
            MatchProblem(rng.normal(size=(1, 4)), rng.normal(size=(3, 4)), 0, alpha=1.0)

    def test_separable_generator_shapes(self, rng):
        problems = make_separable_problems(rng, num_problems=3, num_frames=5, dim=4)
        assert len(problems) == 3
        for problem in problems:
            assert problem.h_frm.shape == (5, 4)
            assert 0 <= problem.t_gt < 5
