"""Warping transform: hand oracles, invariant properties, gradients."""

import numpy as np
import pytest

from tswarp import tensor as tt
from tswarp.encoder import InputEncoder
from tswarp.tensor import Parameter, Tensor
from tswarp.warp import (
    ScoreNetwork,
    WarpLayer,
    apply_warp,
    identity_alignment,
    segment_boundaries,
    time_bin_transform,
    transform_matrix,
    warping_curve,
)


# ---------------------------------------------------------------------------
# warping curve
# ---------------------------------------------------------------------------


def test_curve_hand_case():
    lam = warping_curve(Tensor([2.0, 1.0, 1.0]))
    np.testing.assert_allclose(lam.data, [0.5, 0.75, 1.0], atol=1e-7)


def test_curve_zero_scores_fall_back_to_uniform():
    lam = warping_curve(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(lam.data, [1 / 3, 2 / 3, 1.0], atol=1e-12)


def test_curve_rowwise_fallback_in_batches():
    s = np.array([[1.0, 3.0], [0.0, 0.0]])
    lam = warping_curve(Tensor(s)).data
    np.testing.assert_allclose(lam[0], [0.25, 1.0], atol=1e-7)
    np.testing.assert_allclose(lam[1], [0.5, 1.0], atol=1e-12)


def test_curve_monotone_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(200):
        L = int(rng.integers(1, 40))
        s = rng.uniform(0, 1, size=L) * (rng.uniform(size=L) > 0.2)
        lam = warping_curve(Tensor(s)).data
        assert np.all(np.diff(lam) >= -1e-15)
        assert lam[0] >= 0.0 and lam[-1] <= 1.0 + 1e-12


def test_boundaries_partition_unit_interval():
    r1, r2 = segment_boundaries(4)
    np.testing.assert_allclose(r1, [0.0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(r2, [0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(r2 - r1, 0.25)
    with pytest.raises(ValueError):
        segment_boundaries(0)


# ---------------------------------------------------------------------------
# transform matrix
# ---------------------------------------------------------------------------


def test_transform_hand_case_downsampling_exact():
    A = transform_matrix(Tensor([0.25, 0.5, 0.75, 1.0]), 2).data
    want = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 1 / 3, 1 / 3, 1 / 3]])
    np.testing.assert_array_equal(A, want)


def test_transform_single_observation_upsampling_copies():
    A = transform_matrix(Tensor([1.0]), 3).data
    np.testing.assert_array_equal(A, np.ones((3, 1)))


def test_transform_upsampling_gap_weights():
    # two observations far apart; segment [0.4, 0.5) of 10 holds neither,
    # so it stretches to both and weights them by boundary distance
    lam = [0.05, 0.95]
    A = transform_matrix(Tensor(lam), 10).data
    j = 4  # segment [0.4, 0.5]
    w_lo = 0.5 - 0.05
    w_hi = 0.95 - 0.4
    np.testing.assert_allclose(A[j], [w_lo / (w_lo + w_hi), w_hi / (w_lo + w_hi)], atol=1e-12)
    np.testing.assert_allclose(A.sum(axis=1), np.ones(10), atol=1e-12)


def test_transform_adjusted_soft_weights_are_uniform_in_gaps():
    A = transform_matrix(Tensor([0.05, 0.95]), 10, adjusted_soft=True).data
    np.testing.assert_allclose(A[4], [0.5, 0.5], atol=1e-12)


def test_transform_no_upsample_leaves_empty_rows_zero():
    A = transform_matrix(Tensor([0.05, 0.95]), 10, upsample=False).data
    sums = A.sum(axis=1)
    np.testing.assert_allclose(sums[0], 1.0)
    np.testing.assert_allclose(sums[9], 1.0)
    np.testing.assert_array_equal(sums[1:9], np.zeros(8))


def test_transform_batched_matches_per_row():
    rng = np.random.default_rng(3)
    lam = np.sort(rng.uniform(0, 1, size=(2, 3, 7)), axis=-1)
    lam[..., -1] = 1.0
    full = transform_matrix(Tensor(lam), 4).data
    for i in range(2):
        for k in range(3):
            single = transform_matrix(Tensor(lam[i, k]), 4).data
            np.testing.assert_allclose(full[i, k], single, atol=1e-15)


class TestTransformInvariants:
    """Randomized invariant suite over the alignment construction."""

    def _cases(self, n, seed=1234):
        rng = np.random.default_rng(seed)
        for _ in range(n):
            L_old = int(rng.integers(1, 33))
            L_new = int(rng.integers(1, 4 * L_old + 1))
            scores = rng.uniform(0, 1, size=L_old)
            scores[rng.uniform(size=L_old) < 0.25] = 0.0
            if scores.sum() == 0:
                scores[int(rng.integers(0, L_old))] = rng.uniform(0.1, 1.0)
            yield scores, L_old, L_new, rng

    def test_invariants_hold_on_1000_cases(self):
        for scores, L_old, L_new, rng in self._cases(1000):
            lam = warping_curve(Tensor(scores))
            A = transform_matrix(lam, L_new).data
            sums = A.sum(axis=1)
            np.testing.assert_allclose(sums, np.ones(L_new), atol=1e-6)
            starts = []
            for j in range(L_new):
                nz = np.flatnonzero(A[j])
                assert nz.size > 0, "empty row in adaptive mode"
                assert np.all(np.diff(nz) == 1), "support not contiguous"
                starts.append(nz[0])
            assert np.all(np.diff(starts) >= 0), "support starts not monotone"

    def test_convex_hull_bound(self):
        for scores, L_old, L_new, rng in self._cases(200, seed=99):
            lam = warping_curve(Tensor(scores))
            A = transform_matrix(lam, L_new).data
            H = rng.normal(size=(L_old, 3))
            Z = A @ H
            lo, hi = H.min(axis=0), H.max(axis=0)
            assert np.all(Z >= lo - 1e-9) and np.all(Z <= hi + 1e-9)

    def test_anchor_times_monotone_in_pure_downsampling(self):
        # rows that needed no stretching are uniform convex averages over
        # contiguous windows with monotone ends, so anchors cannot decrease
        checked = 0
        for scores, L_old, L_new, rng in self._cases(400, seed=7):
            if L_new > L_old:
                continue
            lam = warping_curve(Tensor(scores))
            A_plain = transform_matrix(lam, L_new, upsample=False).data
            if np.any(A_plain.sum(axis=1) == 0):
                continue  # stretching would kick in somewhere
            T = np.sort(rng.uniform(0, 50, size=L_old))
            anchors = transform_matrix(lam, L_new).data @ T
            assert np.all(np.diff(anchors) >= -1e-9)
            checked += 1
        assert checked > 50


# ---------------------------------------------------------------------------
# applying the alignment
# ---------------------------------------------------------------------------


def _apply_oracle(A, H, M, T):
    K, Ln, Lo = A.shape
    D = H.shape[-1]
    Z = np.zeros((K, Ln, D))
    Mp = np.zeros((K, Ln))
    Tp = np.zeros((K, Ln))
    for k in range(K):
        for j in range(Ln):
            w = A[k, j] * M[k]
            s = w.sum()
            w_eff = A[k, j] if s == 0.0 else w / s
            for i in range(Lo):
                Z[k, j] += w_eff[i] * H[k, i]
                Tp[k, j] += w_eff[i] * T[k, i]
                Mp[k, j] += A[k, j, i] * M[k, i]
    return Z, Mp, Tp


def test_apply_warp_matches_loop_oracle():
    rng = np.random.default_rng(21)
    for _ in range(60):
        K = int(rng.integers(1, 4))
        Lo = int(rng.integers(1, 5))
        Ln = int(rng.integers(1, 5))
        D = int(rng.integers(1, 4))
        A = rng.uniform(0, 1, size=(K, Ln, Lo))
        A /= A.sum(axis=-1, keepdims=True)
        H = rng.normal(size=(K, Lo, D))
        M = (rng.uniform(size=(K, Lo)) > 0.4).astype(float)
        T = np.broadcast_to(np.sort(rng.uniform(0, 10, size=Lo)), (K, Lo)).copy()
        Z, Mp, Tp = apply_warp(Tensor(A), Tensor(H), Tensor(M), Tensor(T))
        oz, om, ot = _apply_oracle(A, H, M, T)
        np.testing.assert_allclose(Z.data, oz, atol=1e-12)
        np.testing.assert_allclose(Mp.data, om, atol=1e-12)
        np.testing.assert_allclose(Tp.data, ot, atol=1e-12)


def test_apply_warp_even_row_averages():
    A = Tensor(np.array([[[0.5, 0.5]]]))
    H = Tensor(np.array([[[1.0, 3.0], [5.0, 7.0]]]))
    M = Tensor(np.ones((1, 2)))
    T = Tensor(np.array([[0.0, 2.0]]))
    Z, Mp, Tp = apply_warp(A, H, M, T)
    np.testing.assert_allclose(Z.data[0, 0], [3.0, 5.0])
    np.testing.assert_allclose(Mp.data, [[1.0]])
    np.testing.assert_allclose(Tp.data, [[1.0]])


def test_apply_warp_identity_is_bitwise_exact():
    rng = np.random.default_rng(5)
    for _ in range(25):
        K, L, D = 3, int(rng.integers(1, 8)), 4
        H = rng.normal(size=(K, L, D))
        M = (rng.uniform(size=(K, L)) > 0.5).astype(float)
        T = np.broadcast_to(np.sort(rng.uniform(0, 5, size=L)), (K, L)).copy()
        A = identity_alignment((K,), L)
        Z, Mp, Tp = apply_warp(A, Tensor(H), Tensor(M), Tensor(T))
        assert np.array_equal(Z.data, H)
        assert np.array_equal(Mp.data, M)
        assert np.array_equal(Tp.data, T)


def test_apply_warp_masked_columns_cannot_leak():
    rng = np.random.default_rng(9)
    A = rng.uniform(0.1, 1, size=(1, 2, 4))
    A /= A.sum(axis=-1, keepdims=True)
    H = rng.normal(size=(1, 4, 3))
    M = np.array([[1.0, 0.0, 1.0, 1.0]])
    T = np.sort(rng.uniform(0, 4, size=4))[None, :]
    Z1, _, _ = apply_warp(Tensor(A), Tensor(H), Tensor(M), Tensor(T))
    H2 = H.copy()
    H2[0, 1] = 1e6  # only the masked position changes
    Z2, _, _ = apply_warp(Tensor(A), Tensor(H2), Tensor(M), Tensor(T))
    np.testing.assert_array_equal(Z1.data, Z2.data)


def test_time_bin_transform_equal_width_bins():
    T = np.array([[0.0, 1.0, 10.0]])
    A = time_bin_transform(T, np.ones((1, 3)), 2).data
    np.testing.assert_allclose(A[0, 0], [0.5, 0.5, 0.0])
    np.testing.assert_allclose(A[0, 1], [0.0, 0.0, 1.0])
    degenerate = time_bin_transform(np.array([[2.0]]), np.ones((1, 1)), 3).data
    np.testing.assert_allclose(degenerate[0, 0], [1.0])
    np.testing.assert_array_equal(degenerate[0, 1:], np.zeros((2, 1)))


# ---------------------------------------------------------------------------
# the full layer
# ---------------------------------------------------------------------------


def _layer_inputs(rng, K=2, L=6, D=4):
    H = Parameter("H", rng.normal(size=(K, L, D)))
    M = (rng.uniform(size=(K, L)) > 0.3).astype(float)
    M[:, 0] = 1.0
    T = np.broadcast_to(np.sort(rng.uniform(0, 10, size=L)), (K, L)).copy()
    return H, M, T


def test_layer_composition_matches_manual_pipeline():
    rng = np.random.default_rng(17)
    layer = WarpLayer(rng, dim=4, prefix="w")
    H, M, T = _layer_inputs(rng)
    Z, frac, anchors, A = layer.forward(H, M, T, new_length=3)
    scores = layer.scorer(H, Tensor(M))
    manual_A = transform_matrix(warping_curve(scores), 3)
    np.testing.assert_allclose(A.data, manual_A.data, atol=1e-15)
    mz, mf, mt = apply_warp(manual_A, H, Tensor(M), Tensor(T))
    np.testing.assert_allclose(Z.data, mz.data, atol=1e-15)
    np.testing.assert_allclose(frac.data, mf.data, atol=1e-15)
    np.testing.assert_allclose(anchors.data, mt.data, atol=1e-15)


def test_layer_identity_mode_is_exact_passthrough():
    rng = np.random.default_rng(31)
    layer = WarpLayer(rng, dim=4, mode="identity", prefix="w")
    assert layer.parameters() == []
    H, M, T = _layer_inputs(rng)
    Z, frac, anchors, A = layer.forward(H, M, T, new_length=99)
    assert np.array_equal(Z.data, H.data)
    assert np.array_equal(frac.data, M)
    assert np.array_equal(anchors.data, T)
    assert np.array_equal(A.data, np.broadcast_to(np.eye(6), (2, 6, 6)))


def test_layer_rejects_bad_inputs():
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError):
        WarpLayer(rng, dim=4, mode="bilinear")
    layer = WarpLayer(rng, dim=4)
    H, M, T = _layer_inputs(rng)
    with pytest.raises(ValueError):
        layer.forward(H, M, T, new_length=0)


def test_layer_fully_masked_variate_contributes_nothing():
    rng = np.random.default_rng(23)
    layer = WarpLayer(rng, dim=4, prefix="w")
    H, M, T = _layer_inputs(rng, K=2)
    M[1, :] = 0.0
    Z, frac, anchors, A = layer.forward(H, M, T, new_length=3)
    np.testing.assert_array_equal(frac.data[1], np.zeros(3))
    # curve falls back to uniform, alignment rows stay valid
    np.testing.assert_allclose(A.data[1].sum(axis=1), np.ones(3), atol=1e-6)


def test_layer_padding_columns_leave_real_output_unchanged():
    rng = np.random.default_rng(41)
    layer = WarpLayer(rng, dim=4, prefix="w")
    H, M, T = _layer_inputs(rng, K=2, L=5)
    Z, frac, anchors, _ = layer.forward(H, M, T, new_length=3)
    pad = 3
    Hp = Parameter("Hp", np.concatenate([H.data, rng.normal(size=(2, pad, 4))], axis=1))
    Mp = np.concatenate([M, np.zeros((2, pad))], axis=1)
    Tp = np.concatenate([T, np.broadcast_to(T[:, -1:], (2, pad))], axis=1)
    Z2, frac2, anchors2, _ = layer.forward(Hp, Mp, Tp, new_length=3)
    np.testing.assert_allclose(Z2.data, Z.data, atol=1e-12)
    np.testing.assert_allclose(anchors2.data, anchors.data, atol=1e-12)
    # observed fractions shrink (more masked columns per segment) but the
    # zero/nonzero pattern is stable
    assert np.array_equal(frac2.data > 0, frac.data > 0)


def test_layer_gradients_flow_through_scores_and_features():
    rng = np.random.default_rng(57)
    for L_new in (3, 9):  # down- and up-sampling
        layer = WarpLayer(np.random.default_rng(57), dim=4, prefix="w")
        H, M, T = _layer_inputs(rng, K=2, L=6)
        wz = rng.normal(size=(2, L_new, 4))
        wf = rng.normal(size=(2, L_new))
        wt = rng.normal(size=(2, L_new))

        def loss():
            Z, frac, anchors, _ = layer.forward(H, M, T, new_length=L_new)
            return tt.tsum(Z * wz) + tt.tsum(frac * wf) + tt.tsum(anchors * wt)

        params = [H] + layer.parameters()
        err = tt.grad_check(loss, params, rng=rng)
        assert err < 1e-5, f"L_new={L_new}: max rel err {err}"


def test_score_network_range_and_masking():
    rng = np.random.default_rng(3)
    net = ScoreNetwork(rng, dim=4, prefix="s")
    H = Tensor(rng.normal(size=(2, 5, 4)))
    M = np.array([[1, 1, 0, 1, 1], [0, 0, 0, 0, 0]], dtype=float)
    s = net(H, M).data
    assert np.all(s >= 0) and np.all(s < 1)
    assert np.all(s[M == 0] == 0)
    assert np.all(s[M == 1] > 0)
