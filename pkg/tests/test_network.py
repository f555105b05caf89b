"""Tests for the network forward pass, gradients and checkpoints."""

import numpy as np
import pytest
from scipy.signal import convolve2d, correlate2d

from automap.errors import ArtifactMismatchError, DimensionError, NumericError
from automap.network import (
    N_FILTERS,
    PARAM_NAMES,
    NetParams,
    backward,
    combine_complex_outputs,
    forward,
    init_params,
    load_checkpoint,
    loss,
    param_shapes,
    save_checkpoint,
)


def _reference_forward(p, x):
    """Straight-line forward pass built on scipy's 2D correlation."""
    n = p.n
    fc2 = np.tanh(p.W1 @ x + p.b1)
    fc3 = np.tanh(p.W2 @ fc2 + p.b2).reshape(n, n)
    c1 = np.stack(
        [
            np.maximum(correlate2d(fc3, p.K1[o, 0], mode="same") + p.k1b[o], 0)
            for o in range(N_FILTERS)
        ]
    )
    c2 = np.empty_like(c1)
    for o in range(N_FILTERS):
        acc = sum(correlate2d(c1[i], p.K2[o, i], mode="same") for i in range(N_FILTERS))
        c2[o] = np.maximum(acc + p.k2b[o], 0)
    out = sum(convolve2d(c2[c], p.KT[c], mode="same") for c in range(N_FILTERS)) + p.ktb[0]
    return out.reshape(-1)


def _scaled_params(d_in, n, seed, scale=4.0, filters=N_FILTERS):
    """Glorot weights boosted so every layer carries signal, with small random biases."""
    p = init_params(d_in, n, seed, filters=filters)
    rng = np.random.default_rng(seed)
    for array in p.arrays():
        if array.ndim > 1:
            array *= scale
        else:
            array += rng.uniform(-0.1, 0.1, size=array.shape)
    return p


class TestInit:
    """Test parameter initialization."""

    def test_deterministic(self):
        """Test the same seed gives bit-identical params."""
        assert init_params(32, 8, seed=5).equals(init_params(32, 8, seed=5))
        assert not init_params(32, 8, seed=5).equals(init_params(32, 8, seed=6))

    def test_biases_zero(self, tiny_params):
        """Test every bias starts at zero."""
        for name in ("b1", "b2", "k1b", "k2b", "ktb"):
            assert not getattr(tiny_params, name).any()

    def test_glorot_bound(self, tiny_params):
        """Test W1 entries respect the Glorot bound."""
        assert np.abs(tiny_params.W1).max() <= np.sqrt(6 / (32 + 64))

    def test_shapes(self, tiny_params):
        """Test every array has its documented shape."""
        shapes = param_shapes(32, 8)
        for name in PARAM_NAMES:
            assert getattr(tiny_params, name).shape == shapes[name]

    def test_wrong_shape_rejected(self):
        """Test NetParams validates its arrays."""
        p = NetParams.zeros(32, 8)
        arrays = p.arrays()
        arrays[0] = np.zeros((3, 3))
        with pytest.raises(DimensionError, match="W1"):
            NetParams(32, 8, *arrays)


class TestForward:
    """Test the forward pass."""

    def test_zero_params(self, rng):
        """Test all-zero params give an all-zero output."""
        out, _ = forward(NetParams.zeros(32, 8), rng.standard_normal(32))
        assert out.shape == (64,)
        assert not out.any()

    def test_trace_shapes(self, tiny_params, rng):
        """Test single-example trace shapes."""
        _, trace = forward(tiny_params, rng.standard_normal(32), capture=True)
        assert trace is not None
        assert trace.fc2_act.shape == (64,)
        assert trace.c1_act.size == 64 * 64
        assert trace.c2_act.shape == (64, 8, 8)

    def test_no_trace_by_default(self, tiny_params, rng):
        """Test capture=False returns no trace."""
        assert forward(tiny_params, rng.standard_normal(32))[1] is None

    def test_matches_reference(self, rng):
        """Test against an independent scipy-based implementation."""
        p = _scaled_params(128, 8, seed=2)
        x = rng.standard_normal(128)
        out, _ = forward(p, x)
        np.testing.assert_allclose(out, _reference_forward(p, x), rtol=1e-12, atol=1e-12)

    def test_batch_matches_single(self, tiny_params, rng):
        """Test a batch equals stacked single-example passes."""
        x = rng.standard_normal((3, 32))
        batch, _ = forward(tiny_params, x)
        for i in range(3):
            np.testing.assert_allclose(batch[i], forward(tiny_params, x[i])[0], atol=1e-14)

    def test_wrong_length(self, tiny_params):
        """Test an input of the wrong length is rejected."""
        with pytest.raises(DimensionError, match="d_in"):
            forward(tiny_params, np.zeros(31))

    def test_non_finite_names_layer(self, tiny_params):
        """Test NaN input is reported at FC2."""
        x = np.zeros(32)
        x[0] = np.nan
        with pytest.raises(NumericError) as excinfo:
            forward(tiny_params, x)
        assert excinfo.value.layer == "FC2"


class TestLoss:
    """Test the training objective."""

    def test_perfect(self):
        """Test zero residual and zero activation give zero."""
        assert loss(np.ones(4), np.ones(4), np.zeros(8)) == 0.0

    def test_unit_residual(self):
        """Test a residual of one everywhere with lambda 0 gives one."""
        assert loss(np.ones(4), np.zeros(4), np.zeros(8), lam=0.0) == pytest.approx(1.0)

    def test_l1_term(self):
        """Test the L1 penalty on constant activations."""
        assert loss(np.ones(4), np.ones(4), np.full(8, 2.0), lam=1e-4) == pytest.approx(2e-4)

    def test_shape_mismatch(self):
        """Test output and target shapes must agree."""
        with pytest.raises(DimensionError):
            loss(np.ones(4), np.ones(5), np.zeros(1))


class TestBackward:
    """Test analytic gradients."""

    def test_zero_params(self, rng):
        """Test the closed-form gradient at the zero point."""
        p = NetParams.zeros(32, 8)
        p.ktb[0] = 0.3
        target = rng.standard_normal(64)
        value, grads = backward(p, rng.standard_normal(32), target, lam=1e-4)
        assert value == pytest.approx(np.mean((0.3 - target) ** 2))
        assert grads.ktb[0] == pytest.approx(2 * np.mean(0.3 - target))
        for name in ("W1", "W2", "K1", "K2", "KT"):
            assert not getattr(grads, name).any()

    @pytest.mark.parametrize("seed", [11, 12, 13, 14, 15])
    def test_finite_differences(self, seed):
        """Test every coordinate of every block against central differences."""
        d_in, n = 6, 4
        p = _scaled_params(d_in, n, seed=seed, filters=2)
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, d_in))
        target = 0.5 * rng.standard_normal((2, n * n))
        lam = 1e-2
        _, grads = backward(p, x, target, lam)
        h = 1e-5

        def objective():
            out, trace = forward(p, x, capture=True)
            return loss(out, target, trace.c2_act, lam)

        for name in PARAM_NAMES:
            flat = getattr(p, name).reshape(-1)
            analytic = getattr(grads, name).reshape(-1)
            for index in range(flat.size):
                saved = flat[index]
                flat[index] = saved + h
                up = objective()
                flat[index] = saved - h
                down = objective()
                flat[index] = saved
                numeric = (up - down) / (2 * h)
                scale = max(abs(numeric), abs(analytic[index]))
                assert abs(numeric - analytic[index]) <= 1e-4 * scale + 1e-8, (name, index)

    def test_small_filter_count(self):
        """Test a reduced filter count flows through shapes, zeros and equality."""
        p = init_params(6, 4, seed=1, filters=2)
        assert p.filters == 2
        assert p.K2.shape == param_shapes(6, 4, 2)["K2"] == (2, 2, 5, 5)
        assert NetParams.zeros(6, 4, filters=2).KT.shape == (2, 7, 7)
        assert not p.equals(init_params(6, 4, seed=1))
        with pytest.raises(DimensionError):
            init_params(6, 4, seed=1, filters=0)

    def test_batch_gradient_is_mean(self, tiny_params, rng):
        """Test batched gradients average the per-example gradients."""
        x = rng.standard_normal((2, 32))
        t = rng.standard_normal((2, 64))
        value, grads = backward(tiny_params, x, t)
        singles = [backward(tiny_params, x[i], t[i]) for i in range(2)]
        assert value == pytest.approx(np.mean([s[0] for s in singles]))
        for name in PARAM_NAMES:
            expected = (getattr(singles[0][1], name) + getattr(singles[1][1], name)) / 2
            np.testing.assert_allclose(getattr(grads, name), expected, atol=1e-14)

    def test_lambda_only_moves_conv_chain(self, rng):
        """Test the L1 weight leaves KT and ktb gradients unchanged."""
        p = _scaled_params(32, 8, seed=4)
        x = rng.standard_normal(32)
        t = rng.standard_normal(64)
        _, plain = backward(p, x, t, lam=0.0)
        _, sparse = backward(p, x, t, lam=1e-4)
        np.testing.assert_array_equal(plain.KT, sparse.KT)
        np.testing.assert_array_equal(plain.ktb, sparse.ktb)
        assert not np.array_equal(plain.K2, sparse.K2)

    def test_target_length(self, tiny_params):
        """Test a target of the wrong length is rejected."""
        with pytest.raises(DimensionError):
            backward(tiny_params, np.zeros(32), np.zeros(10))


class TestCheckpoint:
    """Test checkpoint files."""

    def test_round_trip(self, tmp_path, tiny_params):
        """Test params and metadata survive a save/load."""
        path = save_checkpoint(tmp_path / "net.amap", tiny_params, {"seed": 3})
        loaded, meta = load_checkpoint(path)
        assert loaded.equals(tiny_params)
        assert meta["seed"] == 3
        assert meta["d_in"] == 32 and meta["n"] == 8

    def test_filter_count_round_trip(self, tmp_path):
        """Test a reduced filter count is recorded and restored."""
        small = init_params(6, 4, seed=2, filters=3)
        loaded, meta = load_checkpoint(save_checkpoint(tmp_path / "small.amap", small))
        assert meta["filters"] == 3
        assert loaded.equals(small)

    def test_bad_magic(self, tmp_path):
        """Test a file with another magic is an artifact mismatch."""
        path = tmp_path / "bad.amap"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(ArtifactMismatchError):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path, tiny_params):
        """Test a short payload is an artifact mismatch."""
        path = save_checkpoint(tmp_path / "net.amap", tiny_params)
        path.write_bytes(path.read_bytes()[:-800])
        with pytest.raises(ArtifactMismatchError):
            load_checkpoint(path)


class TestCombine:
    """Test merging real and imaginary reconstructions."""

    def test_magnitude_and_phase(self):
        """Test a 3-4-5 triangle."""
        magnitude, phase = combine_complex_outputs(np.array([3.0]), np.array([4.0]))
        assert magnitude[0] == pytest.approx(5.0)
        assert phase[0] == pytest.approx(np.arctan2(4, 3))
