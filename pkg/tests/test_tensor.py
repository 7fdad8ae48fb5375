import json

import numpy as np
import pytest

from gnnppi.tensor import (
    AdamState,
    Linear,
    NonFiniteGradient,
    ReduceOnPlateau,
    ShapeError,
    Tensor,
    adam_step,
    bce_loss,
    concat,
    conv1d,
    load_arrays,
    masked_mean,
    max_pool1d,
    matmul,
    save_arrays,
    sigmoid,
    tsum,
)

from gradcases import LAYER_CASES


class TestForwardExamples:
    def test_identity_fc(self):
        lin = Linear(2, 2, np.random.default_rng(0))
        lin.weight.data[...] = np.eye(2)
        lin.bias.data[...] = 0.0
        np.testing.assert_array_equal(lin(Tensor([[1.0, 2.0]])).data, [[1.0, 2.0]])

    def test_pool(self):
        x = Tensor(np.array([1.0, 3.0, 2.0, 5.0]).reshape(1, 4, 1))
        np.testing.assert_array_equal(max_pool1d(x, 2).data.ravel(), [3.0, 5.0])

    def test_pool_drops_tail(self):
        x = Tensor(np.arange(5.0).reshape(1, 5, 1))
        np.testing.assert_array_equal(max_pool1d(x, 2).data.ravel(), [1.0, 3.0])

    def test_conv_difference_kernel(self):
        x = Tensor(np.array([1.0, 2.0, 4.0]).reshape(1, 3, 1))
        w = Tensor(np.array([1.0, -1.0]).reshape(2, 1, 1))
        np.testing.assert_array_equal(conv1d(x, w).data.ravel(), [1.0, 2.0])

    def test_conv_against_loop(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 7, 3))
        w = rng.normal(size=(3, 3, 4))
        got = conv1d(Tensor(x), Tensor(w)).data
        ref = np.zeros((2, 5, 4))
        for b in range(2):
            for t in range(5):
                for k in range(3):
                    ref[b, t] += x[b, t + 2 - k] @ w[k]
        np.testing.assert_allclose(got, ref)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            conv1d(Tensor(np.zeros((1, 2, 1))), Tensor(np.zeros((3, 1, 1))))
        with pytest.raises(ShapeError):
            max_pool1d(Tensor(np.zeros((1, 2, 1))), 3)
        with pytest.raises(ShapeError):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_masked_mean(self):
        x = Tensor(np.arange(6.0).reshape(1, 3, 2))
        out = masked_mean(x, np.array([[1, 1, 0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0]])


class TestBackward:
    def test_square(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        assert x.grad == 6.0

    def test_sigmoid_slope(self):
        x = Tensor(0.0, requires_grad=True)
        sigmoid(x).backward()
        assert x.grad == pytest.approx(0.25)

    def test_repeated_backward_accumulates(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        (x * x).backward()
        assert x.grad == 12.0

    def test_nonscalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_shared_subexpression(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x
        (y + y * x).backward()  # 2x + 3x^2
        assert x.grad == pytest.approx(4.0 + 12.0)

    def test_concat_routes_gradient(self):
        a = Tensor(np.ones((2, 1)), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        tsum(concat([a, b], axis=1) * np.array([1.0, 2.0, 3.0])).backward()
        np.testing.assert_array_equal(a.grad, [[1.0], [1.0]])
        np.testing.assert_array_equal(b.grad, [[2.0, 3.0], [2.0, 3.0]])

    def test_index_with_repeats(self):
        x = Tensor(np.arange(3.0), requires_grad=True)
        tsum(x[np.array([0, 0, 2])]).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("case", sorted(LAYER_CASES))
def test_grad_check(case, seed):
    fn, tol = LAYER_CASES[case]
    assert fn(seed) < tol


class TestBce:
    def test_examples(self):
        assert bce_loss(Tensor([0.5]), [1.0]).item() == pytest.approx(np.log(2))
        assert bce_loss(Tensor([0.9, 0.1]), [1.0, 0.0]).item() == pytest.approx(-2 * np.log(0.9))

    def test_clamped_extremes_finite(self):
        loss = bce_loss(Tensor([0.0, 1.0]), [1.0, 0.0])
        assert np.isfinite(loss.item()) and loss.item() > 0

    def test_against_scalar_loop(self):
        rng = np.random.default_rng(4)
        p = rng.uniform(0.01, 0.99, size=(5, 7))
        y = (rng.random((5, 7)) < 0.5).astype(float)
        ref = 0.0
        for i in range(5):
            for j in range(7):
                ref -= y[i, j] * np.log(p[i, j]) + (1 - y[i, j]) * np.log(1 - p[i, j])
        assert bce_loss(Tensor(p), y).item() == pytest.approx(ref, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(Tensor(np.zeros((2, 7))), np.zeros((2, 6)))


class TestAdam:
    def test_first_step_magnitude(self):
        p = {"w": np.array([1.0, -2.0])}
        adam_step(p, {"w": np.array([0.3, -5.0])}, AdamState(weight_decay=0.0))
        np.testing.assert_allclose(p["w"], [1.0 - 0.001, -2.0 + 0.001], atol=1e-8)

    def test_zero_grad_no_decay(self):
        p = {"w": np.array([1.0, 2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState(weight_decay=0.0))
        np.testing.assert_array_equal(p["w"], [1.0, 2.0])

    def test_decay_modes_differ(self):
        coupled = {"w": np.array([1.0])}
        decoupled = {"w": np.array([1.0])}
        adam_step(coupled, {"w": np.zeros(1)}, AdamState(weight_decay=0.1))
        adam_step(decoupled, {"w": np.zeros(1)}, AdamState(weight_decay=0.1, decoupled=True))
        assert coupled["w"][0] == pytest.approx(1.0 - 0.001)
        assert decoupled["w"][0] == pytest.approx(1.0 - 0.001 * 0.1)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(0)
            p = {"w": rng.normal(size=3)}
            st = AdamState()
            for _ in range(10):
                adam_step(p, {"w": rng.normal(size=3)}, st)
            return p["w"]

        np.testing.assert_array_equal(run(), run())

    def test_non_finite(self):
        with pytest.raises(NonFiniteGradient):
            adam_step({"w": np.zeros(1)}, {"w": np.array([np.nan])}, AdamState())


class TestPlateau:
    def test_halves_once_after_patience(self):
        st = AdamState(lr=0.001)
        sched = ReduceOnPlateau(st, rate=0.5, patience=20)
        sched.step(1.0)
        for _ in range(21):
            sched.step(1.0)
        assert st.lr == pytest.approx(0.0005)
        sched.step(0.5)
        assert st.lr == pytest.approx(0.0005)

    def test_patience_not_exceeded(self):
        st = AdamState(lr=0.001)
        sched = ReduceOnPlateau(st)
        for _ in range(21):
            sched.step(1.0)  # first call sets the best, then 20 bad epochs
        assert st.lr == 0.001

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            ReduceOnPlateau(AdamState(), rate=1.5)


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"a.w": np.arange(6.0).reshape(2, 3) / 3, "b": np.array([1.5])}
    jpath, bpath = save_arrays(tmp_path / "ck", arrays, {"epoch": 4})
    assert bpath.stat().st_size == 7 * 4
    manifest = json.loads(jpath.read_text())
    assert manifest["dtype"] == "float32-le"
    back, meta = load_arrays(tmp_path / "ck")
    assert meta == {"epoch": 4}
    for k in arrays:
        np.testing.assert_allclose(back[k], arrays[k], rtol=1e-7)
    save_arrays(tmp_path / "ck2", back, {"epoch": 4})
    assert (tmp_path / "ck2.bin").read_bytes() == bpath.read_bytes()
