import warnings

warnings.simplefilter('ignore')

import math

import numpy as np
import pytest

from etlnet.errors import ArgumentError, ContractViolationError, DimensionError
from etlnet.models.layers import Activation, BatchNormState, BiLSTM, ConvParams, DenseParams, LstmParams, Mode, \
    TCNLayer, batchnorm_bwd, batchnorm_fwd, bilstm_fwd, causal_conv1d_bwd, causal_conv1d_fwd, dense_fwd, \
    dropout_fwd, global_avg_pool_fwd, layer_bwd, lstm_bwd, lstm_fwd, relu_fwd
from etlnet.numcore import Precision, Rng, sigmoid
from etlnet.verification import LAYER_TOLERANCE, check_gradients
from test.utils import assert_tensor_shape, gen_random_tensor

_EXTENDED = Precision.EXTENDED


def _conv(kernel: int, in_channels: int, out_channels: int, dilation: int, seed: int = 0) -> ConvParams:
    rng = Rng(seed)
    return ConvParams(weight=rng.normal((out_channels, in_channels, kernel)), bias=rng.normal(out_channels),
                      dilation=dilation)


def test_conv_identity_kernel():
    x = gen_random_tensor((2, 5, 3))
    weight = np.zeros((3, 3, 1))
    weight[:, :, 0] = np.eye(3)
    y, _ = causal_conv1d_fwd(x, ConvParams(weight=weight, bias=np.zeros(3)))
    assert np.allclose(y, x)


@pytest.mark.parametrize("dilation, expected", [(1, [1., 3., 5., 7.]), (2, [1., 2., 4., 6.])])
def test_conv_examples(dilation, expected):
    x = np.array([1., 2., 3., 4.]).reshape(1, 4, 1)
    p = ConvParams(weight=np.ones((1, 1, 2)), bias=np.zeros(1), dilation=dilation)
    y, _ = causal_conv1d_fwd(x, p)
    assert np.array_equal(y.reshape(-1), np.array(expected))


def test_conv_preserves_length_and_checks_channels():
    p = _conv(3, 2, 4, 2)
    y, _ = causal_conv1d_fwd(gen_random_tensor((3, 9, 2)), p)
    assert_tensor_shape(y, (3, 9, 4))
    with pytest.raises(DimensionError):
        causal_conv1d_fwd(gen_random_tensor((3, 9, 3)), p)


@pytest.mark.parametrize("kernel", [1, 2, 3])
@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_conv_causality(kernel, dilation):
    p = _conv(kernel, 2, 3, dilation)
    x = gen_random_tensor((1, 12, 2))
    y, _ = causal_conv1d_fwd(x, p)
    t = 5
    mutated = x.copy()
    mutated[:, t + 1:, :] += 100.
    y_mutated, _ = causal_conv1d_fwd(mutated, p)
    assert np.array_equal(y[:, :t + 1], y_mutated[:, :t + 1])


def test_conv_backward_zero_and_bias():
    p = _conv(3, 2, 3, 2)
    x = gen_random_tensor((2, 6, 2))
    _, cache = causal_conv1d_fwd(x, p)
    dx, grads = causal_conv1d_bwd(np.zeros((2, 6, 3)), cache)
    assert not np.any(dx) and not np.any(grads["weight"]) and not np.any(grads["bias"])
    dy = gen_random_tensor((2, 6, 3), seed=3)
    _, grads = causal_conv1d_bwd(dy, cache)
    assert np.allclose(grads["bias"], dy.sum(axis=(0, 1)))


def test_conv_gradient_example_shape():
    p = _conv(3, 2, 2, 2)
    x = gen_random_tensor((1, 8, 2))
    report = check_gradients("conv", lambda v: causal_conv1d_fwd(v, p), causal_conv1d_bwd, x, p.tensors())
    assert report.passed(LAYER_TOLERANCE), report.errors


def test_conv_stale_cache():
    p = _conv(2, 1, 1, 1)
    _, cache = causal_conv1d_fwd(gen_random_tensor((1, 4, 1)), p)
    p.mark_updated()
    with pytest.raises(ContractViolationError):
        causal_conv1d_bwd(np.ones((1, 4, 1)), cache)
    other = _conv(2, 1, 1, 1)
    _, cache = causal_conv1d_fwd(gen_random_tensor((1, 4, 1)), p)
    cache_other = cache
    cache_other.owner = id(other)
    with pytest.raises(ContractViolationError):
        causal_conv1d_bwd(np.ones((1, 4, 1)), cache_other)


def test_eval_cache_rejected():
    p = _conv(2, 1, 1, 1)
    _, cache = causal_conv1d_fwd(gen_random_tensor((1, 4, 1)), p, Mode.EVAL)
    with pytest.raises(ContractViolationError):
        layer_bwd(np.ones((1, 4, 1)), cache)


def test_batchnorm_train_statistics():
    s = BatchNormState.create(3, precision=_EXTENDED)
    x = gen_random_tensor((4, 6, 3)) * 5. + 2.
    y, _ = batchnorm_fwd(x, s, Mode.TRAIN)
    flat = y.reshape(-1, 3)
    assert np.all(np.abs(flat.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(flat.var(axis=0) - 1.) < 1e-5)


def test_batchnorm_running_update():
    s = BatchNormState.create(2, momentum=0.1, precision=_EXTENDED)
    x = gen_random_tensor((8, 2))
    batchnorm_fwd(x, s, Mode.TRAIN)
    assert np.allclose(s.running_mean, 0.1 * x.mean(axis=0))
    assert np.allclose(s.running_var, 0.9 + 0.1 * x.var(axis=0))


def test_batchnorm_eval_uses_running_statistics():
    s = BatchNormState.create(2, precision=_EXTENDED)
    s.running_mean[:] = [1., 2.]
    s.running_var[:] = [4., 9.]
    y, _ = batchnorm_fwd(np.array([[3., 5.]]), s, Mode.EVAL)
    assert np.allclose(y, [[2. / np.sqrt(4. + 1e-5), 3. / np.sqrt(9. + 1e-5)]])


def test_batchnorm_rejects_single_sample():
    s = BatchNormState.create(2)
    with pytest.raises(ArgumentError):
        batchnorm_fwd(np.ones((1, 2), np.float32), s, Mode.TRAIN)
    with pytest.raises(ArgumentError):
        BatchNormState.create(2, momentum=1.)


def test_batchnorm_scale_and_shift():
    s = BatchNormState.create(2, precision=_EXTENDED)
    s.gamma[:] = 2.
    s.beta[:] = 3.
    x = gen_random_tensor((50, 2), seed=5) * 4. - 1.
    y, _ = batchnorm_fwd(x, s, Mode.TRAIN)
    assert np.allclose(y.mean(axis=0), 3., atol=1e-6)
    assert np.allclose(y.std(axis=0), 2., atol=1e-4)


def test_batchnorm_gradients():
    s = BatchNormState.create(3, precision=_EXTENDED)
    s.gamma[:] = Rng(1).normal(3)
    s.beta[:] = Rng(2).normal(3)
    x = gen_random_tensor((3, 4, 3))
    report = check_gradients("batchnorm", lambda v: batchnorm_fwd(v, s, Mode.TRAIN), batchnorm_bwd, x,
                             s.tensors())
    assert report.passed(LAYER_TOLERANCE), report.errors


def test_dropout_eval_identity():
    x = gen_random_tensor((4, 5))
    y, _ = dropout_fwd(x, 0.5, Rng(0), Mode.EVAL)
    assert y is x


def test_dropout_train_scaling_and_mask_reuse():
    x = np.ones((200, 50))
    y, cache = dropout_fwd(x, 0.3, Rng(0), Mode.TRAIN)
    assert set(np.unique(y).round(6)) <= {0., round(1. / 0.7, 6)}
    assert 0.25 < np.mean(y == 0.) < 0.35
    dx, _ = layer_bwd(np.ones_like(x), cache)
    assert np.array_equal(dx, y)


def test_dropout_half_rate_statistics():
    x = np.ones(100_000)
    y, _ = dropout_fwd(x, 0.5, Rng(0), Mode.TRAIN)
    assert 0.98 <= y.mean() <= 1.02
    assert 0.49 <= np.mean(y == 0.) <= 0.51
    assert set(np.unique(y)) == {0., 2.}
    assert np.array_equal(dropout_fwd(x, 0., Rng(0), Mode.TRAIN)[0], x)


@pytest.mark.parametrize("rate", [1., 1.5, -0.1])
def test_dropout_invalid_rate(rate):
    with pytest.raises(ArgumentError):
        dropout_fwd(np.ones(3), rate, Rng(0), Mode.TRAIN)


def test_lstm_shapes_and_reverse_state():
    p = LstmParams.create(3, 4, Rng(0), precision=_EXTENDED)
    x = gen_random_tensor((2, 6, 3))
    h_seq, h_last, _ = lstm_fwd(x, p)
    assert_tensor_shape(h_seq, (2, 6, 4))
    assert np.array_equal(h_last, h_seq[:, -1])
    h_seq_r, h_last_r, _ = lstm_fwd(x, p, reverse=True)
    assert np.array_equal(h_last_r, h_seq_r[:, 0])
    with pytest.raises(DimensionError):
        lstm_fwd(gen_random_tensor((2, 6, 2)), p)


def _lstm_scalar_loop(x: np.ndarray, p: LstmParams) -> np.ndarray:
    batch, time, channels = x.shape
    hidden = p.hidden
    out = np.zeros((batch, time, hidden))
    for n in range(batch):
        h, c = [0.] * hidden, [0.] * hidden
        for t in range(time):
            next_h, next_c = [], []
            for j in range(hidden):
                z = {}
                for gate in ("i", "f", "o", "g"):
                    w, u, b = getattr(p, f"w_{gate}"), getattr(p, f"u_{gate}"), getattr(p, f"b_{gate}")
                    z[gate] = float(b[j]) + sum(float(w[j, k]) * float(x[n, t, k]) for k in range(channels)) \
                        + sum(float(u[j, k]) * h[k] for k in range(hidden))
                i, f, o = (1. / (1. + math.exp(-z[gate])) for gate in ("i", "f", "o"))
                cell = f * c[j] + i * math.tanh(z["g"])
                next_c.append(cell)
                next_h.append(o * math.tanh(cell))
            h, c = next_h, next_c
            out[n, t] = h
    return out


def test_lstm_zero_weights():
    p = LstmParams.create(3, 4, None, forget_bias=0., precision=_EXTENDED)
    h_seq, h_last, _ = lstm_fwd(gen_random_tensor((2, 5, 3)), p)
    assert not np.any(h_seq) and not np.any(h_last)


def test_lstm_unit_input_weights_zero_input():
    p = LstmParams.create(1, 1, None, forget_bias=0., precision=_EXTENDED)
    for gate in ("i", "f", "o", "g"):
        getattr(p, f"w_{gate}")[:] = 1.
    _, h_last, cache = lstm_fwd(np.zeros((1, 1, 1)), p)
    assert np.allclose(cache["gates"].reshape(-1), [0.5, 0.5, 0.5, 0.])
    assert h_last[0, 0] == 0.


def test_lstm_matches_scalar_loop():
    p = LstmParams.create(3, 4, Rng(5), forget_bias=0.5, precision=_EXTENDED)
    for gate in ("i", "f", "o", "g"):
        getattr(p, f"b_{gate}")[:] = Rng(6).normal(4)
    x = gen_random_tensor((1, 5, 3), seed=7)
    h_seq, _, _ = lstm_fwd(x, p)
    assert np.max(np.abs(h_seq - _lstm_scalar_loop(x, p))) < 1e-10
    h_seq_r, _, _ = lstm_fwd(x, p, reverse=True)
    expected_r = _lstm_scalar_loop(x[:, ::-1], p)[:, ::-1]
    assert np.max(np.abs(h_seq_r - expected_r)) < 1e-10


def test_lstm_backward_single_step():
    p = LstmParams.create(3, 2, Rng(8), precision=_EXTENDED)
    x = gen_random_tensor((4, 1, 3), seed=9)
    dh = gen_random_tensor((4, 2), seed=10)
    _, _, cache = lstm_fwd(x, p)
    dx, grads = lstm_bwd(None, dh, cache)
    # with h0 = c0 = 0: c = i g, h = o tanh(c)
    x0 = x[:, 0]
    z = {gate: x0 @ getattr(p, f"w_{gate}").T + getattr(p, f"b_{gate}") for gate in ("i", "f", "o", "g")}
    i, o = sigmoid(z["i"]), sigmoid(z["o"])
    g = np.tanh(z["g"])
    tanh_c = np.tanh(i * g)
    dc = dh * o * (1 - tanh_c ** 2)
    dz = {"i": dc * g * i * (1 - i), "f": np.zeros_like(dc), "o": dh * tanh_c * o * (1 - o),
          "g": dc * i * (1 - g ** 2)}
    for gate in ("i", "f", "o", "g"):
        assert np.allclose(grads[f"w_{gate}"], dz[gate].T @ x0, atol=1e-12), gate
        assert np.allclose(grads[f"b_{gate}"], dz[gate].sum(axis=0), atol=1e-12), gate
        assert not np.any(grads[f"u_{gate}"]), gate
    expected_dx = sum(dz[gate] @ getattr(p, f"w_{gate}") for gate in ("i", "f", "o", "g"))
    assert np.allclose(dx[:, 0], expected_dx, atol=1e-12)


def test_bilstm_reversal_symmetry():
    p, q = LstmParams.create(3, 4, Rng(0), precision=_EXTENDED), LstmParams.create(3, 4, Rng(1), precision=_EXTENDED)
    x = gen_random_tensor((2, 7, 3))
    out, _ = bilstm_fwd(x, p, q)
    out_reversed, _ = bilstm_fwd(x[:, ::-1].copy(), q, p)
    assert_tensor_shape(out, (2, 8))
    assert np.allclose(out[:, :4], out_reversed[:, 4:])
    assert np.allclose(out[:, 4:], out_reversed[:, :4])


def test_bilstm_is_two_directional_passes():
    p, q = LstmParams.create(3, 4, Rng(2), precision=_EXTENDED), LstmParams.create(3, 4, Rng(3), precision=_EXTENDED)
    x = gen_random_tensor((2, 6, 3), seed=4)
    h_seq_f, h_last_f, _ = lstm_fwd(x, p)
    h_seq_b, h_last_b, _ = lstm_fwd(x, q, reverse=True)
    out, _ = bilstm_fwd(x, p, q)
    assert np.array_equal(out, np.concatenate([h_last_f, h_last_b], axis=1))
    out_seq, _ = bilstm_fwd(x, p, q, return_sequences=True)
    assert np.array_equal(out_seq, np.concatenate([h_seq_f, h_seq_b], axis=2))


def test_bilstm_constant_input_without_recurrence():
    p = LstmParams.create(3, 4, Rng(5), precision=_EXTENDED)
    for gate in ("i", "f", "o", "g"):
        getattr(p, f"u_{gate}")[:] = 0.
    x = np.repeat(gen_random_tensor((2, 1, 3), seed=6), 7, axis=1)
    out, _ = bilstm_fwd(x, p, p)
    assert np.allclose(out[:, :4], out[:, 4:], atol=1e-14)


def test_bilstm_hidden_mismatch():
    with pytest.raises(DimensionError):
        bilstm_fwd(gen_random_tensor((1, 3, 2)), LstmParams.create(2, 3, Rng(0)), LstmParams.create(2, 4, Rng(0)))


def test_bilstm_layer_gradients():
    layer = BiLSTM("bilstm", 2, 3, return_sequences=True, rng=Rng(4), precision=_EXTENDED)
    x = gen_random_tensor((2, 5, 2))
    report = check_gradients("bilstm", lambda v: layer.forward(v, Mode.TRAIN), layer.backward, x, layer.params)
    assert report.passed(LAYER_TOLERANCE), report.errors


def test_dense_activations():
    p = DenseParams(weight=np.array([[1., -1.]]), bias=np.array([0.5]))
    x = np.array([[1., 3.], [3., 1.]])
    assert np.allclose(dense_fwd(x, p)[0], [[-1.5], [2.5]])
    assert np.allclose(dense_fwd(x, p, Activation.RELU)[0], [[0.], [2.5]])
    p_sig = dense_fwd(x, p, "sigmoid")[0]
    assert np.all((p_sig > 0.) & (p_sig < 1.))
    with pytest.raises(DimensionError):
        dense_fwd(np.ones((1, 3)), p)


def test_dense_identity():
    x = gen_random_tensor((3, 4))
    y, _ = dense_fwd(x, DenseParams(weight=np.eye(4), bias=np.zeros(4)))
    assert np.array_equal(y, x)
    half, _ = dense_fwd(np.zeros((1, 4)), DenseParams(weight=np.eye(4), bias=np.zeros(4)), Activation.SIGMOID)
    assert np.all(half == 0.5)


def test_relu_and_pool():
    y, cache = relu_fwd(np.array([-1., 0., 2.]))
    assert np.array_equal(y, [0., 0., 2.])
    pooled, _ = global_avg_pool_fwd(np.arange(12.).reshape(1, 4, 3))
    assert np.allclose(pooled, [[4.5, 5.5, 6.5]])


def test_tcn_residual():
    with_residual = TCNLayer("tcn", 4, 4, 3, (1, 2), Rng(0), _EXTENDED)
    without = TCNLayer("tcn", 3, 4, 3, (1,), Rng(0), _EXTENDED)
    assert with_residual.residual and not without.residual
    assert with_residual.param_count() == (2 * (4 * 4 * 3 + 4),) * 2
    x = gen_random_tensor((2, 6, 4))
    report = check_gradients("tcn", lambda v: with_residual.forward(v, Mode.TRAIN), with_residual.backward, x,
                             with_residual.params)
    assert report.passed(LAYER_TOLERANCE), report.errors


def test_conv_matches_torch():
    torch = pytest.importorskip("torch")
    p = _conv(3, 2, 4, 2)
    x = gen_random_tensor((2, 10, 2))
    y, _ = causal_conv1d_fwd(x, p)
    conv = torch.nn.Conv1d(2, 4, 3, dilation=2, bias=True).double()
    with torch.no_grad():
        conv.weight.copy_(torch.from_numpy(p.weight[:, :, ::-1].copy()))
        conv.bias.copy_(torch.from_numpy(p.bias))
        padded = torch.nn.functional.pad(torch.from_numpy(x).permute(0, 2, 1), (4, 0))
        expected = conv(padded).permute(0, 2, 1).numpy()
    assert np.allclose(y, expected, atol=1e-10)


def test_lstm_matches_torch():
    torch = pytest.importorskip("torch")
    p = LstmParams.create(3, 5, Rng(2), forget_bias=0.5, precision=_EXTENDED)
    x = gen_random_tensor((2, 6, 3))
    h_seq, h_last, _ = lstm_fwd(x, p)
    lstm = torch.nn.LSTM(3, 5, batch_first=True).double()
    # torch orders gates input, forget, candidate, output
    order = ("i", "f", "g", "o")
    with torch.no_grad():
        lstm.weight_ih_l0.copy_(torch.from_numpy(np.concatenate([getattr(p, f"w_{g}") for g in order])))
        lstm.weight_hh_l0.copy_(torch.from_numpy(np.concatenate([getattr(p, f"u_{g}") for g in order])))
        lstm.bias_ih_l0.copy_(torch.from_numpy(np.concatenate([getattr(p, f"b_{g}") for g in order])))
        lstm.bias_hh_l0.zero_()
        expected_seq, (expected_last, _) = lstm(torch.from_numpy(x))
    assert np.allclose(h_seq, expected_seq.numpy(), atol=1e-10)
    assert np.allclose(h_last, expected_last[0].numpy(), atol=1e-10)


def test_batchnorm_matches_torch():
    torch = pytest.importorskip("torch")
    s = BatchNormState.create(3, precision=_EXTENDED)
    x = gen_random_tensor((4, 5, 3))
    y, _ = batchnorm_fwd(x, s, Mode.TRAIN)
    bn = torch.nn.BatchNorm1d(3, eps=1e-5).double().train()
    with torch.no_grad():
        expected = bn(torch.from_numpy(x).permute(0, 2, 1)).permute(0, 2, 1).numpy()
    assert np.allclose(y, expected, atol=1e-8)
