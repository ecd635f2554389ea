import numpy as np
import pytest

from lstmens import classify, infer_stream, init_network, predict_label, step
from lstmens.network import LstmNetwork, LstmLayerParams, OutputLayerParams
from lstmens.rng import Rng

from conftest import tiny_net


def zero_net(d=2, h=3, k=2, layers=1):
    def layer(d_in):
        ws = {n: np.zeros((d_in if n.startswith("wx") else h, h))
              for n in ("wxf", "whf", "wxi", "whi", "wxc", "whc", "wxo", "who")}
        bs = {n: np.zeros(h) for n in ("bf", "bi", "bc", "bo")}
        return LstmLayerParams(**ws, **bs)

    return LstmNetwork(
        [layer(d if i == 0 else h) for i in range(layers)],
        OutputLayerParams(np.zeros((h, k)), np.zeros(k)),
    )


# ---------------------------------------------------------------------------
# step


def test_step_zero_parameters_fixed_point():
    net = zero_net()
    logits, state, cache = step(net, np.array([0.7, -1.3]), net.zero_state())
    layer = cache[0]
    assert np.array_equal(layer["f"][0], np.full(3, 0.5))
    assert np.array_equal(layer["i"][0], np.full(3, 0.5))
    assert np.array_equal(layer["o"][0], np.full(3, 0.5))
    assert np.array_equal(layer["g"][0], np.zeros(3))
    assert np.array_equal(state.c[0], np.zeros(3))
    assert np.array_equal(state.h[0], np.zeros(3))
    assert np.array_equal(logits, np.zeros(2))


def test_step_gate_ranges_random_sweep():
    # 1000 random (params, input, state) draws keep every gate in range
    rng = Rng(42)
    for trial in range(1000):
        net = init_network(3, 5, 2, num_layers=1, rng=rng)
        x = rng.normal_block(3)
        state = net.zero_state()
        state.h[0] = np.tanh(rng.normal_block(5))
        state.c[0] = rng.normal_block(5)
        logits, new_state, cache = step(net, x, state)
        gates = cache[0]
        for name in ("f", "i", "o"):
            assert np.all(gates[name] > 0.0) and np.all(gates[name] < 1.0)
        assert np.all(np.abs(gates["g"]) < 1.0)
        assert np.all(np.abs(new_state.h[0]) < 1.0)
        assert np.all(np.isfinite(logits))


def test_step_memory_cell_preserved_under_saturated_gates():
    # forget gate pinned open, input gate pinned shut: c must persist
    net = zero_net(d=1, h=1, k=2, layers=1)
    net.layers[0].bf[:] = 50.0
    net.layers[0].bi[:] = -50.0
    state = net.zero_state()
    state.c[0] = np.array([0.37])
    for _ in range(10):
        _, state, _ = step(net, np.array([1.0]), state)
    assert abs(state.c[0][0] - 0.37) < 1e-12


def test_step_rejects_bad_input():
    net = zero_net()
    with pytest.raises(ValueError, match="input shape"):
        step(net, np.zeros(5), net.zero_state())
    with pytest.raises(ValueError, match="non-finite"):
        step(net, np.array([np.nan, 0.0]), net.zero_state())


# ---------------------------------------------------------------------------
# classify / predict_label


def test_classify_pairs():
    assert np.array_equal(classify(np.zeros(2)), np.array([0.5, 0.5]))
    p = classify(np.log(np.array([1.0, 3.0])))
    assert abs(p[0] - 0.25) < 1e-15 and abs(p[1] - 0.75) < 1e-15


def test_classify_shift_invariance():
    x = np.array([0.1, -2.0, 3.3])
    assert np.max(np.abs(classify(x + 7.0) - classify(x))) < 1e-12


def test_predict_label_ties_to_lowest_index():
    assert predict_label(np.array([0.1, 0.7, 0.2])) == 1
    assert predict_label(np.array([0.5, 0.5])) == 0
    assert predict_label(np.full(18, 1.0 / 18.0)) == 0


# ---------------------------------------------------------------------------
# infer_stream


def test_infer_stream_empty():
    net = tiny_net()
    assert infer_stream(net, np.empty((0, 3))).shape == (0, 3)


def test_infer_stream_equals_manual_stepping():
    rng = Rng(9)
    net = init_network(4, 6, 3, num_layers=2, rng=rng)
    xs = rng.normal_block(4 * 25).reshape(25, 4)
    whole = infer_stream(net, xs)
    state = net.zero_state()
    for t in range(25):
        logits, state, _ = step(net, xs[t], state)
        assert np.array_equal(whole[t], classify(logits))


def test_infer_stream_partition_associativity():
    rng = Rng(10)
    net = init_network(3, 5, 2, num_layers=2, rng=rng)
    xs = rng.normal_block(3 * 30).reshape(30, 3)
    whole = infer_stream(net, xs)
    state = net.zero_state()
    pieces = []
    for lo, hi in [(0, 7), (7, 19), (19, 30)]:
        probs = np.empty((hi - lo, 2))
        for t in range(lo, hi):
            logits, state, _ = step(net, xs[t], state)
            probs[t - lo] = classify(logits)
        pieces.append(probs)
    assert np.array_equal(whole, np.concatenate(pieces))


# ---------------------------------------------------------------------------
# init_network


def test_init_seeded_reproducible():
    a = init_network(5, 7, 4, num_layers=2, rng=Rng(123))
    b = init_network(5, 7, 4, num_layers=2, rng=Rng(123))
    for (na, ta), (nb, tb) in zip(a.param_items(), b.param_items()):
        assert na == nb and np.array_equal(ta, tb)


def test_init_fan_in_bound_h256():
    net = init_network(256, 256, 4, num_layers=2, rng=Rng(0))
    for name, arr in net.param_items():
        if not name.endswith(("bf", "bi", "bc", "bo", "out.b")):
            assert np.abs(arr).max() <= 1.0 / 16.0


def test_init_forget_bias_one_and_zero_biases():
    net = tiny_net(seed=4)
    for layer in net.layers:
        assert np.array_equal(layer.bf, np.ones(layer.hidden_dim))
        for b in (layer.bi, layer.bc, layer.bo):
            assert np.array_equal(b, np.zeros(layer.hidden_dim))
    assert np.array_equal(net.output.b, np.zeros(3))


def test_chained_layer_dims():
    net = init_network(5, 8, 3, num_layers=3, rng=Rng(1))
    assert net.layers[0].input_dim == 5
    assert all(layer.input_dim == 8 for layer in net.layers[1:])
    assert net.output.w.shape == (8, 3)
