"""Multi-layer LSTM network: parameters, per-sample forward pass, inference.

Weight layout: the input-to-hidden block (D_in x H) and the hidden-to-hidden
block (H x H) of each gate are stored separately; stacking them vertically
recovers the usual combined (D_in+H) x H gate matrix acting on [x, h]. Gate
preactivations are computed as x @ Wx + h @ Wh + b.

Per timestep and layer, with sigmoid s and previous (h, c):

    f = s(x@Wxf + h@Whf + bf)          forget gate
    i = s(x@Wxi + h@Whi + bi)          input gate
    g = tanh(x@Wxc + h@Whc + bc)       cell candidate
    c' = f * c + i * g                 new cell state
    o = s(x@Wxo + h@Who + bo)          output gate
    h' = o * tanh(c')                  new hidden state

The last layer's hidden state feeds a linear head: logits = h' @ W + b.

Everything here is batch-first internally (B, feature); the public
sample-wise API wraps the batched kernel with B=1, so streaming one sample
at a time is bit-identical to whole-sequence inference by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mathkit import sigmoid, softmax, tanh_vec
from .rng import Rng

# fixed tensor order within a layer; initialisation, serialisation and the
# optimizer all iterate parameters in this order
LAYER_WEIGHTS = ("wxf", "whf", "wxi", "whi", "wxc", "whc", "wxo", "who")
LAYER_BIASES = ("bf", "bi", "bc", "bo")


@dataclass
class LstmLayerParams:
    wxf: np.ndarray
    whf: np.ndarray
    wxi: np.ndarray
    whi: np.ndarray
    wxc: np.ndarray
    whc: np.ndarray
    wxo: np.ndarray
    who: np.ndarray
    bf: np.ndarray
    bi: np.ndarray
    bc: np.ndarray
    bo: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.wxf.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.wxf.shape[1]

    def tensors(self):
        for name in LAYER_WEIGHTS + LAYER_BIASES:
            yield name, getattr(self, name)

    def copy(self) -> "LstmLayerParams":
        return LstmLayerParams(**{name: arr.copy() for name, arr in self.tensors()})


@dataclass
class OutputLayerParams:
    w: np.ndarray  # (H, K)
    b: np.ndarray  # (K,)

    def copy(self) -> "OutputLayerParams":
        return OutputLayerParams(self.w.copy(), self.b.copy())


@dataclass
class LstmState:
    """Per-layer hidden and cell vectors for one stream (shape (H,) each)."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    def copy(self) -> "LstmState":
        return LstmState([v.copy() for v in self.h], [v.copy() for v in self.c])


@dataclass
class LstmNetwork:
    layers: list[LstmLayerParams]
    output: OutputLayerParams

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dim(self) -> int:
        return self.layers[0].hidden_dim

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_classes(self) -> int:
        return self.output.b.shape[0]

    def param_items(self):
        """All parameter tensors as (name, array) in a fixed global order."""
        for idx, layer in enumerate(self.layers):
            for name, arr in layer.tensors():
                yield f"l{idx}.{name}", arr
        yield "out.w", self.output.w
        yield "out.b", self.output.b

    def get_param(self, name: str) -> np.ndarray:
        prefix, _, attr = name.partition(".")
        if prefix == "out":
            return getattr(self.output, attr)
        return getattr(self.layers[int(prefix[1:])], attr)

    def copy(self) -> "LstmNetwork":
        return LstmNetwork([la.copy() for la in self.layers], self.output.copy())

    def zero_state(self, batch: int | None = None):
        """Fresh all-zero state; (H,) vectors, or (batch, H) when batched."""
        h = self.hidden_dim
        shape = (h,) if batch is None else (batch, h)
        if batch is None:
            return LstmState(
                [np.zeros(shape) for _ in self.layers],
                [np.zeros(shape) for _ in self.layers],
            )
        return [(np.zeros(shape), np.zeros(shape)) for _ in self.layers]


def step_batch(net, x, hs, cs, masks=None, cache=None):
    """One timestep for a batch of streams.

    x: (B, D); hs, cs: per-layer lists of (B, H). masks, when given, is a
    per-layer list of (B, H) multipliers applied to each layer's output on
    its feed-forward (upward) connection only; the recurrent h path stays
    unmasked. Returns (logits (B, K), new_hs, new_cs). When `cache` is a
    list, one dict of intermediates per layer is appended for use by the
    backward pass.
    """
    inp = x
    new_hs, new_cs = [], []
    for idx, layer in enumerate(net.layers):
        h_prev, c_prev = hs[idx], cs[idx]
        f = sigmoid(inp @ layer.wxf + h_prev @ layer.whf + layer.bf)
        i = sigmoid(inp @ layer.wxi + h_prev @ layer.whi + layer.bi)
        g = tanh_vec(inp @ layer.wxc + h_prev @ layer.whc + layer.bc)
        c = f * c_prev + i * g
        o = sigmoid(inp @ layer.wxo + h_prev @ layer.who + layer.bo)
        tc = tanh_vec(c)
        h = o * tc
        mask = None if masks is None else masks[idx]
        up = h if mask is None else h * mask
        if cache is not None:
            cache.append(
                {
                    "x_in": inp,
                    "h_prev": h_prev,
                    "c_prev": c_prev,
                    "f": f,
                    "i": i,
                    "g": g,
                    "o": o,
                    "tc": tc,
                    "mask": mask,
                    "up": up,
                }
            )
        new_hs.append(h)
        new_cs.append(c)
        inp = up
    logits = inp @ net.output.w + net.output.b
    return logits, new_hs, new_cs


def step(net: LstmNetwork, x: np.ndarray, state: LstmState, dropout_masks=None):
    """Advance the network by one sample.

    Returns (logits (K,), new_state, cache) where cache holds each layer's
    gate activations and inputs (the intermediates a backward pass needs).
    dropout_masks, if given, is a per-layer list of (H,) multipliers and is
    only meaningful during training.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"step: input shape {x.shape}, expected ({net.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("step: non-finite input sample")
    hs = [h.reshape(1, -1) for h in state.h]
    cs = [c.reshape(1, -1) for c in state.c]
    masks = None
    if dropout_masks is not None:
        masks = [m.reshape(1, -1) for m in dropout_masks]
    cache: list[dict] = []
    logits, new_hs, new_cs = step_batch(net, x.reshape(1, -1), hs, cs, masks, cache)
    new_state = LstmState([h[0] for h in new_hs], [c[0] for c in new_cs])
    return logits[0], new_state, cache


def classify(logits: np.ndarray) -> np.ndarray:
    """Class probability vector for one sample's logits."""
    return softmax(np.asarray(logits, dtype=np.float64))


def predict_label(p: np.ndarray) -> int:
    """Most probable class; ties resolve to the lowest index."""
    return int(np.argmax(p))


def infer_stream(net: LstmNetwork, xs, initial: LstmState | None = None) -> np.ndarray:
    """Sample-wise inference over a stream, carrying state across samples.

    xs: (T, D) array or iterable of (D,) vectors. Returns the (T, K) array
    of per-sample class probabilities. No dropout on this path. Feeding the
    stream one sample at a time with an externally carried state produces
    bit-identical output, because this is exactly that loop.
    """
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, net.input_dim)
    state = net.zero_state() if initial is None else initial
    probs = np.empty((xs.shape[0], net.num_classes))
    for t in range(xs.shape[0]):
        logits, state, _ = step(net, xs[t], state)
        probs[t] = classify(logits)
    return probs


def init_network(
    input_dim: int,
    hidden_dim: int,
    num_classes: int,
    num_layers: int = 2,
    rng: Rng | None = None,
) -> LstmNetwork:
    """Random network: weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)).

    fan_in is the row count of each block. Biases start at zero except the
    forget-gate bias, which starts at 1.0 so early training does not erase
    the cell state.
    """
    if min(input_dim, hidden_dim, num_classes, num_layers) < 1:
        raise ValueError("init_network: all dimensions must be positive")
    rng = rng if rng is not None else Rng(0)

    def draw(rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(rows)
        u = rng.uniform_block(rows * cols).reshape(rows, cols)
        return (2.0 * u - 1.0) * bound

    layers = []
    for idx in range(num_layers):
        d_in = input_dim if idx == 0 else hidden_dim
        weights = {}
        for name in LAYER_WEIGHTS:
            rows = d_in if name.startswith("wx") else hidden_dim
            weights[name] = draw(rows, hidden_dim)
        biases = {name: np.zeros(hidden_dim) for name in LAYER_BIASES}
        biases["bf"] = np.ones(hidden_dim)
        layers.append(LstmLayerParams(**weights, **biases))
    output = OutputLayerParams(draw(hidden_dim, num_classes), np.zeros(num_classes))
    return LstmNetwork(layers, output)
