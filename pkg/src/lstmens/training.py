"""Losses, truncated backpropagation through time, ADAM, gradient checking.

A frame is a block of L consecutive timesteps advanced in lockstep across B
streams. Gradients are exact within the frame and truncated at its boundary:
the carried-in state is treated as a constant, while the carried-out state
flows to the next frame forward-only.

Dropout is inverted dropout on every layer's output h, resampled per
timestep, applied to feed-forward connections only (the recurrent h path is
never masked). Mask values are 0 or 1/(1-p), so the masked activation equals
the unmasked one in expectation and p=0 reproduces the inference forward
pass bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .mathkit import log_softmax, softmax
from .network import LstmNetwork, step_batch
from .rng import Rng


class LossKind(enum.Enum):
    CE = "CE"
    F1 = "F1"


@dataclass
class AdamState:
    """ADAM moments per parameter tensor, allocated lazily from gradients."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class FrameBatch:
    """inputs (L, B, D); targets (L, B) ints; states: per-layer [(h, c)] with
    (B, H) arrays carried in from the previous frame of the same streams."""

    inputs: np.ndarray
    targets: np.ndarray
    states: list


# ---------------------------------------------------------------------------
# losses


def ce_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross entropy: -log p(target), via log-softmax of the raw scores.

    Working from logits (never log of a stored probability) keeps the loss
    finite even when the softmax saturates.
    """
    logits = np.asarray(logits, dtype=np.float64).reshape(-1, np.shape(logits)[-1])
    targets = np.asarray(targets, dtype=np.int64).ravel()
    if targets.size == 0:
        raise ValueError("ce_loss: empty batch")
    logp = log_softmax(logits)
    return float(-logp[np.arange(targets.size), targets].mean())


def _ce_grad(logits: np.ndarray, targets: np.ndarray):
    """(loss, dloss/dlogits) for the mean cross entropy."""
    k = logits.shape[-1]
    flat = logits.reshape(-1, k)
    t = targets.ravel()
    n = t.size
    logp = log_softmax(flat)
    loss = float(-logp[np.arange(n), t].mean())
    dlogits = softmax(flat)
    dlogits[np.arange(n), t] -= 1.0
    dlogits /= n
    return loss, dlogits.reshape(logits.shape)


def f1_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    """Soft macro-F1 loss on class probabilities, in [0, 1].

    For each class k present in the batch the term is
    1 - 2*sum_t p_tk*z_tk / (sum_t p_tk + sum_t z_tk); the loss is the mean
    over present classes. Classes with no target samples in the batch are
    excluded (their term would be 0/0-degenerate).
    """
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, np.shape(probs)[-1])
    targets = np.asarray(targets, dtype=np.int64).ravel()
    if targets.size == 0:
        raise ValueError("f1_loss: batch with no labels")
    k = probs.shape[1]
    counts = np.bincount(targets, minlength=k).astype(np.float64)
    present = counts > 0
    overlap = np.zeros(k)
    np.add.at(overlap, targets, probs[np.arange(targets.size), targets])
    denom = probs.sum(axis=0) + counts
    terms = 1.0 - 2.0 * overlap[present] / denom[present]
    return float(terms.mean())


def _f1_grad(logits: np.ndarray, targets: np.ndarray):
    """(loss, dloss/dlogits) for the soft macro-F1 loss through the softmax."""
    k = logits.shape[-1]
    flat = logits.reshape(-1, k)
    t = targets.ravel()
    n = t.size
    if n == 0:
        raise ValueError("f1_loss: batch with no labels")
    p = softmax(flat)
    counts = np.bincount(t, minlength=k).astype(np.float64)
    present = counts > 0
    n_present = int(present.sum())
    z = np.zeros((n, k))
    z[np.arange(n), t] = 1.0
    overlap = (p * z).sum(axis=0)
    denom = p.sum(axis=0) + counts
    terms = 1.0 - 2.0 * overlap[present] / denom[present]
    loss = float(terms.mean())
    # d term_k / d p_tk = -2 (z_tk * denom_k - overlap_k) / denom_k^2
    dp = np.zeros((n, k))
    dp[:, present] = (
        -2.0
        * (z[:, present] * denom[present] - overlap[present])
        / (denom[present] ** 2)
        / n_present
    )
    # chain through softmax: dlogit_j = p_j * (dp_j - sum_k dp_k p_k)
    dlogits = p * (dp - (dp * p).sum(axis=1, keepdims=True))
    return loss, dlogits.reshape(logits.shape)


_LOSS_GRADS = {LossKind.CE: _ce_grad, LossKind.F1: _f1_grad}


def batch_loss(logits: np.ndarray, targets: np.ndarray, loss: LossKind) -> float:
    """Loss of one frame's logits under the given criterion."""
    if loss is LossKind.CE:
        return ce_loss(logits, targets)
    return f1_loss(softmax(logits), targets)


# ---------------------------------------------------------------------------
# frame forward / backward


def draw_dropout_masks(rng: Rng, num_layers: int, length: int, batch: int,
                       hidden: int, dropout_p: float):
    """Fresh inverted-dropout masks, one per (timestep, layer).

    Draw order is timestep-major, layer-minor. Returns None when p == 0 so
    the masked and unmasked code paths are literally the same.
    """
    if dropout_p == 0.0:
        return None
    if not 0.0 <= dropout_p < 1.0:
        raise ValueError(f"dropout_p must be in [0, 1), got {dropout_p}")
    scale = 1.0 / (1.0 - dropout_p)
    masks = np.empty((length, num_layers, batch, hidden))
    for t in range(length):
        for layer in range(num_layers):
            u = rng.uniform_block(batch * hidden).reshape(batch, hidden)
            masks[t, layer] = (u >= dropout_p) * scale
    return masks


def forward_frame(net: LstmNetwork, inputs: np.ndarray, states, masks=None,
                  want_cache: bool = True):
    """Run L timesteps over B streams.

    inputs: (L, B, D); states: per-layer [(h, c)] of (B, H); masks: (L,
    num_layers, B, H) or None. Returns (logits (L, B, K), new_states,
    caches) where caches[t] is the per-layer intermediates list for
    timestep t (empty when want_cache is False).
    """
    length, batch, _ = inputs.shape
    hs = [h for h, _ in states]
    cs = [c for _, c in states]
    logits = np.empty((length, batch, net.num_classes))
    caches = []
    for t in range(length):
        step_masks = None if masks is None else list(masks[t])
        cache_t: list[dict] | None = [] if want_cache else None
        logits[t], hs, cs = step_batch(net, inputs[t], hs, cs, step_masks, cache_t)
        if want_cache:
            caches.append(cache_t)
    return logits, list(zip(hs, cs)), caches


def backward_frame(net: LstmNetwork, caches, dlogits: np.ndarray) -> dict:
    """Exact gradients of the frame loss w.r.t. every parameter.

    Gradients are truncated at the frame boundary: nothing flows into the
    carried-in state. Accumulation order is fixed (reverse time, top layer
    down, streams summed inside the matrix products), so results are
    bitwise reproducible.
    """
    length, batch, k = dlogits.shape
    hidden = net.hidden_dim
    grads = {name: np.zeros_like(arr) for name, arr in net.param_items()}

    # output head: logits_t = up_top_t @ w + b
    up_top = np.stack([caches[t][-1]["up"] for t in range(length)])
    flat_d = dlogits.reshape(-1, k)
    grads["out.w"] += up_top.reshape(-1, hidden).T @ flat_d
    grads["out.b"] += flat_d.sum(axis=0)
    dup_top = (flat_d @ net.output.w.T).reshape(length, batch, hidden)

    n_layers = net.num_layers
    dh_rec = [np.zeros((batch, hidden)) for _ in range(n_layers)]
    dc_rec = [np.zeros((batch, hidden)) for _ in range(n_layers)]
    for t in reversed(range(length)):
        dup = dup_top[t]
        for idx in reversed(range(n_layers)):
            cc = caches[t][idx]
            layer = net.layers[idx]
            mask = cc["mask"]
            dh = (dup if mask is None else dup * mask) + dh_rec[idx]
            f, i, g, o, tc = cc["f"], cc["i"], cc["g"], cc["o"], cc["tc"]
            da_o = dh * tc * o * (1.0 - o)
            dc = dh * o * (1.0 - tc * tc) + dc_rec[idx]
            da_f = dc * cc["c_prev"] * f * (1.0 - f)
            da_i = dc * g * i * (1.0 - i)
            da_g = dc * i * (1.0 - g * g)
            x_in, h_prev = cc["x_in"], cc["h_prev"]
            pre = f"l{idx}."
            grads[pre + "wxf"] += x_in.T @ da_f
            grads[pre + "whf"] += h_prev.T @ da_f
            grads[pre + "wxi"] += x_in.T @ da_i
            grads[pre + "whi"] += h_prev.T @ da_i
            grads[pre + "wxc"] += x_in.T @ da_g
            grads[pre + "whc"] += h_prev.T @ da_g
            grads[pre + "wxo"] += x_in.T @ da_o
            grads[pre + "who"] += h_prev.T @ da_o
            grads[pre + "bf"] += da_f.sum(axis=0)
            grads[pre + "bi"] += da_i.sum(axis=0)
            grads[pre + "bc"] += da_g.sum(axis=0)
            grads[pre + "bo"] += da_o.sum(axis=0)
            dup = (
                da_f @ layer.wxf.T
                + da_i @ layer.wxi.T
                + da_g @ layer.wxc.T
                + da_o @ layer.wxo.T
            )
            dh_rec[idx] = (
                da_f @ layer.whf.T
                + da_i @ layer.whi.T
                + da_g @ layer.whc.T
                + da_o @ layer.who.T
            )
            dc_rec[idx] = dc * f
    return grads


def bptt_frame(net: LstmNetwork, frame: FrameBatch, loss: LossKind,
               dropout_p: float = 0.0, rng: Rng | None = None):
    """Forward + backward over one frame.

    Returns (grads, new_states, loss_value). Fresh dropout masks are drawn
    from rng per timestep and layer; rng may be None when dropout_p == 0.
    """
    length, batch, _ = frame.inputs.shape
    if dropout_p > 0.0 and rng is None:
        raise ValueError("bptt_frame: dropout requires an rng")
    masks = draw_dropout_masks(
        rng, net.num_layers, length, batch, net.hidden_dim, dropout_p
    )
    logits, new_states, caches = forward_frame(net, frame.inputs, frame.states, masks)
    if not np.all(np.isfinite(logits)):
        bad = np.where(~np.isfinite(logits).all(axis=(0, 2)))[0]
        raise FloatingPointError(
            f"non-finite activations in stream(s) {bad.tolist()} of the frame"
        )
    loss_value, dlogits = _LOSS_GRADS[loss](logits, frame.targets)
    if not np.isfinite(loss_value):
        raise FloatingPointError(f"non-finite {loss.value} loss over the frame")
    grads = backward_frame(net, caches, dlogits)
    return grads, new_states, loss_value


# ---------------------------------------------------------------------------
# optimizer


def adam_update(net: LstmNetwork, grads: dict, opt: AdamState):
    """One ADAM step, updating net parameters and moments in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected
    moments. Returns (net, opt) for call-chaining.
    """
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for name, theta in net.param_items():
        g = grads[name]
        if name not in opt.m:
            opt.m[name] = np.zeros_like(theta)
            opt.v[name] = np.zeros_like(theta)
        m = opt.m[name]
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return net, opt


# ---------------------------------------------------------------------------
# gradient oracle


def _frame_loss_highprec(net: LstmNetwork, frame: FrameBatch, loss: LossKind):
    """Frame loss via an independent forward pass in extended precision.

    This is the oracle side of the gradient check, so it deliberately does
    not share code with step_batch/forward_frame, and it runs in
    np.longdouble: at delta=1e-5 the difference quotient of a float64 loss
    carries ~1e-11 of rounding noise, enough to mask errors in small
    gradient entries. Dropout off (masks are identity at check time).
    """
    ld = np.longdouble
    inputs = frame.inputs.astype(ld)
    hs = [h.astype(ld) for h, _ in frame.states]
    cs = [c.astype(ld) for _, c in frame.states]
    length, _, _ = inputs.shape
    k = net.num_classes
    weights = [{name: arr.astype(ld) for name, arr in layer.tensors()}
               for layer in net.layers]
    out_w = net.output.w.astype(ld)
    out_b = net.output.b.astype(ld)

    def sig(a):
        e = np.exp(-np.abs(a))
        return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    logits = np.empty((length,) + frame.inputs.shape[1:2] + (k,), dtype=ld)
    for t in range(length):
        inp = inputs[t]
        for idx, w in enumerate(weights):
            f = sig(inp @ w["wxf"] + hs[idx] @ w["whf"] + w["bf"])
            i = sig(inp @ w["wxi"] + hs[idx] @ w["whi"] + w["bi"])
            g = np.tanh(inp @ w["wxc"] + hs[idx] @ w["whc"] + w["bc"])
            c = f * cs[idx] + i * g
            o = sig(inp @ w["wxo"] + hs[idx] @ w["who"] + w["bo"])
            hs[idx] = o * np.tanh(c)
            cs[idx] = c
            inp = hs[idx]
        logits[t] = inp @ out_w + out_b

    flat = logits.reshape(-1, k)
    targets = frame.targets.ravel()
    shifted = flat - flat.max(axis=1, keepdims=True)
    if loss is LossKind.CE:
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return -logp[np.arange(targets.size), targets].mean()
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    counts = np.bincount(targets, minlength=k).astype(ld)
    present = counts > 0
    overlap = np.zeros(k, dtype=ld)
    np.add.at(overlap, targets, p[np.arange(targets.size), targets])
    denom = p.sum(axis=0) + counts
    return (1.0 - 2.0 * overlap[present] / denom[present]).mean()


def finite_difference_grads(net: LstmNetwork, frame: FrameBatch, loss: LossKind,
                            delta: float = 1e-5) -> dict:
    """Central-difference gradients of the frame loss, tensor by tensor.

    Perturbed losses come from _frame_loss_highprec, so the quotient noise
    (~eps_longdouble / 2 delta ~ 5e-15) stays far below the tolerances the
    check is run at.
    """
    grads = {}
    for name, theta in net.param_items():
        num = np.zeros_like(theta)
        flat = theta.ravel()
        num_flat = num.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + delta
            up = _frame_loss_highprec(net, frame, loss)
            flat[j] = orig - delta
            down = _frame_loss_highprec(net, frame, loss)
            flat[j] = orig
            num_flat[j] = float((up - down) / (2.0 * delta))
        grads[name] = num
    return grads


def relative_errors(analytic: dict, numeric: dict) -> dict:
    """Per-tensor max of |ga - gn| / max(|ga|, |gn|, 1e-8)."""
    out = {}
    for name, ga in analytic.items():
        gn = numeric[name]
        scale = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        out[name] = float((np.abs(ga - gn) / scale).max())
    return out


def random_check_frame(net: LstmNetwork, rng: Rng, length: int = 5,
                       batch: int = 2) -> FrameBatch:
    """Random frame (inputs, targets, carried-in states) for gradient checks.

    Carried states are random rather than zero so the cell-history paths
    (forget gate, c_prev products) carry weight from the first timestep.
    """
    d, h, k = net.input_dim, net.hidden_dim, net.num_classes
    inputs = rng.normal_block(length * batch * d).reshape(length, batch, d)
    targets = np.array(
        [[rng.uniform_int(0, k - 1) for _ in range(batch)] for _ in range(length)]
    )
    states = []
    for _ in net.layers:
        hidden = np.tanh(rng.normal_block(batch * h).reshape(batch, h))
        cell = rng.normal_block(batch * h).reshape(batch, h)
        states.append((hidden, cell))
    return FrameBatch(inputs, targets, states)


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tolerance: float

    @property
    def failures(self) -> list[str]:
        return [n for n, e in self.max_rel_error.items() if e >= self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.failures


def grad_check(net: LstmNetwork, frame: FrameBatch, loss: LossKind,
               tolerance: float = 1e-4, delta: float = 1e-5) -> GradCheckReport:
    """Compare analytic BPTT gradients against central finite differences.

    Dropout must be off: the analytic pass runs with p=0 so both sides see
    the same deterministic function.
    """
    analytic, _, _ = bptt_frame(net, frame, loss, dropout_p=0.0)
    numeric = finite_difference_grads(net, frame, loss, delta)
    return GradCheckReport(relative_errors(analytic, numeric), tolerance)
