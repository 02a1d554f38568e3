"""Recurrent and feedforward building blocks: LSTM stacks, MLPs, Adam.

Everything here is built from the autodiff ops, so any forward pass run
inside a Tape is differentiable end to end. Weight init follows standard
LSTM practice: uniform(-1/sqrt(d_h), 1/sqrt(d_h)) with a +1 forget-gate
bias.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import FrozenParameterError, Tensor
from .errors import NumericsError

ACTIVATIONS = {
    "gelu": ad.gelu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
}


def _uniform(rng, shape, bound, dtype):
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros_state(batch, width, dtype):
    return Tensor(np.zeros((batch, width), dtype=dtype))


class LstmStack:
    """Multi-layer, optionally bidirectional LSTM.

    Gate layout inside each fused (4H) pre-activation block: input, forget,
    cell candidate, output. Bidirectional layers concatenate the forward
    pass over t = 0..L-1 with the backward pass over t = L-1..0, per step,
    so the output width is 2*hidden_dim.
    """

    def __init__(self, input_dim, hidden_dim, num_layers=1, bidirectional=False,
                 rng=None, dtype=np.float32):
        if input_dim < 1 or hidden_dim < 1 or num_layers < 1:
            raise ValueError("LstmStack dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.bidirectional = bidirectional
        self.dtype = np.dtype(dtype)
        bound = 1.0 / np.sqrt(hidden_dim)
        self.layers = []
        d_in = input_dim
        for _ in range(num_layers):
            directions = []
            for _d in range(2 if bidirectional else 1):
                W = _uniform(rng, (d_in, 4 * hidden_dim), bound, self.dtype)
                U = _uniform(rng, (hidden_dim, 4 * hidden_dim), bound, self.dtype)
                b = _uniform(rng, (4 * hidden_dim,), bound, self.dtype)
                b.data[hidden_dim : 2 * hidden_dim] += 1.0  # forget-gate bias
                directions.append((W, U, b))
            self.layers.append(directions)
            d_in = self.output_dim

    @property
    def output_dim(self):
        return self.hidden_dim * (2 if self.bidirectional else 1)

    def parameters(self):
        out = []
        for directions in self.layers:
            for W, U, b in directions:
                out.extend([W, U, b])
        return out

    def _cell(self, x, h, c, W, U, b):
        H = self.hidden_dim
        pre = ad.add_bias(ad.add(ad.matmul(x, W), ad.matmul(h, U)), b)
        i = ad.sigmoid(ad.slice_cols(pre, 0, H))
        f = ad.sigmoid(ad.slice_cols(pre, H, 2 * H))
        g = ad.tanh(ad.slice_cols(pre, 2 * H, 3 * H))
        o = ad.sigmoid(ad.slice_cols(pre, 3 * H, 4 * H))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def _scan(self, steps, weights):
        batch = steps[0].shape[0]
        h = zeros_state(batch, self.hidden_dim, self.dtype)
        c = zeros_state(batch, self.hidden_dim, self.dtype)
        outs = []
        W, U, b = weights
        for x in steps:
            h, c = self._cell(x, h, c, W, U, b)
            outs.append(h)
        return outs

    def forward_steps(self, steps):
        """Run the stack over a sequence given as a list of (B, d_in) tensors.

        Returns the top layer's per-step outputs, each (B, output_dim).
        """
        if not steps:
            raise ValueError("empty sequence")
        if steps[0].shape[1] != self.input_dim:
            raise ad.ShapeError(
                f"sequence feature width {steps[0].shape[1]} != input_dim {self.input_dim}"
            )
        current = list(steps)
        for directions in self.layers:
            fwd = self._scan(current, directions[0])
            if self.bidirectional:
                bwd = self._scan(current[::-1], directions[1])[::-1]
                current = [ad.concat_cols(f, r) for f, r in zip(fwd, bwd)]
            else:
                current = fwd
        return current

    def final_state(self, steps):
        """Final summary state: last forward hidden, and for bidirectional
        stacks the last backward hidden (i.e. both ends fully scanned),
        concatenated to (B, output_dim)."""
        if not steps:
            raise ValueError("empty sequence")
        current = list(steps)
        for li, directions in enumerate(self.layers):
            fwd = self._scan(current, directions[0])
            if self.bidirectional:
                bwd_rev = self._scan(current[::-1], directions[1])
                bwd = bwd_rev[::-1]
                if li == self.num_layers - 1:
                    return ad.concat_cols(fwd[-1], bwd_rev[-1])
                current = [ad.concat_cols(f, r) for f, r in zip(fwd, bwd)]
            else:
                if li == self.num_layers - 1:
                    return fwd[-1]
                current = fwd
        raise AssertionError("unreachable")


def lstm_forward(stack, seq):
    """Spec surface: (L, d_in) tensor in, (L, d_out) hidden sequence out."""
    seq = seq if isinstance(seq, Tensor) else Tensor(seq)
    steps = [ad.slice_rows(seq, t, t + 1) for t in range(seq.shape[0])]
    outs = stack.forward_steps(steps)
    return ad.concat_rows(outs)


class Mlp:
    """Feedforward net: affine -> (optional layer norm) -> activation per
    hidden layer; the final layer is affine only."""

    def __init__(self, widths, activation="gelu", layer_norm=False, rng=None,
                 dtype=np.float32):
        if len(widths) < 2:
            raise ValueError("Mlp needs at least input and output widths")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.widths = list(widths)
        self.activation = activation
        self.layer_norm = bool(layer_norm)
        self.dtype = np.dtype(dtype)
        self.linears = []
        self.norms = []  # (gain, bias) per hidden layer when layer_norm is on
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(d_in)
            W = _uniform(rng, (d_in, d_out), bound, self.dtype)
            b = _uniform(rng, (d_out,), bound, self.dtype)
            self.linears.append((W, b))
        if self.layer_norm:
            for d_out in widths[1:-1]:
                gain = Tensor(np.ones(d_out, dtype=self.dtype), requires_grad=True)
                bias = Tensor(np.zeros(d_out, dtype=self.dtype), requires_grad=True)
                self.norms.append((gain, bias))

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def output_dim(self):
        return self.widths[-1]

    def parameters(self):
        out = []
        for W, b in self.linears:
            out.extend([W, b])
        for gain, bias in self.norms:
            out.extend([gain, bias])
        return out

    def forward(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim == 1:
            x = ad.reshape(x, (1, x.shape[0]))
        if x.shape[1] != self.input_dim:
            raise ad.ShapeError(f"input width {x.shape[1]} != {self.input_dim}")
        act = ACTIVATIONS[self.activation]
        n_hidden = len(self.linears) - 1
        for i, (W, b) in enumerate(self.linears):
            x = ad.add_bias(ad.matmul(x, W), b)
            if i < n_hidden:
                if self.layer_norm:
                    gain, bias = self.norms[i]
                    x = ad.add_bias(ad.scale_columns(ad.layer_norm(x), gain), bias)
                x = act(x)
        return x


def mlp_forward(net, x):
    return net.forward(x)


class Adam:
    """Bias-corrected Adam with optional decoupled weight decay."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p in self.params:
            if p.locked:
                raise FrozenParameterError("optimizer step on a frozen model")
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericsError("NaN or Inf gradient; aborting optimizer step")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - (self.lr * update).astype(p.data.dtype)


def adam_step(opt, params=None, grads=None):
    """One optimizer step; grads may be supplied explicitly or read from
    each parameter's .grad buffer."""
    if params is not None and grads is not None:
        for p, g in zip(params, grads):
            p.grad = g if g is None else np.asarray(g, dtype=p.data.dtype)
    opt.step()


def snapshot_parameters(params):
    return [p.data.copy() for p in params]


def restore_parameters(params, arrays):
    for p, a in zip(params, arrays):
        p.data = a.copy()
