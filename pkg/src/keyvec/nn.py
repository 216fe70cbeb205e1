"""Minimal reverse-mode autodiff on numpy arrays.

A forward pass records one entry per primitive on a `Tape`; `Tape.backward`
replays the entries in reverse, accumulating gradients into each input's
`grad` buffer. Parameters live in a `ParamStore` whose grad buffers are
shared with the `Var`s handed to the tape, so gradients land directly in the
store (and add to whatever is already there — callers zero grads between
steps).

Tensors are plain numpy arrays: float64 for gradient checking, float32 for
training (which is also the checkpoint payload precision).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import IndexOutOfRangeError, NotScalarError, ShapeMismatchError

# When enabled, every primitive checks its output for NaN/Inf.
DEBUG_CHECK_FINITE = False


class Var:
    """A value produced during a recorded forward pass.

    `grad` is allocated lazily for intermediates; for parameters it aliases
    the store's gradient buffer.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray, grad: np.ndarray | None = None):
        self.data = data
        self.grad = grad


def _accum(var: Var, g) -> None:
    if var.grad is None:
        var.grad = np.zeros_like(var.data)
    var.grad += g


def _accum_rows(var: Var, rows, g) -> None:
    # scatter-add tolerating duplicate row indices; plain loop beats
    # np.add.at for the short index lists seen here
    if var.grad is None:
        var.grad = np.zeros_like(var.data)
    if rows.size <= 64:
        grad = var.grad
        for j, r in enumerate(rows):
            grad[r] += g[j]
    else:
        np.add.at(var.grad, rows, g)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class ParamStore:
    """Named tensors with paired gradient buffers; the home of all trainable state.

    Iteration order is sorted by name. `rng` is consumed by initializers in
    model-construction order, so a fixed seed and construction path give
    bitwise-identical parameters.
    """

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(self.seed)
        self._entries: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._frozen: set[str] = set()

    def add(self, name: str, value) -> np.ndarray:
        if name in self._entries:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=self.dtype)
        self._entries[name] = (arr, np.zeros_like(arr))
        return arr

    def get_or_create(self, name: str, shape: tuple[int, ...], init_fn) -> np.ndarray:
        """Return the existing entry (validating its shape) or create one
        from `init_fn(rng, shape)` — loading a checkpoint pre-populates
        entries, so model construction reuses them instead of re-initializing.
        """
        if name in self._entries:
            value = self._entries[name][0]
            if value.shape != tuple(shape):
                raise ShapeMismatchError(
                    f"parameter {name!r} has shape {value.shape}, expected {tuple(shape)}"
                )
            return value
        return self.add(name, init_fn(self.rng, shape))

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return sorted(self._entries)

    def value(self, name: str) -> np.ndarray:
        return self._entries[name][0]

    def grad(self, name: str) -> np.ndarray:
        return self._entries[name][1]

    def var(self, name: str) -> Var:
        value, grad = self._entries[name]
        return Var(value, grad)

    def zero_grads(self) -> None:
        for _, grad in self._entries.values():
            grad[...] = 0.0

    def freeze(self, name: str) -> None:
        if name not in self._entries:
            raise KeyError(name)
        self._frozen.add(name)

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def state(self) -> dict[str, np.ndarray]:
        """Copies of all values, keyed by name."""
        return {name: self._entries[name][0].copy() for name in self.names()}


def glorot(fan_in: int, fan_out: int):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))

    def init(rng, shape):
        return rng.uniform(-limit, limit, shape)

    return init


def uniform(scale: float):
    def init(rng, shape):
        return rng.uniform(-scale, scale, shape)

    return init


def zeros():
    def init(rng, shape):
        return np.zeros(shape)

    return init


def lstm_bias(hidden: int):
    """Zero gate biases except the forget block, which starts at +1."""

    def init(rng, shape):
        b = np.zeros(shape)
        b[hidden : 2 * hidden] = 1.0
        return b

    return init


class Tape:
    """Recorded forward pass. One owner, one backward sweep per forward."""

    def __init__(self):
        self._records: list[tuple[tuple[Var, ...], callable]] = []

    def _out(self, data: np.ndarray) -> Var:
        if DEBUG_CHECK_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite value in forward pass")
        return Var(data)

    def _push(self, outs, back) -> None:
        self._records.append((outs, back))

    def leaf(self, data, dtype=None) -> Var:
        """A constant input; gradients flowing into it are discarded with the tape."""
        return Var(np.asarray(data, dtype=dtype))

    # --- primitives --------------------------------------------------------

    def embedding_lookup(self, table: Var, ids) -> Var:
        """Gather rows of `table` ([V, E]) at `ids`; duplicates accumulate on backward."""
        ids = np.asarray(ids, dtype=np.intp)
        v = table.data.shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= v):
            raise IndexOutOfRangeError(f"token id outside table of {v} rows")
        out = self._out(table.data[ids])

        def back():
            _accum_rows(table, ids, out.grad)

        self._push((out,), back)
        return out

    def conv1d_maxpool(self, words: Var, filters: Var, bias: Var, activation: str = "relu") -> Var:
        """Per-filter max over positions of activation(bias + filter . window).

        `words` is [M, E], `filters` [F, w, E], `bias` [F]; inputs shorter
        than the filter width are zero-padded. Backward routes each filter's
        gradient through its (first) argmax position only.
        """
        num_filters, width, emb = filters.data.shape
        m = words.data.shape[0]
        if words.data.shape[1] != emb or bias.data.shape != (num_filters,):
            raise ShapeMismatchError("conv1d_maxpool operand shapes disagree")
        x = words.data
        if m < width:
            x = np.concatenate([x, np.zeros((width - m, emb), dtype=x.dtype)], axis=0)
        t = x.shape[0] - width + 1
        windows = np.lib.stride_tricks.sliding_window_view(x, (width, emb)).reshape(t, width * emb)
        wflat = filters.data.reshape(num_filters, width * emb)
        scores = windows @ wflat.T + bias.data  # [t, F]
        if activation == "relu":
            act = np.maximum(scores, 0.0)
        elif activation == "tanh":
            act = np.tanh(scores)
        else:
            raise ValueError(f"unknown activation {activation!r}")
        best = np.argmax(act, axis=0)  # first position on ties
        cols = np.arange(num_filters)
        out = self._out(act[best, cols])

        def back():
            g = out.grad
            if activation == "relu":
                dscore = g * (scores[best, cols] > 0.0)
            else:
                a = act[best, cols]
                dscore = g * (1.0 - a * a)
            _accum(filters, (dscore[:, None] * windows[best]).reshape(num_filters, width, emb))
            _accum(bias, dscore)
            # route each filter's gradient to its argmax window: a one-hot
            # matmul into window space, then fold the overlapping windows
            onehot = np.zeros((t, num_filters), dtype=x.dtype)
            onehot[best, cols] = dscore
            dwin = onehot @ wflat  # [t, width*emb]
            dx = np.zeros_like(x)
            for offset in range(width):
                dx[offset : offset + t] += dwin[:, offset * emb : (offset + 1) * emb]
            _accum(words, dx[:m])

        self._push((out,), back)
        return out

    def lstm_step(self, x: Var, h_prev: Var, c_prev: Var,
                  w_input: Var, w_hidden: Var, bias: Var) -> tuple[Var, Var]:
        """One LSTM cell step; gate rows are laid out [input; forget; output; candidate]."""
        hidden = h_prev.data.shape[0]
        pre = w_input.data @ x.data + w_hidden.data @ h_prev.data + bias.data
        gate_i = _stable_sigmoid(pre[:hidden])
        gate_f = _stable_sigmoid(pre[hidden : 2 * hidden])
        gate_o = _stable_sigmoid(pre[2 * hidden : 3 * hidden])
        cand = np.tanh(pre[3 * hidden :])
        c = gate_f * c_prev.data + gate_i * cand
        tc = np.tanh(c)
        h_out = self._out(gate_o * tc)
        c_out = self._out(c)

        def back():
            gh = h_out.grad
            dc = c_out.grad.copy() if c_out.grad is not None else np.zeros_like(c)
            if gh is not None:
                do = gh * tc
                dc += gh * gate_o * (1.0 - tc * tc)
            else:
                do = np.zeros_like(gate_o)
            di = dc * cand
            df = dc * c_prev.data
            dcand = dc * gate_i
            dpre = np.concatenate([
                di * gate_i * (1.0 - gate_i),
                df * gate_f * (1.0 - gate_f),
                do * gate_o * (1.0 - gate_o),
                dcand * (1.0 - cand * cand),
            ])
            _accum(w_input, np.outer(dpre, x.data))
            _accum(w_hidden, np.outer(dpre, h_prev.data))
            _accum(bias, dpre)
            _accum(x, w_input.data.T @ dpre)
            _accum(h_prev, w_hidden.data.T @ dpre)
            _accum(c_prev, dc * gate_f)

        self._push((h_out, c_out), back)
        return h_out, c_out

    def linear(self, x: Var, weight: Var, bias: Var) -> Var:
        """weight @ x + bias for a vector x."""
        b, a = weight.data.shape
        if x.data.shape != (a,) or bias.data.shape != (b,):
            raise ShapeMismatchError(
                f"linear: x {x.data.shape}, weight {weight.data.shape}, bias {bias.data.shape}"
            )
        out = self._out(weight.data @ x.data + bias.data)

        def back():
            g = out.grad
            _accum(weight, np.outer(g, x.data))
            _accum(bias, g)
            _accum(x, weight.data.T @ g)

        self._push((out,), back)
        return out

    def linear_rows(self, rows: Var, weight: Var, bias: Var) -> Var:
        """rows @ weight + bias for rows [N, K], weight [K], scalar bias [1]."""
        n, k = rows.data.shape
        if weight.data.shape != (k,) or bias.data.shape != (1,):
            raise ShapeMismatchError("linear_rows operand shapes disagree")
        out = self._out(rows.data @ weight.data + bias.data[0])

        def back():
            g = out.grad
            _accum(rows, np.outer(g, weight.data))
            _accum(weight, rows.data.T @ g)
            _accum(bias, g.sum(keepdims=True))

        self._push((out,), back)
        return out

    def sigmoid(self, x: Var) -> Var:
        y = _stable_sigmoid(x.data)
        out = self._out(y)

        def back():
            _accum(x, out.grad * y * (1.0 - y))

        self._push((out,), back)
        return out

    def tanh(self, x: Var) -> Var:
        y = np.tanh(x.data)
        out = self._out(y)

        def back():
            _accum(x, out.grad * (1.0 - y * y))

        self._push((out,), back)
        return out

    def softmax(self, x: Var) -> Var:
        """Vector softmax, computed with max subtraction."""
        z = x.data - x.data.max()
        e = np.exp(z)
        y = e / e.sum()
        out = self._out(y)

        def back():
            g = out.grad
            _accum(x, y * (g - np.dot(g, y)))

        self._push((out,), back)
        return out

    def concat(self, parts: list[Var]) -> Var:
        out = self._out(np.concatenate([p.data for p in parts]))

        def back():
            g = out.grad
            offset = 0
            for p in parts:
                size = p.data.shape[0]
                _accum(p, g[offset : offset + size])
                offset += size

        self._push((out,), back)
        return out

    def stack_rows(self, rows: list[Var]) -> Var:
        out = self._out(np.stack([r.data for r in rows]))

        def back():
            g = out.grad
            for i, r in enumerate(rows):
                _accum(r, g[i])

        self._push((out,), back)
        return out

    def add(self, a: Var, b: Var) -> Var:
        if a.data.shape != b.data.shape:
            raise ShapeMismatchError("add: shapes disagree")
        out = self._out(a.data + b.data)

        def back():
            _accum(a, out.grad)
            _accum(b, out.grad)

        self._push((out,), back)
        return out

    def scale(self, x: Var, alpha: float) -> Var:
        out = self._out(x.data * alpha)

        def back():
            _accum(x, out.grad * alpha)

        self._push((out,), back)
        return out

    def sum(self, x: Var) -> Var:
        out = self._out(np.asarray(x.data.sum()))

        def back():
            _accum(x, np.broadcast_to(out.grad, x.data.shape))

        self._push((out,), back)
        return out

    def inner(self, x: Var, coeffs: np.ndarray) -> Var:
        """Scalar sum(x * coeffs) against a constant array (test probe)."""
        out = self._out(np.asarray(float(np.vdot(x.data, coeffs))))

        def back():
            _accum(x, out.grad * coeffs)

        self._push((out,), back)
        return out

    def normalize_sum(self, x: Var) -> Var:
        """x / sum(x); inputs are assumed strictly positive."""
        s = x.data.sum()
        y = x.data / s
        out = self._out(y)

        def back():
            g = out.grad
            # quotient rule through the shared denominator
            _accum(x, (g - np.dot(g, y)) / s)

        self._push((out,), back)
        return out

    def weighted_sum(self, weights: Var, rows: Var) -> Var:
        """sum_i weights[i] * rows[i] for weights [N], rows [N, K]."""
        if weights.data.shape[0] != rows.data.shape[0]:
            raise ShapeMismatchError("weighted_sum: length mismatch")
        out = self._out(rows.data.T @ weights.data)

        def back():
            g = out.grad
            _accum(weights, rows.data @ g)
            _accum(rows, np.outer(weights.data, g))

        self._push((out,), back)
        return out

    def binary_nll(self, probs: Var, targets: np.ndarray, eps: float = 1e-12) -> Var:
        """Summed negative log likelihood of Bernoulli targets (0/1 array).

        Log arguments are clamped at `eps` so the loss stays finite under
        saturated probabilities.
        """
        p = probs.data
        t = np.asarray(targets, dtype=p.dtype)
        ph = np.maximum(p, eps)
        qh = np.maximum(1.0 - p, eps)
        loss = -(t * np.log(ph) + (1.0 - t) * np.log(qh)).sum()
        out = self._out(np.asarray(loss))

        def back():
            g = out.grad
            # clamped coordinates have zero local slope
            dp = -(t * (p > eps)) / ph + ((1.0 - t) * ((1.0 - p) > eps)) / qh
            _accum(probs, g * dp)

        self._push((out,), back)
        return out

    def softmax_nll(self, logits: Var, ids) -> Var:
        """Sum over the id set of -log softmax(logits)[id]."""
        ids = np.asarray(sorted(set(ids)), dtype=np.intp)
        le = logits.data
        m = le.max()
        lse = m + np.log(np.exp(le - m).sum())
        loss = ids.size * lse - le[ids].sum()
        out = self._out(np.asarray(loss))

        def back():
            g = out.grad
            dl = g * ids.size * np.exp(le - lse)
            dl[ids] -= g
            _accum(logits, dl)

        self._push((out,), back)
        return out

    # --- reverse sweep ------------------------------------------------------

    def backward(self, loss: Var) -> None:
        """Accumulate d(loss)/d(input) into every input's grad buffer.

        Parameter gradients add to existing buffer contents; intermediate
        grads are cleared afterwards so a second backward() adds exactly one
        more copy of the gradient.
        """
        if loss.data.size != 1:
            raise NotScalarError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for outs, back in reversed(self._records):
            if any(o.grad is not None for o in outs):
                back()
        for outs, _ in self._records:
            for o in outs:
                o.grad = None


def sgd_step(store: ParamStore, lr: float, clip_norm: float = math.inf) -> float:
    """Clip the global gradient norm, apply param -= lr * grad, zero grads.

    Frozen parameters are excluded from both the norm and the update.
    Returns the pre-clip gradient norm.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    active = [n for n in store.names() if not store.is_frozen(n)]
    sq = 0.0
    for name in active:
        g = store.grad(name).ravel()
        sq += float(np.dot(g, g))
    norm = math.sqrt(sq)
    scale = 1.0
    if math.isfinite(clip_norm) and norm > clip_norm:
        scale = clip_norm / norm
    step = lr * scale
    for name in active:
        store.value(name)[...] -= step * store.grad(name)
    store.zero_grads()
    return norm


def finite_difference_check(loss_fn, store: ParamStore, eps: float = 1e-5,
                            names=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn(tape) -> Var` must rebuild the same scalar loss from the store's
    current values on every call. Relative error per coordinate is
    |a - n| / max(1e-8, |a| + |n|). Run with a float64 store.
    """
    names = list(names) if names is not None else store.names()
    store.zero_grads()
    tape = Tape()
    tape.backward(loss_fn(tape))
    analytic = {n: store.grad(n).copy() for n in names}
    store.zero_grads()

    def value() -> float:
        return float(loss_fn(Tape()).data)

    max_err = 0.0
    for name in names:
        flat = store.value(name).reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = value()
            flat[i] = orig - eps
            f_minus = value()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            max_err = max(max_err, err)
    return max_err
