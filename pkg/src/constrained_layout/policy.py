"""Token-distribution policies: a stacked GRU with hand-written gradients
and a uniform baseline.

Network per step: one-hot previous token (size 4) -> 3 GRU layers ->
dense tanh layer -> 4 logits.  The START logit is masked out, so the
emitted distribution covers (LEFT, RIGHT, STOP).

GRU layer (gates fused as [update, reset, candidate])::

    z = sigmoid(x Wx_z + h Wh_z + b_z)
    r = sigmoid(x Wx_r + h Wh_r + b_r)
    n = tanh(x Wx_n + (r * h) Wh_n + b_n)
    h' = (1 - z) * n + z * h

At the start of every variable the embedding of (object class, variable
kind) is added to each layer's hidden state.  The initial hidden state of
every layer is a learned scene vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .geometry import KIND_INDEX
from .refinement import Token

NUM_TOKENS = 4
NUM_LAYERS = 3
UNKNOWN_CLASS = 0


class NonFiniteError(FloatingPointError):
    pass


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


@dataclass
class PolicyParams:
    hidden_size: int
    class_vocab: Tuple[str, ...]
    arrays: Dict[str, np.ndarray]
    num_layers: int = NUM_LAYERS

    @classmethod
    def init(cls, class_vocab: Sequence[str], hidden_size: int = 64,
             rng: Optional[np.random.Generator] = None, zero: bool = False) -> "PolicyParams":
        """Weights uniform in +-1/sqrt(H); the scene vector starts at zero."""
        rng = rng if rng is not None else np.random.default_rng(0)
        H = hidden_size
        s = 1.0 / np.sqrt(H)
        shapes = param_shapes(H, len(class_vocab))
        arrays = {}
        for name, shape in shapes.items():
            if zero or name == "scene":
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = rng.uniform(-s, s, size=shape)
        return cls(H, tuple(class_vocab), arrays)

    def class_index(self, type_name: Optional[str]) -> int:
        try:
            return self.class_vocab.index(type_name) + 1
        except ValueError:
            return UNKNOWN_CLASS

    def embedding_row(self, type_name: Optional[str], kind: str) -> int:
        return self.class_index(type_name) * 4 + KIND_INDEX[kind]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.hidden_size, self.class_vocab,
                            {k: v.copy() for k, v in self.arrays.items()}, self.num_layers)

    def __eq__(self, other):
        return (isinstance(other, PolicyParams)
                and self.hidden_size == other.hidden_size
                and self.class_vocab == other.class_vocab
                and self.num_layers == other.num_layers
                and self.arrays.keys() == other.arrays.keys()
                and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays))


def param_shapes(H: int, n_classes: int) -> Dict[str, Tuple[int, ...]]:
    shapes = {}
    for l in range(NUM_LAYERS):
        shapes[f"gru{l}.wx"] = (NUM_TOKENS if l == 0 else H, 3 * H)
        shapes[f"gru{l}.wh"] = (H, 3 * H)
        shapes[f"gru{l}.b"] = (3 * H,)
    shapes["head.w1"] = (H, H)
    shapes["head.b1"] = (H,)
    shapes["head.w2"] = (H, NUM_TOKENS)
    shapes["head.b2"] = (NUM_TOKENS,)
    shapes["embed"] = ((n_classes + 1) * 4, H)
    shapes["scene"] = (H,)
    return shapes


# --------------------------------------------------------------------------
# single-step inference API

PolicyState = Tuple[np.ndarray, ...]


def init_state(params: PolicyParams, spec=None) -> PolicyState:
    return tuple(params.arrays["scene"].copy() for _ in range(params.num_layers))


def begin_variable(state: PolicyState, params: PolicyParams, var, type_name=None) -> PolicyState:
    e = params.arrays["embed"][params.embedding_row(type_name, var.kind)]
    return tuple(h + e for h in state)


def _layer(P, l, x, h, H):
    """One GRU layer on a batch; ``x`` is int token ids for layer 0."""
    wx, wh, b = P[f"gru{l}.wx"], P[f"gru{l}.wh"], P[f"gru{l}.b"]
    gx = (wx[x] if l == 0 else x @ wx) + b
    gzr = h @ wh[:, :2 * H]
    z = _sigmoid(gx[:, :H] + gzr[:, :H])
    r = _sigmoid(gx[:, H:2 * H] + gzr[:, H:])
    n = np.tanh(gx[:, 2 * H:] + (r * h) @ wh[:, 2 * H:])
    return (1.0 - z) * n + z * h, z, r, n


def _head(P, h):
    a = np.tanh(h @ P["head.w1"] + P["head.b1"])
    logits = a @ P["head.w2"] + P["head.b2"]
    lg = logits[:, :3]
    lg = lg - lg.max(axis=1, keepdims=True)
    e = np.exp(lg)
    return a, e / e.sum(axis=1, keepdims=True)


def step(state: PolicyState, params: PolicyParams, prev: Token) -> Tuple[np.ndarray, PolicyState]:
    """Consume the previous token; return (LEFT, RIGHT, STOP) probabilities."""
    P, H = params.arrays, params.hidden_size
    x = np.array([int(prev)])
    new = []
    for l in range(params.num_layers):
        h, *_ = _layer(P, l, x, state[l][None, :], H)
        new.append(h[0])
        x = h
    _, p = _head(P, x)
    probs = p[0]
    if not np.all(np.isfinite(probs)):
        norms = {k: float(np.abs(v).max()) for k, v in P.items()}
        raise NonFiniteError(f"non-finite policy output; max |param| per array: {norms}")
    return probs, tuple(new)


class GRUPolicy:
    """Adapter exposing the sampler's policy protocol."""

    def __init__(self, params: PolicyParams):
        self.params = params

    def initial_state(self, spec):
        return init_state(self.params, spec)

    def begin_variable(self, state, var, type_name=None):
        return begin_variable(state, self.params, var, type_name)

    def step(self, state, prev):
        return step(state, self.params, prev)


class UniformPolicy:
    """Always (1/3, 1/3, 1/3); the forward check does all the work."""

    _P = np.full(3, 1.0 / 3.0)

    def initial_state(self, spec):
        return None

    def begin_variable(self, state, var, type_name=None):
        return state

    def step(self, state, prev):
        return self._P.copy(), state


def uniform_policy() -> UniformPolicy:
    return UniformPolicy()


# --------------------------------------------------------------------------
# batched training pass


@dataclass
class SequenceBatch:
    """Time-major padded batch of encoded examples (shapes T x B)."""

    inputs: np.ndarray     # ground-truth input token ids
    targets: np.ndarray    # target decision ids
    starts: np.ndarray     # bool, first token of a variable
    embed_rows: np.ndarray # embedding row added at starts
    legal: np.ndarray      # T x B x 3 bool, legal decisions at each step
    weights: np.ndarray    # loss weight per token (0 on padding)


@dataclass
class InputCounters:
    teacher: int = 0
    sampled: int = 0


def _sigmoid_(x):
    """In-place logistic via tanh; no overflow for large |x|."""
    x *= 0.5
    np.tanh(x, out=x)
    x *= 0.5
    x += 0.5
    return x


def _head_all(P, h):
    """Head on a stack of hidden states (..., H) -> (activations, probs)."""
    a = np.tanh(h @ P["head.w1"] + P["head.b1"])
    lg = a @ P["head.w2"][:, :3] + P["head.b2"][:3]
    lg -= lg.max(axis=-1, keepdims=True)
    e = np.exp(lg)
    return a, e / e.sum(axis=-1, keepdims=True)


def forward_backward(params: PolicyParams, batch: SequenceBatch, teacher_forcing_p: float = 1.0,
                     rng: Optional[np.random.Generator] = None,
                     counters: Optional[InputCounters] = None,
                     need_grad: bool = True) -> Tuple[float, Dict[str, np.ndarray]]:
    """Weighted NLL of the batch and its gradient w.r.t. every parameter.

    With probability ``teacher_forcing_p`` (per token) the input is the
    ground-truth previous token, otherwise the token the network itself
    sampled at the previous step among the legal decisions.  START inputs at
    variable boundaries are never replaced.
    """
    P, H, L = params.arrays, params.hidden_size, params.num_layers
    T, B = batch.targets.shape
    free_running = teacher_forcing_p < 1.0
    if free_running and rng is None:
        raise ValueError("free-running inputs need an rng")

    H2 = 2 * H
    tokens = batch.inputs.copy()
    HP = np.empty((L, T, B, H))    # state entering the step (embedding included)
    HO = np.empty((L, T, B, H))    # state leaving the step
    ZR = np.empty((L, T, B, H2))
    N = np.empty((L, T, B, H))
    RH = np.empty((L, T, B, H))
    wx = [P[f"gru{l}.wx"] for l in range(L)]
    whzr = [P[f"gru{l}.wh"][:, :H2] for l in range(L)]
    whn = [P[f"gru{l}.wh"][:, H2:] for l in range(L)]
    bias = [P[f"gru{l}.b"] for l in range(L)]
    if free_running:
        A = np.empty((T, B, H))
        PR = np.empty((T, B, 3))
    live_all = batch.weights > 0
    h = [np.broadcast_to(P["scene"], (B, H)) for _ in range(L)]
    sampled = None
    for t in range(T):
        st = batch.starts[t]
        any_start = st.any()
        if any_start:
            e = P["embed"][batch.embed_rows[t, st]]
        if t > 0:
            live = ~st & live_all[t]
            if free_running:
                coin = rng.random(B) < teacher_forcing_p
                use_sample = live & ~coin
                tokens[t, use_sample] = sampled[use_sample]
                if counters is not None:
                    counters.sampled += int(use_sample.sum())
                    counters.teacher += int((live & coin).sum())
            elif counters is not None:
                counters.teacher += int(live.sum())
        x = None
        for l in range(L):
            hp = HP[l, t]
            hp[...] = h[l]
            if any_start:
                hp[st] += e
            gx = wx[0][tokens[t]] + bias[0] if l == 0 else x @ wx[l] + bias[l]
            zr = ZR[l, t]
            np.add(gx[:, :H2], hp @ whzr[l], out=zr)
            _sigmoid_(zr)
            rh = RH[l, t]
            np.multiply(zr[:, H:], hp, out=rh)
            n = N[l, t]
            np.add(gx[:, H2:], rh @ whn[l], out=n)
            np.tanh(n, out=n)
            ho = HO[l, t]
            np.subtract(hp, n, out=ho)
            ho *= zr[:, :H]
            ho += n
            h[l] = ho
            x = ho
        if free_running:
            a, p = _head_all(P, x)
            A[t], PR[t] = a, p
            q = np.where(batch.legal[t], p, 0.0)
            q /= q.sum(axis=1, keepdims=True)
            u = rng.random(B)[:, None]
            sampled = np.minimum((u > np.cumsum(q, axis=1)).sum(axis=1), 2)
    if not free_running:
        A, PR = _head_all(P, HO[L - 1])

    w = batch.weights
    pt = np.take_along_axis(PR, batch.targets[:, :, None], axis=2)[:, :, 0]
    bad = (pt <= 0) & live_all
    if bad.any():
        t, b = (int(v[0]) for v in np.nonzero(bad))
        raise FloatingPointError(f"zero probability for the target at step {t}, row {b}")
    loss = -float(np.sum(w * np.log(np.where(live_all, pt, 1.0))))
    if not np.isfinite(loss):
        raise NonFiniteError(f"loss is {loss}")
    if not need_grad:
        return loss, {}

    g = {}
    TB = T * B
    dlog = np.zeros((T, B, NUM_TOKENS))
    dlog[:, :, :3] = PR
    np.put_along_axis(dlog, batch.targets[:, :, None],
                      np.take_along_axis(dlog, batch.targets[:, :, None], axis=2) - 1.0, axis=2)
    dlog *= w[:, :, None]
    dlog2 = dlog.reshape(TB, NUM_TOKENS)
    A2 = A.reshape(TB, H)
    g["head.w2"] = A2.T @ dlog2
    g["head.b2"] = dlog2.sum(axis=0)
    dpre = (dlog2 @ P["head.w2"].T) * (1.0 - A2 * A2)
    g["head.w1"] = HO[L - 1].reshape(TB, H).T @ dpre
    g["head.b1"] = dpre.sum(axis=0)
    d_top = (dpre @ P["head.w1"].T).reshape(T, B, H)

    # gate derivative factors, independent of the incoming gradient
    Z, R = ZR[..., :H], ZR[..., H:]
    KN = (1.0 - Z) * (1.0 - N * N)
    KZ = (HP - N) * Z * (1.0 - Z)
    KR = HP * R * (1.0 - R)
    DG = np.empty((L, T, B, 3 * H))
    dh = [np.zeros((B, H)) for _ in range(L)]
    dh[L - 1] = d_top[T - 1].copy()
    whzr_T = [m.T for m in whzr]
    whn_T = [m.T for m in whn]
    wx_T = [m.T for m in wx]
    g["embed"] = np.zeros_like(P["embed"])
    for t in range(T - 1, -1, -1):
        below = None
        for l in range(L - 1, -1, -1):
            d = dh[l]
            if below is not None:
                d += below
            dg = DG[l, t]
            dz, dr, dn = dg[:, :H], dg[:, H:H2], dg[:, H2:]
            np.multiply(d, KN[l, t], out=dn)
            np.multiply(d, KZ[l, t], out=dz)
            drh = dn @ whn_T[l]
            np.multiply(drh, KR[l, t], out=dr)
            dhp = d * Z[l, t]
            drh *= R[l, t]
            dhp += drh
            dhp += dg[:, :H2] @ whzr_T[l]
            below = dg @ wx_T[l] if l > 0 else None
            dh[l] = dhp
        st = batch.starts[t]
        if st.any():
            tot = dh[0][st]
            for l in range(1, L):
                tot = tot + dh[l][st]
            np.add.at(g["embed"], batch.embed_rows[t, st], tot)
        if t > 0:
            dh[L - 1] += d_top[t - 1]
    g["scene"] = sum(dh[l].sum(axis=0) for l in range(L))
    for l in range(L):
        dg2 = DG[l].reshape(TB, 3 * H)
        g[f"gru{l}.b"] = dg2.sum(axis=0)
        if l == 0:
            gw = np.zeros_like(wx[0])
            np.add.at(gw, tokens.reshape(TB), dg2)
        else:
            gw = HO[l - 1].reshape(TB, H).T @ dg2
        g[f"gru{l}.wx"] = gw
        g[f"gru{l}.wh"] = np.concatenate(
            [HP[l].reshape(TB, H).T @ dg2[:, :H2], RH[l].reshape(TB, H).T @ dg2[:, H2:]], axis=1)
    return loss, {k: g[k] for k in P}
