"""Supervised training of the GRU policy on (spec, layout) pairs."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoundingBox
from .language import DesignSpec
from .policy import (
    NUM_LAYERS, InputCounters, NonFiniteError, PolicyParams, SequenceBatch,
    forward_backward, param_shapes,
)
from .refinement import Token, VariableId, encode, legal_tokens, variable_order

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TokenStep(NamedTuple):
    var: VariableId
    input: Token
    target: Token
    legal: Tuple[bool, bool, bool]


def encode_example(spec: DesignSpec, layout: Mapping[int, BoundingBox],
                   rng: Optional[np.random.Generator] = None,
                   shuffle: bool = False) -> List[TokenStep]:
    """Teacher-forcing sequence for one layout.

    Each variable contributes its decision string as targets; the inputs
    are START followed by the string shifted right by one.
    """
    steps = []
    for var in variable_order(spec, rng, training=shuffle):
        lo, hi = spec.scene_domain[var.kind]
        value = layout[var.obj].get(var.kind)
        if not lo <= value <= hi:
            raise ValueError(f"{var} = {value} outside its domain [{lo}, {hi}]")
        prev = Token.START
        for t in encode(value, (lo, hi)):
            legal = legal_tokens(lo, hi)
            steps.append(TokenStep(var, prev, t, tuple(d in legal for d in
                                                       (Token.LEFT, Token.RIGHT, Token.STOP))))
            mid = (lo + hi) // 2
            if t == Token.LEFT:
                hi = mid - 1
            elif t == Token.RIGHT:
                lo = mid + 1
            prev = t
    return steps


def nll_loss(probs: Sequence[Sequence[float]], targets: Sequence[int]) -> float:
    """Mean negative log-likelihood of ``targets`` under per-step distributions."""
    if len(probs) != len(targets):
        raise ValueError("probs and targets differ in length")
    if not targets:
        return 0.0
    total = 0.0
    for i, (p, t) in enumerate(zip(probs, targets)):
        pt = float(p[int(t)])
        if pt <= 0.0:
            raise FloatingPointError(f"zero probability for the target at step {i}")
        total -= math.log(pt)
    return total / len(targets)


def make_batch(params: PolicyParams, examples: Sequence[Tuple[DesignSpec, List[TokenStep]]]
               ) -> SequenceBatch:
    B = len(examples)
    T = max(len(seq) for _, seq in examples)
    inputs = np.full((T, B), int(Token.START), dtype=np.int64)
    targets = np.zeros((T, B), dtype=np.int64)
    starts = np.zeros((T, B), dtype=bool)
    rows = np.zeros((T, B), dtype=np.int64)
    legal = np.ones((T, B, 3), dtype=bool)
    weights = np.zeros((T, B))
    for b, (spec, seq) in enumerate(examples):
        types = {o.id: o.type_name for o in spec.objects}
        n = len(seq)
        for t, s in enumerate(seq):
            inputs[t, b] = int(s.input)
            targets[t, b] = int(s.target)
            if s.input == Token.START:
                starts[t, b] = True
                rows[t, b] = params.embedding_row(types[s.var.obj], s.var.kind)
            legal[t, b] = s.legal
        weights[:n, b] = 1.0 / (n * B)
    return SequenceBatch(inputs, targets, starts, rows, legal, weights)


class Adam:
    def __init__(self, params: PolicyParams, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}

    def update(self, params: PolicyParams, grads: Dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params.arrays[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch: int = 8
    epochs: int = 100
    teacher_forcing_p: float = 0.5
    seed: int = 0
    clip_norm: float = 5.0
    shuffle_objects: bool = True


@dataclass
class TrainResult:
    params: PolicyParams
    losses: List[float]
    epochs_done: int
    counters: InputCounters = field(default_factory=InputCounters)
    optimizer: Optional[Adam] = None

    def loss_log(self, first_epoch: int = 1) -> str:
        return "".join(f"{first_epoch + i},{l:.6f}\n" for i, l in enumerate(self.losses))


Dataset = Sequence[Tuple[DesignSpec, Mapping[int, BoundingBox]]]


def train(dataset: Dataset, params: PolicyParams, config: TrainConfig = TrainConfig(),
          *, optimizer: Optional[Adam] = None, start_epoch: int = 0,
          callback=None) -> TrainResult:
    """Minibatch Adam on the NLL of decision strings.

    ``callback(epoch, mean_loss, params)`` runs after each epoch; returning
    True stops training early.
    """
    if not dataset:
        raise ValueError("empty dataset")
    params = params.copy()
    opt = optimizer if optimizer is not None else Adam(params, lr=config.lr)
    rng = np.random.default_rng([config.seed, start_epoch])
    counters = InputCounters()
    losses = []
    n = len(dataset)
    epoch = start_epoch
    for epoch in range(start_epoch, start_epoch + config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch):
            chunk = [dataset[i] for i in order[s:s + config.batch]]
            encoded = [(spec, encode_example(spec, layout, rng, config.shuffle_objects))
                       for spec, layout in chunk]
            batch = make_batch(params, encoded)
            loss, grads = forward_backward(params, batch, config.teacher_forcing_p, rng, counters)
            if not math.isfinite(loss):
                raise NonFiniteError(f"loss became {loss} in epoch {epoch + 1}")
            clip_global_norm(grads, config.clip_norm)
            opt.update(params, grads)
            total += loss * len(chunk)
        mean = total / n
        losses.append(mean)
        log.info("epoch %d mean nll %.5f", epoch + 1, mean)
        if callback is not None and callback(epoch + 1, mean, params):
            epoch += 1
            break
    else:
        epoch = start_epoch + config.epochs
    return TrainResult(params, losses, epoch, counters, opt)


def dataset_loss(params: PolicyParams, dataset: Dataset, batch: int = 64) -> float:
    """Teacher-forced mean NLL over a dataset (no shuffling of objects)."""
    total = 0.0
    for s in range(0, len(dataset), batch):
        chunk = dataset[s:s + batch]
        encoded = [(spec, encode_example(spec, layout)) for spec, layout in chunk]
        loss, _ = forward_backward(params, make_batch(params, encoded), 1.0, need_grad=False)
        total += loss * len(chunk)
    return total / len(dataset)


# --------------------------------------------------------------------------
# checkpoints


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def save_checkpoint(params: PolicyParams, path, *, epochs_done: int = 0,
                    optimizer: Optional[Adam] = None):
    """JSON container of named flat arrays; floats use shortest round-trip repr."""
    doc = {
        "format_version": FORMAT_VERSION,
        "hidden_size": params.hidden_size,
        "num_layers": params.num_layers,
        "class_vocab": list(params.class_vocab),
        "epochs_done": epochs_done,
        "arrays": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                   for k, v in params.arrays.items()},
    }
    if optimizer is not None:
        doc["adam"] = {
            "t": optimizer.t, "lr": optimizer.lr,
            "m": {k: v.ravel().tolist() for k, v in optimizer.m.items()},
            "v": {k: v.ravel().tolist() for k, v in optimizer.v.items()},
        }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, allow_nan=False)
    os.replace(tmp, path)


def _read(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError(f"malformed checkpoint {path}: missing header")
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format {doc['format_version']} is not supported (expected {FORMAT_VERSION})")
    return doc


def load_checkpoint(path) -> PolicyParams:
    return load_training_state(path)[0]


def load_training_state(path) -> Tuple[PolicyParams, int, Optional[Adam]]:
    doc = _read(path)
    try:
        H = int(doc["hidden_size"])
        vocab = tuple(doc["class_vocab"])
        if int(doc["num_layers"]) != NUM_LAYERS:
            raise CheckpointError(f"expected {NUM_LAYERS} layers, got {doc['num_layers']}")
        expected = param_shapes(H, len(vocab))
        arrays = {}
        for name, shape in expected.items():
            entry = doc["arrays"][name]
            if tuple(entry["shape"]) != shape:
                raise CheckpointError(f"array {name} has shape {entry['shape']}, expected {shape}")
            arrays[name] = np.array(entry["data"], dtype=np.float64).reshape(shape)
        params = PolicyParams(H, vocab, arrays)
        opt = None
        if "adam" in doc:
            opt = Adam(params, lr=doc["adam"]["lr"])
            opt.t = int(doc["adam"]["t"])
            for k in expected:
                opt.m[k] = np.array(doc["adam"]["m"][k], dtype=np.float64).reshape(expected[k])
                opt.v[k] = np.array(doc["adam"]["v"][k], dtype=np.float64).reshape(expected[k])
        return params, int(doc.get("epochs_done", 0)), opt
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint {path}: {exc!r}") from None
