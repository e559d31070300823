"""The LSTM language model: parameters, forward scoring, SGD training, checkpoints.

Conventions fixed here (serialization and tests depend on them):

* Gate order inside each stacked 4h block is (input, forget, candidate,
  output), i.e. rows [0,h) input gate, [h,2h) forget gate, [2h,3h)
  candidate, [3h,4h) output gate.
* Every sentence is scored with a begin-of-sequence token prepended to the
  inputs and an end-of-sequence token appended to the targets, so the first
  real word has a conditional distribution and sentence termination is a
  prediction like any other.
* Dropout (train mode only) applies to the embedding output and between
  layers, never on the recurrent path.
* Hidden state is a plain value: callers decide whether to carry it across
  sentences or reset it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import GradientTape, Tensor
from .corpus import BOS_ID, EOS_ID, EncodedText, Vocabulary
from .validation import (
    check_choice,
    check_count,
    check_nonnegative,
    check_probability,
    check_token_ids,
)

CHECKPOINT_MAGIC = b"LMADCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HyperParams:
    """Architecture and optimization settings.

    `clip_norm=None` disables gradient clipping. `precision` selects fp64
    for verification suites or fp32 for experiment runs. `loss_reduction`
    chooses mean or sum per-token negative log-likelihood as the sentence
    loss; mean keeps the effective step size independent of sentence length
    and is the default.
    """

    num_layers: int = 2
    hidden_size: int = 64
    embed_size: int = 64
    dropout_rate: float = 0.2
    clip_norm: float | None = 0.25
    base_learning_rate: float = 20.0
    seed: int = 0
    loss_reduction: str = "mean"
    precision: str = "fp32"

    def __post_init__(self):
        check_count("num_layers", self.num_layers, minimum=1)
        check_count("hidden_size", self.hidden_size, minimum=1)
        check_count("embed_size", self.embed_size, minimum=1)
        check_probability("dropout_rate", self.dropout_rate)
        if self.clip_norm is not None:
            check_nonnegative("clip_norm", self.clip_norm)
        check_nonnegative("base_learning_rate", self.base_learning_rate)
        check_choice("loss_reduction", self.loss_reduction, ("mean", "sum"))
        ag.resolve_dtype(self.precision)

    @property
    def dtype(self) -> np.dtype:
        return ag.resolve_dtype(self.precision)

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "hidden_size": self.hidden_size,
            "embed_size": self.embed_size,
            "dropout_rate": self.dropout_rate,
            "clip_norm": self.clip_norm,
            "base_learning_rate": self.base_learning_rate,
            "seed": self.seed,
            "loss_reduction": self.loss_reduction,
            "precision": self.precision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**d)


@dataclass
class LayerWeights:
    input_w: Tensor  # (4h, input_dim)
    recur_w: Tensor  # (4h, h)
    bias: Tensor     # (1, 4h)


class ModelParameters:
    """All trainable weights of the embedding/LSTM/softmax stack."""

    def __init__(self, embedding: Tensor, layers: list[LayerWeights], out_w: Tensor, out_b: Tensor):
        self.embedding = embedding    # (V, d)
        self.layers = layers
        self.out_w = out_w            # (V, h)
        self.out_b = out_b            # (1, V)

    @property
    def vocab_size(self) -> int:
        return self.embedding.rows

    @property
    def dtype(self) -> np.dtype:
        return self.embedding.dtype

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """All weight tensors in the documented serialization order."""
        named = [("embedding", self.embedding)]
        for i, layer in enumerate(self.layers):
            named.append((f"layer{i}.input_w", layer.input_w))
            named.append((f"layer{i}.recur_w", layer.recur_w))
            named.append((f"layer{i}.bias", layer.bias))
        named.append(("out_w", self.out_w))
        named.append(("out_b", self.out_b))
        return named

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.embedding.copy(),
            [LayerWeights(l.input_w.copy(), l.recur_w.copy(), l.bias.copy()) for l in self.layers],
            self.out_w.copy(),
            self.out_b.copy(),
        )

    def load_values(self, other: "ModelParameters") -> None:
        """Overwrite weights in place with copies of `other`'s (shapes must match)."""
        mine_named, theirs_named = self.named_tensors(), other.named_tensors()
        if len(mine_named) != len(theirs_named):
            raise ValueError(f"parameter structure mismatch: {len(mine_named)} vs {len(theirs_named)} tensors")
        for (name, mine), (_, theirs) in zip(mine_named, theirs_named):
            if mine.shape != theirs.shape:
                raise ValueError(f"shape mismatch for {name}: {mine.shape} vs {theirs.shape}")
            mine.data[...] = theirs.data

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self.tensors())

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors())


def init_parameters(hyper: HyperParams, vocab_size: int) -> ModelParameters:
    """Draw all weights uniformly from [-0.1, 0.1], deterministically from the seed."""
    check_count("vocab_size", vocab_size, minimum=1)
    rng = np.random.default_rng(hyper.seed)
    dtype = hyper.dtype
    h, d, v = hyper.hidden_size, hyper.embed_size, vocab_size

    def draw(rows, cols):
        return Tensor(rng.uniform(-0.1, 0.1, size=(rows, cols)), dtype=dtype)

    embedding = draw(v, d)
    layers = []
    for layer_index in range(hyper.num_layers):
        input_dim = d if layer_index == 0 else h
        layers.append(LayerWeights(draw(4 * h, input_dim), draw(4 * h, h), draw(1, 4 * h)))
    return ModelParameters(embedding, layers, draw(v, h), draw(1, v))


@dataclass
class LstmState:
    """Per-layer (hidden, cell) row vectors."""

    layers: list[tuple[Tensor, Tensor]]

    def copy(self) -> "LstmState":
        return LstmState([(h.copy(), c.copy()) for h, c in self.layers])


def zero_state(hyper: HyperParams) -> LstmState:
    h = hyper.hidden_size
    return LstmState(
        [
            (Tensor(np.zeros((1, h)), dtype=hyper.dtype), Tensor(np.zeros((1, h)), dtype=hyper.dtype))
            for _ in range(hyper.num_layers)
        ]
    )


def lstm_step(
    layer: LayerWeights,
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    hidden_size: int,
    input_w_t: Tensor | None = None,
    recur_w_t: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """One LSTM timestep for one layer on row vectors.

    Gates follow the fixed (i, f, g, o) block order; the new cell is
    f*c + i*g with sigmoid gates and tanh candidate, and the new hidden is
    o*tanh(c'). Pass pre-transposed weights to avoid re-transposing inside
    a token loop.
    """
    wx_t = input_w_t if input_w_t is not None else ag.transpose(layer.input_w)
    wh_t = recur_w_t if recur_w_t is not None else ag.transpose(layer.recur_w)
    pre = ag.add(ag.add(ag.matmul(x, wx_t), ag.matmul(h_prev, wh_t)), layer.bias)
    h = hidden_size
    i_gate = ag.sigmoid(ag.slice_cols(pre, 0, h))
    f_gate = ag.sigmoid(ag.slice_cols(pre, h, 2 * h))
    g_cand = ag.tanh(ag.slice_cols(pre, 2 * h, 3 * h))
    o_gate = ag.sigmoid(ag.slice_cols(pre, 3 * h, 4 * h))
    c_new = ag.add(ag.mul(f_gate, c_prev), ag.mul(i_gate, g_cand))
    h_new = ag.mul(o_gate, ag.tanh(c_new))
    return h_new, c_new


@dataclass
class ForwardResult:
    log_probs: Tensor          # (T, V) rows align with `targets`
    targets: list[int]
    final_state: LstmState
    input_ids: list[int] = field(repr=False, default_factory=list)


def forward_sentence(
    params: ModelParameters,
    hyper: HyperParams,
    tokens: Sequence[int],
    state: LstmState | None = None,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardResult:
    """Score one sentence, returning per-target log-probability rows.

    `tokens` are the sentence's content ids (no markers); inputs become
    [BOS, w1..wn] and targets [w1..wn, EOS], so row i of the result is the
    distribution over position i's target given strictly earlier tokens and
    the incoming state. Dropout masks are drawn from `rng` in train mode
    only; eval mode is deterministic.
    """
    tokens = check_token_ids(tokens, params.vocab_size)
    if not tokens:
        raise ValueError("cannot score an empty sentence")
    if train and hyper.dropout_rate > 0 and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")

    state = state if state is not None else zero_state(hyper)
    input_ids = [BOS_ID] + list(tokens)
    targets = list(tokens) + [EOS_ID]
    keep = 1.0 - hyper.dropout_rate
    dtype = hyper.dtype

    def dropout(t: Tensor) -> Tensor:
        if not train or hyper.dropout_rate == 0:
            return t
        mask = (rng.random(t.shape) < keep).astype(dtype) / dtype.type(keep)
        return ag.mul(t, Tensor.wrap(mask))

    wx_ts = [ag.transpose(l.input_w) for l in params.layers]
    wh_ts = [ag.transpose(l.recur_w) for l in params.layers]

    hc = list(state.layers)
    top_rows: list[Tensor] = []
    for token_id in input_ids:
        x = dropout(ag.take_rows(params.embedding, [token_id]))
        for li, layer in enumerate(params.layers):
            h_new, c_new = lstm_step(
                layer, x, hc[li][0], hc[li][1], hyper.hidden_size, wx_ts[li], wh_ts[li]
            )
            hc[li] = (h_new, c_new)
            x = dropout(h_new) if li < len(params.layers) - 1 else h_new
        top_rows.append(x)

    hidden = ag.concat_rows(top_rows)                               # (T, h)
    logits = ag.add(ag.matmul(hidden, ag.transpose(params.out_w)), params.out_b)
    log_probs = ag.log_softmax(logits)                              # (T, V)
    return ForwardResult(log_probs, targets, LstmState(hc), input_ids)


def sentence_loss(log_probs: Tensor, targets: Sequence[int], reduction: str = "mean") -> Tensor:
    """Negative log-likelihood of the realized targets (mean or sum per token)."""
    check_choice("reduction", reduction, ("mean", "sum"))
    if log_probs.rows != len(targets):
        raise ValueError(f"{log_probs.rows} log-prob rows vs {len(targets)} targets")
    picked = ag.take_items(log_probs, targets)
    reduced = ag.mean_all(picked) if reduction == "mean" else ag.sum_all(picked)
    return ag.scale(reduced, -1.0)


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------


@dataclass
class StepReport:
    grad_norm: float
    clip_scale: float
    nonfinite_grad: bool
    nonfinite_params: bool
    skipped: bool = False


def global_grad_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))


def sgd_step(
    params: ModelParameters,
    grads: Sequence[np.ndarray],
    learning_rate: float,
    clip_norm: float | None = None,
) -> StepReport:
    """Apply one SGD update in place: theta <- theta - lr * g.

    Clipping rescales the whole gradient so its global norm is at most
    `clip_norm`. With clipping off, a non-finite gradient still updates the
    weights (the report flags it); with clipping on it would poison every
    tensor through the norm, so the update is skipped and flagged instead.
    `learning_rate=0` leaves the weights bit-identical.
    """
    check_nonnegative("learning_rate", learning_rate)
    tensors = params.tensors()
    if len(grads) != len(tensors):
        raise ValueError(f"{len(grads)} gradients for {len(tensors)} parameter tensors")

    norm = global_grad_norm(grads)
    nonfinite = not np.isfinite(norm)
    scale = 1.0
    if clip_norm is not None and clip_norm > 0:
        if nonfinite:
            return StepReport(norm, 0.0, True, not params.all_finite(), skipped=True)
        if norm > clip_norm:
            scale = clip_norm / norm

    if learning_rate > 0:
        for t, g in zip(tensors, grads):
            t.data -= (t.dtype.type(learning_rate) * t.dtype.type(scale)) * g
    return StepReport(norm, scale, nonfinite, not params.all_finite())


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    train_perplexity: float
    valid_perplexity: float


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_perplexity: float = float("inf")
    stopped_early: bool = False


def _eval_perplexity(params: ModelParameters, hyper: HyperParams, texts: Sequence[EncodedText]) -> float:
    total_nll = 0.0
    total_tokens = 0
    for text in texts:
        state = zero_state(hyper)
        for sent in text.sentences:
            result = forward_sentence(params, hyper, sent, state)
            state = result.final_state
            picked = result.log_probs.data[np.arange(len(result.targets)), result.targets]
            total_nll -= float(picked.sum())
            total_tokens += len(result.targets)
    return float(np.exp(total_nll / total_tokens))


def train_base_model(
    train_texts: Sequence[EncodedText],
    valid_texts: Sequence[EncodedText],
    vocab: Vocabulary,
    hyper: HyperParams,
    *,
    epochs: int = 40,
    patience: int = 3,
) -> "Checkpoint":
    """Train from scratch with per-sentence SGD and epoch-level early stopping.

    Texts are visited in a seeded shuffled order each epoch; hidden state
    carries across sentences within a text and resets between texts. The
    checkpoint holds the best-validation weights, and its metadata records
    the per-epoch train/validation perplexities.
    """
    if not train_texts or not any(t.sentences for t in train_texts):
        raise ValueError("training corpus is empty")
    if not valid_texts:
        raise ValueError("validation corpus is empty")
    check_count("epochs", epochs, minimum=1)
    check_count("patience", patience, minimum=1)

    params = init_parameters(hyper, len(vocab))
    rng = np.random.default_rng(hyper.seed + 1)
    log = TrainingLog()
    best_params = params.copy()
    since_best = 0

    for epoch in range(epochs):
        order = rng.permutation(len(train_texts))
        epoch_nll = 0.0
        epoch_tokens = 0
        for text_index in order:
            text = train_texts[text_index]
            state = zero_state(hyper)
            for sent in text.sentences:
                with GradientTape() as tape:
                    result = forward_sentence(params, hyper, sent, state, train=True, rng=rng)
                    loss = sentence_loss(result.log_probs, result.targets, hyper.loss_reduction)
                grads = tape.gradients(loss, params.tensors())
                sgd_step(params, grads, hyper.base_learning_rate, hyper.clip_norm)
                state = result.final_state
                picked = result.log_probs.data[np.arange(len(result.targets)), result.targets]
                epoch_nll -= float(picked.sum())
                epoch_tokens += len(result.targets)
        train_ppl = float(np.exp(epoch_nll / epoch_tokens))
        valid_ppl = _eval_perplexity(params, hyper, valid_texts)
        log.epochs.append(EpochStats(epoch, train_ppl, valid_ppl))

        if valid_ppl < log.best_valid_perplexity:
            log.best_valid_perplexity = valid_ppl
            log.best_epoch = epoch
            best_params = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                log.stopped_early = True
                break

    metadata = {
        "epochs_trained": len(log.epochs),
        "best_epoch": log.best_epoch,
        "best_valid_perplexity": log.best_valid_perplexity,
        "stopped_early": log.stopped_early,
        "history": [
            {"epoch": e.epoch, "train_perplexity": e.train_perplexity, "valid_perplexity": e.valid_perplexity}
            for e in log.epochs
        ],
    }
    return Checkpoint(CHECKPOINT_VERSION, hyper, vocab.fingerprint(), best_params, metadata)


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, corrupted, or does not match."""


@dataclass
class Checkpoint:
    format_version: int
    hyper: HyperParams
    vocab_fingerprint: bytes
    params: ModelParameters
    metadata: dict

    def with_params(self, params: ModelParameters) -> "Checkpoint":
        return replace(self, params=params)


_WIRE_DTYPES = {"fp32": "<f4", "fp64": "<f8"}


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Write the versioned binary checkpoint format.

    Layout: 8 magic bytes, u32 format version, u32 header length, UTF-8
    JSON header (hyperparams, metadata, tensor manifest, wire dtype), the
    32-byte vocabulary fingerprint, then each tensor's little-endian floats
    in manifest order. fp32 models store 32-bit floats; fp64 models store
    64-bit floats so that a round trip is always bit-exact.
    """
    wire = _WIRE_DTYPES[checkpoint.hyper.precision]
    manifest = [(name, t.rows, t.cols) for name, t in checkpoint.params.named_tensors()]
    header = json.dumps(
        {
            "hyper": checkpoint.hyper.to_dict(),
            "metadata": checkpoint.metadata,
            "manifest": manifest,
            "wire_dtype": wire,
        },
        sort_keys=True,
    ).encode("utf-8")
    if len(checkpoint.vocab_fingerprint) != 32:
        raise CheckpointError("vocabulary fingerprint must be 32 bytes")

    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", checkpoint.format_version, len(header))
    blob += header
    blob += checkpoint.vocab_fingerprint
    for _, t in checkpoint.params.named_tensors():
        blob += np.ascontiguousarray(t.data, dtype=wire).tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path, vocabulary: Vocabulary | None = None) -> Checkpoint:
    """Read a checkpoint, verifying magic, version, structure, and fingerprint.

    If `vocabulary` is given, its fingerprint must match the stored one; a
    mismatch is rejected reporting both digests. Truncated or malformed
    files raise CheckpointError without producing a partial model.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 8 or raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", raw, offset)
    offset += 8
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: format version mismatch: file has {version}, this build reads {CHECKPOINT_VERSION}"
        )
    if len(raw) < offset + header_len + 32:
        raise CheckpointError(f"{path}: truncated checkpoint (header incomplete)")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
        hyper = HyperParams.from_dict(header["hyper"])
        manifest = header["manifest"]
        wire = header["wire_dtype"]
        metadata = header["metadata"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header: {exc}") from exc
    if wire not in _WIRE_DTYPES.values():
        raise CheckpointError(f"{path}: unknown wire dtype {wire!r}")
    offset += header_len
    fingerprint = raw[offset : offset + 32]
    offset += 32
    if vocabulary is not None and vocabulary.fingerprint() != fingerprint:
        raise CheckpointError(
            f"{path}: vocabulary fingerprint mismatch: checkpoint has "
            f"{fingerprint.hex()}, supplied vocabulary has {vocabulary.fingerprint().hex()}"
        )

    itemsize = np.dtype(wire).itemsize
    tensors: dict[str, Tensor] = {}
    for name, rows, cols in manifest:
        nbytes = rows * cols * itemsize
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"{path}: truncated checkpoint (tensor {name!r} incomplete)")
        arr = np.frombuffer(raw, dtype=wire, count=rows * cols, offset=offset).reshape(rows, cols)
        tensors[name] = Tensor.wrap(arr.astype(hyper.dtype))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")

    try:
        layers = []
        for i in range(hyper.num_layers):
            layers.append(
                LayerWeights(tensors[f"layer{i}.input_w"], tensors[f"layer{i}.recur_w"], tensors[f"layer{i}.bias"])
            )
        params = ModelParameters(tensors["embedding"], layers, tensors["out_w"], tensors["out_b"])
    except KeyError as exc:
        raise CheckpointError(f"{path}: checkpoint manifest is missing tensor {exc}") from exc
    return Checkpoint(version, hyper, fingerprint, params, metadata)
