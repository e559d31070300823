"""Per-sentence weight adaptation and the four experiment protocols.

The adaptation rule: score a sentence with the current weights, then take
exactly one SGD step on that sentence's loss before moving on, so every
reported surprisal comes from weights that have never seen the sentence.
Everything else here is protocol bookkeeping built from that rule plus
snapshot/revert:

* `incremental_eval` scores text sentence by sentence, adapting after each.
* `genre_protocol` compares reverting to the base model between texts
  against adapting straight through a genre.
* `learning_rate_sweep` re-runs one adaptation stream from the same base
  snapshot across a learning-rate grid, then evaluates frozen weights.
* `run_forgetting_protocol` measures retention of a first domain after
  adapting to a second.

Divergence (non-finite weights after an update, typically at extreme
learning rates with clipping off) is recorded and propagated, never fatal:
the remaining sentences still get scored and the report carries the flag.

By default adaptation updates are computed without dropout and without
gradient clipping, and the hidden state carries across sentences within a
text and resets at text boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import model as lm
from .analysis import SurprisalRecord, perplexity, records_from_sentence
from .autograd import GradientTape
from .corpus import Text, as_texts
from .model import LstmState, ModelParameters, StepReport
from .reporting import ProtocolReport
from .stimuli import StimulusItem, StimulusList
from .validation import DataInvariantError, check_choice, check_nonnegative

PER_TEXT, NEVER = "per_text", "never"
CARRY, RESET = "carry_within_text", "reset_each_sentence"

DEFAULT_LR_GRID = (0.0, 0.002, 0.02, 0.2, 2.0, 20.0, 200.0)


@dataclass(frozen=True)
class AdaptationConfig:
    """How adaptation steps are taken during a protocol run.

    `learning_rate=0` is the non-adaptive control and leaves weights
    bit-identical. Clipping is off by default during adaptation (unlike
    base training), which is what lets extreme learning rates blow up the
    model instead of being silently rescued.
    """

    learning_rate: float = 20.0
    revert_policy: str = PER_TEXT
    state_policy: str = CARRY
    update_with_dropout: bool = False
    clip_norm: float | None = None

    def __post_init__(self):
        check_nonnegative("learning_rate", self.learning_rate)
        check_choice("revert_policy", self.revert_policy, (PER_TEXT, NEVER))
        check_choice("state_policy", self.state_policy, (CARRY, RESET))

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "revert_policy": self.revert_policy,
            "state_policy": self.state_policy,
            "update_with_dropout": self.update_with_dropout,
            "clip_norm": self.clip_norm,
        }


@dataclass
class Snapshot:
    """Immutable full copy of model weights, used for revert and A/B runs."""

    label: str
    params: ModelParameters
    vocab_fingerprint: bytes

    @classmethod
    def take(cls, model, label: str = "base") -> "Snapshot":
        return cls(label, model.params_.copy(), model.vocab_.fingerprint())

    def restore(self, model) -> None:
        if model.vocab_.fingerprint() != self.vocab_fingerprint:
            raise DataInvariantError(
                f"snapshot {self.label!r} belongs to a different vocabulary: "
                f"{self.vocab_fingerprint.hex()} vs {model.vocab_.fingerprint().hex()}"
            )
        model.restore_parameters(self.params)


@dataclass
class AdaptationOutcome:
    loss: float
    log_probs: np.ndarray
    targets: list[int]
    final_state: LstmState
    step: StepReport | None
    diverged: bool


def adapt_on_sentence(
    model,
    token_ids: Sequence[int],
    config: AdaptationConfig,
    state: LstmState | None = None,
    rng: np.random.Generator | None = None,
) -> AdaptationOutcome:
    """Score one sentence with the current weights, then update them once.

    The returned loss and log-probabilities come from the pre-update
    weights. The gradient is taken on the same pass by default; with
    `update_with_dropout` an extra train-mode pass supplies the gradient
    while the reported scores stay deterministic.
    """
    params, hyper = model.params_, model.hyper_

    with GradientTape() as tape:
        result = lm.forward_sentence(params, hyper, token_ids, state)
        loss_node = lm.sentence_loss(result.log_probs, result.targets, hyper.loss_reduction)

    if config.update_with_dropout and hyper.dropout_rate > 0:
        if rng is None:
            raise ValueError("update_with_dropout needs an rng for the mask draw")
        with GradientTape() as tape:
            noisy = lm.forward_sentence(params, hyper, token_ids, state, train=True, rng=rng)
            noisy_loss = lm.sentence_loss(noisy.log_probs, noisy.targets, hyper.loss_reduction)
        grads = tape.gradients(noisy_loss, params.tensors())
    else:
        grads = tape.gradients(loss_node, params.tensors())

    loss = loss_node.item()
    step = None
    if config.learning_rate > 0:
        step = lm.sgd_step(params, grads, config.learning_rate, config.clip_norm)
    diverged = not math.isfinite(loss) or (step is not None and step.nonfinite_params)
    return AdaptationOutcome(loss, result.log_probs.data, result.targets, result.final_state, step, diverged)


# ---------------------------------------------------------------------------
# Shared text-walking machinery
# ---------------------------------------------------------------------------


@dataclass
class _TextRun:
    records: list[SurprisalRecord] = field(default_factory=list)
    sentence_rows: list[dict] = field(default_factory=list)
    diverged: bool = False


def _run_text(
    work,
    text: Text,
    config: AdaptationConfig,
    *,
    phase: str,
    token_counter: int = 0,
    rng: np.random.Generator | None = None,
) -> _TextRun:
    """Score-then-adapt through one text under the configured state policy."""
    run = _TextRun()
    state = None
    token_index = token_counter
    for sentence_index, tokens in enumerate(text.sentences):
        ids = work.vocab_.encode(tokens)
        outcome = adapt_on_sentence(work, ids, config, state, rng=rng)
        state = outcome.final_state if config.state_policy == CARRY else None
        records = records_from_sentence(
            outcome.log_probs,
            outcome.targets,
            tokens,
            work.vocab_,
            text_id=text.text_id,
            sentence_index=sentence_index,
            start_token_index=token_index,
        )
        token_index += len(outcome.targets)
        run.records.extend(records)
        run.sentence_rows.append(
            {
                "phase": phase,
                "text_id": text.text_id,
                "sentence_index": sentence_index,
                "n_targets": len(outcome.targets),
                "loss": outcome.loss if math.isfinite(outcome.loss) else None,
                "diverged": outcome.diverged,
            }
        )
        run.diverged = run.diverged or outcome.diverged
    return run


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


def incremental_eval(model, text: Text | Sequence[Sequence[str]], config: AdaptationConfig) -> ProtocolReport:
    """Adapt to the first k sentences, score sentence k+1, for all k.

    The first sentence is scored by the unmodified base weights. The report
    carries the adaptive pass and a non-adaptive control pass over the same
    text, each with whole-text perplexity over pre-update scores.
    """
    text = _single_text(text)
    adaptive = _run_text(model.copy_fitted(), text, config, phase="adaptive")
    nonadaptive = _run_text(
        model.copy_fitted(), text, replace(config, learning_rate=0.0), phase="nonadaptive"
    )
    summary = {
        "text_id": text.text_id,
        "n_sentences": len(text.sentences),
        "n_tokens": len(adaptive.records),
        "adaptive_perplexity": perplexity(adaptive.records),
        "nonadaptive_perplexity": perplexity(nonadaptive.records),
        "diverged": adaptive.diverged,
    }
    return ProtocolReport(
        protocol="incremental_eval",
        config=config.to_dict(),
        seed=None,
        summary=summary,
        sentences=adaptive.sentence_rows + nonadaptive.sentence_rows,
        records=adaptive.records + nonadaptive.records,
    )


def _single_text(text) -> Text:
    if isinstance(text, Text):
        if not text.sentences:
            raise DataInvariantError("text has no sentences")
        return text
    return as_texts([text])[0]


def genre_protocol(model, texts_by_genre: dict[str, Sequence[Text]], config: AdaptationConfig) -> ProtocolReport:
    """Compare per-text reversion against continuous adaptation per genre.

    Every sentence of every text is scored exactly once per policy
    (including the first sentence of later texts, which under the
    never-revert policy sees weights carried over from earlier texts).
    """
    if not texts_by_genre:
        raise DataInvariantError("need at least one genre")
    for genre, texts in texts_by_genre.items():
        if len(texts) < 2:
            raise DataInvariantError(f"genre {genre!r} needs at least 2 texts for the revert comparison")

    base = Snapshot.take(model)
    summary: dict = {"genres": {}}
    all_rows: list[dict] = []
    all_records: list[SurprisalRecord] = []
    for genre in sorted(texts_by_genre):
        texts = list(texts_by_genre[genre])
        per_genre: dict = {}
        for policy in (PER_TEXT, NEVER):
            work = model.copy_fitted()
            records: list[SurprisalRecord] = []
            diverged = False
            counter = 0
            for text in texts:
                if policy == PER_TEXT:
                    base.restore(work)
                run = _run_text(work, text, replace(config, revert_policy=policy),
                                phase=f"{genre}/{policy}", token_counter=counter)
                counter += len(run.records)
                records.extend(run.records)
                all_rows.extend(run.sentence_rows)
                diverged = diverged or run.diverged
            per_genre[policy] = perplexity(records)
            per_genre[f"{policy}_diverged"] = diverged
            all_records.extend(records)

        control = model.copy_fitted()
        control_records: list[SurprisalRecord] = []
        for text in texts:
            run = _run_text(control, text, replace(config, learning_rate=0.0),
                            phase=f"{genre}/nonadaptive")
            control_records.extend(run.records)
            all_rows.extend(run.sentence_rows)
        per_genre["nonadaptive"] = perplexity(control_records)
        per_genre["n_tokens"] = len(control_records)
        all_records.extend(control_records)
        summary["genres"][genre] = per_genre

    return ProtocolReport(
        protocol="genre_protocol",
        config=config.to_dict(),
        seed=None,
        summary=summary,
        sentences=all_rows,
        records=all_records,
    )


def _frozen_perplexity(work, sentences: Sequence[Sequence[str]]) -> float:
    """Eval-mode perplexity over isolated sentences (state reset per sentence)."""
    surprisals: list[float] = []
    for tokens in sentences:
        surprisals.extend(work.sentence_surprisals(tokens))
    return perplexity(surprisals)


def _adapt_stream(work, sentences: Sequence[Sequence[str]], config: AdaptationConfig) -> bool:
    """Adapt through a sentence stream; returns the divergence flag."""
    state = None
    diverged = False
    for tokens in sentences:
        outcome = adapt_on_sentence(work, work.vocab_.encode(tokens), config, state)
        state = outcome.final_state if config.state_policy == CARRY else None
        diverged = diverged or outcome.diverged
    return diverged


@dataclass
class ForgettingResult:
    """Held-out first-domain perplexity at the three probe points."""

    before_adaptation: float        # (a)
    after_first_domain: float       # (b)
    after_second_domain: float      # (c)
    diverged: bool = False

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.before_adaptation, self.after_first_domain, self.after_second_domain)


def run_forgetting_protocol(
    model,
    g1_adapt: Sequence[Sequence[str]],
    g2_adapt: Sequence[Sequence[str]],
    g1_heldout: Sequence[Sequence[str]],
    config: AdaptationConfig,
) -> ForgettingResult:
    """Adapt to domain 1, then domain 2, probing held-out domain-1 perplexity.

    Weights are frozen during all three evaluations. The held-out set must
    be disjoint from the domain-1 adaptation sentences.
    """
    adapt_set = {tuple(s) for s in g1_adapt}
    overlap = [s for s in g1_heldout if tuple(s) in adapt_set]
    if overlap:
        raise DataInvariantError(
            f"{len(overlap)} held-out sentences also appear in the adaptation set; "
            f"first: {' '.join(overlap[0])!r}"
        )

    work = model.copy_fitted()
    a = _frozen_perplexity(work, g1_heldout)
    diverged = _adapt_stream(work, g1_adapt, config)
    b = _frozen_perplexity(work, g1_heldout)
    diverged = _adapt_stream(work, g2_adapt, config) or diverged
    c = _frozen_perplexity(work, g1_heldout)
    return ForgettingResult(a, b, c, diverged)


def forgetting_grid(
    model,
    genre_splits: dict[str, tuple[Sequence[Sequence[str]], Sequence[Sequence[str]]]],
    config: AdaptationConfig,
    *,
    include_same_genre: bool = False,
) -> ProtocolReport:
    """Run the forgetting protocol over ordered genre pairs and average.

    `genre_splits` maps genre name to (adaptation sentences, held-out
    sentences). Same-genre pairs are omitted unless requested as a labeled
    control. Averages are arithmetic means over pairs.
    """
    genres = sorted(genre_splits)
    if len(genres) < 2 and not include_same_genre:
        raise DataInvariantError("need at least two genres for ordered pairs")
    pair_rows = []
    results = []
    for g1 in genres:
        for g2 in genres:
            if g1 == g2 and not include_same_genre:
                continue
            result = run_forgetting_protocol(
                model, genre_splits[g1][0], genre_splits[g2][0], genre_splits[g1][1], config
            )
            results.append(result)
            pair_rows.append(
                {
                    "g1": g1,
                    "g2": g2,
                    "control": g1 == g2,
                    "before_adaptation": result.before_adaptation,
                    "after_first_domain": result.after_first_domain,
                    "after_second_domain": result.after_second_domain,
                    "diverged": result.diverged,
                }
            )
    summary = {
        "pairs": pair_rows,
        "averaged": {
            "before_adaptation": float(np.mean([r.before_adaptation for r in results])),
            "after_first_domain": float(np.mean([r.after_first_domain for r in results])),
            "after_second_domain": float(np.mean([r.after_second_domain for r in results])),
        },
        "n_pairs": len(results),
    }
    return ProtocolReport(
        protocol="forgetting",
        config=config.to_dict(),
        seed=None,
        summary=summary,
        sentences=[],
        records=[],
    )


def learning_rate_sweep(
    model,
    adaptation_set: Sequence[Sequence[str]],
    test_sets: dict[str, Sequence[Sequence[str]]],
    config: AdaptationConfig,
    lr_grid: Sequence[float] = DEFAULT_LR_GRID,
) -> list[dict]:
    """Adapt from the base snapshot once per grid point, then test frozen.

    Returns one row per (learning rate, test set) with the frozen-weights
    perplexity and a divergence flag. Learning rate 0 is the baseline bar.
    """
    rows = []
    for lr in lr_grid:
        work = model.copy_fitted()
        diverged = _adapt_stream(work, adaptation_set, replace(config, learning_rate=lr))
        for name in sorted(test_sets):
            ppl = _frozen_perplexity(work, test_sets[name])
            rows.append(
                {
                    "learning_rate": lr,
                    "test_set": name,
                    "perplexity": ppl,
                    "diverged": diverged or not math.isfinite(ppl),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# Stimulus-list runs (garden-path experiment)
# ---------------------------------------------------------------------------


def run_stimulus_list(
    model,
    stimulus_list: StimulusList,
    config: AdaptationConfig,
) -> _TextRun:
    """Adapt through one stimulus list trial by trial, from a fresh model copy.

    Trials are isolated sentences, so the hidden state resets every trial;
    only the weights accumulate adaptation. Records carry list, trial,
    pair, condition and critical-region annotations.
    """
    work = model.copy_fitted()
    run = _TextRun()
    token_index = 0
    for trial_index, item in enumerate(stimulus_list.trials):
        ids = work.vocab_.encode(item.tokens)
        outcome = adapt_on_sentence(work, ids, config, state=None)
        records = records_from_sentence(
            outcome.log_probs,
            outcome.targets,
            list(item.tokens),
            work.vocab_,
            text_id=f"list{stimulus_list.list_id:02d}",
            sentence_index=trial_index,
            start_token_index=token_index,
            condition=item.condition,
            pair_id=item.pair_id if not item.is_filler else None,
            region=item.critical_region,
            list_id=stimulus_list.list_id,
            trial_index=trial_index,
        )
        token_index += len(outcome.targets)
        run.records.extend(records)
        run.sentence_rows.append(
            {
                "phase": "list",
                "text_id": f"list{stimulus_list.list_id:02d}",
                "sentence_index": trial_index,
                "n_targets": len(outcome.targets),
                "loss": outcome.loss if math.isfinite(outcome.loss) else None,
                "diverged": outcome.diverged,
            }
        )
        run.diverged = run.diverged or outcome.diverged
    return run
