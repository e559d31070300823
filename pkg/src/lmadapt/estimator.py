"""Scikit-learn style estimator facade over the adaptive LSTM language model.

`AdaptiveLSTM` is the package's main entry point: `fit` trains a base model
from scratch on tokenized texts, `partial_fit` performs one per-sentence
adaptation step (score first, then update), and the scoring methods expose
log-probabilities, surprisals and perplexity. Inheriting from sklearn's
`BaseEstimator` provides `get_params`/`set_params`, so the model drops into
pipelines and grid searches that treat documents as samples.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import model as lm
from .corpus import Text, Vocabulary, as_texts, build_vocab, encode_text
from .model import Checkpoint, HyperParams, ModelParameters


class AdaptiveLSTM(BaseEstimator):
    """LSTM language model with one-gradient-step-per-sentence adaptation.

    Parameters mirror `HyperParams` plus training control. After `fit` (or
    `from_checkpoint`) the instance carries `params_`, `vocab_`, `hyper_`
    and a running hidden `state_` used by `partial_fit`.
    """

    def __init__(
        self,
        num_layers: int = 2,
        hidden_size: int = 64,
        embed_size: int = 64,
        dropout_rate: float = 0.2,
        clip_norm: float | None = 0.25,
        learning_rate: float = 20.0,
        loss_reduction: str = "mean",
        precision: str = "fp32",
        epochs: int = 40,
        patience: int = 3,
        min_count: int = 1,
        validation_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.num_layers = num_layers
        self.hidden_size = hidden_size
        self.embed_size = embed_size
        self.dropout_rate = dropout_rate
        self.clip_norm = clip_norm
        self.learning_rate = learning_rate
        self.loss_reduction = loss_reduction
        self.precision = precision
        self.epochs = epochs
        self.patience = patience
        self.min_count = min_count
        self.validation_fraction = validation_fraction
        self.seed = seed

    # -- construction ------------------------------------------------------

    def _hyper(self) -> HyperParams:
        return HyperParams(
            num_layers=self.num_layers,
            hidden_size=self.hidden_size,
            embed_size=self.embed_size,
            dropout_rate=self.dropout_rate,
            clip_norm=self.clip_norm,
            base_learning_rate=self.learning_rate,
            seed=self.seed,
            loss_reduction=self.loss_reduction,
            precision=self.precision,
        )

    def fit(self, texts, validation_texts=None, vocabulary: Vocabulary | None = None) -> "AdaptiveLSTM":
        """Train a base model on tokenized texts.

        `texts` is a sequence of `Text` objects or nested token lists. When
        no validation split is supplied, a deterministic tail fraction of
        the texts (at least one) is held out.
        """
        texts = as_texts(texts)
        hyper = self._hyper()
        vocab = vocabulary if vocabulary is not None else build_vocab(texts, self.min_count)

        if validation_texts is not None:
            train_texts, valid_texts = texts, as_texts(validation_texts)
        else:
            if len(texts) < 2:
                raise ValueError("need at least 2 texts to split off a validation set; pass validation_texts")
            n_valid = max(1, int(round(self.validation_fraction * len(texts))))
            train_texts, valid_texts = texts[:-n_valid], texts[-n_valid:]

        encoded_train = [encode_text(t, vocab) for t in train_texts]
        encoded_valid = [encode_text(t, vocab) for t in valid_texts]
        checkpoint = lm.train_base_model(
            encoded_train, encoded_valid, vocab, hyper, epochs=self.epochs, patience=self.patience
        )
        self._bind(checkpoint, vocab)
        return self

    def _bind(self, checkpoint: Checkpoint, vocab: Vocabulary) -> None:
        self.vocab_ = vocab
        self.hyper_ = checkpoint.hyper
        self.params_ = checkpoint.params
        self.checkpoint_metadata_ = checkpoint.metadata
        self.state_ = lm.zero_state(checkpoint.hyper)
        self.n_adaptation_steps_ = 0
        self.diverged_ = False

    @classmethod
    def from_fitted(cls, checkpoint: Checkpoint, vocabulary: Vocabulary) -> "AdaptiveLSTM":
        """Wrap an in-memory checkpoint (e.g. fresh from train_base_model)."""
        hp = checkpoint.hyper
        est = cls(
            num_layers=hp.num_layers,
            hidden_size=hp.hidden_size,
            embed_size=hp.embed_size,
            dropout_rate=hp.dropout_rate,
            clip_norm=hp.clip_norm,
            learning_rate=hp.base_learning_rate,
            loss_reduction=hp.loss_reduction,
            precision=hp.precision,
            seed=hp.seed,
        )
        est._bind(checkpoint, vocabulary)
        return est

    @classmethod
    def from_checkpoint(cls, path, vocabulary: Vocabulary) -> "AdaptiveLSTM":
        return cls.from_fitted(lm.load_checkpoint(path, vocabulary), vocabulary)

    def save(self, path, metadata: dict | None = None) -> None:
        self._check_fitted()
        checkpoint = Checkpoint(
            lm.CHECKPOINT_VERSION,
            self.hyper_,
            self.vocab_.fingerprint(),
            self.params_,
            metadata if metadata is not None else self.checkpoint_metadata_,
        )
        lm.save_checkpoint(checkpoint, path)

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("this AdaptiveLSTM instance is not fitted yet; call fit or from_checkpoint")

    # -- state and snapshots ------------------------------------------------

    def reset_state(self) -> "AdaptiveLSTM":
        """Zero the carried hidden state (call at text boundaries)."""
        self._check_fitted()
        self.state_ = lm.zero_state(self.hyper_)
        return self

    def copy_fitted(self) -> "AdaptiveLSTM":
        """An independent fitted copy: same hyperparameters, copied weights."""
        self._check_fitted()
        dup = AdaptiveLSTM(**self.get_params())
        checkpoint = Checkpoint(
            lm.CHECKPOINT_VERSION, self.hyper_, self.vocab_.fingerprint(), self.params_.copy(), dict(self.checkpoint_metadata_)
        )
        dup._bind(checkpoint, self.vocab_)
        return dup

    def parameters_snapshot(self) -> ModelParameters:
        self._check_fitted()
        return self.params_.copy()

    def restore_parameters(self, snapshot: ModelParameters) -> "AdaptiveLSTM":
        self._check_fitted()
        self.params_.load_values(snapshot)
        self.diverged_ = not self.params_.all_finite()
        return self

    # -- scoring -------------------------------------------------------------

    def _encode(self, sentence: Sequence[str] | Sequence[int]) -> list[int]:
        if sentence and isinstance(sentence[0], str):
            return self.vocab_.encode(sentence)
        return list(sentence)

    def score_sentence(self, sentence, state=None, carry_state: bool = False):
        """Eval-mode log-probabilities for one sentence.

        Returns (log_probs, targets, final_state) where log_probs is the
        (T, V) array over targets [w1..wn, EOS]. With `carry_state=True`
        the estimator's own running state is used and advanced.
        """
        self._check_fitted()
        ids = self._encode(sentence)
        use_state = self.state_ if carry_state else state
        result = lm.forward_sentence(self.params_, self.hyper_, ids, use_state)
        if carry_state:
            self.state_ = result.final_state
        return result.log_probs.data, result.targets, result.final_state

    def sentence_surprisals(self, sentence) -> np.ndarray:
        """Per-target surprisal in nats for an isolated sentence (zero state)."""
        log_probs, targets, _ = self.score_sentence(sentence)
        return -log_probs[np.arange(len(targets)), targets]

    def perplexity(self, texts) -> float:
        """Corpus perplexity with frozen weights, state reset per text."""
        self._check_fitted()
        encoded = [encode_text(t, self.vocab_) for t in as_texts(texts)]
        return lm._eval_perplexity(self.params_, self.hyper_, encoded)

    def score(self, texts) -> float:
        """sklearn-style goodness score: mean per-token log-likelihood (higher is better)."""
        return -float(np.log(self.perplexity(texts)))

    # -- adaptation -----------------------------------------------------------

    def partial_fit(self, sentence, learning_rate: float | None = None) -> "AdaptiveLSTM":
        """One adaptation step: score the sentence, then update the weights.

        Uses the carried hidden state; the loss (from pre-update weights)
        lands in `last_loss_`. Matches the experiment default: no dropout
        and no clipping during adaptation.
        """
        from .adaptation import AdaptationConfig, adapt_on_sentence

        self._check_fitted()
        lr = self.learning_rate if learning_rate is None else learning_rate
        config = AdaptationConfig(learning_rate=lr)
        outcome = adapt_on_sentence(self, self._encode(sentence), config, state=self.state_)
        self.state_ = outcome.final_state
        self.last_loss_ = outcome.loss
        self.n_adaptation_steps_ += 1
        if outcome.diverged:
            self.diverged_ = True
        return self

    @property
    def vocab_size_(self) -> int:
        self._check_fitted()
        return len(self.vocab_)
