"""lmadapt: a desk-scale laboratory for per-sentence adaptive LSTM language models.

The central object is :class:`~lmadapt.estimator.AdaptiveLSTM`, a
scikit-learn style estimator that trains an LSTM language model from
scratch and then adapts it with one gradient step per scored sentence.
Around it sit the experiment protocols (incremental evaluation, genre
revert comparison, learning-rate sweeps, domain-retention audits), the
synthetic stimulus generators, and the surprisal/regression analysis layer.
"""

__version__ = "0.1.0"

from .adaptation import (
    AdaptationConfig,
    Snapshot,
    adapt_on_sentence,
    forgetting_grid,
    genre_protocol,
    incremental_eval,
    learning_rate_sweep,
    run_forgetting_protocol,
    run_stimulus_list,
)
from .analysis import (
    RegressionResult,
    SurprisalRecord,
    disambiguation_penalty,
    export_lmem_table,
    gardenpath_series,
    ols_fit,
    penalty_trend,
    perplexity,
    region_mean_surprisal,
    residualize_by_order,
    surprisal_from_logprob,
)
from .autograd import GradientTape, Tensor, backward, finite_difference_grad
from .corpus import Text, Vocabulary, build_vocab, read_corpus, tokenize, write_corpus
from .estimator import AdaptiveLSTM
from .model import (
    Checkpoint,
    HyperParams,
    ModelParameters,
    forward_sentence,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
    sentence_loss,
    sgd_step,
    train_base_model,
)
from .stimuli import (
    StimulusItem,
    StimulusList,
    assemble_dative_adaptation_set,
    compile_stimulus_lists,
    generate_dative_items,
    generate_garden_path_items,
)

__all__ = [
    "AdaptationConfig",
    "AdaptiveLSTM",
    "Checkpoint",
    "GradientTape",
    "HyperParams",
    "ModelParameters",
    "RegressionResult",
    "Snapshot",
    "StimulusItem",
    "StimulusList",
    "SurprisalRecord",
    "Tensor",
    "Text",
    "Vocabulary",
    "adapt_on_sentence",
    "assemble_dative_adaptation_set",
    "backward",
    "build_vocab",
    "compile_stimulus_lists",
    "disambiguation_penalty",
    "export_lmem_table",
    "finite_difference_grad",
    "forgetting_grid",
    "forward_sentence",
    "gardenpath_series",
    "generate_dative_items",
    "generate_garden_path_items",
    "genre_protocol",
    "incremental_eval",
    "init_parameters",
    "learning_rate_sweep",
    "load_checkpoint",
    "ols_fit",
    "penalty_trend",
    "perplexity",
    "read_corpus",
    "region_mean_surprisal",
    "residualize_by_order",
    "run_forgetting_protocol",
    "run_stimulus_list",
    "save_checkpoint",
    "sentence_loss",
    "sgd_step",
    "surprisal_from_logprob",
    "tokenize",
    "train_base_model",
    "write_corpus",
]
