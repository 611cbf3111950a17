"""Self-evaluation scores for masked-diffusion sequence models.

The core idea: feed a model its own fully unmasked output and average the
log-probability of regenerating each token in place. That score costs one
forward pass, tracks sequence quality, ranks answers by uncertainty, and can
steer flexible-length generation.
"""

from .errors import (
    BackendError,
    CheckpointError,
    ConfigError,
    CorpusError,
    DiseError,
    ProtocolError,
    RemoteUnavailable,
    TrainingDiverged,
)
from .corpus import (
    ChoiceSet,
    Example,
    GrammarSpec,
    SequenceBuffer,
    Vocabulary,
    arithmetic_vocabulary,
    generate_arithmetic_tasks,
    generate_choice_sets,
    generate_grammar_corpus,
    grammar_vocabulary,
    load_jsonl,
    randomize_tokens,
    save_jsonl,
)
from .model import (
    HParams,
    ModelParams,
    TrainConfig,
    TrainingBatch,
    forward,
    gradient_check,
    init_parameters,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
    train_causal,
    train_masked_diffusion,
)
from .backend import DenoisingBackend, LocalBackend, LogProbQuery, NfeCounter, TableBackend
from .remote import LogProbServer, RemoteBackend, running_server
from .scoring import (
    ArReport,
    DiseReport,
    McConfig,
    McEstimate,
    SelectionMode,
    ar_conditional_log_likelihood,
    ar_log_likelihood,
    dise_score,
    mc_conditional_log_likelihood,
    mc_log_likelihood,
    perplexity,
    resolve_selection,
)
from .generation import (
    FlexGenConfig,
    FlexGenTrace,
    GenerationConfig,
    decode_masked_span,
    extract_answer,
    flexgen,
    generate_fixed,
    strip_eot,
)
from .evaluation import (
    ArScorer,
    DiseScorer,
    McScorer,
    UqRecord,
    best_of_n,
    multiple_choice_eval,
    roc_auc,
    single_sample_accuracy,
    uq_run,
)
from .analysis import (
    gt_rank_experiment,
    js_divergence,
    observation_suite,
    replacement_distance_study,
    wasserstein_1d,
)

__version__ = "0.1.0"
