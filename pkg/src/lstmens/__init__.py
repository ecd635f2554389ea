"""Epoch-wise bagged LSTM ensembles for sample-wise sequence classification.

Pipeline in one breath: a single LSTM is trained with per-epoch randomized
mini-batch plans (random batch size, stream starts, and frame lengths), one
parameter snapshot is kept per epoch, the best-validating M snapshots are
fused by averaging their per-sample class probabilities, and predictions are
emitted for every sample of a stream with carried recurrent state.
"""

from .bagging import (
    BaggingConfig,
    BaseLearner,
    FrameSchedule,
    epoch_coverage,
    load_learners,
    make_schedule,
    run_bagging,
    save_learners,
    train_epoch,
    validation_f1,
)
from .data import (
    CsvSchema,
    LabeledSequence,
    NormStats,
    apply_normalizer,
    class_distribution,
    classwise_split,
    fit_normalizer,
    holdout_split,
    invert_normalizer,
    load_csv,
    save_csv,
    synth_har,
)
from .ensembles import (
    CeGap,
    Ensemble,
    ce_gap,
    ensemble_infer,
    fuse_scores,
    load_ensemble,
    mixed_ensemble,
    save_ensemble,
    select_top_m,
)
from .evaluation import (
    TrialSet,
    TTestResult,
    confusion,
    mean_f1,
    per_class_f1,
    run_trials,
    significance_stars,
    t_test,
)
from .mathkit import log_softmax, matmul, sigmoid, softmax, tanh_vec
from .modelio import ModelFormatError, ModelMeta, load_model, save_model
from .network import (
    LstmLayerParams,
    LstmNetwork,
    LstmState,
    OutputLayerParams,
    classify,
    infer_stream,
    init_network,
    predict_label,
    step,
)
from .rng import Rng
from .training import (
    AdamState,
    FrameBatch,
    GradCheckReport,
    LossKind,
    adam_update,
    bptt_frame,
    ce_loss,
    f1_loss,
    finite_difference_grads,
    grad_check,
    random_check_frame,
)

__version__ = "0.1.0"
