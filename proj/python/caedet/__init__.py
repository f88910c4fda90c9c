"""Poisoning attacks and autoencoder-based defenses for a periodically
retrained linear SVM.

The heavy lifting lives in the C++ extension module ``caedet._core``;
this package re-exports its public surface.
"""

from ._core import (  # noqa: F401
    AttackConfig,
    AttackKind,
    BinaryTask,
    DatasetSpec,
    DetectionMetrics,
    DetectorKind,
    DetectorModel,
    DetectorTrainConfig,
    ExperimentConfig,
    ExperimentDataset,
    FilterResult,
    Gmm1dConfig,
    GmmParams,
    LabeledSample,
    PoisonProvenance,
    PoisonSet,
    PoisonTrajectory,
    RawDataset,
    Report,
    ReportFormat,
    ReportRow,
    RoundBuffer,
    ScoredSample,
    SeparatorKind,
    SplitSizes,
    SvmModel,
    SvmTrainConfig,
    Tensor,
    TrainConfig,
    accuracy,
    attack_from_name,
    attack_name,
    build_rounds,
    decision_value,
    detection_metrics,
    detector_from_name,
    detector_name,
    dual_objective,
    emit_report,
    filter_round,
    fit_gmm_1d,
    format_from_name,
    gmm_assign_component,
    gmm_responsibility,
    hinge_loss_sum,
    load_detector,
    load_idx,
    load_svm,
    load_task,
    make_binary_task,
    max_kkt_violation,
    poison_count,
    poison_gradient,
    poison_round,
    predict,
    render_report,
    robustness_tasks,
    run_ablation,
    run_alpha_sweep,
    run_attack,
    run_periodic_update,
    run_robustness,
    run_threshold_sweep,
    save_detector,
    save_svm,
    score,
    score_batch,
    separate,
    synth_blobs,
    train_detector,
    train_svm,
)

__version__ = "0.1.0"
