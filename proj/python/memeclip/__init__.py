"""Python bindings for the MemeCLIP head: configs, training, metrics and file formats."""

from ._core import (  # noqa: F401
    ClassPromptSet,
    ClassifierKind,
    EmbeddingBundle,
    EmbeddingRecord,
    EpochRecord,
    ErrorCode,
    FitResult,
    FusionKind,
    GradcheckOptions,
    GradcheckResult,
    HeadConfig,
    HeadParams,
    InitKind,
    MemeclipError,
    MetricsReport,
    Split,
    TaskSchema,
    TrainConfig,
    accuracy,
    ablation_ladder,
    binary_auroc,
    canonical_schema,
    count_params,
    evaluate,
    fit,
    forward,
    init_params,
    load_checkpoint,
    macro_auroc,
    macro_f1,
    make_separable_bundle,
    make_separable_prompts,
    read_bundle,
    read_class_prompts,
    run_gradcheck,
    save_checkpoint,
    task_view,
    write_bundle,
    write_class_prompts,
)

__all__ = [name for name in dir() if not name.startswith("_")]
