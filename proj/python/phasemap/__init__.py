"""Unsupervised phase mapping of X-ray diffraction composition maps."""

from ._core import (
    Benchmark,
    Dataset,
    GroundTruth,
    PrototypeLibrary,
    QGrid,
    RuleReport,
    Solution,
    SolveOptions,
    StickPattern,
    SynthSpec,
    TrainConfig,
    activation_accuracy,
    alldiff_penalty,
    demix,
    entropy,
    fidelity,
    generate,
    ksparsity_penalty,
    load_dataset,
    load_prototypes,
    main,
    rule_report,
    save_dataset,
    solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
