"""Gradient-boosted trees with class-balanced losses."""

from ._cbgbdt import (
    BoostParams,
    CapabilityError,
    ConfigError,
    Dataset,
    Ensemble,
    Error,
    LabelError,
    LoadError,
    LossSpec,
    ParamError,
    ShapeError,
    SplitError,
    SplitPlan,
    TaskError,
    f1_score,
    fit,
    gencheck,
    improvement,
    load_csv,
    load_libsvm,
    loss_grad_hess,
    make_loss,
    make_split_plan,
    run_search,
    supports,
)

__all__ = [name for name in dir() if not name.startswith("_")]
