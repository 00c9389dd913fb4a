"""Continuous-time risk monitoring: boosted hazard estimation over
recurrent events with time-varying covariates, stream fusion, model
selection, and a full evaluation battery with a synthetic oracle."""

from .boosting import (
    HazardBooster,
    HazardEnsemble,
    TrainConfig,
    TreeNode,
    fit_f0,
    hazard,
    monitoring_trace,
    monitoring_traces,
    neg_log_likelihood,
    survival,
    train,
    variable_importance,
)
from .data import (
    DatasetSchema,
    Epoch,
    Episode,
    Violation,
    event_count,
    total_exposure,
    validate_episode,
)
from .fusion import (
    EmbeddingStream,
    OneHotExpander,
    RawObservationStream,
    add_recurrence_features,
    embedding_schema,
    fuse_embeddings,
    locf_discretize,
    mark_events,
    one_hot_expand,
    recurrence_schema,
    widen_for_embeddings,
)
from .metrics import (
    AuctBin,
    CurveSet,
    FlagOutcome,
    MonitoringTrace,
    auct,
    episode_score,
    f1_optimal_threshold,
    flag_outcome,
    lead_times,
    outcomes_at,
    roc_pr_curves,
)
from .model_selection import CvGrid, CvResult, cross_validate, kfold_split, select_one_se
from .simulate import (
    ConstantHazard,
    EmbeddingChannelSpec,
    FeatureSpec,
    FeatureStepHazard,
    GroundTruth,
    ProductHazard,
    ScenarioSpec,
    SimulatedCohort,
    TimeStepHazard,
    oracle_metrics,
    simulate,
)

__version__ = "0.1.0"
