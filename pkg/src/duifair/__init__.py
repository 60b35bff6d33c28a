"""Fairness-aware county-level alcohol-impaired driving risk pipeline."""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DuiFairError,
    DuplicateKeyError,
    EmptyGroupError,
    NumericFailureError,
    ParseError,
    SchemaError,
    StratificationError,
    UndefinedCorrelationError,
    UndefinedMetricError,
)
from .explore import (
    CorrelationMatrix,
    Density1D,
    Density2D,
    columns_from_records,
    correlation_matrix,
    density_1d,
    density_2d,
    pearson,
)
from .fairness import (
    GroupDefinition,
    MetricResult,
    ReweighResult,
    balanced_accuracy,
    disparate_impact,
    group_favorable_rates,
    reweigh,
    statistical_parity_difference,
    theil_index,
)
from .experiment import (
    ExperimentConfig,
    FairnessReport,
    compare_algorithms,
    run_ablation,
    run_mitigation_grid,
)
from .ingest import (
    CountyRecord,
    TableSchema,
    drop_incomplete,
    load_schemas,
    merge_domain_knowledge,
    parse_county_table,
    serialize_records,
)
from .models import (
    ClassifierSpec,
    ClassificationScores,
    TrainedModel,
    classification_scores,
    fit_forest,
    fit_knn,
    fit_linear_svm,
    fit_logistic,
    fit_model,
    fit_tree,
    load_model,
    predict,
    predict_proba,
    save_model,
)
from .preprocess import (
    BinarizationSpec,
    StandardizationParams,
    TabularDataset,
    apply_standardizer,
    binarize_protected,
    binarize_target,
    build_dataset,
    fit_standardizer,
    split_train_test,
)
from .report import emit_report, write_artifacts
from .synth import SynthSpec, expected_label_metrics, generate_biased

__version__ = "0.1.0"
