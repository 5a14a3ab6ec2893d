"""propaudit: statistical audits of classifier behavior along sample properties."""

__version__ = "0.1.0"

from .cmiknn import CmiknnConfig, cmi_knn_estimate, cmiknn_test, local_permutation
from .committee import (
    AuditConfig,
    ConsensusCell,
    SignificanceTable,
    aggregate_usage,
    export_table,
    run_audit,
    run_cell,
)
from .dataset import (
    Dataset,
    PropertySpec,
    StandardizedVector,
    load_dataset,
    one_hot_labels,
    standardize,
    stratify,
)
from .kernels import (
    ChsicConfig,
    GramMatrix,
    chsic_statistic,
    chsic_test,
    hsic_statistic,
    median_heuristic_bandwidth,
    rbf_gram,
)
from .nulls import TestOutcome, permutation_pvalue
from .rcot import RcotConfig, hbe_pvalue, random_fourier_features, rcot_statistic, rcot_test, residualize
from .scm import GroundTruth, ScmSpec, calibration_run, generate_pipeline_fixture, generate_scm_dataset
from .symmetry import (
    LandmarkSet,
    SymmetryRecord,
    eye_level_deviation,
    midline_deviation,
    mirror_dissimilarity,
)
from .trends import (
    binary_group_summary,
    mean_accuracy,
    sliding_gaussian_trend,
    subpopulation_accuracy,
)
