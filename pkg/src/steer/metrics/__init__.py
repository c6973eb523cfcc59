"""Diversity, coherence and hull metrics for comparing real and synthetic text."""

from .classifiers import LogisticRegression, adversarial_auroc, downstream_accuracy, rank_auroc
from .coherence import dataset_cosine_similarity, default_k, kmeans, quantized_divergence
from .diversity import NoNgramsWarning, diversity_score, normalized_ngrams
from .hull import f_score, hull_membership, hull_precision_recall, pca_project
from .report import CSV_COLUMNS, MetricConfig, MetricReport, downstream_eval, evaluate_pair

__all__ = [
    "CSV_COLUMNS",
    "LogisticRegression",
    "MetricConfig",
    "MetricReport",
    "NoNgramsWarning",
    "adversarial_auroc",
    "dataset_cosine_similarity",
    "default_k",
    "diversity_score",
    "downstream_accuracy",
    "downstream_eval",
    "evaluate_pair",
    "f_score",
    "hull_membership",
    "hull_precision_recall",
    "kmeans",
    "normalized_ngrams",
    "pca_project",
    "quantized_divergence",
    "rank_auroc",
]
