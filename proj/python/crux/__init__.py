"""Retrieval-context evaluation metrics and utilities."""

from ._crux import (
    CruxError,
    Dataset,
    ParseError,
    UndefinedMetric,
    UsageError,
    ValidationError,
    alpha_ndcg,
    answerability,
    bm25_search,
    content_key,
    coverage,
    density,
    fleiss_kappa,
    ideal_order,
    kendall_tau,
    parse_rating,
    pearson_r,
    relevance_metrics,
    required_subset,
    spearman_rho,
)

__all__ = [
    "CruxError",
    "Dataset",
    "ParseError",
    "UndefinedMetric",
    "UsageError",
    "ValidationError",
    "alpha_ndcg",
    "answerability",
    "bm25_search",
    "content_key",
    "coverage",
    "density",
    "fleiss_kappa",
    "ideal_order",
    "kendall_tau",
    "parse_rating",
    "pearson_r",
    "relevance_metrics",
    "required_subset",
    "spearman_rho",
]
