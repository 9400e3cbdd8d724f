"""Geospatial self-explaining regression trees."""

from ._core import (
    Dataset,
    GeoTree,
    SpatialWeights,
    SxgeoError,
    attribution_entropy,
    fit_gwr,
    generate_synthetic,
    gini_coefficient,
    knn_weights,
    load_csv,
    maximize_modularity,
    modularity_score,
    morans_i,
    run_command,
    run_experiment,
    select_bandwidth,
    shap_values,
    zscore,
)

__all__ = [
    "Dataset",
    "GeoTree",
    "SpatialWeights",
    "SxgeoError",
    "attribution_entropy",
    "fit_gwr",
    "generate_synthetic",
    "gini_coefficient",
    "knn_weights",
    "load_csv",
    "maximize_modularity",
    "modularity_score",
    "morans_i",
    "run_command",
    "run_experiment",
    "select_bandwidth",
    "shap_values",
    "zscore",
]
