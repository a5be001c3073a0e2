"""Unsupervised clustering of power-grid fault waveforms."""

from ._core import (
    Error,
    InvalidArgument,
    NotFound,
    cluster_purity_entropy,
    decompose,
    evaluate,
    fft_magnitude,
    generate,
    kmeans,
    pca,
    purity,
    run_pipeline,
    sha256_file,
    silhouette_score,
    size_dispersion,
    tsne,
)

__all__ = [
    "Error",
    "InvalidArgument",
    "NotFound",
    "cluster_purity_entropy",
    "decompose",
    "evaluate",
    "fft_magnitude",
    "generate",
    "kmeans",
    "pca",
    "purity",
    "run_pipeline",
    "sha256_file",
    "silhouette_score",
    "size_dispersion",
    "tsne",
]
