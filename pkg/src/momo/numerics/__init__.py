"""Dense-matrix math: tape autodiff, Adam, gradient checking, PCA, K-Means."""
from .autodiff import (
    Array,
    DeterminismError,
    NumericsError,
    Tape,
    Tensor,
    add,
    as_matrix,
    concat_cols,
    concat_rows,
    embed,
    grad_check,
    layer_norm_rows,
    matmul,
    mean_rows,
    mse,
    multihead_attention,
    relu,
    reshape,
    scale,
    slice_cols,
    slice_rows,
    softmax,
    softmax_rows,
    transpose,
)
from .cluster import KMeansModel, PcaModel, kmeans_fit, pca_fit, pca_project, pca_reconstruct
from .optim import AdamState, adam_step

__all__ = [
    "Array", "DeterminismError", "NumericsError", "Tape", "Tensor",
    "add", "as_matrix", "concat_cols", "concat_rows", "embed", "grad_check",
    "layer_norm_rows", "matmul", "mean_rows", "mse", "multihead_attention", "relu", "reshape",
    "scale", "slice_cols", "slice_rows", "softmax", "softmax_rows", "transpose",
    "KMeansModel", "PcaModel", "kmeans_fit", "pca_fit", "pca_project",
    "pca_reconstruct", "AdamState", "adam_step",
]
