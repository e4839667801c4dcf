"""Invariant point attention in two interchangeable forms.

`Model.reference` materializes the dense pair representation and attention
matrices (quadratic memory); `Model.flash` computes the same outputs through
lifted queries/keys/values and a tiled online-softmax kernel (linear memory).
"""

from fipa._fipa import (
    Model,
    flash_attention,
    knn_distogram,
    naive_attention,
)

__all__ = [
    "Model",
    "flash_attention",
    "knn_distogram",
    "naive_attention",
]
