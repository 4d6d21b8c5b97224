from .autodiff import Tensor, no_grad, is_grad_enabled
from .layers import (
    init_linear,
    init_embedding,
    init_layer_norm,
    linear,
    embedding,
    layer_norm,
    gelu,
    softmax,
    log_softmax,
    masked_fill,
    self_attention,
    transformer_layer,
    cross_attention_block,
    feed_forward,
)

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "init_linear",
    "init_embedding",
    "init_layer_norm",
    "linear",
    "embedding",
    "layer_norm",
    "gelu",
    "softmax",
    "log_softmax",
    "masked_fill",
    "self_attention",
    "transformer_layer",
    "cross_attention_block",
    "feed_forward",
]
