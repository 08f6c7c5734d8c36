"""Post-norm transformer encoder over the autodiff core.

Parameter inventory, deterministic initialization, scalar counting, the
forward pass, and the position-0 pooler. One shape inventory drives both
``init_parameters`` and ``count_parameters`` so the two can never drift.
"""

from __future__ import annotations

import math

import numpy as np

from desklm.errors import InputError
from desklm.model.config import ModelConfig, TokenizedBatch
from desklm.tensor import (
    ParamStore,
    Value,
    dropout,
    embedding,
    gelu,
    layer_norm,
    matmul,
    reshape,
    softmax,
    tanh,
    take,
    transpose,
)

ATTN_MASK_BIAS = -1e9

# Sampling std of a unit normal truncated to two std devs; dividing by it
# makes the realized std of the draw equal the configured one.
_TRUNC_STD = 0.87962566103423978


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every encoder parameter, in creation order."""
    h, inter = config.hidden, config.intermediate
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, h),
        "embeddings.position": (config.max_positions, h),
        "embeddings.segment": (config.type_vocab, h),
        "embeddings.norm.gain": (h,),
        "embeddings.norm.bias": (h,),
    }
    for i in range(config.layers):
        p = f"layers.{i:02d}"
        for proj in ("query", "key", "value", "out"):
            shapes[f"{p}.attn.{proj}.weight"] = (h, h)
            shapes[f"{p}.attn.{proj}.bias"] = (h,)
        shapes[f"{p}.attn.norm.gain"] = (h,)
        shapes[f"{p}.attn.norm.bias"] = (h,)
        shapes[f"{p}.ffn.in.weight"] = (h, inter)
        shapes[f"{p}.ffn.in.bias"] = (inter,)
        shapes[f"{p}.ffn.out.weight"] = (inter, h)
        shapes[f"{p}.ffn.out.bias"] = (h,)
        shapes[f"{p}.ffn.norm.gain"] = (h,)
        shapes[f"{p}.ffn.norm.bias"] = (h,)
    shapes["pooler.weight"] = (h, h)
    shapes["pooler.bias"] = (h,)
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Exact number of encoder scalars: embeddings, blocks, norms, pooler."""
    return sum(int(np.prod(s)) for s in parameter_shapes(config).values())


def truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal draw redrawn outside two std devs, rescaled to the target std."""
    out = rng.normal(size=shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.normal(size=int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * (std / _TRUNC_STD)


def init_parameters(config: ModelConfig, seed: int, std: float = 0.02) -> ParamStore:
    """Weights from a truncated normal, biases zero, norm gains one."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias"):
            data = np.zeros(shape)
        elif name.endswith(".gain"):
            data = np.ones(shape)
        else:
            data = truncated_normal(rng, shape, std)
        params.add(name, Value(data, op_tag="param"))
    return params


def _linear(x: Value, params: ParamStore, prefix: str) -> Value:
    return matmul(x, params[f"{prefix}.weight"]) + params[f"{prefix}.bias"]


def encoder_forward(
    params: ParamStore,
    batch: TokenizedBatch,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    train: bool = False,
    inputs_embeds: Value | None = None,
    return_attention: bool = False,
):
    """Run the encoder; returns (final hidden [B,T,H], list of per-layer states).

    `inputs_embeds` overrides the summed+normalized embedding output, which is
    what perturbation-based regularizers hook into. With `return_attention`
    the per-layer attention probabilities [B,heads,T,T] are returned third.
    """
    batch.validate(config)
    b, t = batch.token_ids.shape
    p = config.dropout if train else 0.0
    if p > 0.0 and rng is None:
        raise InputError("dropout is active but no generator was supplied")

    def drop(v: Value) -> Value:
        return dropout(v, p, rng) if p > 0.0 else v

    if inputs_embeds is None:
        x = embed_batch(params, batch, config)
    else:
        x = inputs_embeds
    x = drop(x)

    # Masked-out keys get a large negative additive bias before the softmax.
    bias = Value(((1 - batch.attn_mask) * ATTN_MASK_BIAS)[:, None, None, :].astype(np.float64))

    nh, hd = config.heads, config.head_dim
    scale = 1.0 / math.sqrt(hd)
    states: list[Value] = []
    attentions: list[Value] = []
    for i in range(config.layers):
        prefix = f"layers.{i:02d}"

        def split_heads(v: Value) -> Value:
            return transpose(reshape(v, (b, t, nh, hd)), (0, 2, 1, 3))

        q = split_heads(_linear(x, params, f"{prefix}.attn.query"))
        k = split_heads(_linear(x, params, f"{prefix}.attn.key"))
        v = split_heads(_linear(x, params, f"{prefix}.attn.value"))

        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * scale + bias
        probs = softmax(scores, axis=-1)
        attentions.append(probs)
        attn = drop(probs)
        ctx = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (b, t, config.hidden))
        attn_out = drop(_linear(ctx, params, f"{prefix}.attn.out"))
        x = layer_norm(
            x + attn_out,
            params[f"{prefix}.attn.norm.gain"],
            params[f"{prefix}.attn.norm.bias"],
            config.eps,
        )

        ffn = _linear(gelu(_linear(x, params, f"{prefix}.ffn.in")), params, f"{prefix}.ffn.out")
        x = layer_norm(
            x + drop(ffn),
            params[f"{prefix}.ffn.norm.gain"],
            params[f"{prefix}.ffn.norm.bias"],
            config.eps,
        )
        states.append(x)

    if return_attention:
        return x, states, attentions
    return x, states


def embed_batch(params: ParamStore, batch: TokenizedBatch, config: ModelConfig) -> Value:
    """Token + position + segment embeddings, layer-normed."""
    b, t = batch.token_ids.shape
    tok = embedding(params["embeddings.token"], batch.token_ids)
    pos = embedding(params["embeddings.position"], np.broadcast_to(np.arange(t), (b, t)))
    seg = embedding(params["embeddings.segment"], batch.segment_ids)
    return layer_norm(
        tok + pos + seg,
        params["embeddings.norm.gain"],
        params["embeddings.norm.bias"],
        config.eps,
    )


def pool_cls(hidden: Value, params: ParamStore) -> Value:
    """tanh-affine transform of the position-0 state; output in (-1, 1)."""
    first = take(hidden, (slice(None), 0))
    return tanh(matmul(first, params["pooler.weight"]) + params["pooler.bias"])
