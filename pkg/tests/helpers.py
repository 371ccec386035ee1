"""Shared weight-bundle factories for layer-level tests."""

import math

from slimformer.layers import (
    DecoderLayerWeights,
    EncoderLayerWeights,
    FfnWeights,
    LnWeights,
    MhaWeights,
)
from slimformer.tensor import Tensor


def make_mha(rng, d):
    s = 1.0 / math.sqrt(d)
    return MhaWeights(
        wq=Tensor(rng.standard_normal((d, d)) * s, requires_grad=True),
        wk=Tensor(rng.standard_normal((d, d)) * s, requires_grad=True),
        wv=Tensor(rng.standard_normal((d, d)) * s, requires_grad=True),
        wo=Tensor(rng.standard_normal((d, d)) * s, requires_grad=True),
        bq=Tensor(rng.standard_normal(d) * 0.1, requires_grad=True),
        bk=Tensor(rng.standard_normal(d) * 0.1, requires_grad=True),
        bv=Tensor(rng.standard_normal(d) * 0.1, requires_grad=True),
        bo=Tensor(rng.standard_normal(d) * 0.1, requires_grad=True),
    )


def make_ffn(rng, d):
    s = 1.0 / math.sqrt(d)
    return FfnWeights(
        w1=Tensor(rng.standard_normal((d, 4 * d)) * s, requires_grad=True),
        b1=Tensor(rng.standard_normal(4 * d) * 0.1, requires_grad=True),
        w2=Tensor(rng.standard_normal((d, 4 * d)) * s, requires_grad=True),
        b2=Tensor(rng.standard_normal(d) * 0.1, requires_grad=True),
    )


def make_ln(rng, d):
    return LnWeights(
        gamma=Tensor(1.0 + 0.1 * rng.standard_normal(d), requires_grad=True),
        beta=Tensor(0.1 * rng.standard_normal(d), requires_grad=True),
    )


def make_encoder_layer(rng, d):
    return EncoderLayerWeights(make_mha(rng, d), make_ffn(rng, d), make_ln(rng, d), make_ln(rng, d))


def make_decoder_layer(rng, d):
    return DecoderLayerWeights(
        make_mha(rng, d), make_mha(rng, d), make_ffn(rng, d),
        make_ln(rng, d), make_ln(rng, d), make_ln(rng, d),
    )
