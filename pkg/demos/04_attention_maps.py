"""Attention-map capture.

Every kept layer's row-stochastic attention matrices can be exported per
head: encoder self-attention over question tokens, decoder self-attention
over regions, and the guided attention of regions over question tokens.
"""

import numpy as np

from slimformer.data import generate_sample
from slimformer.evaluation import attention_dump_json, capture_attention
from slimformer.model import ParamStore
from slimformer.presets import toy_model_config

store = ParamStore.build(toy_model_config(), seed=3)
sample = generate_sample(3, 0)
print(f"question tokens: {sample.question.tolist()}  answer class: {sample.answer}\n")

for arch in (store.arch(16, 1), store.arch(32, 2), store.arch(64, 6)):
    captured = capture_attention(store, arch, sample)
    enc, dec = captured["encoder"], captured["decoder"]
    heads = enc[0]["self"].shape[0]
    print(f"{arch.label}: {heads} active head(s), {len(enc)} encoder + {len(dec)} decoder layer blocks")
    guided = dec[-1]["guided"]
    print(f"  last-layer guided attention shape {guided.shape} "
          f"(regions x question tokens), rows sum to 1: "
          f"{bool(np.all(np.abs(guided.sum(axis=-1) - 1.0) < 1e-9))}")

print("\nJSON dump of the smallest submodel's maps (truncated):")
text = attention_dump_json(capture_attention(store, store.arch(16, 1), sample))
print(text[:300] + " ...")
