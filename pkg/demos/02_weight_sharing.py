"""Weight sharing: every submodel is a slice of the master weights.

Slicing keeps the leading rows/columns of each matrix (the first H*d/D
heads, the first 4d FFN units). A submodel's forward therefore needs no
new parameters, and an exported standalone checkpoint reproduces the
master-sliced forward bit for bit.
"""

import numpy as np

from slimformer.checkpoint import export_submodel
from slimformer.data import batch_of, generate_dataset
from slimformer.model import ParamStore, backbone_forward
from slimformer.presets import toy_model_config

store = ParamStore.build(toy_model_config(), seed=7)
batch = batch_of(generate_dataset(7, 32))

print("master weights: width 64, 4 heads, 6 encoder + 6 decoder layers\n")

w1 = store.tensors["enc.1.ffn.w1"].data
print(f"enc.1.ffn.w1 master shape: {w1.shape}")
for arch in (store.arch(16, 1), store.arch(32, 2), store.arch(64, 6)):
    print(f"  at {arch.label}: view {w1[:arch.width, :4 * arch.width].shape}, "
          f"kept layers {arch.kept_layers}")

print("\nnested sharing: the 16-wide slice is the corner of the 32-wide slice:",
      np.array_equal(w1[:16, :64], w1[:32, :128][:16, :64]))

print("\nmaster-sliced forward vs exported standalone forward (bitwise):")
for arch in store.selected():
    master = backbone_forward(store, arch, batch).logits.data
    sub = export_submodel(store, arch)
    standalone = backbone_forward(sub, sub.largest(), batch).logits.data
    print(f"  {arch.label:14s} equal={np.array_equal(master, standalone)}")

print("\ngradients land in the master sub-region only:")
from slimformer import tensor as T

arch = store.arch(16, 1)
T.mean_all(backbone_forward(store, arch, batch).logits).backward()
g = store.tensors["enc.1.ffn.w1"].grad
print(f"  grad non-zero inside 16x64 block: {np.any(g[:16, :64] != 0)}")
print(f"  grad exactly zero outside:        {np.all(g[16:, :] == 0) and np.all(g[:, 64:] == 0)}")
store.zero_grads()
