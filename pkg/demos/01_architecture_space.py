"""The submodel architecture space.

One master transformer of width D and depth L induces a grid of candidate
submodels: widths {D/4, D/2, 3D/4, D} x depths {L/6, L/3, 2L/3, L}. Triangle
selection drops the shallow-and-wide corner (width rank > depth rank),
keeping the ten deep-and-narrow combinations that are worth training.
"""

from slimformer.archspace import (
    DepthGrid,
    IndicatorMatrix,
    WidthGrid,
    build_grid,
    depth_scores,
    select_layers,
    triangle_select,
)
from slimformer.costs import cost_table, cost_table_csv
from slimformer.model import ParamStore
from slimformer.presets import reference_model_config

widths = WidthGrid(512)
depths = DepthGrid(6)
print(f"candidate widths: {widths.values}")
print(f"candidate depths: {depths.values}")

grid = build_grid(widths, depths)
print(f"\nfull combination grid: {len(grid)} architectures")

kept = triangle_select(grid)
print(f"after triangle selection: {len(kept)} architectures kept")

print("\nindicator matrix (rows = widths ascending, cols = depths ascending):")
for row in IndicatorMatrix(4, 4).as_list():
    print("   ", row)

print("\nlayer scoring (slim-middle, L=6): middle layers are dropped first")
scores = depth_scores("slim-middle", 6)
print(f"  scores: {scores.tolist()}")
for keep in (1, 2, 4, 6):
    print(f"  keep {keep} -> layers {select_layers(scores, keep)}")

print("\ncost structure at the full-scale dims (width 512, 8 heads, 6 layers),")
print("question length 14, 100 regions:")
config = reference_model_config()
store = ParamStore.build(config, seed=0)
print(cost_table_csv(cost_table(config, store.selected(), 14, 100)))

reports = {(r.arch.width, r.arch.depth): r for r in cost_table(config, store.selected(), 14, 100)}
full = reports[(512, 6)]
small = reports[(128, 1)]
print(f"backbone FLOPs ratio smallest/full: 1/{full.backbone_flops / small.backbone_flops:.1f} "
      "(the width^2 x depth scaling gives up to 96x)")
half = reports[(256, 6)]
print(f"backbone params ratio half-width/full: {half.backbone_params / full.backbone_params:.4f}")
