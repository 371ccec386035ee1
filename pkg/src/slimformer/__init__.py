"""slimformer: train one transformer, slice submodels of any width and depth.

One master weight set serves a whole grid of submodels. Width slimming runs
every layer on the leading d rows/columns of its matrices (head width fixed,
head count reduced); depth slimming keeps the highest-scoring layers in
original order. Triangle selection keeps the deep-and-narrow combinations,
and a one-stage self-distillation loop trains them all against a frozen
teacher with sandwich sampling.
"""

from .archspace import (
    ArchDescriptor,
    ArchGrid,
    DepthGrid,
    IndicatorMatrix,
    WidthGrid,
    build_grid,
    depth_scores,
    select_layers,
    selected_architectures,
    triangle_select,
)
from .checkpoint import CheckpointError, export_submodel, load_checkpoint, save_checkpoint
from .costs import CostReport, cost_report, cost_table, cost_table_csv, count_flops, count_params
from .data import Batch, Sample, batch_of, generate_dataset, generate_sample
from .evaluation import (
    MetricsRow,
    capture_attention,
    evaluate,
    metrics_csv,
    run_sweep,
)
from .layers import (
    DecoderLayerWeights,
    EncoderLayerWeights,
    FfnWeights,
    LnWeights,
    MhaWeights,
    SlimSpec,
    attention,
    decoder_layer,
    encoder_layer,
    feed_forward,
    layer_norm,
    multi_head_attention,
    slice_width,
)
from .model import (
    ForwardOutput,
    ModelConfig,
    ParamStore,
    attentional_reduce,
    backbone_forward,
    embed_inputs,
    fuse_and_classify,
    init_dst,
    project_embeddings,
)
from .presets import (
    reference_model_config,
    toy_dst_train_config,
    toy_model_config,
    toy_teacher_train_config,
)
from .tensor import NumericError, Rng, ShapeError, Tensor, finite_diff_check, no_grad
from .training import (
    AdamState,
    TrainConfig,
    cross_entropy,
    dst_train_step,
    kd_loss,
    lr_schedule,
    optimizer_update,
    sample_architectures,
    train_dst,
    train_teacher,
)

__version__ = "0.1.0"
