"""Single-file checkpoint container and standalone submodel export.

Layout: 4-byte magic "DST1", little-endian u64 manifest length, UTF-8 JSON
manifest, then a blob of concatenated little-endian float64 tensor data.
The manifest lists per tensor {name, shape, dtype, byte_offset, slicing_tag}
in blob order (offsets contiguous, non-overlapping) plus the model config
and resolved grids. Round-trips are bit-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .archspace import ArchDescriptor, depth_scores
from .model import ModelConfig, ParamStore, parameter_schema, slicing_tag, view_shape
from .tensor import Tensor

MAGIC = b"DST1"
DTYPE_TAG = "f64-le"
_F64LE = np.dtype("<f8")


class CheckpointError(ValueError):
    """Malformed or inconsistent checkpoint file."""


def save_checkpoint(path: str | Path, store: ParamStore) -> None:
    config = store.config
    entries = []
    blobs = []
    offset = 0
    for info in parameter_schema(config):
        data = np.asarray(store.tensors[info.name].data, dtype=_F64LE, order="C")
        entries.append({
            "name": info.name,
            "shape": list(data.shape),
            "dtype": DTYPE_TAG,
            "byte_offset": offset,
            "slicing_tag": slicing_tag(info, config.width_mode),
        })
        blobs.append(data.tobytes())
        offset += data.nbytes
    manifest = {
        "model_config": config.to_dict(),
        "grids": {
            "widths": list(config.width_grid.values),
            "depths": list(config.depth_grid.values),
        },
        "tensors": entries,
    }
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> ParamStore:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"not a DST1 container: {path}")
    (manifest_len,) = struct.unpack("<Q", raw[4:12])
    if 12 + manifest_len > len(raw):
        raise CheckpointError("manifest length exceeds file size")
    manifest = json.loads(raw[12 : 12 + manifest_len].decode("utf-8"))
    blob = raw[12 + manifest_len :]
    config = ModelConfig.from_dict(manifest["model_config"])
    schema = {info.name: info for info in parameter_schema(config)}
    names = [e["name"] for e in manifest["tensors"]]
    if set(names) != set(schema) or len(names) != len(set(names)):
        raise CheckpointError("manifest tensor set does not match the model schema")

    total_bytes = sum(int(np.prod(e["shape"])) * 8 for e in manifest["tensors"])
    if total_bytes != len(blob):
        raise CheckpointError(f"blob size {len(blob)} does not match manifest ({total_bytes})")

    tensors = {}
    expected_offset = 0
    for entry in manifest["tensors"]:
        info = schema[entry["name"]]
        if tuple(entry["shape"]) != info.shape:
            raise CheckpointError(f"{entry['name']}: shape {entry['shape']} != schema {info.shape}")
        if entry["dtype"] != DTYPE_TAG:
            raise CheckpointError(f"{entry['name']}: unsupported dtype {entry['dtype']}")
        if entry["byte_offset"] != expected_offset:
            raise CheckpointError(f"{entry['name']}: offsets must be contiguous and in order")
        count = int(np.prod(info.shape))
        data = np.frombuffer(blob, dtype=_F64LE, count=count, offset=expected_offset)
        tensors[info.name] = Tensor(data.reshape(info.shape), requires_grad=info.trainable, name=info.name)
        expected_offset += count * 8
    return ParamStore(config, tensors)


def _is_selected(store: ParamStore, arch: ArchDescriptor) -> bool:
    return any(a.width == arch.width and a.depth == arch.depth for a in store.selected())


def require_selected(store: ParamStore, arch: ArchDescriptor) -> None:
    if not _is_selected(store, arch):
        raise ValueError(f"architecture {arch.label} is not in the selected set")


def export_submodel(store: ParamStore, arch: ArchDescriptor) -> ParamStore:
    """A self-contained store for one architecture: sliced copies + unslimmed tensors.

    The exported model's reference dims are (d, Ĥ, l) with trivial grids, so its
    forward involves no slimming decisions; the embedder/classifier keep the
    original width via embed_dim.
    """
    config = store.config
    if config.width_mode != "slim-all":
        raise ValueError("standalone export is defined for the slim-all mode")
    require_selected(store, arch)
    spec = config.spec(arch.width)
    sub_config = replace(
        config,
        width=arch.width,
        heads=spec.active_heads,
        depth=arch.depth,
        width_ratios=(Fraction(1),),
        depth_ratios=(Fraction(1),),
        embed_dim=config.embed_dim,
    )
    layer_to_master = {new: old for new, old in enumerate(arch.kept_layers, start=1)}

    def master_name(name: str) -> str:
        parts = name.split(".")
        if parts[0] in ("enc", "dec"):
            parts[1] = str(layer_to_master[int(parts[1])])
            return ".".join(parts)
        return name

    tensors = {}
    for info in parameter_schema(sub_config):
        if info.name == "depth_scores":
            if config.depth_strategy == "slim-random":
                value = np.arange(1, arch.depth + 1, dtype=np.float64)
            else:
                value = depth_scores(config.depth_strategy, arch.depth)
        else:
            source = store.infos[master_name(info.name)]
            view = view_shape(source, spec)
            value = store.tensors[source.name].data[tuple(slice(0, s) for s in view)].copy()
            if value.shape != info.shape:
                raise CheckpointError(
                    f"{info.name}: exported shape {value.shape} != schema {info.shape}"
                )
        tensors[info.name] = Tensor(value, requires_grad=info.trainable, name=info.name)
    return ParamStore(sub_config, tensors)
