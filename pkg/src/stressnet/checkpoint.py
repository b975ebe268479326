"""Self-describing checkpoint container shared by all model kinds.

Byte layout, designed so an independent implementation can read or write
it without this code:

  1. One UTF-8 JSON line (sorted keys, terminated by a single ``\\n``)::

       {"arrays": [{"dtype": "<f8", "name": ..., "shape": [...]}, ...],
        "format": "stressnet-checkpoint" | "stressnet-or" | "stressnet-rf",
        "meta": {...},
        "version": 1}

  2. For each entry of "arrays", in list order: the raw array bytes,
     C-order, little-endian, with the declared dtype ("<f8" float64 or
     "<i8" int64). No padding between arrays.

Array names are sorted, so identical contents give byte-identical files.

meta always carries "feature_mode", "nucleus_tags" (the canonical type
order indices refer to), and "feature_slots" (the 12-slot order feature
vectors use). The attention format adds the model configuration and, when
class weighting was active, a (16, 3) "class_weights" array. The forest
format flattens all trees into contiguous node arrays indexed by
"tree_offsets" (n_trees + 1 entries; tree t owns nodes
[offsets[t], offsets[t+1]) and node ids are tree-local).
"""

from __future__ import annotations

import json

import numpy as np

from .baselines import ForestModel, OrdinalModel, TreeNodes
from .corpus import ClassWeights
from .errors import CheckpointError
from .features import FEATURE_SLOTS
from .lexicon import NUCLEUS_TAGS
from .model import ModelConfig, Params

FORMAT_ATTENTION = "stressnet-checkpoint"
FORMAT_ORDINAL = "stressnet-or"
FORMAT_FOREST = "stressnet-rf"

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def _base_meta(feature_mode: str) -> dict:
    return {
        "feature_mode": feature_mode,
        "nucleus_tags": list(NUCLEUS_TAGS),
        "feature_slots": list(FEATURE_SLOTS),
    }


def save_container(path: str, format_tag: str, meta: dict,
                   arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype("<f8")
            dtype = "<f8"
        elif np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
            arr = arr.astype("<i8")
            dtype = "<i8"
        else:
            raise CheckpointError(f"array {name!r} has unsupported dtype {arr.dtype}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        blobs.append(arr.tobytes(order="C"))
    header = {"format": format_tag, "version": 1, "meta": meta, "arrays": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_container(path: str) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: bad header ({exc})")
        if header.get("version") != 1:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')!r}")
        fmt = header.get("format")
        if fmt not in (FORMAT_ATTENTION, FORMAT_ORDINAL, FORMAT_FOREST):
            raise CheckpointError(f"{path}: unknown format tag {fmt!r}")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            dtype = _DTYPES.get(entry["dtype"])
            if dtype is None:
                raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after declared arrays")
    return fmt, header["meta"], arrays


# --- attention model ----------------------------------------------------------

def save_model(path: str, params: Params, config: ModelConfig,
               class_weights: ClassWeights | None = None) -> None:
    meta = _base_meta(config.feature_mode)
    meta["model_config"] = config.to_dict()
    meta["has_class_weights"] = class_weights is not None
    arrays = dict(params)
    if class_weights is not None:
        arrays = dict(arrays, class_weights=class_weights.table)
    save_container(path, FORMAT_ATTENTION, meta, arrays)


def load_model(path: str) -> tuple[Params, ModelConfig, ClassWeights | None]:
    fmt, meta, arrays = load_container(path)
    if fmt != FORMAT_ATTENTION:
        raise CheckpointError(f"{path}: expected {FORMAT_ATTENTION}, found {fmt}")
    config = ModelConfig.from_dict(meta["model_config"])
    weights = None
    if meta.get("has_class_weights"):
        weights = ClassWeights(arrays.pop("class_weights"))
    return arrays, config, weights


# --- baselines ----------------------------------------------------------------

def save_ordinal(path: str, model: OrdinalModel, feature_mode: str) -> None:
    save_container(path, FORMAT_ORDINAL, _base_meta(feature_mode), {
        "coefficients": model.coefficients,
        "thresholds": model.thresholds,
    })


def load_ordinal(path: str) -> tuple[OrdinalModel, str]:
    fmt, meta, arrays = load_container(path)
    if fmt != FORMAT_ORDINAL:
        raise CheckpointError(f"{path}: expected {FORMAT_ORDINAL}, found {fmt}")
    return (OrdinalModel(arrays["coefficients"], arrays["thresholds"]),
            meta["feature_mode"])


def save_forest(path: str, model: ForestModel, feature_mode: str) -> None:
    offsets = [0]
    for tree in model.trees:
        offsets.append(offsets[-1] + len(tree.feature))
    meta = _base_meta(feature_mode)
    meta.update({"n_trees": model.n_trees, "max_depth": model.max_depth,
                 "features_per_split": model.features_per_split})
    save_container(path, FORMAT_FOREST, meta, {
        "nodes_feature": np.concatenate([t.feature for t in model.trees]),
        "nodes_threshold": np.concatenate([t.threshold for t in model.trees]),
        "nodes_left": np.concatenate([t.left for t in model.trees]),
        "nodes_right": np.concatenate([t.right for t in model.trees]),
        "nodes_counts": np.concatenate([t.counts for t in model.trees]),
        "tree_offsets": np.asarray(offsets, dtype=np.int64),
    })


def load_forest(path: str) -> tuple[ForestModel, str]:
    fmt, meta, arrays = load_container(path)
    if fmt != FORMAT_FOREST:
        raise CheckpointError(f"{path}: expected {FORMAT_FOREST}, found {fmt}")
    offsets = arrays["tree_offsets"]
    trees = []
    for t in range(len(offsets) - 1):
        lo, hi = int(offsets[t]), int(offsets[t + 1])
        trees.append(TreeNodes(
            feature=arrays["nodes_feature"][lo:hi],
            threshold=arrays["nodes_threshold"][lo:hi],
            left=arrays["nodes_left"][lo:hi],
            right=arrays["nodes_right"][lo:hi],
            counts=arrays["nodes_counts"][lo:hi],
        ))
    model = ForestModel(trees, int(meta["n_trees"]), int(meta["max_depth"]),
                        int(meta["features_per_split"]))
    return model, meta["feature_mode"]


def load_any(path: str):
    """(kind, model payload, feature_mode, class weights or None)."""
    fmt, meta, _ = load_container(path)
    if fmt == FORMAT_ATTENTION:
        params, config, weights = load_model(path)
        return "attention", (params, config), config.feature_mode, weights
    if fmt == FORMAT_ORDINAL:
        model, mode = load_ordinal(path)
        return "ordinal", model, mode, None
    model, mode = load_forest(path)
    return "forest", model, mode, None
