"""Part-aware panoptic segmentation labels, metrics and merging."""

from partpq.codec import LabelMap, LabelTriple, decode_uid, encode_uid, validate_map
from partpq.io import read_label_map, write_label_map, write_report
from partpq.merging import (
    PartPrediction,
    merge,
    merge_conservative,
    merge_topdown,
    remap_parts,
)
from partpq.metrics import (
    EvalOptions,
    evaluate_image,
    evaluate_pair,
    evaluate_pq,
    finalize,
    finalize_image_result,
    mean_pixel_accuracy,
    part_iou,
    semantic_miou,
    sig,
)
from partpq.segments import extract_segments, match_segments
from partpq.spec import DatasetSpec, builtin_spec, load_spec, resolve_spec

__version__ = "0.1.0"

__all__ = [
    "DatasetSpec",
    "EvalOptions",
    "LabelMap",
    "LabelTriple",
    "PartPrediction",
    "builtin_spec",
    "decode_uid",
    "encode_uid",
    "evaluate_image",
    "evaluate_pair",
    "evaluate_pq",
    "extract_segments",
    "finalize",
    "finalize_image_result",
    "load_spec",
    "match_segments",
    "mean_pixel_accuracy",
    "merge",
    "merge_conservative",
    "merge_topdown",
    "part_iou",
    "read_label_map",
    "remap_parts",
    "resolve_spec",
    "semantic_miou",
    "sig",
    "validate_map",
    "write_label_map",
    "write_report",
]
