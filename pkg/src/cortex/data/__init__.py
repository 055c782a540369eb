from .dataset import (
    DEFAULT_LABEL_MAP,
    BuildSummary,
    Dataset,
    build_dataset,
    class_names,
    dataset_from_bytes,
    load_dataset,
    membership_hash,
    save_dataset,
    split_dataset,
    split_indices,
)
from .images import IMAGE_SIZE, decode_image, load_image_tensor, normalize, read_image, resize_bilinear
from .synthetic import PATTERNS, make_synthetic, write_image_tree

__all__ = [
    "DEFAULT_LABEL_MAP",
    "BuildSummary",
    "Dataset",
    "build_dataset",
    "class_names",
    "dataset_from_bytes",
    "load_dataset",
    "membership_hash",
    "save_dataset",
    "split_dataset",
    "split_indices",
    "IMAGE_SIZE",
    "decode_image",
    "load_image_tensor",
    "normalize",
    "read_image",
    "resize_bilinear",
    "PATTERNS",
    "make_synthetic",
    "write_image_tree",
]
