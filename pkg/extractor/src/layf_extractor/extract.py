"""Dataset scanning and the export loop.

A dataset is an image folder: one subdirectory per class, any PIL-readable
files inside. Class ids are assigned densely by sorted directory name and
images are processed in sorted order, so the output file is a pure
function of the folder contents and the configuration. Images are resized
to the backbone's input size at inference time, with no augmentation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .model import FrozenBackbone
from .writer import StreamWriter

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}

# standard ImageNet channel statistics, the convention pretrained ViT
# checkpoints are trained with
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ExtractConfig:
    model_id: str = "vit_b_16"
    dataset_path: str = ""
    split: str | None = None  # optional subdirectory of dataset_path
    classes_per_task: tuple[int, ...] | None = None  # None: one task with all classes
    batch_size: int = 16
    device: str = "cpu"
    output_path: str = "features.layf"
    token: str = "cls"  # which token to export per layer: cls | mean
    weights_path: str | None = None  # local checkpoint; random init when absent
    init_seed: int = 0
    normalize: bool = True

    def root(self) -> str:
        return os.path.join(self.dataset_path, self.split) if self.split else self.dataset_path


def scan_image_folder(root: str) -> tuple[list[str], list[tuple[str, int]]]:
    """Return (class names sorted, [(image path, class id), ...] in order)."""
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset root {root!r} is not a directory")
    class_names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not class_names:
        raise ValueError(f"dataset root {root!r} contains no class directories")
    entries = []
    for class_id, name in enumerate(class_names):
        class_dir = os.path.join(root, name)
        for filename in sorted(os.listdir(class_dir)):
            if os.path.splitext(filename)[1].lower() in IMAGE_EXTENSIONS:
                entries.append((os.path.join(class_dir, filename), class_id))
    if not entries:
        raise ValueError(f"dataset root {root!r} contains no images")
    return class_names, entries


def build_task_partition(num_classes: int, classes_per_task) -> list[list[int]]:
    """Contiguous class-id partition from a classes-per-task list."""
    if classes_per_task is None:
        return [list(range(num_classes))]
    sizes = [int(n) for n in classes_per_task]
    if any(n < 1 for n in sizes) or sum(sizes) != num_classes:
        raise ValueError(
            f"classes_per_task {sizes} must be positive and sum to {num_classes}"
        )
    partition, start = [], 0
    for n in sizes:
        partition.append(list(range(start, start + n)))
        start += n
    return partition


def _load_image(path: str, size: int, normalize: bool) -> torch.Tensor:
    with Image.open(path) as img:
        img = img.convert("RGB").resize((size, size), Image.BILINEAR)
        array = np.asarray(img, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    if normalize:
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        tensor = (tensor - mean) / std
    return tensor


def extract(cfg: ExtractConfig) -> str:
    """Run the frozen backbone over the dataset and write one LAYF file.

    Returns the output path. The sibling manifest records the backbone,
    token choice, and weight provenance in its source tag.
    """
    backbone = FrozenBackbone(
        cfg.model_id,
        weights_path=cfg.weights_path,
        device=cfg.device,
        init_seed=cfg.init_seed,
        token=cfg.token,
    )
    class_names, entries = scan_image_folder(cfg.root())
    partition = build_task_partition(len(class_names), cfg.classes_per_task)
    task_of_class = {}
    for task_id, classes in enumerate(partition):
        for c in classes:
            task_of_class[c] = task_id

    writer = StreamWriter(
        layer_dims=[backbone.hidden_dim] * backbone.num_blocks,
        num_classes=len(class_names),
        dtype="float32",
    )
    for start in range(0, len(entries), cfg.batch_size):
        chunk = entries[start : start + cfg.batch_size]
        batch = torch.stack(
            [_load_image(path, backbone.image_size, cfg.normalize) for path, _ in chunk]
        )
        per_layer = backbone.layer_features(batch)  # L tensors of (n, hidden)
        for row, (_, class_id) in enumerate(chunk):
            vectors = [layer[row].numpy().astype(np.float64) for layer in per_layer]
            writer.add(vectors, label=class_id, task_id=task_of_class[class_id])

    weights_tag = cfg.weights_path if cfg.weights_path else f"random-init(seed={cfg.init_seed})"
    source = (
        f"layf-extract model={cfg.model_id} token={cfg.token} weights={weights_tag} "
        f"norm={'imagenet' if cfg.normalize else 'none'}"
    )
    writer.write(cfg.output_path, task_label_spaces=partition, source=source)
    return cfg.output_path
