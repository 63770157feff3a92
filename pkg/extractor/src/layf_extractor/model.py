"""Frozen vision-transformer backbones with per-block token capture.

The backbone stays in eval mode with gradients disabled throughout. For
every forward pass the class token after each encoder block is captured;
the model's final layer norm is applied to the last block's token only,
matching how the classification head would consume it. Exporting the
mean over patch tokens instead of the class token is supported via the
``token`` setting.
"""

from __future__ import annotations

import re

import torch
from torchvision.models.vision_transformer import VisionTransformer

# named backbones: (image_size, patch, blocks, heads, hidden, mlp)
BACKBONES = {
    "vit_b_16": dict(image_size=224, patch_size=16, num_layers=12, num_heads=12,
                     hidden_dim=768, mlp_dim=3072),
    # small configurations for spot checks on modest hardware
    "vit_s_32": dict(image_size=32, patch_size=8, num_layers=6, num_heads=4,
                     hidden_dim=64, mlp_dim=128),
    "vit_xs_32": dict(image_size=32, patch_size=8, num_layers=4, num_heads=4,
                      hidden_dim=48, mlp_dim=96),
}

_SPEC_RE = re.compile(r"^vit:(.+)$")


def parse_model_id(model_id: str) -> dict:
    """Resolve a named backbone or an inline ``vit:key=value,...`` spec."""
    if model_id in BACKBONES:
        return dict(BACKBONES[model_id])
    match = _SPEC_RE.match(model_id)
    if not match:
        raise ValueError(
            f"unknown model id {model_id!r}; use one of {sorted(BACKBONES)} or 'vit:image=...,patch=...,layers=...,heads=...,hidden=...,mlp=...'"
        )
    keys = {"image": "image_size", "patch": "patch_size", "layers": "num_layers",
            "heads": "num_heads", "hidden": "hidden_dim", "mlp": "mlp_dim"}
    spec = {}
    for part in match.group(1).split(","):
        key, _, value = part.partition("=")
        if key not in keys or not value:
            raise ValueError(f"bad model spec component {part!r}")
        spec[keys[key]] = int(value)
    missing = set(keys.values()) - set(spec)
    if missing:
        raise ValueError(f"model spec missing {sorted(missing)}")
    return spec


class FrozenBackbone:
    """A frozen ViT plus hooks that collect per-block class tokens."""

    def __init__(self, model_id: str, weights_path: str | None = None,
                 device: str = "cpu", init_seed: int = 0, token: str = "cls"):
        if token not in ("cls", "mean"):
            raise ValueError(f"token must be 'cls' or 'mean', got {token!r}")
        spec = parse_model_id(model_id)
        torch.manual_seed(init_seed)
        self.model = VisionTransformer(**spec)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            self.model.load_state_dict(state)
        self.model.eval().requires_grad_(False).to(device)
        self.model_id = model_id
        self.device = device
        self.token = token
        self.image_size = spec["image_size"]
        self.num_blocks = spec["num_layers"]
        self.hidden_dim = spec["hidden_dim"]
        self._captured: list[torch.Tensor] = []
        for block in self.model.encoder.layers:
            block.register_forward_hook(self._capture)

    def _capture(self, module, inputs, output):
        self._captured.append(output)

    def _pool(self, tokens: torch.Tensor) -> torch.Tensor:
        if self.token == "cls":
            return tokens[:, 0]
        return tokens[:, 1:].mean(dim=1)

    @torch.inference_mode()
    def layer_features(self, batch: torch.Tensor) -> list[torch.Tensor]:
        """Per-block pooled tokens for a (N, 3, H, W) batch, block order.

        The final layer norm is applied to the last block's tokens only.
        """
        self._captured.clear()
        self.model(batch.to(self.device))
        if len(self._captured) != self.num_blocks:
            raise RuntimeError(
                f"captured {len(self._captured)} block outputs, expected {self.num_blocks}"
            )
        blocks = self._captured[:-1] + [self.model.encoder.ln(self._captured[-1])]
        features = [self._pool(tokens).cpu() for tokens in blocks]
        self._captured.clear()
        return features
