"""Base model construction and hand-rolled low-rank adapters.

Adapters follow the standard LoRA formulation: for a frozen linear layer
W, the effective weight becomes W + (alpha / r) * B A with A, B low-rank
and only A, B trainable. Updates are applied to the attention projection
layers only; every base parameter stays frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

ATTENTION_PROJECTIONS = ("q_proj", "k_proj", "v_proj", "o_proj")


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 8
    alpha: float = 16.0
    target_modules: tuple[str, ...] = ATTENTION_PROJECTIONS

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


class LoraLinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank delta."""

    def __init__(self, base: nn.Linear, cfg: LoraConfig):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.scaling = cfg.alpha / cfg.rank
        self.lora_a = nn.Linear(base.in_features, cfg.rank, bias=False)
        self.lora_b = nn.Linear(cfg.rank, base.out_features, bias=False)
        nn.init.kaiming_uniform_(self.lora_a.weight, a=math.sqrt(5))
        nn.init.zeros_(self.lora_b.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * self.lora_b(self.lora_a(x))


def apply_lora(model: nn.Module, cfg: LoraConfig) -> int:
    """Freeze the model and wrap the targeted projections. Returns the
    number of layers wrapped."""
    for p in model.parameters():
        p.requires_grad_(False)
    wrapped = 0
    for module in model.modules():
        for name in cfg.target_modules:
            child = getattr(module, name, None)
            if isinstance(child, nn.Linear):
                setattr(module, name, LoraLinear(child, cfg))
                wrapped += 1
    if wrapped == 0:
        raise ValueError(f"no target modules {cfg.target_modules} found")
    return wrapped


def build_model(vocab_size: int, cfg: LoraConfig, *,
                hidden_size: int = 64, num_layers: int = 2,
                num_heads: int = 4, max_positions: int = 2048) -> nn.Module:
    """Config-initialized tiny causal LM with adapters attached.

    Random weights, nothing downloaded; sized for desk-scale smoke runs.
    Swap in a pretrained checkpoint by loading it and calling
    ``apply_lora`` directly.
    """
    from transformers import LlamaConfig, LlamaForCausalLM

    model = LlamaForCausalLM(
        LlamaConfig(
            vocab_size=vocab_size,
            hidden_size=hidden_size,
            intermediate_size=hidden_size * 2,
            num_hidden_layers=num_layers,
            num_attention_heads=num_heads,
            num_key_value_heads=num_heads,
            max_position_embeddings=max_positions,
        )
    )
    apply_lora(model, cfg)
    return model


def lora_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def lora_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    """Only the adapter weights; the base model is reconstructable."""
    return {
        name: tensor.detach().clone()
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }
