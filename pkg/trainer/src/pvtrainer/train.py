"""Training loop: completion-only masked cross-entropy over LoRA adapters.

The objective averages token negative log-likelihood over masked
positions only, normalized by the total mask count of the batch; query
tokens never contribute. Optimizer is AdamW with linear warmup.
"""

from __future__ import annotations

import argparse
import csv
import logging
import random
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import torch
import yaml
from torch import nn

from .manifest import TrainPair, read_manifest
from .masking import TokenizedPair, tokenize_with_boundary
from .model import LoraConfig, build_model, lora_parameters, lora_state_dict
from .tokenizer import ByteTokenizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    max_steps: int | None = None
    batch_size: int = 4
    learning_rate: float = 1e-3
    warmup_steps: int = 10
    weight_decay: float = 0.0
    max_context_tokens: int = 8192
    seed: int = 0
    precision: str = "float32"
    lora: LoraConfig = field(default_factory=LoraConfig)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TrainConfig":
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        lora = LoraConfig(**doc.pop("lora", {}))
        return cls(lora=lora, **doc)

    def dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "bfloat16": torch.bfloat16}[self.precision]


def collate(batch: list[TokenizedPair], pad_id: int) -> dict[str, torch.Tensor]:
    """Right-pad to the longest sequence; padding is excluded from both
    attention and the loss mask."""
    width = max(len(p.input_ids) for p in batch)
    ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(batch), width), dtype=torch.long)
    attention = torch.zeros((len(batch), width), dtype=torch.long)
    for row, pair in enumerate(batch):
        n = len(pair.input_ids)
        ids[row, :n] = torch.tensor(pair.input_ids, dtype=torch.long)
        mask[row, :n] = torch.tensor(pair.mask, dtype=torch.long)
        attention[row, :n] = 1
    return {"input_ids": ids, "loss_mask": mask, "attention_mask": attention}


def masked_loss(logits: torch.Tensor, input_ids: torch.Tensor,
                loss_mask: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood over masked target tokens.

    Standard next-token shift: the prediction at position t-1 is scored
    against token t, and counted only when token t is masked. Normalized
    by the batch's total mask count.
    """
    targets = input_ids[:, 1:]
    mask = loss_mask[:, 1:].to(logits.dtype)
    total = mask.sum()
    if total.item() == 0:
        raise ValueError("batch mask selects no tokens")
    logprobs = torch.log_softmax(logits[:, :-1].float(), dim=-1)
    token_nll = -logprobs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return (token_nll * mask.float()).sum() / mask.float().sum()


@dataclass
class TrainResult:
    loss_curve: list[float]
    model: nn.Module
    skipped_batches: int = 0


def _batches(tokenized: list[TokenizedPair], batch_size: int, rng: random.Random):
    order = list(range(len(tokenized)))
    rng.shuffle(order)
    for i in range(0, len(order), batch_size):
        yield [tokenized[j] for j in order[i : i + batch_size]]


def train(
    pairs: list[TrainPair],
    config: TrainConfig,
    model: nn.Module | None = None,
    tokenizer: ByteTokenizer | None = None,
) -> TrainResult:
    """Fine-tune adapters on the pairs; returns the per-step loss curve.

    Base model weights stay frozen; only LoRA parameters receive updates.
    With ``max_steps`` (or ``epochs``) of zero the model is returned at
    initialization, untouched.
    """
    if not pairs:
        raise ValueError("no training pairs")
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    tokenizer = tokenizer or ByteTokenizer()
    if model is None:
        model = build_model(tokenizer.vocab_size, config.lora)
    model = model.to(config.dtype())
    model.train()

    tokenized = []
    for pair in pairs:
        tp = tokenize_with_boundary(pair, tokenizer)
        if len(tp.input_ids) > config.max_context_tokens:
            logger.warning("pair %s: %d tokens exceeds context %d; skipped",
                           pair.id, len(tp.input_ids), config.max_context_tokens)
            continue
        tokenized.append(tp)
    if not tokenized:
        raise ValueError("all pairs exceeded the context window")

    params = lora_parameters(model)
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate,
                                  weight_decay=config.weight_decay)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer,
        lambda step: min(1.0, (step + 1) / max(1, config.warmup_steps)),
    )

    budget = config.max_steps
    if budget is None:
        per_epoch = (len(tokenized) + config.batch_size - 1) // config.batch_size
        budget = config.epochs * per_epoch

    losses: list[float] = []
    skipped = 0
    step = 0
    while step < budget:
        for batch in _batches(tokenized, config.batch_size, rng):
            if step >= budget:
                break
            collated = collate(batch, tokenizer.pad_id)
            if collated["loss_mask"][:, 1:].sum().item() == 0:
                logger.warning("step %d: all-zero loss mask; batch skipped", step)
                skipped += 1
                continue
            logits = model(input_ids=collated["input_ids"],
                           attention_mask=collated["attention_mask"]).logits
            loss = masked_loss(logits, collated["input_ids"], collated["loss_mask"])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            losses.append(loss.item())
            step += 1
    return TrainResult(loss_curve=losses, model=model, skipped_batches=skipped)


def save_outputs(result: TrainResult, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(lora_state_dict(result.model), out_dir / "adapter.pt")
    with (out_dir / "loss_curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(result.loss_curve):
            writer.writerow([step, f"{loss:.6f}"])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pvminer-train",
        description="Fine-tune LoRA adapters on a pvminer SFT manifest",
    )
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--config", default=None, help="YAML training config")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--max-steps", type=int, default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    config = TrainConfig.from_yaml(args.config) if args.config else TrainConfig()
    if args.max_steps is not None:
        config = replace(config, max_steps=args.max_steps)

    pairs = read_manifest(args.manifest)
    logger.info("training on %d pairs", len(pairs))
    result = train(pairs, config)
    save_outputs(result, args.out_dir)
    first = result.loss_curve[0] if result.loss_curve else float("nan")
    last = result.loss_curve[-1] if result.loss_curve else float("nan")
    logger.info("done: %d steps, loss %.4f -> %.4f", len(result.loss_curve),
                first, last)
    return 0


if __name__ == "__main__":
    sys.exit(main())
