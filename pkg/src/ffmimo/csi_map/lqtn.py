"""Learnable-queries transformer mapping (BS, UE) positions to per-RB CSI.

One trainable query vector per resource block drives the decoder; its
output latent feeds four classification heads (rank, two CQIs, PMI).
Everything runs in float64 on CPU and every random draw goes through an
explicit generator, so a seed pins the model exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..link import CsiReport


@dataclass
class LqtnConfig:
    embed_dim: int = 64
    num_heads: int = 4
    rb_count: int = 8
    max_rank: int = 2
    num_cqi: int = 16
    num_pmi: int = 128
    ffn_dim: int = 128
    encoder_layers: int = 1
    decoder_layers: int = 2
    # min/max per coordinate used to normalize positions into [0, 1]
    norm_bounds: tuple[tuple[float, float], ...] = ((0.0, 400.0), (0.0, 300.0), (0.0, 30.0))

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")


def _init_linear(layer: nn.Linear, g: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(layer.in_features)
    layer.weight.data.uniform_(-bound, bound, generator=g)
    if layer.bias is not None:
        layer.bias.data.uniform_(-bound, bound, generator=g)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with per-head projections."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = nn.Linear(dim, dim)
        self.wk = nn.Linear(dim, dim)
        self.wv = nn.Linear(dim, dim)
        self.wo = nn.Linear(dim, dim)

    def forward(self, queries, keys, values, return_weights: bool = False):
        squeeze = queries.dim() == 2
        if squeeze:
            queries, keys, values = (x.unsqueeze(0) for x in (queries, keys, values))
        b, n, d = queries.shape
        m = keys.shape[1]
        q = self.wq(queries).view(b, n, self.heads, self.head_dim).transpose(1, 2)
        k = self.wk(keys).view(b, m, self.heads, self.head_dim).transpose(1, 2)
        v = self.wv(values).view(b, m, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        out = self.wo(out)
        if squeeze:
            out = out.squeeze(0)
            attn = attn.squeeze(0)
        if return_weights:
            return out, attn
        return out


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(torch.relu(self.fc1(x)))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads)
        self.ffn = FeedForward(dim, ffn_dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        x = self.norm1(x + self.attn(x, x, x))
        return self.norm2(x + self.ffn(x))


class DecoderLayer(nn.Module):
    """Query self-attention, cross-attention to the encoder, feed-forward."""

    def __init__(self, dim: int, heads: int, ffn_dim: int):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, heads)
        self.cross_attn = MultiHeadAttention(dim, heads)
        self.ffn = FeedForward(dim, ffn_dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, q, memory):
        q = self.norm1(q + self.self_attn(q, q, q))
        q = self.norm2(q + self.cross_attn(q, memory, memory))
        return self.norm3(q + self.ffn(q))


class Head(nn.Module):
    def __init__(self, dim: int, classes: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, classes)

    def forward(self, x):
        return self.fc2(torch.relu(self.fc1(x)))


class LqtnModel(nn.Module):
    def __init__(self, config: LqtnConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        d, h, f = config.embed_dim, config.num_heads, config.ffn_dim
        self.in_fc1 = nn.Linear(3, d)
        self.in_fc2 = nn.Linear(d, d)
        self.encoder = nn.ModuleList(
            EncoderLayer(d, h, f) for _ in range(config.encoder_layers)
        )
        self.decoder = nn.ModuleList(
            DecoderLayer(d, h, f) for _ in range(config.decoder_layers)
        )
        self.rb_queries = nn.Parameter(torch.empty(config.rb_count, d))
        self.head_ri = Head(d, config.max_rank)
        self.head_cqi1 = Head(d, config.num_cqi)
        self.head_cqi2 = Head(d, config.num_cqi)
        self.head_pmi = Head(d, config.num_pmi)
        self.double()
        self._reset_parameters(seed)

    def _reset_parameters(self, seed: int) -> None:
        g = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, nn.Linear):
                _init_linear(module, g)
        self.rb_queries.data.uniform_(
            -1.0 / math.sqrt(self.config.embed_dim),
            1.0 / math.sqrt(self.config.embed_dim),
            generator=g,
        )

    def _normalize(self, loc: torch.Tensor) -> torch.Tensor:
        lo = torch.tensor([b[0] for b in self.config.norm_bounds], dtype=loc.dtype)
        hi = torch.tensor([b[1] for b in self.config.norm_bounds], dtype=loc.dtype)
        return (loc - lo) / (hi - lo)

    def forward(self, bs_loc: torch.Tensor, ue_loc: torch.Tensor) -> dict[str, torch.Tensor]:
        """bs_loc, ue_loc: (B, 3) -> per-RB logits, each (B, rb_count, classes)."""
        if not (torch.isfinite(bs_loc).all() and torch.isfinite(ue_loc).all()):
            raise ValueError("non-finite position input")
        tokens = torch.stack([self._normalize(bs_loc), self._normalize(ue_loc)], dim=1)
        x = self.in_fc2(torch.relu(self.in_fc1(tokens)))
        for layer in self.encoder:
            x = layer(x)
        q = self.rb_queries.unsqueeze(0).expand(x.shape[0], -1, -1)
        for layer in self.decoder:
            q = layer(q, x)
        return {
            "ri": self.head_ri(q),
            "cqi1": self.head_cqi1(q),
            "cqi2": self.head_cqi2(q),
            "pmi": self.head_pmi(q),
        }

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def model_memory_mb(model: LqtnModel) -> float:
    """Reporting rule: 4 bytes per parameter over 1024^2."""
    return 4.0 * model.parameter_count() / 1024.0**2


def labels_tensor(reports: list[tuple[CsiReport, ...]]) -> torch.Tensor:
    """Per-record label tuples -> (B, rb_count, 4) class-index tensor."""
    out = torch.empty(len(reports), len(reports[0]), 4, dtype=torch.long)
    for i, labels in enumerate(reports):
        for rb, rep in enumerate(labels):
            out[i, rb, 0] = rep.ri - 1
            out[i, rb, 1] = rep.cqi1
            out[i, rb, 2] = rep.cqi2
            out[i, rb, 3] = rep.pmi
    return out


_HEAD_ORDER = ("ri", "cqi1", "cqi2", "pmi")


def lqtn_loss(logits: dict[str, torch.Tensor], labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy summed over RBs and heads, averaged over the batch."""
    total = None
    for col, name in enumerate(_HEAD_ORDER):
        lg = logits[name]
        ce = nn.functional.cross_entropy(
            lg.reshape(-1, lg.shape[-1]), labels[:, :, col].reshape(-1), reduction="sum"
        )
        total = ce if total is None else total + ce
    return total / labels.shape[0]


@dataclass
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    optimizer: str = "sgd"  # plain SGD is the baseline contract; "adam" optional


def train_lqtn(
    model: LqtnModel,
    bs_loc: np.ndarray,
    ue_locs: np.ndarray,
    labels: torch.Tensor,
    hp: TrainConfig,
) -> list[float]:
    """Train in place; returns the per-epoch mean loss trace."""
    n = len(ue_locs)
    if n == 0:
        raise ValueError("empty training set")
    bs_t = torch.as_tensor(np.broadcast_to(bs_loc, (n, 3)).copy(), dtype=torch.float64)
    ue_t = torch.as_tensor(np.asarray(ue_locs), dtype=torch.float64)
    if hp.optimizer == "sgd":
        opt = torch.optim.SGD(model.parameters(), lr=hp.lr)
    elif hp.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=hp.lr)
    else:
        raise ValueError(f"unknown optimizer {hp.optimizer!r}")
    g = torch.Generator().manual_seed(hp.seed)
    trace: list[float] = []
    for _ in range(hp.epochs):
        perm = torch.randperm(n, generator=g)
        epoch_loss = 0.0
        for start in range(0, n, hp.batch_size):
            idx = perm[start : start + hp.batch_size]
            opt.zero_grad()
            out = model(bs_t[idx], ue_t[idx])
            loss = lqtn_loss(out, labels[idx])
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach()) * len(idx)
        trace.append(epoch_loss / n)
    return trace


def logits_to_reports(logits: dict[str, torch.Tensor]) -> list[list[CsiReport]]:
    """Argmax over each head's valid class set; one report list per batch row."""
    ri = logits["ri"].argmax(dim=-1) + 1
    cqi1 = logits["cqi1"].argmax(dim=-1)
    cqi2 = logits["cqi2"].argmax(dim=-1)
    pmi = logits["pmi"].argmax(dim=-1)
    out = []
    for b in range(ri.shape[0]):
        out.append(
            [
                CsiReport(
                    ri=int(ri[b, rb]),
                    cqi1=int(cqi1[b, rb]),
                    cqi2=int(cqi2[b, rb]),
                    pmi=int(pmi[b, rb]),
                )
                for rb in range(ri.shape[1])
            ]
        )
    return out


# --- checkpoint I/O: flat float64 binary + JSON manifest ---


def save_checkpoint(model: LqtnModel, path_prefix: str | Path) -> tuple[Path, Path]:
    prefix = Path(path_prefix)
    bin_path = prefix.with_suffix(".bin")
    manifest_path = prefix.with_suffix(".json")
    tensors = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, p in model.named_parameters():
            arr = p.detach().cpu().numpy().astype("<f8")
            fh.write(arr.tobytes())
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    cfg = asdict(model.config)
    cfg["norm_bounds"] = [list(b) for b in model.config.norm_bounds]
    manifest = {
        "format_version": 1,
        "dtype": "<f8",
        "config": cfg,
        "seed": model.seed,
        "parameter_count": model.parameter_count(),
        "tensors": tensors,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return bin_path, manifest_path


def load_checkpoint(path_prefix: str | Path) -> LqtnModel:
    prefix = Path(path_prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    cfg_doc = dict(manifest["config"])
    cfg_doc["norm_bounds"] = tuple(tuple(b) for b in cfg_doc["norm_bounds"])
    model = LqtnModel(LqtnConfig(**cfg_doc), seed=manifest["seed"])
    flat = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    named = dict(model.named_parameters())
    with torch.no_grad():
        for t in manifest["tensors"]:
            shape = tuple(t["shape"])
            numel = int(np.prod(shape)) if shape else 1
            chunk = flat[t["offset"] : t["offset"] + numel].reshape(shape)
            named[t["name"]].copy_(torch.from_numpy(chunk.copy()))
    return model
