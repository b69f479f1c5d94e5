"""Compact decoder-only transformer used both as prompt encoder and
forecasting backbone, plus the cross-modality alignment variants.

The backbone is intentionally small and self-contained; a checkpoint
format is provided so externally trained weights can be imported later
without touching the architecture code.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import (
    DimMismatch,
    PromptTooLong,
    RankTooLarge,
    RecordingDisabled,
    UnknownVariant,
)

ASPECT_SLOTS = ("global", "local", "statistical", "temporal")
ATTENTION_LABELS = ("Global", "Local", "Statistical", "Temporal", "TS")


class AlignVariant(str, Enum):
    CROSS_ATTENTION = "cross_attention"
    CONV_MAX_JOINT = "conv_max_joint"
    CONV_MAX_PROMPT_CROSS = "conv_max_prompt_cross"
    CONV_MAX_JOINT_CROSS = "conv_max_joint_cross"


class EncoderMode(str, Enum):
    SINGLE = "single"
    DUAL_FROZEN = "dual_frozen"
    DUAL_TRAINABLE = "dual_trainable"


@dataclass
class BackboneConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    context_limit: int = 1024
    vocab_size: int = 257
    align_heads: int = 4
    lora_rank: int = 8
    lora_alpha: float = 16.0
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise DimMismatch(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.d_model % self.align_heads != 0:
            raise DimMismatch(
                f"d_model {self.d_model} not divisible by align_heads {self.align_heads}"
            )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class AttentionRecorder:
    """Collects post-softmax attention matrices, one entry per layer call."""

    def __init__(self):
        self.layers: list[torch.Tensor] = []

    def add(self, att: torch.Tensor) -> None:
        self.layers.append(att.detach())


def _masked_softmax_rows(scores: torch.Tensor, key_mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Softmax over the last dim with banned keys receiving exactly zero."""
    if key_mask is not None:
        scores = scores.masked_fill(~key_mask, float("-inf"))
    att = F.softmax(scores, dim=-1)
    if key_mask is not None:
        # rows whose keys are all banned would be NaN; zero them instead
        att = torch.nan_to_num(att, nan=0.0)
    return att


class CausalSelfAttention(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.d_head = cfg.d_model // cfg.n_heads
        self.qkv = nn.Linear(cfg.d_model, 3 * cfg.d_model)
        self.proj = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(
        self,
        x: torch.Tensor,
        key_mask: Optional[torch.Tensor] = None,
        recorder: Optional[AttentionRecorder] = None,
    ) -> torch.Tensor:
        b, s, d = x.shape
        q, k, v = self.qkv(x).split(d, dim=2)
        q = q.view(b, s, self.n_heads, self.d_head).transpose(1, 2)
        k = k.view(b, s, self.n_heads, self.d_head).transpose(1, 2)
        v = v.view(b, s, self.n_heads, self.d_head).transpose(1, 2)
        causal = torch.ones(s, s, dtype=torch.bool, device=x.device).tril()
        mask = causal[None, None, :, :]
        if key_mask is not None:
            mask = mask & key_mask[:, None, None, :]
        if recorder is None:
            out = F.scaled_dot_product_attention(q, k, v, attn_mask=mask)
            out = torch.nan_to_num(out, nan=0.0)
        else:
            scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.d_head)
            att = _masked_softmax_rows(scores, mask.expand(b, self.n_heads, s, s))
            recorder.add(att)
            out = att @ v
        out = out.transpose(1, 2).reshape(b, s, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        hidden = cfg.mlp_ratio * cfg.d_model
        self.fc = nn.Linear(cfg.d_model, hidden)
        self.proj = nn.Linear(hidden, cfg.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(F.gelu(self.fc(x)))


class Block(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = CausalSelfAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.mlp = Mlp(cfg)

    def forward(self, x, key_mask=None, recorder=None):
        x = x + self.attn(self.ln1(x), key_mask=key_mask, recorder=recorder)
        x = x + self.mlp(self.ln2(x))
        return x


class Backbone(nn.Module):
    """Decoder-only transformer over token ids or precomputed embedding rows."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.wte = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.wpe = nn.Embedding(cfg.context_limit, cfg.d_model)
        self.blocks = nn.ModuleList([Block(cfg) for _ in range(cfg.n_layers)])
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.lora_a: Optional[nn.Parameter] = None
        self.lora_b: Optional[nn.Parameter] = None
        self.lora_scale: float = 0.0

    @property
    def has_lora(self) -> bool:
        return self.lora_a is not None

    def embed_tokens(self, ids: torch.Tensor) -> torch.Tensor:
        base = self.wte(ids)
        if self.has_lora:
            base = base + self.lora_scale * (self.lora_a[ids] @ self.lora_b)
        return base

    def forward_embedded(
        self,
        rows: torch.Tensor,
        key_mask: Optional[torch.Tensor] = None,
        recorder: Optional[AttentionRecorder] = None,
    ) -> torch.Tensor:
        b, s, _ = rows.shape
        if s > self.cfg.context_limit:
            raise PromptTooLong("sequence", s, self.cfg.context_limit)
        positions = torch.arange(s, device=rows.device)
        h = rows + self.wpe(positions)[None, :, :]
        for block in self.blocks:
            h = block(h, key_mask=key_mask, recorder=recorder)
        return self.ln_f(h)

    def encode_tokens(self, ids: torch.Tensor, key_mask=None, recorder=None) -> torch.Tensor:
        return self.forward_embedded(self.embed_tokens(ids), key_mask=key_mask, recorder=recorder)


def apply_lora(backbone: Backbone, rank: Optional[int] = None, alpha: Optional[float] = None) -> Backbone:
    """Attach zero-initialized low-rank factors to the token embedding.

    The A factor starts at zero so the adapted model is bitwise identical
    to the base model until training moves it. The base embedding matrix
    is frozen; only the factors receive gradients.
    """
    cfg = backbone.cfg
    rank = cfg.lora_rank if rank is None else rank
    alpha = cfg.lora_alpha if alpha is None else alpha
    if rank < 1:
        raise RankTooLarge("lora rank must be >= 1")
    if rank > cfg.d_model:
        raise RankTooLarge(f"lora rank {rank} exceeds d_model {cfg.d_model}")
    dtype = backbone.wte.weight.dtype
    a = torch.zeros(cfg.vocab_size, rank, dtype=dtype)
    b = torch.randn(rank, cfg.d_model, dtype=dtype) / math.sqrt(rank)
    backbone.lora_a = nn.Parameter(a)
    backbone.lora_b = nn.Parameter(b)
    backbone.lora_scale = alpha / rank
    backbone.wte.weight.requires_grad_(False)
    return backbone


class MultiHeadCrossAttention(nn.Module):
    """Scaled dot-product attention with prompt rows as queries and the
    time-series embedding as keys/values."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise DimMismatch(f"d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = nn.Linear(d_model, d_model)
        self.wk = nn.Linear(d_model, d_model)
        self.wv = nn.Linear(d_model, d_model)
        self.wo = nn.Linear(d_model, d_model)

    def forward(
        self,
        queries: torch.Tensor,  # [B, P, D]
        keys: torch.Tensor,     # [B, N, D]
        values: torch.Tensor,   # [B, N, D]
        recorder: Optional[AttentionRecorder] = None,
    ) -> torch.Tensor:
        if queries.shape[-1] != keys.shape[-1] or keys.shape[:2] != values.shape[:2]:
            raise DimMismatch("query/key/value widths do not agree")
        b, p, d = queries.shape
        n = keys.shape[1]
        q = self.wq(queries).view(b, p, self.n_heads, self.d_head).transpose(1, 2)
        k = self.wk(keys).view(b, n, self.n_heads, self.d_head).transpose(1, 2)
        v = self.wv(values).view(b, n, self.n_heads, self.d_head).transpose(1, 2)
        att = F.softmax((q @ k.transpose(-2, -1)) / math.sqrt(self.d_head), dim=-1)
        if recorder is not None:
            recorder.add(att)
        out = (att @ v).transpose(1, 2).reshape(b, p, d)
        return self.wo(out)


class AlignmentModule(nn.Module):
    """Fuses prompt rows with the series embedding into one d_model vector.

    All four strategies share the same parameter set so a single checkpoint
    can be evaluated under any variant.
    """

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        d = cfg.d_model
        self.mhca = MultiHeadCrossAttention(d, cfg.align_heads)
        self.conv = nn.Conv1d(d, d, kernel_size=3, padding=1)
        self.flatten_proj = nn.Linear(len(ASPECT_SLOTS) * d, d)

    def conv_rows(self, stack: torch.Tensor) -> torch.Tensor:
        """Convolution over the row axis, rows as sequence and dims as channels."""
        return self.conv(stack.transpose(1, 2)).transpose(1, 2)

    def _conv_max(self, stack: torch.Tensor) -> torch.Tensor:
        return self.conv_rows(stack).max(dim=1).values

    def forward(
        self,
        prompt_rows: torch.Tensor,       # [B, P, D], P >= 1
        slots: Sequence[int],            # aspect slot of each prompt row
        ts_embed: torch.Tensor,          # [B, D]
        variant: AlignVariant,
        recorder: Optional[AttentionRecorder] = None,
    ) -> torch.Tensor:
        if prompt_rows.ndim != 3 or prompt_rows.shape[1] != len(slots):
            raise DimMismatch("prompt_rows must be [batch, P, d_model] matching slots")
        b, p, d = prompt_rows.shape
        ts = ts_embed[:, None, :]
        variant = AlignVariant(variant)
        # every cross-attention site keeps the query on a residual path:
        # with a single series key the attention readout alone is
        # query-independent (softmax over one logit is 1), and the residual
        # is what lets prompt content reach the forecast and gradients reach
        # the prompt encoders
        if variant is AlignVariant.CROSS_ATTENTION:
            attended = prompt_rows + self.mhca(prompt_rows, ts, ts, recorder=recorder)
            buffer = attended.new_zeros(b, len(ASPECT_SLOTS), d)
            buffer[:, list(slots), :] = attended
            return self.flatten_proj(buffer.reshape(b, -1))
        if variant is AlignVariant.CONV_MAX_JOINT:
            return self._conv_max(torch.cat([prompt_rows, ts], dim=1))
        if variant is AlignVariant.CONV_MAX_PROMPT_CROSS:
            query = self._conv_max(prompt_rows)[:, None, :]
            return (query + self.mhca(query, ts, ts, recorder=recorder))[:, 0, :]
        if variant is AlignVariant.CONV_MAX_JOINT_CROSS:
            query = self._conv_max(torch.cat([prompt_rows, ts], dim=1))[:, None, :]
            return (query + self.mhca(query, ts, ts, recorder=recorder))[:, 0, :]
        raise UnknownVariant(str(variant))


class Forecaster(nn.Module):
    """Full prompt-conditioned forecasting pipeline.

    The same backbone encodes prompts (through their end-of-sequence token)
    and consumes the fused representation for forecasting; dual-encoder
    modes instantiate a second transformer for the text side.
    """

    def __init__(
        self,
        cfg: BackboneConfig,
        input_len: int,
        horizon: int,
        tokenizer,
        variant: AlignVariant = AlignVariant.CROSS_ATTENTION,
        encoder_mode: EncoderMode = EncoderMode.SINGLE,
        wte_baseline: bool = False,
        n_prototypes: int = 16,
        apply_adapters: bool = True,
        attention_recording: bool = True,
    ):
        super().__init__()
        self.cfg = cfg
        self.input_len = input_len
        self.horizon = horizon
        self.tokenizer = tokenizer
        self.variant = AlignVariant(variant)
        self.encoder_mode = EncoderMode(encoder_mode)
        self.wte_baseline = wte_baseline
        self.attention_recording = attention_recording

        self.backbone = Backbone(cfg)
        if self.encoder_mode is EncoderMode.SINGLE:
            self.text_encoder = self.backbone
        else:
            self.text_encoder = Backbone(cfg)
        self.series_embed = nn.Linear(input_len, cfg.d_model)
        self.prompt_proj = nn.ModuleList(
            [nn.Linear(cfg.d_model, cfg.d_model) for _ in ASPECT_SLOTS]
        )
        self.align = AlignmentModule(cfg)
        self.head = nn.Linear(cfg.d_model, horizon)
        if wte_baseline:
            if n_prototypes > cfg.vocab_size:
                raise DimMismatch("prototype count exceeds vocab size")
            self.n_prototypes = n_prototypes
            self.wte_reduce = nn.Linear(n_prototypes, len(ASPECT_SLOTS))
        if apply_adapters:
            apply_lora(self.backbone)
            if self.encoder_mode is EncoderMode.DUAL_TRAINABLE:
                apply_lora(self.text_encoder)
        self.configure_training()

    # --- training scope ---

    def configure_training(self) -> None:
        """Freeze the base transformer(s); train adapters and task modules."""
        for p in self.parameters():
            p.requires_grad_(False)
        for module in [self.series_embed, self.prompt_proj, self.align, self.head]:
            for p in module.parameters():
                p.requires_grad_(True)
        if self.backbone.has_lora:
            self.backbone.lora_a.requires_grad_(True)
            self.backbone.lora_b.requires_grad_(True)
        if self.encoder_mode is EncoderMode.DUAL_TRAINABLE and self.text_encoder.has_lora:
            self.text_encoder.lora_a.requires_grad_(True)
            self.text_encoder.lora_b.requires_grad_(True)
        if self.wte_baseline:
            for p in self.wte_reduce.parameters():
                p.requires_grad_(True)

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    # --- prompt encoding ---

    def _token_ids(self, text: str) -> list[int]:
        ids = self.tokenizer.encode(text)
        if len(ids) + 1 > self.cfg.context_limit:
            raise PromptTooLong("prompt", len(ids), self.cfg.context_limit - 1)
        return ids + [self.tokenizer.eos_id]

    def encode_prompt(self, text: str, slot: int) -> torch.Tensor:
        """Single-prompt EOS embedding after the per-aspect projection; [D]."""
        return self.encode_texts([(slot, text)])[0]

    def encode_texts(self, slot_texts: Sequence[tuple[int, str]]) -> torch.Tensor:
        """Encode several (slot, text) pairs through the text encoder.

        Returns [len(slot_texts), D] rows in input order. Sequences are
        bucketed by similar length before padding (attention cost grows
        quadratically with the padded length), and padding positions are
        excluded from attention, so results match one-at-a-time encoding.
        """
        ids = [self._token_ids(text) for _, text in slot_texts]
        order = sorted(range(len(ids)), key=lambda i: len(ids[i]))
        eos_rows: list[Optional[torch.Tensor]] = [None] * len(ids)
        bucket: list[int] = []
        for i in order:
            if bucket and len(ids[i]) > 1.3 * len(ids[bucket[0]]):
                self._encode_bucket(ids, bucket, eos_rows)
                bucket = []
            bucket.append(i)
        if bucket:
            self._encode_bucket(ids, bucket, eos_rows)
        out = torch.stack(
            [self.prompt_proj[slot](eos_rows[i]) for i, (slot, _) in enumerate(slot_texts)]
        )
        return out

    def _encode_bucket(
        self,
        ids: Sequence[list[int]],
        members: Sequence[int],
        eos_rows: list,
    ) -> None:
        device = self.head.weight.device
        dtype = self.head.weight.dtype
        max_len = max(len(ids[i]) for i in members)
        batch = torch.zeros(len(members), max_len, dtype=torch.long, device=device)
        key_mask = torch.zeros(len(members), max_len, dtype=torch.bool, device=device)
        eos_pos = []
        for row, i in enumerate(members):
            seq = ids[i]
            batch[row, :len(seq)] = torch.tensor(seq, dtype=torch.long, device=device)
            key_mask[row, :len(seq)] = True
            eos_pos.append(len(seq) - 1)
        hidden = self.text_encoder.encode_tokens(batch, key_mask=key_mask).to(dtype)
        picked = hidden[torch.arange(len(members)), torch.tensor(eos_pos, device=device)]
        for row, i in enumerate(members):
            eos_rows[i] = picked[row]

    # --- WTE-prototype baseline ---

    def wte_queries(
        self, batch_size: int, prototypes: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        """Prototype rows reduced by the learned affine map to one query per
        aspect slot. Defaults to the leading token-embedding rows; passing
        explicit prototypes supports equivalence checks against the prompt
        path."""
        if prototypes is None:
            prototypes = self.backbone.wte.weight[: self.n_prototypes]  # [n_proto, D]
        queries = self.wte_reduce(prototypes.transpose(0, 1)).transpose(0, 1)  # [4, D]
        return queries[None, :, :].expand(batch_size, -1, -1)

    def wte_align(
        self,
        ts_embed: torch.Tensor,  # [B, D]
        prototypes: Optional[torch.Tensor] = None,
        recorder: Optional[AttentionRecorder] = None,
    ) -> torch.Tensor:
        """Alignment with prototype-derived queries in place of prompt rows."""
        queries = self.wte_queries(ts_embed.shape[0], prototypes)
        return self.align(queries, list(range(len(ASPECT_SLOTS))), ts_embed,
                          self.variant, recorder=recorder)

    # --- forecasting ---

    def forward(
        self,
        windows: torch.Tensor,                  # [B, input_len], normalized
        slot_texts: Optional[Sequence[Sequence[Optional[str]]]] = None,
        recorder: Optional[AttentionRecorder] = None,
    ) -> torch.Tensor:
        if windows.ndim != 2 or windows.shape[1] != self.input_len:
            raise DimMismatch(
                f"windows must be [batch, {self.input_len}], got {tuple(windows.shape)}"
            )
        b = windows.shape[0]
        series = self.series_embed(windows)  # [B, D]

        if self.wte_baseline:
            aligned = self.wte_align(series, recorder=recorder)
            return self._run_backbone(series, aligned)

        if slot_texts is None or all(all(t is None for t in row) for row in slot_texts):
            # no-prompt path: alignment is bypassed entirely
            return self._run_backbone(series, None)

        if len(slot_texts) != b:
            raise DimMismatch("one slot-text row per window required")
        # encode each distinct (slot, text) once for the whole batch
        unique: dict[tuple[int, str], int] = {}
        for row in slot_texts:
            for slot, text in enumerate(row):
                if text is not None and (slot, text) not in unique:
                    unique[(slot, text)] = len(unique)
        encoded = self.encode_texts(list(unique.keys()))

        # group windows sharing a slot pattern so alignment and the
        # forecasting pass run batched
        groups: dict[tuple[int, ...], list[int]] = {}
        for i, row in enumerate(slot_texts):
            slots = tuple(s for s, t in enumerate(row) if t is not None)
            groups.setdefault(slots, []).append(i)

        out = series.new_empty(b, self.horizon)
        for slots, members in groups.items():
            if not slots:
                out[members] = self._run_backbone(series[members], None)
                continue
            rows = torch.stack(
                [
                    torch.stack([encoded[unique[(s, slot_texts[i][s])]] for s in slots])
                    for i in members
                ]
            )
            aligned = self.align(rows, list(slots), series[members],
                                 self.variant, recorder=recorder)
            out[members] = self._run_backbone(series[members], aligned)
        return out

    def _run_backbone(self, series: torch.Tensor, aligned: Optional[torch.Tensor]) -> torch.Tensor:
        if aligned is None:
            seq = series[:, None, :]
        else:
            seq = torch.stack([series, aligned], dim=1)
        hidden = self.backbone.forward_embedded(seq)
        return self.head(hidden[:, -1, :])


@dataclass
class AttentionExport:
    """Per-layer and layer-group attention over the labeled positions."""

    labels: tuple[str, ...]
    per_layer: list[np.ndarray]        # each [heads, S, S]
    groups: list[tuple[int, ...]]      # layer ids per group
    group_means: list[np.ndarray]      # each [S, S], head- and layer-averaged


def export_attention(
    forecaster: Forecaster,
    window: torch.Tensor,                       # [input_len], normalized
    slot_texts: Sequence[Optional[str]],
) -> AttentionExport:
    """Run the backbone over the labeled prompt/series positions and dump
    row-stochastic attention, with contiguous layer-group averages."""
    if not forecaster.attention_recording:
        raise RecordingDisabled("forecaster was built with attention_recording=False")
    recorder = AttentionRecorder()
    device = forecaster.head.weight.device
    dtype = forecaster.head.weight.dtype
    with torch.no_grad():
        series = forecaster.series_embed(window[None, :])  # [1, D]
        rows = torch.zeros(1, len(ASPECT_SLOTS) + 1, forecaster.cfg.d_model,
                           device=device, dtype=dtype)
        mask = torch.zeros(1, len(ASPECT_SLOTS) + 1, dtype=torch.bool, device=device)
        present = [(s, t) for s, t in enumerate(slot_texts) if t is not None]
        if present:
            encoded = forecaster.encode_texts(present)
            for i, (slot, _) in enumerate(present):
                rows[0, slot] = encoded[i]
                mask[0, slot] = True
        rows[0, -1] = series[0]
        mask[0, -1] = True
        forecaster.backbone.forward_embedded(rows, key_mask=mask, recorder=recorder)
    per_layer = [att[0].cpu().double().numpy() for att in recorder.layers]
    n_layers = len(per_layer)
    group_ids = [tuple(int(i) for i in chunk)
                 for chunk in np.array_split(np.arange(n_layers), min(4, n_layers))]
    group_means = [
        np.mean([per_layer[i].mean(axis=0) for i in chunk], axis=0) for chunk in group_ids
    ]
    return AttentionExport(
        labels=ATTENTION_LABELS,
        per_layer=per_layer,
        groups=group_ids,
        group_means=group_means,
    )


# --- checkpoint format -------------------------------------------------------

CHECKPOINT_MAGIC = b"TSFC"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: nn.Module, config: dict, path: str) -> None:
    """Binary checkpoint: magic, version, JSON config block, then named
    float32 tensors (name, shape, row-major data)."""
    state = model.state_dict()
    out: list[bytes] = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    cfg_raw = json.dumps(config, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(cfg_raw)))
    out.append(cfg_raw)
    out.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        raw_name = name.encode("utf-8")
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        out.append(struct.pack("<I", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        out.append(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        chunk = data[pos:pos + n]
        if len(chunk) != n:
            raise ValueError("truncated checkpoint")
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version = struct.unpack("<I", take(4))[0]
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    config = json.loads(take(struct.unpack("<I", take(4))[0]).decode("utf-8"))
    n_tensors = struct.unpack("<I", take(4))[0]
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        name = take(struct.unpack("<I", take(4))[0]).decode("utf-8")
        ndim = struct.unpack("<I", take(4))[0]
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim)) if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(4 * count), dtype=np.float32).reshape(shape).copy()
        tensors[name] = arr
    return config, tensors


def load_into_model(model: nn.Module, path: str) -> dict:
    config, tensors = load_checkpoint(path)
    dtype = next(model.parameters()).dtype
    state = {name: torch.from_numpy(arr).to(dtype) for name, arr in tensors.items()}
    model.load_state_dict(state)
    return config
