"""Backbone, alignment, LoRA, and attention contracts.

Gradient correctness is checked against central finite differences on
double-precision toy shapes; the finite-difference side never reuses
autograd, so the two routes are independent.
"""
import numpy as np
import pytest
import torch
import torch.nn.functional as F

from aspectcast.errors import (
    DimMismatch,
    PromptTooLong,
    RankTooLarge,
    RecordingDisabled,
)
from aspectcast.model import (
    AlignVariant,
    AlignmentModule,
    AttentionRecorder,
    Backbone,
    BackboneConfig,
    EncoderMode,
    Forecaster,
    MultiHeadCrossAttention,
    apply_lora,
    export_attention,
    load_checkpoint,
    load_into_model,
    save_checkpoint,
)
from aspectcast.tokenizer import ByteTokenizer

torch.manual_seed(0)


def fd_check(loss_fn, params, eps=1e-3, tol=1e-4, n_samples=6, seed=0):
    """Compare autograd gradients with central finite differences on a
    random sample of coordinates of each parameter."""
    loss = loss_fn()
    tensors = list(params.values())
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    rng = np.random.default_rng(seed)
    for (name, p), g in zip(params.items(), grads):
        flat = p.detach().reshape(-1)
        count = min(n_samples, flat.numel())
        coords = rng.choice(flat.numel(), size=count, replace=False)
        for i in coords:
            i = int(i)
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(loss_fn().detach())
            flat[i] = orig - eps
            lo = float(loss_fn().detach())
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            ag = 0.0 if g is None else float(g.reshape(-1)[i])
            assert abs(fd - ag) < tol, f"{name}[{i}]: fd={fd} autograd={ag}"


def tiny_config(**overrides):
    base = dict(d_model=16, n_layers=1, n_heads=2, context_limit=64,
                vocab_size=257, align_heads=2, lora_rank=2, lora_alpha=4.0)
    base.update(overrides)
    return BackboneConfig(**base)


def tiny_forecaster(input_len=6, horizon=3, dtype=torch.float64, **overrides) -> Forecaster:
    torch.manual_seed(1)
    model = Forecaster(tiny_config(**overrides), input_len, horizon, ByteTokenizer(),
                       **{k: v for k, v in {}.items()})
    return model.to(dtype)


# --- series embedding ---------------------------------------------------------

def test_embed_series_zero_window_zero_bias():
    model = tiny_forecaster()
    with torch.no_grad():
        model.series_embed.bias.zero_()
    out = model.series_embed(torch.zeros(1, 6, dtype=torch.float64))
    assert torch.equal(out, torch.zeros_like(out))


def test_embed_series_affine_identity():
    model = tiny_forecaster()
    x = torch.randn(1, 6, dtype=torch.float64)
    for a in (0.5, 2.0, -3.0):
        lhs = model.series_embed(a * x) - a * model.series_embed(x)
        rhs = (1 - a) * model.series_embed.bias
        assert torch.allclose(lhs[0], rhs, atol=1e-12)


def test_embed_series_gradient():
    model = tiny_forecaster()
    x = torch.randn(1, 6, dtype=torch.float64)
    r = torch.randn(1, 16, dtype=torch.float64)

    def loss():
        return (model.series_embed(x) * r).sum()

    fd_check(loss, {"w": model.series_embed.weight, "b": model.series_embed.bias})


def test_embed_series_length_check():
    model = tiny_forecaster()
    with pytest.raises(DimMismatch):
        model(torch.zeros(1, 7, dtype=torch.float64), None)


# --- multi-head cross-attention -------------------------------------------------

def test_mhca_single_key_ignores_query():
    mhca = MultiHeadCrossAttention(8, 2).double()
    kv = torch.randn(1, 1, 8, dtype=torch.float64)
    q1 = torch.randn(1, 3, 8, dtype=torch.float64)
    q2 = torch.randn(1, 3, 8, dtype=torch.float64)
    assert torch.equal(mhca(q1, kv, kv), mhca(q2, kv, kv))


def test_mhca_equal_keys_uniform_attention():
    mhca = MultiHeadCrossAttention(8, 2).double()
    k = torch.randn(1, 1, 8, dtype=torch.float64).repeat(1, 5, 1)
    v = torch.randn(1, 5, 8, dtype=torch.float64)
    q = torch.randn(1, 2, 8, dtype=torch.float64)
    rec = AttentionRecorder()
    mhca(q, k, v, recorder=rec)
    att = rec.layers[0]
    assert torch.allclose(att, torch.full_like(att, 1 / 5), atol=1e-12)


def test_mhca_rows_sum_to_one():
    mhca = MultiHeadCrossAttention(8, 2).double()
    rec = AttentionRecorder()
    mhca(torch.randn(2, 3, 8, dtype=torch.float64),
         torch.randn(2, 4, 8, dtype=torch.float64),
         torch.randn(2, 4, 8, dtype=torch.float64), recorder=rec)
    sums = rec.layers[0].sum(dim=-1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)


def test_mhca_gradient():
    mhca = MultiHeadCrossAttention(8, 2).double()
    q = torch.randn(1, 3, 8, dtype=torch.float64, requires_grad=True)
    k = torch.randn(1, 2, 8, dtype=torch.float64)
    v = torch.randn(1, 2, 8, dtype=torch.float64)
    r = torch.randn(1, 3, 8, dtype=torch.float64)

    def loss():
        return (mhca(q, k, v) * r).sum()

    params = {"q": q, "wq": mhca.wq.weight, "wk": mhca.wk.weight,
              "wv": mhca.wv.weight, "wo": mhca.wo.weight, "bo": mhca.wo.bias}
    fd_check(loss, params)


def test_mhca_dim_mismatch():
    mhca = MultiHeadCrossAttention(8, 2).double()
    with pytest.raises(DimMismatch):
        mhca(torch.randn(1, 3, 8).double(), torch.randn(1, 2, 6).double(),
             torch.randn(1, 2, 6).double())


# --- alignment variants -----------------------------------------------------------

@pytest.fixture
def align_setup():
    torch.manual_seed(2)
    align = AlignmentModule(tiny_config(d_model=8, align_heads=2)).double()
    rows = torch.randn(1, 3, 8, dtype=torch.float64)
    ts = torch.randn(1, 8, dtype=torch.float64)
    return align, rows, ts


def test_align_all_variants_finite_and_shaped(align_setup):
    align, rows, ts = align_setup
    for variant in AlignVariant:
        out = align(rows, [0, 2, 3], ts, variant)
        assert out.shape == (1, 8)
        assert torch.isfinite(out).all()


def test_align_gradients_per_variant(align_setup):
    align, rows, ts = align_setup
    r = torch.randn(1, 8, dtype=torch.float64)
    params = {name: p for name, p in align.named_parameters()}
    for variant in AlignVariant:
        def loss(variant=variant):
            return (align(rows, [0, 2, 3], ts, variant) * r).sum()

        fd_check(loss, params, n_samples=3, seed=hash(variant) % 2 ** 31)


def test_align_p1_cross_attention_reduces_to_mhca_plus_projection(align_setup):
    align, _, ts = align_setup
    row = torch.randn(1, 1, 8, dtype=torch.float64)
    out = align(row, [2], ts, AlignVariant.CROSS_ATTENTION)
    attended = row + align.mhca(row, ts[:, None, :], ts[:, None, :])
    buffer = torch.zeros(1, 4, 8, dtype=torch.float64)
    buffer[:, [2], :] = attended
    manual = align.flatten_proj(buffer.reshape(1, -1))
    assert torch.equal(out, manual)


def test_align_output_depends_on_prompt_content(align_setup):
    # the residual path is what carries prompt content past the single-key
    # attention readout; without it the fused vector would ignore prompts
    align, rows, ts = align_setup
    other = rows.clone()
    other[0, 1] += 1.0
    for variant in (AlignVariant.CROSS_ATTENTION, AlignVariant.CONV_MAX_PROMPT_CROSS,
                    AlignVariant.CONV_MAX_JOINT_CROSS, AlignVariant.CONV_MAX_JOINT):
        a = align(rows, [0, 1, 2], ts, variant)
        b = align(other, [0, 1, 2], ts, variant)
        assert not torch.equal(a, b), variant


def test_align_conv_max_dominates_rows(align_setup):
    align, rows, ts = align_setup
    out = align(rows, [0, 1, 2], ts, AlignVariant.CONV_MAX_JOINT)
    stack = torch.cat([rows, ts[:, None, :]], dim=1)
    conv_rows = align.conv_rows(stack)
    assert (out[:, None, :] >= conv_rows - 1e-12).all()


def test_align_unknown_variant(align_setup):
    align, rows, ts = align_setup
    with pytest.raises(ValueError):
        align(rows, [0, 1, 2], ts, "bogus")


# --- prompt encoding ----------------------------------------------------------------

def test_encode_prompt_distinct_texts_differ():
    model = tiny_forecaster()
    a = model.encode_prompt("the quick brown fox", 0)
    b = model.encode_prompt("a completely different prompt", 0)
    cos = F.cosine_similarity(a[None], b[None]).item()
    assert cos < 0.999


def test_encode_prompt_deterministic():
    model = tiny_forecaster()
    model.eval()
    assert torch.equal(model.encode_prompt("same text", 1),
                       model.encode_prompt("same text", 1))


def test_encode_prompt_batched_matches_single():
    model = tiny_forecaster()
    texts = [(0, "short"), (2, "a much longer prompt with many more tokens in it"),
             (3, "mid length text here")]
    batched = model.encode_texts(texts)
    singles = torch.stack([model.encode_prompt(t, s) for s, t in texts])
    assert torch.allclose(batched, singles, atol=1e-9)


def test_encode_prompt_too_long():
    model = tiny_forecaster()  # context_limit 64
    with pytest.raises(PromptTooLong):
        model.encode_prompt("x" * 64, 0)


def test_encode_prompt_gradient_at_eos():
    model = tiny_forecaster()
    r = torch.randn(16, dtype=torch.float64)

    def loss():
        return (model.encode_prompt("ab cd", 2) * r).sum()

    params = {
        "lora_a": model.backbone.lora_a,
        "lora_b": model.backbone.lora_b,
        "proj_w": model.prompt_proj[2].weight,
        "proj_b": model.prompt_proj[2].bias,
    }
    fd_check(loss, params, n_samples=4)


# --- causal masking ------------------------------------------------------------------

def test_causal_masking_exact():
    torch.manual_seed(3)
    backbone = Backbone(tiny_config()).double()
    ids = torch.tensor([[5, 9, 17, 33, 70]])
    hidden = backbone.encode_tokens(ids)
    perturbed = ids.clone()
    perturbed[0, 3] = 210
    hidden2 = backbone.encode_tokens(perturbed)
    assert torch.equal(hidden[:, :3], hidden2[:, :3])
    assert not torch.equal(hidden[:, 3:], hidden2[:, 3:])


# --- LoRA -----------------------------------------------------------------------------

def test_lora_zero_init_identity():
    torch.manual_seed(4)
    backbone = Backbone(tiny_config())
    ids = torch.randint(0, 257, (2, 10))
    before = backbone.encode_tokens(ids)
    apply_lora(backbone)
    after = backbone.encode_tokens(ids)
    assert torch.equal(before, after)


def test_lora_rank_too_large():
    backbone = Backbone(tiny_config())
    with pytest.raises(RankTooLarge):
        apply_lora(backbone, rank=17)
    with pytest.raises(RankTooLarge):
        apply_lora(backbone, rank=0)


def test_trainable_parameter_count_by_enumeration():
    model = tiny_forecaster(dtype=torch.float32)
    cfg = model.cfg
    d = cfg.d_model
    expected = 0
    expected += cfg.vocab_size * cfg.lora_rank + cfg.lora_rank * d  # adapters
    expected += d * model.input_len + d  # series embedding
    expected += 4 * (d * d + d)  # per-aspect projections
    align = model.align
    expected += sum(p.numel() for p in align.parameters())
    expected += model.horizon * d + model.horizon  # head
    got = sum(p.numel() for p in model.trainable_parameters())
    assert got == expected
    # the frozen base transformer stays out of the trainable set
    frozen = {n for n, p in model.named_parameters() if not p.requires_grad}
    assert any(n.startswith("backbone.blocks") for n in frozen)
    assert "backbone.wte.weight" in frozen


# --- forecasting ---------------------------------------------------------------------

def test_forecast_zero_weights_returns_head_bias():
    model = tiny_forecaster()
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
        model.head.bias.copy_(torch.tensor([1.5, -2.0, 0.25], dtype=torch.float64))
    out = model(torch.randn(2, 6, dtype=torch.float64), None)
    assert torch.equal(out, model.head.bias.expand(2, -1))


@pytest.mark.parametrize("horizon", [48, 96, 192])
def test_forecast_output_lengths(horizon):
    model = Forecaster(tiny_config(), 24, horizon, ByteTokenizer())
    out = model(torch.randn(2, 24), None)
    assert out.shape == (2, horizon)


def test_forecast_no_prompt_path_finite_loss():
    model = tiny_forecaster()
    x = torch.randn(4, 6, dtype=torch.float64)
    y = torch.randn(4, 3, dtype=torch.float64)
    loss = F.mse_loss(model(x, [[None] * 4] * 4), y)
    assert torch.isfinite(loss)


def test_end_to_end_gradient():
    model = tiny_forecaster(n_layers=2)
    x = torch.randn(2, 6, dtype=torch.float64)
    y = torch.randn(2, 3, dtype=torch.float64)
    texts = [["global text", None, "stats text", "temporal text"],
             ["global text", None, "other stats", "temporal text"]]

    def loss():
        return F.mse_loss(model(x, texts), y)

    params = {n: p for n, p in model.named_parameters() if p.requires_grad}
    fd_check(loss, params, tol=1e-3, n_samples=2)


def test_forward_deterministic_and_batch_consistent():
    model = tiny_forecaster()
    model.eval()
    x = torch.randn(3, 6, dtype=torch.float64)
    texts = [["g", None, "s1", "t"], ["g", None, "s2", "t"], [None] * 4]
    a = model(x, texts)
    b = model(x, texts)
    assert torch.equal(a, b)


# --- encoder modes ---------------------------------------------------------------------

def test_single_mode_shares_parameters():
    model = tiny_forecaster()
    assert model.text_encoder is model.backbone


def test_dual_modes_have_separate_encoders():
    frozen = Forecaster(tiny_config(), 6, 3, ByteTokenizer(),
                        encoder_mode=EncoderMode.DUAL_FROZEN)
    assert frozen.text_encoder is not frozen.backbone
    assert all(not p.requires_grad for p in frozen.text_encoder.parameters())
    trainable = Forecaster(tiny_config(), 6, 3, ByteTokenizer(),
                           encoder_mode=EncoderMode.DUAL_TRAINABLE)
    assert trainable.text_encoder.has_lora
    assert trainable.text_encoder.lora_a.requires_grad


# --- WTE baseline ------------------------------------------------------------------------

def test_wte_baseline_shapes_and_forward():
    model = Forecaster(tiny_config(), 6, 3, ByteTokenizer(), wte_baseline=True,
                       n_prototypes=8)
    queries = model.wte_queries(5)
    assert queries.shape == (5, 4, 16)
    out = model(torch.randn(5, 6), None)
    assert out.shape == (5, 3)


def test_wte_reduction_receives_gradient():
    model = Forecaster(tiny_config(), 6, 3, ByteTokenizer(), wte_baseline=True,
                       n_prototypes=8)
    out = model(torch.randn(2, 6), None)
    out.sum().backward()
    assert model.wte_reduce.weight.grad is not None
    assert model.wte_reduce.weight.grad.abs().sum() > 0


def test_wte_with_prompt_eos_prototypes_matches_prompt_path():
    model = Forecaster(tiny_config(), 6, 3, ByteTokenizer(), wte_baseline=True,
                       n_prototypes=4).double()
    texts = [(0, "global"), (1, "local"), (2, "stats"), (3, "temporal")]
    rows = model.encode_texts(texts).detach()
    with torch.no_grad():
        model.wte_reduce.weight.copy_(torch.eye(4, dtype=torch.float64))
        model.wte_reduce.bias.zero_()
    ts = torch.randn(1, 16, dtype=torch.float64)
    via_wte = model.wte_align(ts, prototypes=rows)
    via_prompts = model.align(rows[None], [0, 1, 2, 3], ts, model.variant)
    assert torch.equal(via_wte, via_prompts)


# --- attention export ---------------------------------------------------------------------

def test_export_attention_full_mask():
    model = Forecaster(tiny_config(n_layers=3), 6, 3, ByteTokenizer())
    window = torch.randn(6)
    export = export_attention(model, window, ["g", "l", "s", "t"])
    assert export.labels == ("Global", "Local", "Statistical", "Temporal", "TS")
    assert len(export.per_layer) == 3
    for att in export.per_layer:
        sums = att.sum(axis=-1)
        assert np.allclose(sums, 1.0, atol=1e-6)
    # group means recompute exactly from their member layers
    for chunk, mean in zip(export.groups, export.group_means):
        manual = np.mean([export.per_layer[i].mean(axis=0) for i in chunk], axis=0)
        assert np.allclose(mean, manual, atol=0)


def test_export_attention_masked_positions_zero():
    model = Forecaster(tiny_config(), 6, 3, ByteTokenizer())
    export = export_attention(model, torch.randn(6), [None, "l", None, "t"])
    present = [1, 3, 4]
    absent = [0, 2]
    for att in export.per_layer:
        assert np.all(att[:, :, absent] == 0.0)
        for row in present:
            assert np.allclose(att[:, row, :].sum(axis=-1), 1.0, atol=1e-6)


def test_export_attention_twelve_layer_grouping():
    model = Forecaster(tiny_config(n_layers=12, d_model=8, n_heads=2, align_heads=2,
                                   lora_rank=2), 6, 3, ByteTokenizer())
    export = export_attention(model, torch.randn(6), ["g", "l", "s", "t"])
    assert export.groups == [(0, 1, 2), (3, 4, 5), (6, 7, 8), (9, 10, 11)]


def test_export_attention_recording_disabled():
    model = Forecaster(tiny_config(), 6, 3, ByteTokenizer(), attention_recording=False)
    with pytest.raises(RecordingDisabled):
        export_attention(model, torch.randn(6), ["g", "l", "s", "t"])


# --- checkpoints -----------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(5)
    model = Forecaster(tiny_config(), 6, 3, ByteTokenizer())
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(model, {"purpose": "test", "d_model": 16}, path)
    config, tensors = load_checkpoint(path)
    assert config == {"purpose": "test", "d_model": 16}
    torch.manual_seed(99)
    other = Forecaster(tiny_config(), 6, 3, ByteTokenizer())
    x = torch.randn(2, 6)
    assert not torch.equal(model(x, None), other(x, None))
    load_into_model(other, path)
    assert torch.equal(model(x, None), other(x, None))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_checkpoint(str(path))
