"""Forward computations of the multi-modal scene segmentation network (numpy, float64)."""

from __future__ import annotations

import numpy as np

from .config import ModelConfig, ModelWeights


def sigmoid(z: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow for large |z|
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _shape_check(x: np.ndarray, width: int, name: str) -> None:
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"{name}: expected shape (T, {width}), got {x.shape}")


def se_gates(x: np.ndarray, w: ModelWeights, prefix: str = "se") -> np.ndarray:
    """Per-channel gates in (0, 1) from the sequence-average of `x`."""
    z = x.mean(axis=0)
    s = relu(z @ w[prefix + ".fc1.w"] + w[prefix + ".fc1.b"])
    return sigmoid(s @ w[prefix + ".fc2.w"] + w[prefix + ".fc2.b"])


def se_fusion(frame: np.ndarray, audio: np.ndarray, w: ModelWeights) -> np.ndarray:
    """Concatenate frame and audio features and reweight channels by squeeze-excitation gates."""
    cfg = w.config
    if frame.shape[0] != audio.shape[0]:
        raise ValueError(f"frame and audio disagree on T: {frame.shape[0]} vs {audio.shape[0]}")
    _shape_check(frame, cfg.frame_dim, "frame")
    _shape_check(audio, cfg.audio_dim, "audio")
    x = np.concatenate([frame, audio], axis=1)
    return x * se_gates(x, w)


def positional_encoding(T: int, dim: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def multi_head_attention(query: np.ndarray, context: np.ndarray, w: ModelWeights, prefix: str, heads: int,
                         return_weights: bool = False):
    """Scaled dot-product attention; positional encodings go into queries and keys, not values."""
    Tq, Tk = query.shape[0], context.shape[0]
    qin = query + positional_encoding(Tq, query.shape[1])
    kin = context + positional_encoding(Tk, context.shape[1])
    q = qin @ w[prefix + ".q.w"] + w[prefix + ".q.b"]
    k = kin @ w[prefix + ".k.w"] + w[prefix + ".k.b"]
    v = context @ w[prefix + ".v.w"] + w[prefix + ".v.b"]
    A = q.shape[1]
    hd = A // heads
    q = q.reshape(Tq, heads, hd).transpose(1, 0, 2)
    k = k.reshape(Tk, heads, hd).transpose(1, 0, 2)
    v = v.reshape(Tk, heads, hd).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(hd)
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    out = (att @ v).transpose(1, 0, 2).reshape(Tq, A)
    out = out @ w[prefix + ".o.w"] + w[prefix + ".o.b"]
    return (out, att) if return_weights else out


def cross_attention_fusion(salient: np.ndarray, text: np.ndarray, w: ModelWeights, return_weights: bool = False):
    """Salient features attend to text; the attended text is appended to the salient channels.

    With ``fusion="dual"`` the text also attends to the salient stream and both
    attended sequences are appended.
    """
    cfg = w.config
    _shape_check(salient, cfg.salient_dim, "salient")
    _shape_check(text, cfg.text_dim, "text")
    if salient.shape[0] != text.shape[0]:
        raise ValueError(f"salient and text disagree on T: {salient.shape[0]} vs {text.shape[0]}")
    fused, att = multi_head_attention(salient, text, w, "attn", cfg.attn_heads, return_weights=True)
    parts = [salient, fused]
    weights = [att]
    if cfg.fusion == "dual":
        rev, att_rev = multi_head_attention(text, salient, w, "attn_rev", cfg.attn_heads, return_weights=True)
        parts.append(rev)
        weights.append(att_rev)
    out = np.concatenate(parts, axis=1)
    return (out, weights) if return_weights else out


def fuse(frame: np.ndarray, audio: np.ndarray, text: np.ndarray, w: ModelWeights) -> np.ndarray:
    """Multi-modal fusion according to ``config.fusion``."""
    cfg = w.config
    if cfg.fusion == "concat":
        return np.concatenate([frame, audio, text], axis=1)
    if cfg.fusion == "se_all":
        x = np.concatenate([frame, audio, text], axis=1)
        return x * se_gates(x, w)
    return cross_attention_fusion(se_fusion(frame, audio, w), text, w)


def dilated_conv(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, dilation: int) -> np.ndarray:
    """Centered kernel-3 convolution with zero padding; kernel shape (3, C_in, C_out)."""
    T = x.shape[0]
    xp = np.pad(x, ((dilation, dilation), (0, 0)))
    return xp[:T] @ kernel[0] + xp[dilation:dilation + T] @ kernel[1] + xp[2 * dilation:2 * dilation + T] @ kernel[2] + bias


def layer_dilations(cfg: ModelConfig, stage: int) -> list[tuple[int, ...]]:
    """Dilations per layer: 2^(l-1) on the main branch, plus 2^(L-l) on the first stage's second branch."""
    L = cfg.layers
    if stage == 0:
        return [(2 ** (l - 1), 2 ** (L - l)) for l in range(1, L + 1)]
    return [(2 ** (l - 1),) for l in range(1, L + 1)]


def receptive_radius(cfg: ModelConfig) -> int:
    """Samples on either side of t that can influence output t of the temporal stack."""
    return sum(max(d) for s in range(cfg.stages) for d in layer_dilations(cfg, s))


def mstcn_forward(x: np.ndarray, cfg: ModelConfig, w: ModelWeights) -> list[np.ndarray]:
    """Multi-stage dilated residual stack; returns every stage's (T, channels) output."""
    _shape_check(x, cfg.channels, "mstcn input")
    outs = []
    h = x
    for s in range(cfg.stages):
        for l, dil in enumerate(layer_dilations(cfg, s)):
            p = f"stage{s}.layer{l}"
            z = dilated_conv(h, w[p + ".conv_a.w"], w[p + ".conv_a.b"], dil[0])
            if s == 0:
                z = z + dilated_conv(h, w[p + ".conv_b.w"], w[p + ".conv_b.b"], dil[1])
            h = h + relu(z) @ w[p + ".out.w"] + w[p + ".out.b"]
        outs.append(h)
    return outs


def temporal_difference(h: np.ndarray) -> np.ndarray:
    """d[k] = h[k] - h[k-1], d[0] = 0."""
    d = np.zeros_like(h)
    d[1:] = h[1:] - h[:-1]
    return d


def heads_forward(h: np.ndarray, d: np.ndarray, w: ModelWeights, fps: float, stage: int | None = None):
    """Classification logits from `h`; boundary logits and offsets (seconds) from `d`.

    Offsets pass through tanh and are scaled to +-0.5/fps.
    """
    s = w.config.stages - 1 if stage is None else stage
    p = f"stage{s}"
    label_logits = h @ w[p + ".head_cls.w"] + w[p + ".head_cls.b"]
    boundary_logits = (d @ w[p + ".head_bnd.w"] + w[p + ".head_bnd.b"]).ravel()
    offsets = np.tanh((d @ w[p + ".head_off.w"] + w[p + ".head_off.b"]).ravel()) * (0.5 / fps)
    return label_logits, boundary_logits, offsets
