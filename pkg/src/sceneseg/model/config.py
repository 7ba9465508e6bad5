"""Model configuration, feature bundles and the parameter store."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..annotation_io import ParseError, read_container, write_container

FUSIONS = ("two_stage", "dual", "concat", "se_all")


@dataclass(frozen=True)
class ModelConfig:
    stages: int = 2
    layers: int = 4
    channels: int = 32
    num_classes: int = 82
    se_reduction: int = 4
    attn_dim: int = 16
    attn_heads: int = 2
    seed: int = 0
    frame_dim: int = 1024
    audio_dim: int = 128
    text_dim: int = 768
    fusion: str = "two_stage"

    def __post_init__(self):
        if self.stages < 1 or self.layers < 1:
            raise ValueError(f"need stages >= 1 and layers >= 1, got {self.stages}, {self.layers}")
        if self.channels % self.se_reduction:
            raise ValueError(f"channels {self.channels} not divisible by se_reduction {self.se_reduction}")
        if self.attn_dim % self.attn_heads:
            raise ValueError(f"attn_dim {self.attn_dim} not divisible by attn_heads {self.attn_heads}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.se_width % self.se_reduction:
            raise ValueError(f"SE input width {self.se_width} not divisible by se_reduction {self.se_reduction}")

    @property
    def salient_dim(self) -> int:
        return self.frame_dim + self.audio_dim

    @property
    def se_width(self) -> int:
        return self.salient_dim + (self.text_dim if self.fusion == "se_all" else 0)

    @property
    def fused_dim(self) -> int:
        if self.fusion == "two_stage":
            return self.salient_dim + self.attn_dim
        if self.fusion == "dual":
            return self.salient_dim + 2 * self.attn_dim
        return self.salient_dim + self.text_dim

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def load(cls, path: str | Path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FeatureBundle:
    frame: np.ndarray   # (T, D1)
    audio: np.ndarray   # (T, D2)
    text: np.ndarray    # (T, D3); all-zero rows where nobody speaks
    fps: float
    duration_s: float | None = None

    def __post_init__(self):
        self.frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        self.audio = np.atleast_2d(np.asarray(self.audio, dtype=float))
        self.text = np.atleast_2d(np.asarray(self.text, dtype=float))
        T = self.frame.shape[0]
        if self.audio.shape[0] != T or self.text.shape[0] != T:
            raise ValueError(f"modalities disagree on T: {self.frame.shape}, {self.audio.shape}, {self.text.shape}")
        if self.duration_s is None:
            self.duration_s = T / self.fps

    @property
    def T(self) -> int:
        return self.frame.shape[0]


MODALITIES = ("frame", "audio", "text")


def write_bundle(directory: str | Path, video_id: str, bundle: FeatureBundle) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for m in MODALITIES:
        write_container(d / f"{video_id}.{m}.bin", m, [getattr(bundle, m)], bundle.fps, bundle.duration_s)


def read_bundle(directory: str | Path, video_id: str) -> FeatureBundle:
    d = Path(directory)
    parts = {}
    fps = duration = None
    for m in MODALITIES:
        c = read_container(d / f"{video_id}.{m}.bin")
        if c.tag != m:
            raise ParseError(f"{video_id}.{m}.bin: modality tag is {c.tag!r}")
        x = c.blocks[0]
        parts[m] = x if x.ndim == 2 else x[:, None]
        if fps is not None and c.fps != fps:
            raise ParseError(f"{video_id}: modalities disagree on fps")
        fps, duration = c.fps, c.duration_s
    return FeatureBundle(parts["frame"], parts["audio"], parts["text"], fps, duration or None)


def list_bundle_ids(directory: str | Path) -> list[str]:
    return sorted({p.name[: -len(".frame.bin")] for p in Path(directory).glob("*.frame.bin")})


@dataclass
class ModelWeights:
    """Parameter tensors keyed by layer path, e.g. ``stage0.layer1.conv_a.w``."""

    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.params[key]

    def __setitem__(self, key: str, value: np.ndarray) -> None:
        self.params[key] = np.asarray(value, dtype=float)

    def __contains__(self, key: str) -> bool:
        return key in self.params

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.config, {k: v.copy() for k, v in self.params.items()})

    def round_to_float32(self) -> "ModelWeights":
        """Snap every tensor to float32 so a save/load round trip is exact."""
        for k, v in self.params.items():
            self.params[k] = v.astype(np.float32).astype(np.float64)
        return self

    @classmethod
    def init(cls, cfg: ModelConfig) -> "ModelWeights":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, drawn in a fixed order."""
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        w = cls(cfg)

        def dense(name: str, shape: tuple[int, ...], fan_in: int) -> None:
            bound = 1.0 / np.sqrt(fan_in)
            w[name + ".w"] = rng.uniform(-bound, bound, size=shape)
            w[name + ".b"] = np.zeros(shape[-1] if len(shape) > 1 else 1)

        se_in = cfg.se_width
        if cfg.fusion != "concat":
            dense("se.fc1", (se_in, se_in // cfg.se_reduction), se_in)
            dense("se.fc2", (se_in // cfg.se_reduction, se_in), se_in // cfg.se_reduction)
        if cfg.fusion in ("two_stage", "dual"):
            A = cfg.attn_dim
            dense("attn.q", (cfg.salient_dim, A), cfg.salient_dim)
            dense("attn.k", (cfg.text_dim, A), cfg.text_dim)
            dense("attn.v", (cfg.text_dim, A), cfg.text_dim)
            dense("attn.o", (A, A), A)
            if cfg.fusion == "dual":
                dense("attn_rev.q", (cfg.text_dim, A), cfg.text_dim)
                dense("attn_rev.k", (cfg.salient_dim, A), cfg.salient_dim)
                dense("attn_rev.v", (cfg.salient_dim, A), cfg.salient_dim)
                dense("attn_rev.o", (A, A), A)
        C = cfg.channels
        dense("proj", (cfg.fused_dim, C), cfg.fused_dim)
        for s in range(cfg.stages):
            for l in range(cfg.layers):
                p = f"stage{s}.layer{l}"
                dense(p + ".conv_a", (3, C, C), 3 * C)
                if s == 0:
                    dense(p + ".conv_b", (3, C, C), 3 * C)
                dense(p + ".out", (C, C), C)
            dense(f"stage{s}.head_cls", (C, cfg.num_classes), C)
            dense(f"stage{s}.head_bnd", (C, 1), C)
            dense(f"stage{s}.head_off", (C, 1), C)
        return w.round_to_float32()

    def save(self, path: str | Path) -> None:
        """Write ``<path>.json`` (config + tensor manifest) and ``<path>.bin`` (float32 data)."""
        path = Path(path)
        names = sorted(self.params)
        manifest = {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "tensors": [{"name": n, "shape": list(self.params[n].shape)} for n in names],
        }
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=1) + "\n")
        flat = np.concatenate([self.params[n].ravel() for n in names]) if names else np.zeros(0)
        write_container(path.with_suffix(".bin"), "weights", [flat[:, None]], fps=0.0)

    @classmethod
    def load(cls, path: str | Path) -> "ModelWeights":
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        cfg = ModelConfig.from_dict(manifest["config"])
        flat = read_container(path.with_suffix(".bin")).blocks[0].ravel()
        w = cls(cfg)
        off = 0
        for t in manifest["tensors"]:
            n = int(np.prod(t["shape"])) if t["shape"] else 1
            if off + n > flat.size:
                raise ParseError(f"{path}: tensor data shorter than manifest")
            w[t["name"]] = flat[off:off + n].reshape(t["shape"])
            off += n
        if off != flat.size:
            raise ParseError(f"{path}: {flat.size - off} unused values after the last tensor")
        return w
