"""Host architectures: CNN, Transformer, and LSTM classifiers with optional shift.

All three families share the same spine: a trainable softmax-weighted sum
over the input feature layers, a stack of blocks, masked mean pooling over
time, and a linear head. The shift enters a block either in-place (on the
trunk, so skip connections also carry shifted features), on a residual
branch (skip path keeps the unshifted features), or as the token mixer
itself (the shiftformer family).

Parameter initialization is deterministic given the init RNG: weights are
normal with std 1/sqrt(fan_in), biases and norm shifts zero, norm scales
one, position-bias tables zero, and the LSTM forget-gate bias one so early
training keeps its memory open.
"""

from __future__ import annotations

import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from ..seeding import substream
from ..shift import ShiftConfig, shift_augment, shifted_channels, temporal_shift
from ..tensor_autograd import (
    AttentionParams,
    LstmDirection,
    Tensor,
    add,
    avg_pool_mixer,
    batch_norm1d,
    bilstm,
    cross_entropy,
    depthwise_conv1d,
    gelu,
    layer_norm,
    linear,
    mean_pool_time,
    mhsa,
    mul,
    reduce_sum,
    reshape,
    softmax,
)

FAMILIES = ("cnn", "transformer", "shiftformer", "lstm")
NORMS = ("layer", "batch")
POS_MODES = ("relative", "absolute", "none")
MIXERS = ("attention", "pooling", "shift", "none")


@dataclass
class ModelConfig:
    """Architecture description for :func:`build_model`.

    channels is (in, mid, out) for the cnn/transformer families with
    out == in, and (in, 2*hidden) for the lstm family. `mixer` selects the
    transformer token mixer; "none" drops the mixing sub-layer entirely,
    leaving a per-frame pointwise MLP. `kernel` applies to the cnn family
    and `heads`/`pos`/`clip_dist`/`max_len` to the attention mixer.
    """

    family: str
    channels: tuple[int, ...]
    blocks: int = 2
    kernel: int = 7
    heads: int = 8
    norm: str = "layer"
    pos: str = "relative"
    mixer: str = "attention"
    shift: ShiftConfig | None = None
    num_classes: int = 4
    num_input_layers: int = 13
    pool_window: int = 3
    clip_dist: int = 64
    max_len: int = 512

    def __post_init__(self):
        if isinstance(self.channels, list):
            self.channels = tuple(self.channels)

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not all(isinstance(c, int) and c >= 1 for c in self.channels):
            raise ConfigError(f"channels must be positive integers, got {self.channels}")
        if self.family == "lstm":
            if len(self.channels) != 2:
                raise ConfigError(f"channels for the lstm family must be (in, 2*hidden), got {self.channels}")
            if self.channels[1] % 2 != 0:
                raise ConfigError(f"channels[1] must be even (two directions), got {self.channels[1]}")
        else:
            if len(self.channels) != 3:
                raise ConfigError(f"channels must be (in, mid, out), got {self.channels}")
            if self.channels[0] != self.channels[2]:
                raise ConfigError(f"channels must enter and leave blocks at the same width, got {self.channels}")
        if self.blocks < 1:
            raise ConfigError(f"blocks must be at least 1, got {self.blocks}")
        if self.family == "cnn" and (self.kernel < 1 or self.kernel % 2 == 0):
            raise ConfigError(f"kernel must be odd and positive, got {self.kernel}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.mixer not in MIXERS:
            raise ConfigError(f"mixer must be one of {MIXERS}, got {self.mixer!r}")
        if self.family == "shiftformer" and self.mixer != "shift":
            raise ConfigError(f"mixer must be 'shift' for the shiftformer family, got {self.mixer!r}")
        if self.mixer == "shift":
            if self.family not in ("transformer", "shiftformer"):
                raise ConfigError(f"mixer 'shift' needs a transformer-style family, got {self.family!r}")
            if self.shift is None:
                raise ConfigError("mixer 'shift' needs a shift config")
            if self.shift.placement != "residual":
                raise ConfigError(
                    f"shift.placement must be 'residual' when the shift is the token mixer, got {self.shift.placement!r}")
        if self.mixer == "attention" and self.family in ("transformer", "shiftformer"):
            if self.pos not in POS_MODES:
                raise ConfigError(f"pos must be one of {POS_MODES}, got {self.pos!r}")
            if self.heads < 1 or self.channels[0] % self.heads != 0:
                raise ConfigError(f"heads must divide channels[0]={self.channels[0]}, got heads={self.heads}")
            if self.clip_dist < 1:
                raise ConfigError(f"clip_dist must be at least 1, got {self.clip_dist}")
            if self.max_len < 1:
                raise ConfigError(f"max_len must be at least 1, got {self.max_len}")
        if self.mixer == "pooling" and (self.pool_window < 1 or self.pool_window % 2 == 0):
            raise ConfigError(f"pool_window must be odd and positive, got {self.pool_window}")
        if self.shift is not None:
            shifted_channels(self.shift, self.channels[0])
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.num_input_layers < 1:
            raise ConfigError(f"num_input_layers must be at least 1, got {self.num_input_layers}")

    @property
    def out_width(self) -> int:
        return self.channels[1] if self.family == "lstm" else self.channels[0]


def config_to_dict(cfg: ModelConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["channels"] = list(cfg.channels)
    out["shift"] = dataclasses.asdict(cfg.shift) if cfg.shift is not None else None
    return out


def config_from_dict(raw: dict) -> ModelConfig:
    """Strict inverse of :func:`config_to_dict`; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError(f"model config must be a mapping, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown model config keys: {', '.join(unknown)}")
    if "family" not in raw or "channels" not in raw:
        raise ConfigError("model config needs at least 'family' and 'channels'")
    kwargs = dict(raw)
    shift_raw = kwargs.pop("shift", None)
    if shift_raw is not None:
        if not isinstance(shift_raw, dict):
            raise ConfigError("shift config must be a mapping or null")
        shift_known = {f.name for f in dataclasses.fields(ShiftConfig)}
        shift_unknown = sorted(set(shift_raw) - shift_known)
        if shift_unknown:
            raise ConfigError(f"unknown shift config keys: {', '.join(shift_unknown)}")
        shift_raw = ShiftConfig(**shift_raw)
    kwargs["channels"] = tuple(kwargs["channels"])
    cfg = ModelConfig(shift=shift_raw, **kwargs)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# parameterized layers
# ---------------------------------------------------------------------------

class LinearLayer:
    def __init__(self, rng, c_in: int, c_out: int, dtype):
        std = 1.0 / math.sqrt(c_in)
        self.weight = Tensor(rng.normal(0.0, std, (c_in, c_out)), requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


class LayerNormLayer:
    def __init__(self, width: int, dtype):
        self.gamma = Tensor(np.ones(width), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(width), requires_grad=True, dtype=dtype)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def named_buffers(self):
        return []


class BatchNormLayer:
    def __init__(self, width: int, dtype):
        self.gamma = Tensor(np.ones(width), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(width), requires_grad=True, dtype=dtype)
        self.running_mean = np.zeros(width, dtype=dtype)
        self.running_var = np.ones(width, dtype=dtype)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        out, mean, var = batch_norm1d(x, self.gamma, self.beta,
                                      self.running_mean, self.running_var,
                                      training=training)
        if training:
            self.running_mean, self.running_var = mean, var
        return out

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def named_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


def _make_norm(kind: str, width: int, dtype):
    return LayerNormLayer(width, dtype) if kind == "layer" else BatchNormLayer(width, dtype)


class DepthwiseConvLayer:
    def __init__(self, rng, kernel: int, width: int, dtype):
        std = 1.0 / math.sqrt(kernel)
        self.kernel = Tensor(rng.normal(0.0, std, (kernel, width)), requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(width), requires_grad=True, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return depthwise_conv1d(x, self.kernel, self.bias)

    def named_parameters(self):
        return [("kernel", self.kernel), ("bias", self.bias)]


class AttentionLayer:
    def __init__(self, rng, width: int, heads: int, pos: str, clip_dist: int, max_len: int, dtype):
        self.heads = heads
        self.pos = pos
        std = 1.0 / math.sqrt(width)

        def w():
            return Tensor(rng.normal(0.0, std, (width, width)), requires_grad=True, dtype=dtype)

        def b():
            return Tensor(np.zeros(width), requires_grad=True, dtype=dtype)

        rel = abs_t = None
        if pos == "relative":
            rel = Tensor(np.zeros((heads, 2 * clip_dist + 1)), requires_grad=True, dtype=dtype)
        elif pos == "absolute":
            abs_t = Tensor(np.zeros((max_len, width)), requires_grad=True, dtype=dtype)
        self.params = AttentionParams(wq=w(), bq=b(), wk=w(), bk=b(), wv=w(), bv=b(),
                                      wo=w(), bo=b(), rel_table=rel, abs_table=abs_t)

    def forward(self, x: Tensor) -> Tensor:
        return mhsa(x, self.params, self.heads, self.pos)

    def named_parameters(self):
        names = [("wq", self.params.wq), ("bq", self.params.bq),
                 ("wk", self.params.wk), ("bk", self.params.bk),
                 ("wv", self.params.wv), ("bv", self.params.bv),
                 ("wo", self.params.wo), ("bo", self.params.bo)]
        if self.params.rel_table is not None:
            names.append(("rel_table", self.params.rel_table))
        if self.params.abs_table is not None:
            names.append(("abs_table", self.params.abs_table))
        return names


class BiLstmLayer:
    def __init__(self, rng, c_in: int, hidden: int, dtype):
        self.hidden = hidden
        self.fw = self._direction(rng, c_in, hidden, dtype)
        self.bw = self._direction(rng, c_in, hidden, dtype)

    @staticmethod
    def _direction(rng, c_in, hidden, dtype):
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return LstmDirection(
            w_ih=Tensor(rng.normal(0.0, 1.0 / math.sqrt(c_in), (c_in, 4 * hidden)),
                        requires_grad=True, dtype=dtype),
            w_hh=Tensor(rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, 4 * hidden)),
                        requires_grad=True, dtype=dtype),
            b=Tensor(b, requires_grad=True, dtype=dtype),
        )

    def forward(self, x: Tensor) -> Tensor:
        return bilstm(x, self.fw, self.bw)

    def named_parameters(self):
        return [("fw.w_ih", self.fw.w_ih), ("fw.w_hh", self.fw.w_hh), ("fw.b", self.fw.b),
                ("bw.w_ih", self.bw.w_ih), ("bw.w_hh", self.bw.w_hh), ("bw.b", self.bw.b)]


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

class ConvBlock:
    """Residual block: x + PW2(GELU(PW1(Norm(DWConv(branch input)))))."""

    def __init__(self, rng, cfg: ModelConfig, dtype, shift_mode: str):
        width, mid = cfg.channels[0], cfg.channels[1]
        self.shift_mode = shift_mode  # "none" | "in_place" | "residual"
        self.shift_cfg = cfg.shift
        self.dw = DepthwiseConvLayer(rng, cfg.kernel, width, dtype)
        self.norm = _make_norm(cfg.norm, width, dtype)
        self.pw1 = LinearLayer(rng, width, mid, dtype)
        self.pw2 = LinearLayer(rng, mid, width, dtype)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if self.shift_mode == "in_place":
            x = temporal_shift(x, self.shift_cfg)
        branch = temporal_shift(x, self.shift_cfg) if self.shift_mode == "residual" else x
        h = self.dw.forward(branch)
        h = self.norm.forward(h, training)
        h = self.pw2.forward(gelu(self.pw1.forward(h)))
        return add(x, h)

    def sublayers(self):
        return [("dw", self.dw), ("norm", self.norm), ("pw1", self.pw1), ("pw2", self.pw2)]


class TransformerBlock:
    """Pre-norm block: x + Mixer(Norm(x)), then + MLP(Norm(.)).

    The mixer is attention, average pooling minus identity, a parameter-free
    temporal shift, or absent ("none", leaving a pointwise MLP block). A
    residual-placement shift enters at the mixer branch, before its norm;
    an in-place shift rewrites the trunk before the block.
    """

    def __init__(self, rng, cfg: ModelConfig, dtype, shift_mode: str):
        width, mid = cfg.channels[0], cfg.channels[1]
        self.mixer_kind = cfg.mixer
        self.pool_window = cfg.pool_window
        self.shift_cfg = cfg.shift
        self.shift_mode = shift_mode if cfg.mixer != "shift" else "none"
        self.norm1 = _make_norm(cfg.norm, width, dtype) if cfg.mixer != "none" else None
        self.attn = (AttentionLayer(rng, width, cfg.heads, cfg.pos, cfg.clip_dist, cfg.max_len, dtype)
                     if cfg.mixer == "attention" else None)
        self.norm2 = _make_norm(cfg.norm, width, dtype)
        self.pw1 = LinearLayer(rng, width, mid, dtype)
        self.pw2 = LinearLayer(rng, mid, width, dtype)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if self.shift_mode == "in_place":
            x = temporal_shift(x, self.shift_cfg)
        if self.mixer_kind != "none":
            u = temporal_shift(x, self.shift_cfg) if self.shift_mode == "residual" else x
            u = self.norm1.forward(u, training)
            if self.mixer_kind == "attention":
                m = self.attn.forward(u)
            elif self.mixer_kind == "pooling":
                m = avg_pool_mixer(u, self.pool_window)
            else:  # the shift is the token mixer
                m = temporal_shift(u, self.shift_cfg)
            x = add(x, m)
        v = self.norm2.forward(x, training)
        v = self.pw2.forward(gelu(self.pw1.forward(v)))
        return add(x, v)

    def sublayers(self):
        out = []
        if self.norm1 is not None:
            out.append(("norm1", self.norm1))
        if self.attn is not None:
            out.append(("attn", self.attn))
        out.extend([("norm2", self.norm2), ("pw1", self.pw1), ("pw2", self.pw2)])
        return out


class LstmBlock:
    """A bidirectional LSTM, optionally shift-fed.

    In-place placement shifts the input sequence itself; residual placement
    shifts only the recurrent branch and adds a learned projection shortcut
    (the one shift variant that costs extra parameters).
    """

    def __init__(self, rng, cfg: ModelConfig, c_in: int, dtype, shift_mode: str):
        hidden = cfg.channels[1] // 2
        self.shift_mode = shift_mode
        self.shift_cfg = cfg.shift
        self.rnn = BiLstmLayer(rng, c_in, hidden, dtype)
        self.proj = LinearLayer(rng, c_in, cfg.channels[1], dtype) if shift_mode == "residual" else None

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if self.shift_mode == "in_place":
            x = temporal_shift(x, self.shift_cfg)
        if self.shift_mode == "residual":
            return add(self.proj.forward(x), self.rnn.forward(temporal_shift(x, self.shift_cfg)))
        return self.rnn.forward(x)

    def sublayers(self):
        out = [("rnn", self.rnn)]
        if self.proj is not None:
            out.append(("proj", self.proj))
        return out


def _block_shift_mode(cfg: ModelConfig, index: int) -> str:
    """Which shift a given block applies, honoring per-family placement rules.

    In-place placement shifts the trunk before every block. Residual
    placement shifts every transformer mixer branch, but only the last
    cnn block's branch (the lighter touch pairs with the small alpha there).
    """
    if cfg.shift is None or cfg.mixer == "shift":
        return "none"
    if cfg.shift.placement == "in_place":
        return "in_place"
    if cfg.family == "cnn" and index != cfg.blocks - 1:
        return "none"
    return "residual"


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------

def weighted_layer_sum(x: Tensor, layer_weights: Tensor) -> Tensor:
    """Softmax-weighted sum over the layer axis of a (B, L, T, C) tensor."""
    if x.ndim != 4:
        raise DimensionError(f"weighted_layer_sum expects rank-4 input, got {x.shape}")
    n_layers = x.shape[1]
    if layer_weights.shape != (n_layers,):
        raise DimensionError(
            f"layer weights shape {layer_weights.shape} does not match {n_layers} input layers")
    w = reshape(softmax(layer_weights, axis=0), (n_layers, 1, 1))
    return reduce_sum(mul(x, w), axis=1)


class SequenceClassifier:
    """Weighted layer sum -> block stack -> masked mean pool -> linear head."""

    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.layer_weights = Tensor(np.zeros(cfg.num_input_layers), requires_grad=True, dtype=dtype)
        self.blocks = []
        for i in range(cfg.blocks):
            mode = _block_shift_mode(cfg, i)
            if cfg.family == "cnn":
                self.blocks.append(ConvBlock(rng, cfg, dtype, mode))
            elif cfg.family in ("transformer", "shiftformer"):
                self.blocks.append(TransformerBlock(rng, cfg, dtype, mode))
            else:
                c_in = cfg.channels[0] if i == 0 else cfg.channels[1]
                self.blocks.append(LstmBlock(rng, cfg, c_in, dtype, mode))
        self.head = LinearLayer(rng, cfg.out_width, cfg.num_classes, dtype)

    def _check_features(self, features: Tensor) -> None:
        if features.ndim != 4:
            raise DimensionError(f"features must be (batch, layers, time, channels), got {features.shape}")
        if features.shape[1] != self.cfg.num_input_layers:
            raise DimensionError(
                f"features have {features.shape[1]} layers, model expects {self.cfg.num_input_layers}")
        if features.shape[3] != self.cfg.channels[0]:
            raise DimensionError(
                f"features have {features.shape[3]} channels, model expects {self.cfg.channels[0]}")

    def forward_features(self, features: Tensor, training: bool = False,
                         augment_prob: float = 0.0, rng=None) -> Tensor:
        """Run everything up to (not including) pooling; returns (B, T, C_out)."""
        self._check_features(features)
        x = weighted_layer_sum(features, self.layer_weights)
        if training and augment_prob > 0.0:
            x = shift_augment(x, self.augment_config(), augment_prob, rng, training=True)
        for block in self.blocks:
            x = block.forward(x, training)
        return x

    def forward(self, features: Tensor, lengths=None, training: bool = False,
                augment_prob: float = 0.0, rng=None) -> Tensor:
        x = self.forward_features(features, training, augment_prob, rng)
        if lengths is None:
            lengths = np.full(x.shape[0], x.shape[1], dtype=np.int64)
        pooled = mean_pool_time(x, lengths)
        return self.head.forward(pooled)

    def augment_config(self) -> ShiftConfig:
        """The model's own shift config, or a moderate default for shift-less hosts."""
        if self.cfg.shift is not None:
            return self.cfg.shift
        return ShiftConfig(alpha=0.25, direction="unidirectional", placement="residual")

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        out["layer_mix.weights"] = self.layer_weights
        for i, block in enumerate(self.blocks):
            for sub_name, layer in block.sublayers():
                for p_name, p in layer.named_parameters():
                    out[f"blocks.{i}.{sub_name}.{p_name}"] = p
        for p_name, p in self.head.named_parameters():
            out[f"head.{p_name}"] = p
        return out

    def named_buffers(self) -> "OrderedDict[str, np.ndarray]":
        out: OrderedDict[str, np.ndarray] = OrderedDict()
        for i, block in enumerate(self.blocks):
            for sub_name, layer in block.sublayers():
                for b_name, buf in getattr(layer, "named_buffers", list)():
                    out[f"blocks.{i}.{sub_name}.{b_name}"] = buf
        return out

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        parts = name.split(".")
        if parts[0] != "blocks":
            raise KeyError(name)
        layer = dict(self.blocks[int(parts[1])].sublayers())[parts[2]]
        current = getattr(layer, parts[3])
        if current.shape != value.shape:
            raise DimensionError(f"buffer {name} has shape {current.shape}, got {value.shape}")
        setattr(layer, parts[3], value.astype(current.dtype))

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def loss(self, features: Tensor, labels, lengths=None, training: bool = True,
             augment_prob: float = 0.0, rng=None) -> tuple[Tensor, Tensor]:
        logits = self.forward(features, lengths, training, augment_prob, rng)
        return cross_entropy(logits, labels), logits


PRESETS = ("shiftcnn", "cnn", "shiftformer", "transformer", "shiftlstm", "lstm")


def preset_config(name: str, width: int = 768, num_classes: int = 4,
                  num_input_layers: int = 13) -> ModelConfig:
    """Named architecture presets; `width` rescales every channel count."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    if name in ("shiftcnn", "cnn"):
        cfg = ModelConfig(
            family="cnn", channels=(width, 4 * width, width), blocks=2, kernel=7,
            shift=ShiftConfig(alpha=1.0 / 16.0, direction="unidirectional", placement="residual")
            if name == "shiftcnn" else None,
            num_classes=num_classes, num_input_layers=num_input_layers)
    elif name in ("shiftformer", "transformer"):
        cfg = ModelConfig(
            family="shiftformer" if name == "shiftformer" else "transformer",
            channels=(width, 4 * width, width), blocks=2,
            mixer="shift" if name == "shiftformer" else "attention",
            shift=ShiftConfig(alpha=0.25, direction="bidirectional", placement="residual")
            if name == "shiftformer" else None,
            num_classes=num_classes, num_input_layers=num_input_layers)
    else:
        cfg = ModelConfig(
            family="lstm", channels=(width, 2 * width), blocks=1,
            shift=ShiftConfig(alpha=0.25, direction="unidirectional", placement="in_place")
            if name == "shiftlstm" else None,
            num_classes=num_classes, num_input_layers=num_input_layers)
    cfg.validate()
    return cfg


def build_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> SequenceClassifier:
    """Deterministically initialize a classifier from the named init stream."""
    return SequenceClassifier(cfg, substream(seed, "init"), dtype=dtype)
