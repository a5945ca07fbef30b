"""Toy hierarchical encoder and the LightFPN decoder.

Stages are numbered coarse to fine, ``s = 1..4`` for strides 32, 16, 8, 4.

Decoder, per stage::

    P'_s = Conv1x1(P_s)                                   (condense to width)
    F_1  = act(Conv3x3(P'_1))
    F_s  = act(Conv3x3(concat(up(F_1), ..., up(F_{s-1}), P'_s))) + up2(F_{s-1})
    d_s  = Conv3x3 -> 1 channel (F_s)                     (residual head)
    Cls_1 = d_1,   Cls_s = d_s + up2(Cls_{s-1})
    y_hat = up4(Cls_4)

The forward pass returns a :class:`Tape` that :meth:`BFSegModel.backward`
consumes; model instances hold only parameters and are never mutated by a
forward pass.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError

STAGE_STRIDES = (32, 16, 8, 4)
MAX_STRIDE = 32


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 16
    # Encoder channel profile (c3, c4, c5, c6); derived from base_channels if None.
    channels: tuple | None = None
    in_channels: int = 3
    width: int = 64
    activation: str = "gelu"
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        prof = self.profile
        if len(prof) != 4 or any(b <= a for a, b in zip(prof, prof[1:])) or prof[0] < 1:
            raise ConfigError(f"channel profile must be 4 strictly increasing ints, got {prof}")
        if self.width < 1:
            raise ConfigError("decoder width must be >= 1")
        ops.activation(self.activation)
        np.dtype(self.dtype)

    @property
    def profile(self) -> tuple:
        if self.channels is not None:
            return self.channels
        c = self.base_channels
        return (c, 2 * c, 4 * c, 8 * c)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.profile)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("channels") is not None:
            d["channels"] = tuple(d["channels"])
        return cls(**d)


@dataclass
class PredictionPyramid:
    """Logits of every decoder stage plus the full-resolution prediction.

    ``cls``, ``residuals`` and ``strides`` are ordered coarse to fine.
    Logit grids have shape ``(N, h, w)``.
    """

    cls: list
    residuals: list
    final: np.ndarray
    strides: tuple = STAGE_STRIDES

    def by_stride(self, stride: int) -> np.ndarray:
        return self.cls[self.strides.index(stride)]


@dataclass
class Tape:
    """Intermediate values retained for the backward pass."""

    enc: list = field(default_factory=list)
    dec: dict = field(default_factory=dict)
    image_shape: tuple = ()


def _check_spatial(h, w):
    if h % MAX_STRIDE or w % MAX_STRIDE:
        raise DimensionError(f"input size {h}x{w} must be divisible by {MAX_STRIDE}")


def parameter_shapes(config: ModelConfig, decoder_profile=None) -> dict:
    """Ordered ``name -> shape`` for every trainable array.

    ``decoder_profile`` overrides the channel profile seen by the decoder,
    which lets the complexity tools instantiate a bare decoder.
    """
    shapes = {}
    if decoder_profile is None:
        c_prev = config.in_channels
        for k, c in enumerate(config.profile, start=1):
            ksize = 4 if k == 1 else 3
            shapes[f"encoder.stage{k}.down.weight"] = (ksize, ksize, c_prev, c)
            shapes[f"encoder.stage{k}.down.bias"] = (c,)
            shapes[f"encoder.stage{k}.res.weight"] = (3, 3, c, c)
            shapes[f"encoder.stage{k}.res.bias"] = (c,)
            c_prev = c
        profile = config.profile
    else:
        profile = tuple(decoder_profile)
    wd = config.width
    # profile is fine-to-coarse (P3..P6); stages run coarse-to-fine.
    for s, c in enumerate(reversed(profile), start=1):
        shapes[f"decoder.condense{s}.weight"] = (1, 1, c, wd)
        shapes[f"decoder.condense{s}.bias"] = (wd,)
    for s in range(1, 5):
        shapes[f"decoder.stage{s}.weight"] = (3, 3, wd * s, wd)
        shapes[f"decoder.stage{s}.bias"] = (wd,)
    for s in range(1, 5):
        shapes[f"decoder.head{s}.weight"] = (3, 3, wd, 1)
        shapes[f"decoder.head{s}.bias"] = (1,)
    return shapes


def init_parameters(config: ModelConfig, decoder_profile=None) -> dict:
    """Fan-in scaled uniform weights, zero biases, seeded."""
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype)
    params = {}
    for name, shape in parameter_shapes(config, decoder_profile).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[:3]))
        linear_layer = ".condense" in name or ".head" in name
        gain = 1.0 if linear_layer else 2.0
        bound = np.sqrt(3.0 * gain / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def _same_pad(shape):
    # odd kernels keep the size at stride 1; the 4x4 patchify stem uses none
    return shape[0] // 2 if shape[0] % 2 else 0


class BFSegModel:
    """Encoder + LightFPN decoder operating on float arrays."""

    def __init__(self, config: ModelConfig | None = None, params: dict | None = None):
        self.config = config or ModelConfig()
        self.params = params if params is not None else init_parameters(self.config)
        self.act, self.act_grad = ops.activation(self.config.activation)
        expected = parameter_shapes(self.config)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ConfigError(f"parameter set mismatch; missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self.params[name].shape != tuple(shape):
                raise DimensionError(f"{name}: expected {shape}, got {self.params[name].shape}")

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def num_parameters(self, prefix: str = "") -> int:
        return int(sum(p.size for k, p in self.params.items() if k.startswith(prefix)))

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------

    def _conv(self, name, x, stride=1, tape=None):
        w = self.params[f"{name}.weight"]
        out, cache = ops.conv2d_forward(x, w, self.params[f"{name}.bias"], stride=stride, pad=_same_pad(w.shape))
        if tape is not None:
            tape[name] = cache
        return out

    def encode(self, image, tape: Tape | None = None) -> list:
        """Return the feature pyramid ``[P3, P4, P5, P6]`` (fine to coarse)."""
        x = np.asarray(image, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        _check_spatial(*x.shape[1:3])
        caches = {} if tape is not None else None
        levels = []
        for k in range(1, 5):
            stride = 4 if k == 1 else 2
            z_down = self._conv(f"encoder.stage{k}.down", x, stride=stride, tape=caches)
            a = self.act(z_down)
            z_res = self._conv(f"encoder.stage{k}.res", a, tape=caches)
            x = a + self.act(z_res)
            levels.append(x)
            if tape is not None:
                tape.enc.append((z_down, z_res))
        if tape is not None:
            tape.dec["enc_convs"] = caches
        return levels

    def condense(self, pyramid: list, caches: dict | None = None) -> list:
        """1x1 convolutions of ``[P3, P4, P5, P6]`` to the decoder width.

        Returned coarse to fine, i.e. indexed by stage.
        """
        levels = list(reversed(pyramid))
        for s, lvl in enumerate(levels, start=1):
            if lvl.ndim != 4:
                raise DimensionError("pyramid levels must be NHWC arrays")
            if s > 1 and lvl.shape[1:3] != tuple(2 * d for d in levels[s - 2].shape[1:3]):
                raise DimensionError("pyramid levels must halve in size from P3 to P6")
        return [self._conv(f"decoder.condense{s}", lvl, tape=caches) for s, lvl in enumerate(levels, 1)]

    def reconstruct_feature(self, s: int, deeper: list, condensed: np.ndarray, caches: dict | None = None):
        """Stage ``s`` feature from all coarser features and its condensed level.

        Returns ``(F_s, pre_activation)``.
        """
        if len(deeper) != s - 1:
            raise DimensionError(f"stage {s} needs {s - 1} coarser features, got {len(deeper)}")
        if s == 1:
            cat = condensed
        else:
            ups = [ops.upsample(f, 2 ** (s - 1 - k)) for k, f in enumerate(deeper)]
            for u in ups:
                if u.shape[:3] != condensed.shape[:3]:
                    raise DimensionError(f"stage {s}: upsampled {u.shape[1:3]} vs level {condensed.shape[1:3]}")
            cat = np.concatenate(ups + [condensed], axis=-1)
        z = self._conv(f"decoder.stage{s}", cat, tape=caches)
        f = self.act(z)
        if s > 1:
            f = f + ups[-1]
        return f, z

    def residual_head(self, s: int, feature: np.ndarray, caches: dict | None = None) -> np.ndarray:
        """Single-channel logits of stage ``s``, shape ``(N, h, w)``."""
        return self._conv(f"decoder.head{s}", feature, tape=caches)[..., 0]

    def decode(self, pyramid: list, tape: Tape | None = None) -> PredictionPyramid:
        """Run LightFPN on ``[P3, P4, P5, P6]``."""
        caches = {} if tape is not None else None
        condensed = self.condense(pyramid, caches)
        feats, pre_acts, residuals, cls = [], [], [], []
        for s in range(1, 5):
            f, z = self.reconstruct_feature(s, feats, condensed[s - 1], caches)
            feats.append(f)
            pre_acts.append(z)
            delta = self.residual_head(s, f, caches)
            residuals.append(delta)
            cls.append(delta if s == 1 else delta + ops.upsample(cls[-1], 2))
        final = ops.upsample(cls[-1], STAGE_STRIDES[-1])
        if tape is not None:
            tape.dec.update(convs=caches, pre_acts=pre_acts, feats=feats)
        return PredictionPyramid(cls=cls, residuals=residuals, final=final)

    def forward(self, image, keep_tape: bool = False):
        """Predict logits for an ``(N, H, W, C)`` or ``(H, W, C)`` image batch.

        Returns the :class:`PredictionPyramid`, or ``(preds, tape)`` when
        ``keep_tape`` is set.
        """
        tape = Tape() if keep_tape else None
        image = np.asarray(image)
        if tape is not None:
            tape.image_shape = image.shape if image.ndim == 4 else (1,) + image.shape
        preds = self.decode(self.encode(image, tape), tape)
        return (preds, tape) if keep_tape else preds

    __call__ = forward

    # ------------------------------------------------------------------
    # backward
    # ------------------------------------------------------------------

    def backward(self, tape: Tape, d_cls: list, d_final=None) -> dict:
        """Gradients of a scalar loss w.r.t. every parameter.

        ``d_cls`` holds the loss gradient w.r.t. each stage's logits (coarse to
        fine, ``None`` for no direct contribution); ``d_final`` the gradient
        w.r.t. the full-resolution logits.
        """
        grads = self.zero_grads()
        pyramid_grads = self.backward_decoder(tape, d_cls, d_final, grads)
        self.backward_encoder(tape, pyramid_grads, grads)
        return grads

    def _conv_back(self, name, dy, caches, grads):
        dx, dw, db = ops.conv2d_backward(dy, caches[name])
        grads[f"{name}.weight"] += dw
        grads[f"{name}.bias"] += db
        return dx

    def backward_decoder(self, tape, d_cls, d_final, grads) -> list:
        caches = tape.dec["convs"]
        pre_acts = tape.dec["pre_acts"]
        feats = tape.dec["feats"]
        wd = self.config.width

        # logits: Cls_s = d_s + up2(Cls_{s-1}), y_hat = up4(Cls_4)
        d_cls_total = [None] * 4
        running = None
        if d_final is not None:
            running = ops.upsample_backward(np.asarray(d_final, dtype=self.dtype), STAGE_STRIDES[-1])
        for s in range(4, 0, -1):
            direct = d_cls[s - 1] if d_cls is not None else None
            if direct is not None:
                direct = np.asarray(direct, dtype=self.dtype)
                running = direct if running is None else running + direct
            if running is None:
                running = np.zeros(feats[s - 1].shape[:3], dtype=self.dtype)
            d_cls_total[s - 1] = running
            if s > 1:
                running = ops.upsample_backward(running, 2)

        d_feats = [np.zeros_like(f) for f in feats]
        d_condensed = [None] * 4
        for s in range(4, 0, -1):
            d_feats[s - 1] += self._conv_back(f"decoder.head{s}", d_cls_total[s - 1][..., None], caches, grads)
            df = d_feats[s - 1]
            dz = df * self.act_grad(pre_acts[s - 1])
            dcat = self._conv_back(f"decoder.stage{s}", dz, caches, grads)
            if s == 1:
                d_condensed[0] = dcat
                continue
            for k in range(s - 1):
                chunk = dcat[..., k * wd : (k + 1) * wd]
                d_feats[k] += ops.upsample_backward(chunk, 2 ** (s - 1 - k))
            d_condensed[s - 1] = dcat[..., (s - 1) * wd :]
            d_feats[s - 2] += ops.upsample_backward(df, 2)

        d_levels = [self._conv_back(f"decoder.condense{s}", d_condensed[s - 1], caches, grads) for s in range(1, 5)]
        return list(reversed(d_levels))  # fine to coarse, like the pyramid

    def backward_encoder(self, tape, pyramid_grads, grads):
        caches = tape.dec["enc_convs"]
        carry = None
        for k in range(4, 0, -1):
            dx = pyramid_grads[k - 1]
            if carry is not None:
                dx = dx + carry
            z_down, z_res = tape.enc[k - 1]
            da = dx + self._conv_back(f"encoder.stage{k}.res", dx * self.act_grad(z_res), caches, grads)
            carry = self._conv_back(f"encoder.stage{k}.down", da * self.act_grad(z_down), caches, grads)
        return carry


def bare_decoder(profile, width=64, activation="gelu", seed=0, dtype="float64"):
    """A decoder-only model for arbitrary encoder channel profiles."""
    cfg = ModelConfig(channels=tuple(profile), width=width, activation=activation, seed=seed, dtype=dtype)
    return DecoderOnly(cfg)


class DecoderOnly(BFSegModel):
    """LightFPN without an encoder; :meth:`decode` takes the pyramid directly."""

    def __init__(self, config: ModelConfig, params: dict | None = None):
        self.config = config
        self.params = params if params is not None else init_parameters(config, decoder_profile=config.profile)
        self.act, self.act_grad = ops.activation(config.activation)
        expected = parameter_shapes(config, decoder_profile=config.profile)
        if set(expected) != set(self.params):
            raise ConfigError("parameter set mismatch for decoder-only model")

    def forward(self, pyramid, keep_tape=False):
        tape = Tape() if keep_tape else None
        preds = self.decode([np.asarray(p, dtype=self.dtype) for p in pyramid], tape)
        return (preds, tape) if keep_tape else preds

    __call__ = forward

    def backward(self, tape, d_cls, d_final=None):
        grads = self.zero_grads()
        d_pyr = self.backward_decoder(tape, d_cls, d_final, grads)
        return grads, d_pyr
