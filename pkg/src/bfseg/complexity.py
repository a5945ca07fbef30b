"""Analytic parameter and multiply-accumulate counts for decoder designs.

Only convolutions are counted. A layer's mult-adds are its parameters per
output position (weights plus bias) times the number of output positions;
normalisation, activation and resampling costs are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, DimensionError
from .model import MAX_STRIDE, STAGE_STRIDES

MACS_CONVENTION = "mult-adds of convolutions only (1 MAC = 1 multiply + 1 add)"


@dataclass(frozen=True)
class LayerCost:
    name: str
    params: int
    macs: int


@dataclass
class ComplexityReport:
    title: str
    input_size: tuple
    rows: list = field(default_factory=list)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    def params_by_layer(self) -> dict:
        return {r.name: r.params for r in self.rows}

    def format(self) -> str:
        h, w = self.input_size
        lines = [
            f"# {self.title}",
            f"# input {h}x{w}; FLOPs are {MACS_CONVENTION}",
            f"{'layer':<28}{'params':>12}{'MFLOPs':>12}",
        ]
        for r in self.rows:
            lines.append(f"{r.name:<28}{r.params:>12d}{r.macs / 1e6:>12.3f}")
        lines.append(f"{'total':<28}{self.total_params:>12d}{self.total_macs / 1e6:>12.3f}")
        return "\n".join(lines)


def _check(profile, input_size):
    profile = tuple(int(c) for c in profile)
    if len(profile) != 4 or profile[0] < 1 or any(b <= a for a, b in zip(profile, profile[1:])):
        raise ConfigError(f"channel profile must be 4 strictly increasing positive ints, got {profile}")
    if isinstance(input_size, int):
        input_size = (input_size, input_size)
    h, w = (int(v) for v in input_size)
    if h % MAX_STRIDE or w % MAX_STRIDE:
        raise DimensionError(f"input size {h}x{w} must be divisible by {MAX_STRIDE}")
    return profile, (h, w)


def _conv(name, k, cin, cout, positions):
    params = k * k * cin * cout + cout
    return LayerCost(name, params, params * positions)


def count_lightfpn(profile, width=64, input_size=512) -> ComplexityReport:
    """Layer-by-layer cost of the LightFPN decoder.

    Row names match the decoder parameter prefixes of
    :class:`bfseg.model.BFSegModel`.
    """
    profile, (h, w) = _check(profile, input_size)
    report = ComplexityReport(f"LightFPN decoder, profile {profile}, width {width}", (h, w))
    positions = [(h // s) * (w // s) for s in STAGE_STRIDES]
    for s, c in enumerate(reversed(profile), start=1):
        report.rows.append(_conv(f"decoder.condense{s}", 1, c, width, positions[s - 1]))
    for s in range(1, 5):
        report.rows.append(_conv(f"decoder.stage{s}", 3, width * s, width, positions[s - 1]))
    for s in range(1, 5):
        report.rows.append(_conv(f"decoder.head{s}", 3, width, 1, positions[s - 1]))
    return report


def count_unet_reference(profile, input_size=512) -> ComplexityReport:
    """Cost of a plain U-Net style decoder over the same four levels.

    Three merges (stride 32 into 16, 16 into 8, 8 into 4): upsample the deeper
    map, concatenate the skip, then two 3x3 convolutions to the skip's channel
    count. A 1x1 convolution produces the single-channel logits.
    """
    profile, (h, w) = _check(profile, input_size)
    report = ComplexityReport(f"U-Net reference decoder, profile {profile}", (h, w))
    deep = profile[3]
    for i, (skip, stride) in enumerate(zip(profile[2::-1], STAGE_STRIDES[1:]), start=1):
        pos = (h // stride) * (w // stride)
        report.rows.append(_conv(f"merge{i}.conv1", 3, deep + skip, skip, pos))
        report.rows.append(_conv(f"merge{i}.conv2", 3, skip, skip, pos))
        deep = skip
    pos = (h // STAGE_STRIDES[-1]) * (w // STAGE_STRIDES[-1])
    report.rows.append(_conv("head", 1, deep, 1, pos))
    return report


@dataclass
class VerificationReport:
    analytic_total: int
    actual_total: int
    diffs: list  # (layer, analytic, actual)

    @property
    def ok(self) -> bool:
        return not self.diffs and self.analytic_total == self.actual_total

    def format(self) -> str:
        if self.ok:
            return f"decoder parameters match: {self.actual_total}"
        lines = [f"decoder parameter mismatch: analytic {self.analytic_total} vs actual {self.actual_total}"]
        lines += [f"  {name}: analytic {a} vs actual {b}" for name, a, b in self.diffs]
        return "\n".join(lines)


def verify_against_model(model, report: ComplexityReport | None = None) -> VerificationReport:
    """Compare an analytic LightFPN report with a model's actual decoder arrays."""
    if report is None:
        report = count_lightfpn(model.config.profile, model.config.width, MAX_STRIDE)
    actual = {}
    for name, arr in model.params.items():
        if name.startswith("decoder."):
            layer = name.rsplit(".", 1)[0]
            actual[layer] = actual.get(layer, 0) + int(arr.size)
    analytic = report.params_by_layer()
    diffs = [
        (layer, analytic.get(layer, 0), actual.get(layer, 0))
        for layer in sorted(set(analytic) | set(actual))
        if analytic.get(layer, 0) != actual.get(layer, 0)
    ]
    return VerificationReport(report.total_params, sum(actual.values()), diffs)
