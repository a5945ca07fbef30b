import numpy as np
import pytest

from bfseg.label_pyramid import build_mask_pyramid
from bfseg.losses import distillation_targets, total_loss
from bfseg.model import BFSegModel, ModelConfig


def naive_conv(x, w, b, stride=1, pad=0):
    """Direct convolution: one explicit dot product per output value."""
    n, h, wd, c = x.shape
    kh, kw, _, cout = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, ho, wo, cout))
    for bi in range(n):
        for i in range(ho):
            for j in range(wo):
                patch = xp[bi, i * stride : i * stride + kh, j * stride : j * stride + kw, :]
                for o in range(cout):
                    out[bi, i, j, o] = float(np.sum(patch * w[..., o])) + b[o]
    return out


def naive_bilinear_up(x, factor):
    """Per-output-pixel bilinear lookup with half-pixel centres and edge clamp."""
    n, h, w = x.shape[:3]
    out = np.zeros((n, h * factor, w * factor) + x.shape[3:])

    def coord(o, size):
        src = min(max((o + 0.5) / factor - 0.5, 0.0), size - 1.0)
        i0 = int(np.floor(src))
        return i0, min(i0 + 1, size - 1), src - i0

    for i in range(h * factor):
        r0, r1, a = coord(i, h)
        for j in range(w * factor):
            c0, c1, b = coord(j, w)
            out[:, i, j] = (
                (1 - a) * (1 - b) * x[:, r0, c0]
                + (1 - a) * b * x[:, r0, c1]
                + a * (1 - b) * x[:, r1, c0]
                + a * b * x[:, r1, c1]
            )
    return out


@pytest.fixture
def small_model64():
    """float64 model small enough for finite-difference checks."""
    return BFSegModel(ModelConfig(base_channels=4, width=8, dtype="float64", seed=11))


def objective(model, image, label, mode, teachers=None):
    """Scalar training objective with an optionally frozen distillation teacher."""
    preds = model.forward(image)
    return total_loss(preds, build_mask_pyramid(label), label, mode, teachers)[0].total


def analytic_and_teachers(model, image, label, mode):
    preds, tape = model.forward(image, keep_tape=True)
    _, g = total_loss(preds, build_mask_pyramid(label), label, mode)
    grads = model.backward(tape, g["cls"], g["final"])
    return grads, distillation_targets(preds.final)


def central_difference(model, name, idx, fn, eps=1e-5):
    w = model.params[name]
    old = w[idx]
    w[idx] = old + eps
    plus = fn()
    w[idx] = old - eps
    minus = fn()
    w[idx] = old
    return (plus - minus) / (2 * eps)


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record_verdict(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
