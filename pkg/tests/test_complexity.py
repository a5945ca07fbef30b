from dataclasses import replace

import pytest

from bfseg.complexity import count_lightfpn, count_unet_reference, verify_against_model
from bfseg.errors import ConfigError, DimensionError
from bfseg.model import BFSegModel, ModelConfig

CONVNEXT = (96, 192, 384, 768)


def condenser_params(report):
    return sum(r.params for r in report.rows if ".condense" in r.name)


def test_condensers():
    assert condenser_params(count_lightfpn(CONVNEXT)) == 92_416
    assert condenser_params(count_lightfpn((64, 128, 256, 512))) == 61_696


def test_lightfpn_total_by_hand():
    width = 64
    condense = width * sum(CONVNEXT) + 4 * width
    stages = sum(9 * width * s * width + width for s in range(1, 5))
    heads = 4 * (9 * width + 1)
    assert count_lightfpn(CONVNEXT).total_params == condense + stages + heads < 1_000_000


def test_unet_deepest_merge():
    rows = {r.name: r for r in count_unet_reference(CONVNEXT).rows}
    assert rows["merge1.conv1"].params == 9 * (768 + 384) * 384 + 384 == 3_981_696


def test_ratio():
    ratio = count_unet_reference(CONVNEXT).total_params / count_lightfpn(CONVNEXT).total_params
    assert ratio >= 5


def test_totals_equal_row_sums():
    r = count_lightfpn(CONVNEXT, input_size=256)
    assert r.total_params == sum(x.params for x in r.rows)
    assert r.total_macs == sum(x.macs for x in r.rows)


def test_macs_scale_with_pixels():
    for fn in (count_lightfpn, count_unet_reference):
        small, big = fn(CONVNEXT, input_size=128), fn(CONVNEXT, input_size=256)
        assert big.total_macs == 4 * small.total_macs
        assert big.total_params == small.total_params


@pytest.mark.parametrize("profile", [(64, 64, 64, 64), (64, 128, 256), (0, 1, 2, 3)])
def test_invalid_profile(profile):
    with pytest.raises(ConfigError):
        count_lightfpn(profile)
    with pytest.raises(ConfigError):
        count_unet_reference(profile)


def test_bad_input_size():
    with pytest.raises(DimensionError):
        count_lightfpn(CONVNEXT, input_size=100)


@pytest.mark.parametrize("width", [64, 32])
def test_verify_matches_model(width):
    model = BFSegModel(ModelConfig(width=width))
    result = verify_against_model(model)
    assert result.ok, result.format()


def test_verify_names_offending_layer():
    model = BFSegModel()
    report = count_lightfpn(model.config.profile, model.config.width, 64)
    report.rows[5] = replace(report.rows[5], params=report.rows[5].params + 1)
    result = verify_against_model(model, report)
    assert not result.ok
    assert [d[0] for d in result.diffs] == [report.rows[5].name]
    assert report.rows[5].name in result.format()


def test_format_has_totals():
    text = count_lightfpn(CONVNEXT).format()
    assert "total" in text.lower() and "decoder.head4" in text
