import math

import pytest
from hypothesis import given, strategies as st

from aqkg.selector import AdaptiveModel, PiecewiseLinearModel, Segment, reference_model, resolve_model, select_params


def expected(c):
    """Hand-written branch table for the reference constants."""
    if c < 0.3:
        m = 2
        alpha = 1.0 if c <= 0.275 else -5.83 * c + 2.57
    elif c < 0.675:
        m = 4
        if c <= 0.33:
            alpha = 1.085 * c - 0.082
        elif c <= 0.46:
            alpha = -3.47 * c + 1.6
        else:
            alpha = 0.0
    else:
        m, alpha = 8, 0.0
    return m, min(max(alpha, 0.0), 1.5)


@pytest.mark.parametrize("c, m, alpha", [
    (0.25, 2, 1.0), (0.275, 2, 1.0), (0.30, 4, 0.2435), (0.33, 4, 0.27605),
    (0.40, 4, 0.212), (0.46, 4, 0.0038), (0.675, 8, 0.0), (0.70, 8, 0.0),
])
def test_reference_branch_values(c, m, alpha):
    got_m, got_alpha = select_params(c, reference_model())
    assert got_m == m
    assert got_alpha == pytest.approx(alpha, abs=1e-9)


def test_reference_constants():
    model = reference_model()
    assert model.level_thresholds == (0.3, 0.675)
    assert model.alpha_models[2](0.1) == 1.0
    assert all(model.alpha_models[8](c / 10) == 0 for c in range(11))


@given(st.floats(0, 1))
def test_total_and_clamped(c):
    model = reference_model()
    m, alpha = select_params(c, model)
    assert (m, alpha) == pytest.approx(expected(c), abs=1e-12)
    assert 0.0 <= alpha <= 1.5


def test_negative_extrapolation_clamps():
    model = reference_model()
    assert model.alpha_models[4].raw(0.05) < 0
    assert model.alpha_models[4](0.05) == 0.0
    with pytest.raises(ValueError):
        select_params(-0.1, model)


def test_json_round_trip(tmp_path):
    model = reference_model()
    again = AdaptiveModel.loads(model.dumps())
    assert again == model
    path = tmp_path / "m.json"
    model.save(path)
    assert resolve_model(str(path)) == model
    assert resolve_model("paper-default") == model


def test_validation():
    with pytest.raises(ValueError):
        PiecewiseLinearModel((Segment(0.5, 0, 0), Segment(0.4, 0, 0)))
    with pytest.raises(ValueError):
        AdaptiveModel((0.6, 0.3), reference_model().alpha_models)
    with pytest.raises(ValueError):
        AdaptiveModel((0.3, 0.6), {2: PiecewiseLinearModel.line(0, 0)})
    with pytest.raises(ValueError):
        AdaptiveModel.from_dict({"levels": {}})


def test_open_last_segment_is_added():
    model = PiecewiseLinearModel((Segment(0.5, 1.0, 0.0),))
    assert math.isinf(model.segments[-1].upper_bound)
    assert model(0.9) == pytest.approx(0.9)
