import numpy as np
import pytest
from scipy.special import expit

from core.errors import DataError
from core.model.Losses import Losses
from core.training.MetricSeries import MetricSeries
from core.training.Transition import detect_transition


def series_of(values, masked=True):
    series = MetricSeries()
    for step, v in enumerate(values, start=1):
        series.append(step, Losses(L=v, L_obs=v, L_mask=v if masked else None))
    return series


def test_step_function_drop():
    report = detect_transition(series_of([1.0] * 100 + [0.01] * 200))
    assert report.detected
    assert 95 <= report.drop_step <= 110
    assert report.drop_count == 1
    assert report.plateau == pytest.approx(1.0)
    assert report.post_drop == pytest.approx(0.01)
    assert report.magnitude == pytest.approx(2.0)


def test_slow_decay_is_not_a_drop():
    report = detect_transition(series_of(0.99 ** np.arange(300)))
    assert not report.detected
    assert report.drop_count == 0


def test_two_drops_counted():
    report = detect_transition(series_of([1.0] * 150 + [0.01] * 200 + [1e-4] * 250))
    assert report.drop_count == 2
    assert 145 <= report.drop_step <= 160


def test_falls_back_to_total_loss():
    report = detect_transition(series_of([1.0] * 100 + [0.01] * 200, masked=False))
    assert report.metric == "L"
    assert report.detected


def test_noise_does_not_trigger(rng):
    values = np.exp(rng.normal(0, 0.3, 400))
    assert not detect_transition(series_of(values)).detected


def test_empty_series():
    with pytest.raises(DataError, match="empty"):
        detect_transition(MetricSeries())


def test_shorter_than_window():
    with pytest.raises(DataError):
        detect_transition(series_of([1.0] * 100))


def test_plateau_then_constant_drop():
    report = detect_transition(series_of([0.22] * 100 + [0.013] * 300))
    assert 95 <= report.drop_step <= 110
    assert report.plateau == pytest.approx(0.22)


@pytest.mark.parametrize("width", [50, 150, 300])
def test_gradual_drop_over_several_windows(rng, width):
    t = np.arange(6000)
    log_loss = np.log10(0.22) + np.log10(4e-3 / 0.22) * expit((t - 3000) / width) + rng.normal(0, 0.15, t.size)
    report = detect_transition(series_of(10 ** log_loss))
    assert report.drop_count == 1
    assert 3000 - 3 * width <= report.drop_step <= 3000 + width
    assert report.plateau == pytest.approx(0.22, rel=0.15)
    assert report.magnitude > 1.0


def test_decay_without_plateau_is_not_a_drop():
    values = np.concatenate([0.99 ** np.arange(600), np.full(400, 0.99 ** 600)])
    assert detect_transition(series_of(values)).drop_count == 0
