import numpy as np
import pytest

from conftest import linear_model
from stochprune.metrics import (GradientBoundTracker, WeightHistogram,
                                confusion_matrix, format_relative_loss,
                                relative_accuracy_loss, weight_histogram)
from stochprune.net import DTYPE, build_residual_mlp, eval_accuracy
from test_net import make_dataset


class TestConfusionMatrix:
    def test_perfect_classifier_single_class(self):
        model = linear_model(np.eye(10))
        features = np.tile(np.eye(10, dtype=DTYPE)[3], (10, 1))
        ds = make_dataset(features, [3] * 10, 10)
        cm = confusion_matrix(model, ds)
        assert cm.counts[3, 3] == 10
        assert cm.counts.sum() == 10

    def test_constant_predictor_fills_column_zero(self):
        model = linear_model(np.zeros((4, 4)))
        ds = make_dataset(np.eye(4, dtype=DTYPE), np.arange(4), 4)
        cm = confusion_matrix(model, ds)
        np.testing.assert_array_equal(cm.counts[:, 0], np.ones(4))
        assert cm.counts[:, 1:].sum() == 0

    def test_trace_identity_equals_accuracy(self, rng):
        model = linear_model(rng.standard_normal((5, 8)))
        features = rng.standard_normal((40, 8)).astype(DTYPE)
        labels = rng.integers(0, 5, size=40)
        ds = make_dataset(features, labels, 5)
        cm = confusion_matrix(model, ds)
        assert cm.accuracy() == eval_accuracy(model, ds)
        assert cm.total == 40

    def test_label_out_of_range_rejected(self):
        model = linear_model(np.eye(3))
        ds = make_dataset(np.eye(3, dtype=DTYPE), [0, 1, 2], 4)
        with pytest.raises(ValueError, match="label out of range"):
            confusion_matrix(model, ds)

    def test_csv_is_k_rows_of_k_integers(self):
        model = linear_model(np.eye(4))
        ds = make_dataset(np.eye(4, dtype=DTYPE), np.arange(4), 4)
        lines = confusion_matrix(model, ds).to_csv().strip().split("\n")
        assert len(lines) == 4
        assert all(len(line.split(",")) == 4 for line in lines)


class TestWeightHistogram:
    def test_boundary_value_goes_to_upper_bin(self):
        # weights [-1, 0, 1] in 2 bins over [-1, 1]: 0 goes to the upper
        # bin, the right-closed last bin takes 1
        model = linear_model(np.array([[-1.0], [0.0], [1.0]]))
        hist = weight_histogram(model, bins=2, value_range=(-1.0, 1.0))
        np.testing.assert_array_equal(hist.counts, [1, 2])

    def test_all_zero_model(self):
        model = linear_model(np.zeros((2, 8)))
        hist = weight_histogram(model)
        assert hist.counts.sum() == 16
        assert hist.counts.max() == 16
        assert hist.summary["std"] == 0.0
        assert hist.summary["frac_zero"] == 1.0

    def test_gaussian_std_within_5_percent(self, rng):
        sigma = 0.3
        n = 100_000
        values = (sigma * rng.standard_normal(n)).astype(DTYPE)
        model = linear_model(values.reshape(200, 500))
        hist = weight_histogram(model)
        assert hist.summary["std"] == pytest.approx(sigma, rel=0.05)
        assert hist.summary["mean"] == pytest.approx(0.0, abs=0.01)

    def test_conservation_and_out_of_range(self, rng):
        values = np.array([-9.0, -1.5, 0.0, 1.5, 9.0, 0.2],
                          dtype=DTYPE)
        model = linear_model(values.reshape(2, 3))
        hist = weight_histogram(model)
        assert hist.counts.sum() == values.size
        assert hist.summary["below_range"] == 1
        assert hist.summary["above_range"] == 1
        # clamped into the edge bins
        assert hist.counts[0] >= 1 and hist.counts[-1] >= 1

    def test_frac_abs_in_unit_interval_is_strict(self):
        values = np.array([0.0, 0.5, 1.0, -0.5, 2.0, -1.0], dtype=DTYPE)
        model = linear_model(values.reshape(2, 3))
        hist = weight_histogram(model)
        assert hist.summary["frac_abs_in_unit"] == pytest.approx(2 / 6)

    def test_csv_row_per_bin(self):
        model = linear_model(np.zeros((2, 2)))
        hist = weight_histogram(model, bins=10, value_range=(-1, 1))
        lines = hist.to_csv().strip().split("\n")
        assert lines[0] == "edge,count"
        assert len(lines) == 11

    def test_bad_args_rejected(self):
        model = linear_model(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            weight_histogram(model, bins=0)
        with pytest.raises(ValueError):
            weight_histogram(model, value_range=(1.0, -1.0))


def single_component_tracker():
    params = [("w", np.zeros(1, dtype=DTYPE))]
    return GradientBoundTracker(params, np.random.default_rng(0),
                                per_tensor=1)


class TestGradientBoundTracker:
    def test_phi_equals_g_makes_sums_equal(self):
        tracker = single_component_tracker()
        for t in range(1, 6):
            g = np.array([0.5 * t])
            tracker.update("w", g, g, t)
        np.testing.assert_allclose(tracker.sum_phi["w"], tracker.sum_g["w"])
        assert tracker.check().ok

    def test_phi_zero_keeps_left_at_zero(self):
        tracker = single_component_tracker()
        for t in range(1, 6):
            tracker.update("w", np.array([1.0]), np.array([0.0]), t)
        assert tracker.sum_phi["w"][0] == 0.0
        assert tracker.check().ok

    def test_four_step_hand_example(self):
        # g = 1 at t=1..4, phi alternates [1, 0, 1, 0]:
        # left = 1 + 1/sqrt(3), middle = 1 + 1/sqrt(2) + 1/sqrt(3) + 1/2,
        # right = 2 * 1 * sqrt(4) = 4
        tracker = single_component_tracker()
        phis = [1.0, 0.0, 1.0, 0.0]
        for t, phi in enumerate(phis, start=1):
            tracker.update("w", np.array([1.0]), np.array([phi]), t)
        left = tracker.sum_phi["w"][0]
        middle = tracker.sum_g["w"][0]
        right = 2.0 * tracker.gmax * np.sqrt(tracker.sumsq_g["w"][0])
        assert left == pytest.approx(1.0 + 1.0 / np.sqrt(3.0), abs=1e-12)
        assert middle == pytest.approx(
            1.0 + 1.0 / np.sqrt(2.0) + 1.0 / np.sqrt(3.0) + 0.5, abs=1e-12)
        assert right == pytest.approx(4.0, abs=1e-12)
        assert left <= middle <= right
        assert tracker.check().ok

    def test_observer_extracts_masked_components(self, rng):
        params = [("w", np.zeros(16, dtype=DTYPE))]
        tracker = GradientBoundTracker(params, np.random.default_rng(1),
                                       per_tensor=8)
        g = rng.standard_normal(16).astype(DTYPE)
        u = rng.random(16)
        tracker.observe("w", g, u, 0.5, 1)
        idx = tracker.indices["w"]
        expected_phi = np.where(u[idx] < 0.5, g[idx].astype(np.float64), 0.0)
        np.testing.assert_allclose(tracker.sum_phi["w"],
                                   np.abs(expected_phi))
        # global infinity norm sees the whole tensor, not just tracked comps
        assert tracker.gmax == pytest.approx(float(np.abs(g).max()))

    def test_violation_reported_per_component(self):
        tracker = single_component_tracker()
        # force a violation: left sum larger than middle sum
        tracker.sum_phi["w"][0] = 2.0
        tracker.sum_g["w"][0] = 1.0
        tracker.sumsq_g["w"][0] = 1.0
        tracker.gmax = 1.0
        result = tracker.check()
        assert not result.ok
        assert result.violations[0]["param"] == "w"


class TestRelativeLoss:
    def test_table_values_reproduce(self):
        loss = relative_accuracy_loss(83.95, 62.84)
        assert f"{loss:.2f}" == "25.15"
        gain = relative_accuracy_loss(85.64, 85.67)
        assert format_relative_loss(gain) == "+0.04%"

    def test_unchanged_is_zero(self):
        assert format_relative_loss(relative_accuracy_loss(0.5, 0.5)) == "0.00%"

    def test_scale_invariance(self):
        assert relative_accuracy_loss(0.8395, 0.6284) == pytest.approx(
            relative_accuracy_loss(83.95, 62.84))

    def test_zero_baseline_rejected(self):
        with pytest.raises(ValueError):
            relative_accuracy_loss(0.0, 0.5)

    def test_loss_formatting_plain(self):
        assert format_relative_loss(25.146) == "25.15%"
