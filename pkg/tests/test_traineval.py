import numpy as np
import pytest

from charm.dataset import LabeledSegment, SensorStream, loso_split
from charm.model import CharmConfig
from charm.neurocore import make_rng
from charm.traineval import (MetricsReport, TrainConfig, TrainingError,
                             compute_class_weights, confusion_matrix, evaluate,
                             format_report, metrics_from_confusion, predict,
                             report_key_values, train)

CFG = CharmConfig(r=8, q=2, z=4, low_hidden=8, low_out=8, high_hidden=8, m=2)


def toy_dataset(n_per_class=8, users=("a", "b")):
    """Linearly separable two-class set: class differs by channel offset."""
    rng = make_rng(99)
    segs = []
    for user in users:
        for cls in (0, 1):
            for _ in range(n_per_class):
                base = 2.0 if cls else -2.0
                data = base + rng.normal(scale=0.3, size=(32, 2))
                segs.append(LabeledSegment(SensorStream(data), cls, user))
    return segs


class TestClassWeights:
    def test_balanced_identity(self):
        np.testing.assert_allclose(compute_class_weights([10, 10, 10, 10]), [1.0] * 4)

    def test_inverse_proportional_mean_one(self):
        w = compute_class_weights([10, 30])
        np.testing.assert_allclose(w, [1.5, 0.5])
        assert w.mean() == pytest.approx(1.0)

    def test_zero_count_names_class(self):
        with pytest.raises(TrainingError, match="0"):
            compute_class_weights([0, 5])


class TestTrain:
    def test_determinism(self):
        segs = toy_dataset()
        _, h1 = train(segs, "charm", TrainConfig(epochs=2, seed=7), CFG)
        _, h2 = train(segs, "charm", TrainConfig(epochs=2, seed=7), CFG)
        assert h1.train_loss == h2.train_loss

    def test_loss_decreases_on_separable_data(self):
        segs = toy_dataset()
        _, hist = train(segs, "charm", TrainConfig(epochs=5, seed=0), CFG)
        assert hist.train_loss[-1] < hist.train_loss[0]

    def test_epochs_zero_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_batch_size_fixed(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=2)

    def test_empty_train_set(self):
        with pytest.raises(TrainingError):
            train([], "charm", TrainConfig(), CFG)

    def test_single_class_rejected(self):
        segs = [s for s in toy_dataset() if s.high_label == 0]
        with pytest.raises(TrainingError):
            train(segs, "charm", TrainConfig(), CFG)

    def test_val_history_recorded(self):
        tr, va = loso_split(toy_dataset(), "b")
        _, hist = train(tr, "charm", TrainConfig(epochs=3, seed=1), CFG,
                        val_segments=va)
        assert len(hist.val_macro_f1) == 3
        assert len(hist.train_loss) == 3

    def test_validation_never_leaks_into_stats(self):
        tr, va = loso_split(toy_dataset(), "b")
        t1, _ = train(tr, "charm", TrainConfig(epochs=1, seed=2), CFG,
                      val_segments=va)
        t2, _ = train(tr, "charm", TrainConfig(epochs=1, seed=2), CFG,
                      val_segments=list(reversed(va)))
        np.testing.assert_array_equal(t1.stats.means, t2.stats.means)
        np.testing.assert_array_equal(t1.stats.stds, t2.stats.stds)
        for a, b in zip(t1.model.param_arrays(), t2.model.param_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_mlp_kind(self):
        from charm.model import MlpConfig
        segs = toy_dataset()
        mcfg = MlpConfig(n_target=32, q=2, m=2)
        trained, hist = train(segs, "mlp", TrainConfig(epochs=2, seed=3), mcfg)
        assert trained.kind == "mlp"
        assert len(hist.train_loss) == 2


class TestPredict:
    def test_argmax(self):
        segs = toy_dataset()
        trained, _ = train(segs, "charm", TrainConfig(epochs=5, seed=0), CFG)
        correct = sum(predict(trained, s) == s.high_label for s in segs)
        assert correct / len(segs) > 0.9

    def test_tie_breaks_to_lowest_index(self):
        segs = toy_dataset()
        trained, _ = train(segs, "charm", TrainConfig(epochs=1, seed=0), CFG)
        for p in trained.model.param_arrays():
            p[...] = 0.0  # uniform probabilities everywhere
        assert predict(trained, segs[0]) == 0

    def test_evaluation_does_not_mutate_params(self):
        segs = toy_dataset()
        trained, _ = train(segs, "charm", TrainConfig(epochs=1, seed=4), CFG)
        before = [p.copy() for p in trained.model.param_arrays()]
        evaluate(trained, segs)
        for a, b in zip(before, trained.model.param_arrays()):
            np.testing.assert_array_equal(a, b)


class TestMetrics:
    def test_diagonal_confusion_perfect(self):
        rep = metrics_from_confusion(np.diag([5, 7, 3]))
        np.testing.assert_allclose(rep.precision, 1.0)
        np.testing.assert_allclose(rep.recall, 1.0)
        np.testing.assert_allclose(rep.f1, 1.0)
        assert rep.accuracy == 1.0

    def test_hand_computed_fixture(self):
        rep = metrics_from_confusion([[9, 1], [3, 7]])
        assert rep.precision[0] == pytest.approx(0.75)
        assert rep.recall[0] == pytest.approx(0.9)
        assert rep.f1[0] == pytest.approx(0.8182, abs=1e-4)
        assert rep.accuracy == pytest.approx(0.8)

    def test_zero_over_zero_is_zero(self):
        rep = metrics_from_confusion([[4, 0], [0, 0]])  # class 1 never occurs
        assert rep.precision[1] == 0.0
        assert rep.recall[1] == 0.0
        assert rep.f1[1] == 0.0

    def test_support_weighted_recall_equals_accuracy(self):
        rng = make_rng(6)
        cm = rng.integers(0, 20, size=(4, 4))
        rep = metrics_from_confusion(cm)
        support = cm.sum(axis=1)
        weighted = (rep.recall * support).sum() / support.sum()
        assert weighted == pytest.approx(rep.accuracy)

    def test_macro_f1_permutation_invariant(self):
        rng = make_rng(8)
        cm = rng.integers(0, 20, size=(4, 4))
        perm = rng.permutation(4)
        rep = metrics_from_confusion(cm)
        rep_p = metrics_from_confusion(cm[np.ix_(perm, perm)])
        assert rep.macro_f1 == pytest.approx(rep_p.macro_f1)

    def test_confusion_counts_all_samples(self):
        cm = confusion_matrix([0, 1, 1, 0], [0, 1, 0, 0], 2)
        assert cm.sum() == 4
        np.testing.assert_array_equal(cm, [[2, 0], [1, 1]])


class TestReportSerialization:
    def test_key_values_match_report(self):
        rep = metrics_from_confusion([[9, 1], [3, 7]])
        text = report_key_values(rep, ["x", "y"])
        values = dict(line.split("=", 1) for line in text.strip().splitlines())
        assert float(values["precision.x"]) == rep.precision[0]
        assert float(values["macro_f1"]) == rep.macro_f1
        assert values["confusion.x"] == "9,1"

    def test_text_table_has_class_rows(self):
        rep = metrics_from_confusion([[9, 1], [3, 7]])
        text = format_report(rep, ["x", "y"])
        assert "x" in text and "macro" in text and "accuracy" in text
