import numpy as np
import pytest

from moveonset.data import SynthConfig, generate_synthetic
from moveonset.nets import TrainConfig
from moveonset.pipeline import (NEG_WINDOW_ENDS, POS_WINDOW_ENDS,
                                TRAIN_WINDOW_ENDS, FoldModels, eegnet_input,
                                mlp_feature_vector, prepare_trial,
                                svm_feature_vector)

TINY_CFG = TrainConfig(max_epochs=3, patience=1, seed=0)


@pytest.fixture(scope="module")
def tiny_fold():
    ds = generate_synthetic(SynthConfig(n_trials=15, seed=0))
    subject = ds.subjects[0]
    train = subject.sets[1] + subject.sets[2]
    val = subject.sets[3]
    models = FoldModels.train(train, val, seed=0, cfg=TINY_CFG)
    return models, subject


class TestWindowPositions:
    def test_training_window_ends(self):
        assert NEG_WINDOW_ENDS == (-3.0, -2.0, -1.5, -1.0, -0.8, -0.6)
        assert POS_WINDOW_ENDS == (0.04, 0.06, 0.08, 0.1, 0.12, 0.14)
        assert len(TRAIN_WINDOW_ENDS) == 12


class TestTrialViews:
    def test_epoch_shapes(self):
        ds = generate_synthetic(SynthConfig(n_trials=3, seed=1))
        views = prepare_trial(next(ds.all_trials()))
        for epoch in (views.raw, views.lowfreq, views.wideband):
            assert epoch.samples.shape == (16, 2600)
            assert epoch.t_start == -5.0

    def test_filtering_changes_signal(self):
        ds = generate_synthetic(SynthConfig(n_trials=3, seed=1))
        views = prepare_trial(next(ds.all_trials()))
        assert not np.allclose(views.lowfreq.samples, views.raw.samples)
        assert not np.allclose(views.lowfreq.samples, views.wideband.samples)


class TestFeatureVectors:
    def test_mlp_vector_length(self, tiny_fold):
        _, subject = tiny_fold
        views = prepare_trial(subject.sets[1][0])
        assert mlp_feature_vector(views, -0.6).shape == (192,)

    def test_svm_vector_length(self, tiny_fold):
        models, subject = tiny_fold
        views = prepare_trial(subject.sets[1][0])
        assert svm_feature_vector(views, -0.6, models.xdawn).shape == (108,)

    def test_eegnet_input_shape(self, tiny_fold):
        _, subject = tiny_fold
        views = prepare_trial(subject.sets[1][0])
        assert eegnet_input(views, 0.14).shape == (16, 500)

    def test_windows_at_different_ends_differ(self, tiny_fold):
        _, subject = tiny_fold
        views = prepare_trial(subject.sets[1][0])
        assert not np.array_equal(mlp_feature_vector(views, -3.0),
                                  mlp_feature_vector(views, 0.14))


class TestFoldModels:
    def test_window_probs_contract(self, tiny_fold):
        models, subject = tiny_fold
        views = prepare_trial(subject.sets[3][0])
        probs = models.window_probs(views, TRAIN_WINDOW_ENDS)
        assert set(probs) == {"D", "S", "M", "E"}
        for arr in probs.values():
            assert arr.shape == (12,)
            assert np.all((arr >= 0.0) & (arr <= 1.0))

    def test_inference_deterministic(self, tiny_fold):
        models, subject = tiny_fold
        views = prepare_trial(subject.sets[3][1])
        a = models.window_probs(views, TRAIN_WINDOW_ENDS)
        b = models.window_probs(views, TRAIN_WINDOW_ENDS)
        for k in a:
            assert np.array_equal(a[k], b[k])

    def test_xdawn_component_count(self, tiny_fold):
        models, _ = tiny_fold
        assert models.xdawn.weights.shape == (4, 16)

    def test_fingerprints_distinct_per_model(self, tiny_fold):
        models, _ = tiny_fold
        prints = {k: models.fingerprint(k) for k in ("D", "S", "M", "E")}
        assert len(set(prints.values())) == 4
        assert all(len(v) == 16 for v in prints.values())

    def test_fingerprint_stable(self, tiny_fold):
        models, _ = tiny_fold
        assert models.fingerprint("M") == models.fingerprint("M")

    def test_svm_grid_searched(self, tiny_fold):
        models, _ = tiny_fold
        assert len(models.svm.grid_scores) == 8
