import numpy as np
import pytest

from exceptions import InvalidInputError, ShapeMismatchError, TrainingDivergenceError
from models import LinearClassifier
from services.classifier import (
    ClassifierTrainer,
    accuracy,
    fit_standardizer,
    multiclass_hinge,
    objective,
    softmax_cross_entropy,
)


@pytest.fixture
def separable(rng):
    centres = np.array([[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]])
    labels = np.repeat(np.arange(3), 10)
    pooled = centres[labels] + rng.uniform(0.0, 0.5, size=(30, 3))
    return pooled, labels


def random_classifier(rng, num_classes, dim, loss="softmax", l2=0.01):
    return LinearClassifier(
        weights=rng.normal(size=(num_classes, dim)),
        bias=rng.normal(size=num_classes),
        feature_mean=rng.uniform(size=dim),
        feature_scale=rng.uniform(0.5, 2.0, size=dim),
        loss=loss,
        l2=l2,
    )


def test_uniform_scores_give_log_c():
    loss, grad = softmax_cross_entropy(np.zeros((4, 5)), np.array([0, 1, 2, 3]))
    assert loss == pytest.approx(np.log(5))
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)


def test_hinge_examples():
    scores = np.array([[2.0, 0.5, 0.0], [0.0, 0.2, 0.1]])
    loss, grad = multiclass_hinge(scores, np.array([0, 0]))
    # first row clears the margin, second loses by 1 + 0.2
    assert loss == pytest.approx(0.6)
    np.testing.assert_array_equal(grad, [[0.0, 0.0, 0.0], [-0.5, 0.5, 0.0]])


def test_standardizer_keeps_constant_channels():
    pooled = np.array([[1.0, 5.0], [3.0, 5.0]])
    mean, scale = fit_standardizer(pooled)
    np.testing.assert_array_equal(mean, [2.0, 5.0])
    np.testing.assert_array_equal(scale, [1.0, 1.0])


@pytest.mark.parametrize("loss", ["softmax", "hinge"])
def test_separable_data_is_learned(separable, loss):
    pooled, labels = separable
    trainer = ClassifierTrainer(loss=loss, learning_rate=0.5, epochs=100, l2=1e-4)
    classifier = trainer.fit(pooled, labels, 3)
    assert accuracy(classifier.predict(pooled), labels) == 1.0
    assert len(trainer.history) == 101
    assert trainer.history[-1] < trainer.history[0]


def test_zero_epochs_keeps_zero_classifier(separable):
    pooled, labels = separable
    trainer = ClassifierTrainer(epochs=0)
    classifier = trainer.fit(pooled, labels, 3)
    assert np.all(classifier.weights == 0)
    assert trainer.history == [pytest.approx(np.log(3))]


def test_zero_weights_predict_class_zero(separable):
    pooled, labels = separable
    classifier = ClassifierTrainer().initial(pooled, 3)
    assert accuracy(classifier.predict(pooled), labels) == pytest.approx(np.mean(labels == 0))


def test_objective_matches_central_differences(rng):
    pooled = rng.uniform(size=(6, 4))
    labels = np.array([0, 1, 2, 0, 1, 2])
    classifier = random_classifier(rng, 3, 4)
    _, grads, grad_pooled = objective(classifier, pooled, labels)

    eps = 1e-6
    for name in ("weights", "bias"):
        original = getattr(classifier, name)
        numeric = np.zeros_like(original)
        for index in np.ndindex(*original.shape):
            probe = original.copy()
            probe[index] += eps
            setattr(classifier, name, probe)
            plus = objective(classifier, pooled, labels)[0]
            probe[index] -= 2 * eps
            minus = objective(classifier, pooled, labels)[0]
            numeric[index] = (plus - minus) / (2 * eps)
        setattr(classifier, name, original)
        np.testing.assert_allclose(grads[name], numeric, rtol=1e-5, atol=1e-8)

    numeric = np.zeros_like(pooled)
    for index in np.ndindex(*pooled.shape):
        probe = pooled.copy()
        probe[index] += eps
        plus = objective(classifier, probe, labels)[0]
        probe[index] -= 2 * eps
        minus = objective(classifier, probe, labels)[0]
        numeric[index] = (plus - minus) / (2 * eps)
    np.testing.assert_allclose(grad_pooled, numeric, rtol=1e-5, atol=1e-8)


def test_l2_penalty_skips_bias(rng):
    pooled = rng.uniform(size=(5, 3))
    labels = np.array([0, 1, 0, 1, 0])
    classifier = random_classifier(rng, 2, 3, l2=0.0)
    plain, _, _ = objective(classifier, pooled, labels)
    classifier.l2 = 0.5
    penalised, _, _ = objective(classifier, pooled, labels)
    assert penalised - plain == pytest.approx(0.25 * np.sum(classifier.weights ** 2))
    classifier.bias = classifier.bias + 10.0
    shifted, _, _ = objective(classifier, pooled, labels)
    assert shifted == pytest.approx(penalised)


def test_divergence_is_reported(separable):
    pooled, labels = separable
    trainer = ClassifierTrainer(learning_rate=1e308, epochs=5)
    with pytest.raises(TrainingDivergenceError):
        trainer.fit(pooled, labels, 3)


def test_bad_inputs(separable):
    pooled, labels = separable
    with pytest.raises(InvalidInputError):
        ClassifierTrainer(loss="squared")
    with pytest.raises(ShapeMismatchError):
        ClassifierTrainer().fit(pooled, labels[:-1], 3)
    with pytest.raises(ShapeMismatchError):
        objective(ClassifierTrainer().initial(pooled, 3), pooled[:, :2], labels)
