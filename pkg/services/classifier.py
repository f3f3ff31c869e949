"""L2-regularised linear classifier trained by deterministic full-batch gradient descent."""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from config import settings
from exceptions import InvalidInputError, ShapeMismatchError, TrainingDivergenceError
from models import LinearClassifier

logger = logging.getLogger(__name__)

LOSSES = ("softmax", "hinge")


def softmax_cross_entropy(scores: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the scores."""
    count = scores.shape[0]
    rows = np.arange(count)
    loss = -float(log_softmax(scores, axis=1)[rows, labels].mean())
    grad = softmax(scores, axis=1)
    grad[rows, labels] -= 1.0
    return loss, grad / count


def multiclass_hinge(scores: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Crammer-Singer hinge: max(0, 1 + max_{j != y} s_j - s_y), with a subgradient."""
    count = scores.shape[0]
    rows = np.arange(count)
    margins = scores - scores[rows, labels][:, None] + 1.0
    margins[rows, labels] = -np.inf
    rival = np.argmax(margins, axis=1)
    violation = np.maximum(margins[rows, rival], 0.0)

    grad = np.zeros_like(scores)
    active = violation > 0
    grad[rows[active], rival[active]] += 1.0
    grad[rows[active], labels[active]] -= 1.0
    return float(violation.mean()), grad / count


def data_loss(scores: np.ndarray, labels: np.ndarray, loss: str) -> Tuple[float, np.ndarray]:
    if loss == "softmax":
        return softmax_cross_entropy(scores, labels)
    if loss == "hinge":
        return multiclass_hinge(scores, labels)
    raise InvalidInputError(f"unknown classifier loss {loss!r}, expected one of {LOSSES}")


def fit_standardizer(pooled: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def objective(
    classifier: LinearClassifier, pooled: np.ndarray, labels: np.ndarray
) -> Tuple[float, Dict[str, np.ndarray], np.ndarray]:
    """Loss, parameter gradients, and the gradient w.r.t. the pooled inputs."""
    if pooled.shape[1] != classifier.weights.shape[1]:
        raise ShapeMismatchError(
            f"classifier expects {classifier.weights.shape[1]} channels, got {pooled.shape[1]}"
        )
    standardized = classifier.standardize(pooled)
    scores = standardized @ classifier.weights.T + classifier.bias
    loss, grad_scores = data_loss(scores, labels, classifier.loss)
    loss += 0.5 * classifier.l2 * float(np.sum(classifier.weights ** 2))

    grads = {
        "weights": grad_scores.T @ standardized + classifier.l2 * classifier.weights,
        "bias": grad_scores.sum(axis=0),
    }
    grad_pooled = (grad_scores @ classifier.weights) / classifier.feature_scale
    return loss, grads, grad_pooled


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predictions == labels))


class ClassifierTrainer:
    def __init__(
        self,
        loss: str = "softmax",
        learning_rate: Optional[float] = None,
        epochs: Optional[int] = None,
        l2: Optional[float] = None,
    ):
        if loss not in LOSSES:
            raise InvalidInputError(f"unknown classifier loss {loss!r}, expected one of {LOSSES}")
        self.loss = loss
        self.learning_rate = settings.learning_rate if learning_rate is None else learning_rate
        self.epochs = settings.epochs if epochs is None else epochs
        self.l2 = settings.l2 if l2 is None else l2
        self.history: List[float] = []

    def initial(self, pooled: np.ndarray, num_classes: int) -> LinearClassifier:
        classifier = LinearClassifier.zeros(
            num_classes,
            pooled.shape[1],
            loss=self.loss,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            l2=self.l2,
        )
        classifier.feature_mean, classifier.feature_scale = fit_standardizer(pooled)
        return classifier

    def fit(self, pooled: np.ndarray, labels: np.ndarray, num_classes: int) -> LinearClassifier:
        labels = np.asarray(labels, dtype=int)
        if pooled.shape[0] != labels.shape[0]:
            raise ShapeMismatchError(f"{pooled.shape[0]} pooled vectors but {labels.shape[0]} labels")
        if np.unique(labels).size < 2:
            logger.warning("Training data holds a single class; the classifier will be trivial")

        classifier = self.initial(pooled, num_classes)
        self.history = []
        for epoch in range(self.epochs + 1):
            loss, grads, _ = objective(classifier, pooled, labels)
            self.history.append(loss)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"classifier loss became {loss} at epoch {epoch} (learning rate {self.learning_rate})"
                )
            if epoch == self.epochs:
                break
            classifier.weights = classifier.weights - self.learning_rate * grads["weights"]
            classifier.bias = classifier.bias - self.learning_rate * grads["bias"]
            if settings.log_every and epoch % settings.log_every == 0:
                logger.info("classifier epoch %d: loss %.6f", epoch, loss)
        return classifier
