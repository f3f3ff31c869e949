"""Fast and end-to-end training over multi-view feature datasets.

Fast training builds the universal hierarchy, pools every training object
through it and fits the linear classifier on the pooled vectors. End-to-end
training keeps the hierarchy fixed and learns a per-view front end jointly
with the classifier, backpropagating through the cluster-pool layer.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from exceptions import InvalidInputError, ShapeMismatchError, TrainingDivergenceError
from models import ClusteringHierarchy, Dataset, FrontEnd, LinearClassifier, PoolStructure, RecurrenceTrace
from schemas import ClassifierSchema, DominantSetConfig, FrontEndSchema, ModelSchema, StructureSummary, SyntheticConfig
from services.classifier import ClassifierTrainer, accuracy, fit_standardizer, objective
from services.cluster_pool import backward, forward
from services.scheme import apply_hierarchy, build_universal_hierarchy, hierarchy_from_schema, hierarchy_to_schema
from services.synthetic import SyntheticGenerator, split_dataset
from storage import read_json, write_json

logger = logging.getLogger(__name__)

TRAINING_MODES = ("fast", "e2e")


def _check_dataset(dataset: Dataset, hierarchy: Optional[ClusteringHierarchy] = None) -> None:
    dataset.validate()
    if hierarchy is not None and dataset.n_views != hierarchy.views_per_object:
        raise ShapeMismatchError(
            f"dataset has {dataset.n_views} views per object, hierarchy expects {hierarchy.views_per_object}"
        )


def pool_dataset(
    dataset: Dataset, hierarchy: ClusteringHierarchy, front_end: Optional[FrontEnd] = None
) -> np.ndarray:
    """One pooled row per object, in dataset order."""
    rows = []
    for obj in dataset.objects:
        features = obj.features if front_end is None else front_end.apply(obj.features)
        pooled, _ = apply_hierarchy(features, hierarchy)
        rows.append(pooled)
    return np.vstack(rows)


def fast_train(
    train: Dataset,
    structure,
    max_depth: Optional[int] = None,
    cfg: Optional[DominantSetConfig] = None,
    loss: str = "softmax",
    learning_rate: Optional[float] = None,
    epochs: Optional[int] = None,
    l2: Optional[float] = None,
) -> Tuple[ClusteringHierarchy, LinearClassifier]:
    _check_dataset(train)
    hierarchy = build_universal_hierarchy(train.features(), structure, max_depth, cfg)
    logger.info("Universal hierarchy node counts: %s", hierarchy.node_counts())
    pooled = pool_dataset(train, hierarchy)
    trainer = ClassifierTrainer(loss=loss, learning_rate=learning_rate, epochs=epochs, l2=l2)
    classifier = trainer.fit(pooled, train.labels, train.num_classes)
    return hierarchy, classifier


@dataclass
class PipelineGradients:
    loss: float
    front_end_weights: np.ndarray
    front_end_bias: np.ndarray
    classifier_weights: np.ndarray
    classifier_bias: np.ndarray


def _front_end_pass(
    dataset: Dataset, hierarchy: ClusteringHierarchy, front_end: FrontEnd
) -> Tuple[np.ndarray, List[np.ndarray], List[RecurrenceTrace]]:
    pooled, activations, traces = [], [], []
    for obj in dataset.objects:
        pre = front_end.pre_activation(obj.features)
        y, trace = forward(np.maximum(pre, 0.0), hierarchy.structure, fixed_hierarchy=hierarchy)
        pooled.append(y)
        activations.append(pre)
        traces.append(trace)
    return np.vstack(pooled), activations, traces


def pipeline_loss(
    dataset: Dataset, hierarchy: ClusteringHierarchy, front_end: FrontEnd, classifier: LinearClassifier
) -> float:
    pooled, _, _ = _front_end_pass(dataset, hierarchy, front_end)
    loss, _, _ = objective(classifier, pooled, dataset.labels)
    return loss


def loss_and_gradients(
    dataset: Dataset, hierarchy: ClusteringHierarchy, front_end: FrontEnd, classifier: LinearClassifier
) -> PipelineGradients:
    """Loss and the gradients of every trainable parameter; inputs are left untouched."""
    pooled, activations, traces = _front_end_pass(dataset, hierarchy, front_end)
    loss, grads, grad_pooled = objective(classifier, pooled, dataset.labels)

    grad_weights = np.zeros_like(front_end.weights)
    grad_bias = np.zeros_like(front_end.bias)
    # objects are accumulated in dataset order
    for obj, pre, trace, grad_y in zip(dataset.objects, activations, traces, grad_pooled):
        grad_pre = backward(grad_y, trace) * (pre > 0)
        grad_weights += obj.features.T @ grad_pre
        grad_bias += grad_pre.sum(axis=0)

    return PipelineGradients(
        loss=loss,
        front_end_weights=grad_weights,
        front_end_bias=grad_bias,
        classifier_weights=grads["weights"],
        classifier_bias=grads["bias"],
    )


def initial_classifier(
    train: Dataset, hierarchy: ClusteringHierarchy, front_end: FrontEnd, learning_rate: float, epochs: int, l2: float
) -> LinearClassifier:
    """Zero classifier whose standardiser is fitted on the initial front end's pooled vectors."""
    pooled = pool_dataset(train, hierarchy, front_end)
    classifier = LinearClassifier.zeros(
        train.num_classes, pooled.shape[1], loss="softmax", learning_rate=learning_rate, epochs=epochs, l2=l2
    )
    classifier.feature_mean, classifier.feature_scale = fit_standardizer(pooled)
    return classifier


class EndToEndTrainer:
    """Joint full-batch gradient descent on the front end and the classifier."""

    def __init__(
        self,
        hierarchy: ClusteringHierarchy,
        learning_rate: Optional[float] = None,
        front_end_learning_rate: Optional[float] = None,
        epochs: Optional[int] = None,
        l2: Optional[float] = None,
    ):
        hierarchy.validate()
        self.hierarchy = hierarchy
        self.learning_rate = settings.learning_rate if learning_rate is None else learning_rate
        self.front_end_learning_rate = (
            settings.front_end_learning_rate if front_end_learning_rate is None else front_end_learning_rate
        )
        self.epochs = settings.epochs if epochs is None else epochs
        self.l2 = settings.l2 if l2 is None else l2
        if self.learning_rate < 0 or self.front_end_learning_rate < 0:
            raise InvalidInputError("learning rates must be >= 0")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        self.history: List[float] = []

    def _diverged(self, epoch: int, loss: float, front_end: FrontEnd, classifier: LinearClassifier) -> None:
        raise TrainingDivergenceError(
            f"end-to-end loss became {loss} at epoch {epoch} "
            f"(learning rate {self.learning_rate}, front end learning rate {self.front_end_learning_rate}, "
            f"front end finite: {front_end.is_finite()}, classifier finite: {classifier.is_finite()})"
        )

    def fit(
        self,
        train: Dataset,
        front_end: Optional[FrontEnd] = None,
        classifier: Optional[LinearClassifier] = None,
    ) -> Tuple[FrontEnd, LinearClassifier]:
        _check_dataset(train, self.hierarchy)
        if np.unique(train.labels).size < 2:
            logger.warning("Training data holds a single class; the classifier will be trivial")

        if front_end is None:
            front_end = FrontEnd.identity(train.dim)
        front_end = FrontEnd(weights=front_end.weights.copy(), bias=front_end.bias.copy(), frozen=front_end.frozen)
        if classifier is None:
            classifier = initial_classifier(
                train, self.hierarchy, front_end, self.learning_rate, self.epochs, self.l2
            )
        else:
            classifier = LinearClassifier(
                weights=classifier.weights.copy(),
                bias=classifier.bias.copy(),
                feature_mean=classifier.feature_mean.copy(),
                feature_scale=classifier.feature_scale.copy(),
                loss="softmax",
                learning_rate=self.learning_rate,
                epochs=self.epochs,
                l2=self.l2,
            )

        self.history = []
        for epoch in range(self.epochs + 1):
            if not (front_end.is_finite() and classifier.is_finite()):
                self._diverged(epoch, float("nan"), front_end, classifier)
            try:
                grads = loss_and_gradients(train, self.hierarchy, front_end, classifier)
            except InvalidInputError as exc:
                raise TrainingDivergenceError(f"end-to-end training broke down at epoch {epoch}: {exc}") from exc
            self.history.append(grads.loss)
            if not np.isfinite(grads.loss):
                self._diverged(epoch, grads.loss, front_end, classifier)
            if epoch == self.epochs:
                break

            classifier.weights = classifier.weights - self.learning_rate * grads.classifier_weights
            classifier.bias = classifier.bias - self.learning_rate * grads.classifier_bias
            if not front_end.frozen:
                front_end.weights = front_end.weights - self.front_end_learning_rate * grads.front_end_weights
                front_end.bias = front_end.bias - self.front_end_learning_rate * grads.front_end_bias
            if settings.log_every and epoch % settings.log_every == 0:
                logger.info("end-to-end epoch %d: loss %.6f", epoch, grads.loss)
        return front_end, classifier


def end_to_end_train(
    train: Dataset,
    structure,
    hierarchy: ClusteringHierarchy,
    epochs: Optional[int] = None,
    learning_rate: Optional[float] = None,
    front_end_learning_rate: Optional[float] = None,
    l2: Optional[float] = None,
    front_end: Optional[FrontEnd] = None,
) -> Tuple[FrontEnd, LinearClassifier]:
    if hierarchy.structure is not PoolStructure(structure):
        raise InvalidInputError(
            f"hierarchy was recorded for {hierarchy.structure.value}, not {PoolStructure(structure).value}"
        )
    trainer = EndToEndTrainer(hierarchy, learning_rate, front_end_learning_rate, epochs, l2)
    return trainer.fit(train, front_end)


def evaluate(
    test: Dataset,
    hierarchy: ClusteringHierarchy,
    classifier: LinearClassifier,
    front_end: Optional[FrontEnd] = None,
) -> float:
    """Fraction of objects whose argmax class matches the label."""
    _check_dataset(test, hierarchy)
    pooled = pool_dataset(test, hierarchy, front_end)
    if pooled.shape[1] != classifier.weights.shape[1]:
        raise ShapeMismatchError(
            f"classifier expects {classifier.weights.shape[1]} channels, pooled vectors have {pooled.shape[1]}"
        )
    return accuracy(classifier.predict(pooled), test.labels)


# ---------------------------------------------------------------------------
# Gradient check over the whole pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineGradientReport:
    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def max_relative_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def _block_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def pipeline_gradient_check(
    dataset: Dataset,
    hierarchy: ClusteringHierarchy,
    front_end: FrontEnd,
    classifier: LinearClassifier,
    eps: Optional[float] = None,
) -> PipelineGradientReport:
    """Central differences of the full loss for every parameter block."""
    eps = settings.gradcheck_eps if eps is None else eps
    if eps <= 0:
        raise InvalidInputError("eps must be > 0")
    grads = loss_and_gradients(dataset, hierarchy, front_end, classifier)

    blocks = {
        "front_end_weights": (front_end, "weights", grads.front_end_weights),
        "front_end_bias": (front_end, "bias", grads.front_end_bias),
        "classifier_weights": (classifier, "weights", grads.classifier_weights),
        "classifier_bias": (classifier, "bias", grads.classifier_bias),
    }
    report = PipelineGradientReport()
    for name, (owner, attribute, analytic) in blocks.items():
        original = getattr(owner, attribute)
        numeric = np.zeros_like(original)
        for index in np.ndindex(*original.shape):
            probe = original.copy()
            probe[index] += eps
            setattr(owner, attribute, probe)
            plus = pipeline_loss(dataset, hierarchy, front_end, classifier)
            probe[index] -= 2 * eps
            minus = pipeline_loss(dataset, hierarchy, front_end, classifier)
            numeric[index] = (plus - minus) / (2 * eps)
        setattr(owner, attribute, original)
        report.errors[name] = _block_error(analytic, numeric)
    return report


# ---------------------------------------------------------------------------
# Structure comparison
# ---------------------------------------------------------------------------

def compare_structures(
    config: SyntheticConfig,
    structures: Sequence,
    seeds: Sequence[int],
    test_per_class: int,
    modes: Sequence[str] = ("fast",),
    max_depth: Optional[int] = None,
    cfg: Optional[DominantSetConfig] = None,
    learning_rate: Optional[float] = None,
    epochs: Optional[int] = None,
) -> List[StructureSummary]:
    """Held-out accuracy of every (structure, mode) pair over the given seeds."""
    if not seeds:
        raise InvalidInputError("compare needs at least one seed")
    unknown = [mode for mode in modes if mode not in TRAINING_MODES]
    if unknown:
        raise InvalidInputError(f"unknown training modes {unknown}, expected {TRAINING_MODES}")
    structures = [PoolStructure(s) for s in structures]

    scores: Dict[Tuple[PoolStructure, str], List[float]] = {
        (structure, mode): [] for structure in structures for mode in modes
    }
    for seed in seeds:
        dataset = SyntheticGenerator(config.model_copy(update={"seed": seed})).generate()
        train, test = split_dataset(dataset, test_per_class)
        for structure in structures:
            hierarchy, classifier = fast_train(
                train, structure, max_depth, cfg, learning_rate=learning_rate, epochs=epochs
            )
            for mode in modes:
                if mode == "fast":
                    score = evaluate(test, hierarchy, classifier)
                else:
                    front_end, e2e_classifier = end_to_end_train(
                        train, structure, hierarchy, epochs=epochs, learning_rate=learning_rate
                    )
                    score = evaluate(test, hierarchy, e2e_classifier, front_end)
                scores[(structure, mode)].append(score)
        logger.info("Seed %d done", seed)

    return [
        StructureSummary(
            structure=structure,
            mode=mode,
            mean_accuracy=float(np.mean(values)),
            min_accuracy=float(np.min(values)),
            max_accuracy=float(np.max(values)),
            accuracies=values,
        )
        for (structure, mode), values in scores.items()
    ]


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def model_to_schema(
    mode: str,
    hierarchy: ClusteringHierarchy,
    classifier: LinearClassifier,
    front_end: Optional[FrontEnd] = None,
) -> ModelSchema:
    return ModelSchema(
        mode=mode,
        hierarchy=hierarchy_to_schema(hierarchy),
        classifier=ClassifierSchema(
            weights=classifier.weights.tolist(),
            bias=classifier.bias.tolist(),
            feature_mean=classifier.feature_mean.tolist(),
            feature_scale=classifier.feature_scale.tolist(),
            loss=classifier.loss,
            learning_rate=classifier.learning_rate,
            epochs=classifier.epochs,
            l2=classifier.l2,
        ),
        front_end=None
        if front_end is None
        else FrontEndSchema(weights=front_end.weights.tolist(), bias=front_end.bias.tolist()),
    )


def save_model(
    path,
    mode: str,
    hierarchy: ClusteringHierarchy,
    classifier: LinearClassifier,
    front_end: Optional[FrontEnd] = None,
) -> None:
    write_json(path, model_to_schema(mode, hierarchy, classifier, front_end))


def load_model(path) -> Tuple[str, ClusteringHierarchy, LinearClassifier, Optional[FrontEnd]]:
    document = read_json(path, ModelSchema)
    hierarchy = hierarchy_from_schema(document.hierarchy)
    stored = document.classifier
    try:
        weights = np.array(stored.weights, dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: ragged classifier weights") from exc
    if weights.ndim != 2 or weights.shape[0] != len(stored.bias):
        raise InvalidInputError(f"{path}: classifier weights must be one row per class")
    classifier = LinearClassifier(
        weights=weights,
        bias=np.array(stored.bias, dtype=float),
        feature_mean=np.array(stored.feature_mean, dtype=float),
        feature_scale=np.array(stored.feature_scale, dtype=float),
        loss=stored.loss,
        learning_rate=stored.learning_rate,
        epochs=stored.epochs,
        l2=stored.l2,
    )
    dim = classifier.weights.shape[1]
    if classifier.feature_mean.shape != (dim,) or classifier.feature_scale.shape != (dim,):
        raise InvalidInputError(f"{path}: classifier standardiser does not match {dim} channels")
    if not classifier.is_finite():
        raise InvalidInputError(f"{path}: classifier parameters are not finite")

    front_end = None
    if document.front_end is not None:
        try:
            weights = np.array(document.front_end.weights, dtype=float)
        except ValueError as exc:
            raise InvalidInputError(f"{path}: ragged front end weights") from exc
        bias = np.array(document.front_end.bias, dtype=float)
        if weights.ndim != 2 or bias.shape != (weights.shape[1],):
            raise InvalidInputError(f"{path}: front end weights and bias disagree")
        front_end = FrontEnd(weights=weights, bias=bias)
        if front_end.output_dim != dim:
            raise ShapeMismatchError(f"{path}: front end emits {front_end.output_dim} channels, classifier takes {dim}")
    return document.mode, hierarchy, classifier, front_end
