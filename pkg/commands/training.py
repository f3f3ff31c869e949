import argparse
import logging
from typing import List

from pydantic import ValidationError

from commands import STRUCTURE_NAMES, add_structure, cli_config, common_options, domset_options
from config import settings
from exceptions import InvalidInputError
from middleware import logging_middleware
from schemas import CompareResponse, EvaluationResponse, SynthResponse, SyntheticConfig, TrainResponse
from services.classifier import LOSSES
from services.pipeline import (
    TRAINING_MODES,
    EndToEndTrainer,
    compare_structures,
    evaluate,
    fast_train,
    load_model,
    save_model,
)
from services.scheme import build_universal_hierarchy, load_hierarchy
from services.synthetic import SyntheticGenerator, split_dataset
from storage import dump_json, emit, load_dataset, save_dataset

logger = logging.getLogger(__name__)


def parse_groups(text: str) -> List[List[int]]:
    """'0,3,6;1,4,7' -> [[0, 3, 6], [1, 4, 7]]"""
    try:
        return [[int(i) for i in group.split(",")] for group in text.split(";")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid view groups {text!r}, expected e.g. '0,1,2;3,4,5'")


def parse_indices(text: str) -> List[int]:
    try:
        return [int(i) for i in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid index list {text!r}, expected e.g. '0,2'")


def synthetic_options(test_per_class: int = 0) -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--classes", type=int, default=4, help="number of classes")
    parent.add_argument("--per-class", type=int, default=40, help="objects per class")
    parent.add_argument("--views", type=int, default=12, help="views per object")
    parent.add_argument("--dim", type=int, default=64, help="feature channels per view")
    parent.add_argument("--sigma", type=float, default=0.05, help="gaussian noise level")
    parent.add_argument("--groups", type=parse_groups, default=None, help="view groups, e.g. '0,1,2;3,4,5'")
    parent.add_argument("--signal-groups", type=parse_indices, default=None, help="groups carrying class signal")
    parent.add_argument("--distractor-level", type=float, default=0.0, help="constant value of distractor groups")
    parent.add_argument(
        "--shared-channels",
        action="store_true",
        help="let every group use all channels instead of its own block",
    )
    parent.add_argument(
        "--test-per-class", type=int, default=test_per_class, help="objects per class held out for testing"
    )
    return parent


def synthetic_config(args: argparse.Namespace) -> SyntheticConfig:
    try:
        return SyntheticConfig(
            num_classes=args.classes,
            objects_per_class=args.per_class,
            n_views=args.views,
            dim=args.dim,
            groups=args.groups,
            noise_sigma=args.sigma,
            seed=args.seed,
            orthogonal_groups=not args.shared_channels,
            signal_groups=args.signal_groups,
            distractor_level=args.distractor_level,
        )
    except ValidationError as exc:
        raise InvalidInputError(f"invalid synthetic dataset options: {exc}") from exc


@logging_middleware
def _cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic multi-view dataset"""
    config = cli_config(args, outputs=[args.output])
    synthetic = synthetic_config(args)
    dataset = SyntheticGenerator(synthetic).generate()

    if args.test_per_class > 0:
        train, test = split_dataset(dataset, args.test_per_class)
        splits = {"train": train, "test": test}
    else:
        splits = {"dataset": dataset}
    manifests = {name: str(save_dataset(part, args.output_dir, name)) for name, part in splits.items()}

    provenance = config.provenance()
    provenance.update(synthetic.model_dump(mode="json"), test_per_class=args.test_per_class)
    emit(dump_json(SynthResponse(manifests=manifests, objects=len(dataset), config=provenance)), args.output)
    return 0


@logging_middleware
def _cmd_train(args: argparse.Namespace) -> int:
    """Train a classifier (fast) or front end and classifier (e2e)"""
    config = cli_config(args, inputs=[args.manifest, args.hierarchy], outputs=[args.model, args.output])
    train = load_dataset(args.manifest, per_class_limit=args.per_class_limit)
    provenance = config.provenance()
    provenance.update(mode=args.mode, loss=args.loss, l2=args.l2)

    if args.mode == "fast":
        if args.hierarchy:
            logger.warning("fast training builds its own hierarchy; ignoring --hierarchy")
        hierarchy, classifier = fast_train(
            train,
            config.structure,
            config.depth,
            config.domset_config(),
            loss=args.loss,
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            l2=args.l2,
        )
        front_end = None
        initial_loss = final_loss = None
    else:
        if args.loss != "softmax":
            raise InvalidInputError("end-to-end training uses the softmax loss")
        if args.hierarchy:
            hierarchy = load_hierarchy(args.hierarchy)
            if hierarchy.structure is not config.structure:
                raise InvalidInputError(
                    f"recorded hierarchy is {hierarchy.structure.value}, --structure is {config.structure.value}"
                )
        else:
            hierarchy = build_universal_hierarchy(
                train.features(), config.structure, config.depth, config.domset_config()
            )
        trainer = EndToEndTrainer(
            hierarchy,
            learning_rate=config.learning_rate,
            front_end_learning_rate=args.front_end_learning_rate,
            epochs=config.epochs,
            l2=args.l2,
        )
        front_end, classifier = trainer.fit(train)
        initial_loss, final_loss = trainer.history[0], trainer.history[-1]
        provenance.update(front_end_learning_rate=args.front_end_learning_rate)

    save_model(args.model, args.mode, hierarchy, classifier, front_end)
    response = TrainResponse(
        mode=args.mode,
        structure=hierarchy.structure,
        train_accuracy=evaluate(train, hierarchy, classifier, front_end),
        initial_loss=initial_loss,
        final_loss=final_loss,
        node_counts=hierarchy.node_counts(),
        config=provenance,
    )
    emit(dump_json(response), args.output)
    return 0


@logging_middleware
def _cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a trained model on a dataset"""
    config = cli_config(args, inputs=[args.manifest, args.model], outputs=[args.output])
    test = load_dataset(args.manifest, per_class_limit=args.per_class_limit)
    mode, hierarchy, classifier, front_end = load_model(args.model)
    provenance = config.provenance()
    provenance.update(mode=mode, structure=hierarchy.structure.value)
    response = EvaluationResponse(
        accuracy=evaluate(test, hierarchy, classifier, front_end),
        objects=len(test),
        config=provenance,
    )
    emit(dump_json(response), args.output)
    return 0


@logging_middleware
def _cmd_compare(args: argparse.Namespace) -> int:
    """Compare pooling structures over seeded synthetic datasets"""
    config = cli_config(args, outputs=[args.output])
    if args.seeds < 1:
        raise InvalidInputError("--seeds must be >= 1")
    if args.test_per_class < 1:
        raise InvalidInputError("compare needs --test-per-class >= 1")
    synthetic = synthetic_config(args)
    seeds = [config.seed + i for i in range(args.seeds)]
    results = compare_structures(
        synthetic,
        args.structures,
        seeds,
        args.test_per_class,
        modes=args.modes,
        max_depth=config.depth,
        cfg=config.domset_config(),
        learning_rate=config.learning_rate,
        epochs=config.epochs,
    )
    provenance = config.provenance()
    provenance.update(synthetic.model_dump(mode="json", exclude={"seed"}), test_per_class=args.test_per_class)
    for summary in results:
        logger.info(
            "%s (%s): mean accuracy %.4f", summary.structure.value, summary.mode, summary.mean_accuracy
        )
    emit(dump_json(CompareResponse(seeds=seeds, results=results, config=provenance)), args.output)
    return 0


def training_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--learning-rate", type=float, default=settings.learning_rate, help="classifier step size")
    parent.add_argument("--epochs", type=int, default=settings.epochs, help="full-batch gradient steps")
    return parent


def register(subparsers) -> None:
    common = common_options()
    domset = domset_options()
    training = training_options()

    p_synth = subparsers.add_parser(
        "synth",
        parents=[common, synthetic_options()],
        help="generate a synthetic multi-view dataset",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_synth.add_argument("--output-dir", required=True, help="directory for feature files and manifests")
    p_synth.set_defaults(handler=_cmd_synth)

    p_train = subparsers.add_parser(
        "train",
        parents=[common, domset, training],
        help="train on a dataset manifest",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_train.add_argument("manifest", help="training dataset manifest JSON")
    p_train.add_argument("--mode", choices=TRAINING_MODES, default="fast", help="fast or end-to-end training")
    add_structure(p_train)
    p_train.add_argument("--model", required=True, help="where to write the trained model JSON")
    p_train.add_argument("--hierarchy", default=None, help="recorded hierarchy for end-to-end training")
    p_train.add_argument("--loss", choices=LOSSES, default="softmax", help="classifier loss (fast mode)")
    p_train.add_argument("--l2", type=float, default=settings.l2, help="weight decay on classifier weights")
    p_train.add_argument(
        "--front-end-learning-rate",
        type=float,
        default=settings.front_end_learning_rate,
        help="front end step size (e2e mode)",
    )
    p_train.add_argument("--per-class-limit", type=int, default=None, help="use only the first k objects per class")
    p_train.set_defaults(handler=_cmd_train)

    p_eval = subparsers.add_parser(
        "eval",
        parents=[common],
        help="evaluate a trained model",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_eval.add_argument("manifest", help="test dataset manifest JSON")
    p_eval.add_argument("--model", required=True, help="trained model JSON")
    p_eval.add_argument("--per-class-limit", type=int, default=None, help="use only the first k objects per class")
    p_eval.set_defaults(handler=_cmd_eval)

    p_compare = subparsers.add_parser(
        "compare",
        parents=[common, domset, training, synthetic_options(test_per_class=10)],
        help="compare pooling structures over seeded synthetic datasets",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_compare.add_argument(
        "--structures",
        nargs="+",
        choices=STRUCTURE_NAMES,
        default=["f-max", "ds-alt-f-max"],
        help="structures to compare",
    )
    p_compare.add_argument("--seeds", type=int, default=20, help="number of consecutive seeds starting at --seed")
    p_compare.add_argument("--modes", nargs="+", choices=TRAINING_MODES, default=["fast"], help="training modes")
    p_compare.set_defaults(handler=_cmd_compare)
