import argparse
import logging

from commands import add_structure, cli_config, common_options, domset_options
from config import settings
from exceptions import NumericalError
from middleware import logging_middleware
from models import PoolStructure
from schemas import (
    CliConfig,
    ClusterResponse,
    GradientCheckResponse,
    HierarchyResponse,
    TraceLevelSchema,
    TraceSchema,
)
from services.affinity import build_affinity, validate_affinity
from services.cluster_pool import forward, gradient_check, hierarchy_from_trace
from services.domset import peel_partition
from services.scheme import build_universal_hierarchy, hierarchy_to_schema, load_hierarchy
from storage import dump_json, emit, format_matrix, load_dataset, read_matrix, write_json

logger = logging.getLogger(__name__)


def trace_to_schema(trace) -> TraceSchema:
    return TraceSchema(
        n_input=trace.n_input,
        dim=trace.dim,
        node_counts=trace.node_counts(),
        levels=[
            TraceLevelSchema(
                n_nodes=level.n_nodes,
                partition=level.partition.to_lists(),
                mode=level.mode,
                argmax=[None if rows is None else rows.tolist() for rows in level.argmax],
            )
            for level in trace.levels
        ],
        final_mode=trace.final_mode,
        final_argmax=None if trace.final_argmax is None else trace.final_argmax.tolist(),
    )


def resolve_structure(config: CliConfig, hierarchy) -> CliConfig:
    """A replayed hierarchy supplies the structure unless one was named."""
    if config.structure is None:
        structure = hierarchy.structure if hierarchy is not None else PoolStructure.DS_ALT_F_MAX
        return config.model_copy(update={"structure": structure})
    return config


@logging_middleware
def _cmd_cluster(args: argparse.Namespace) -> int:
    """Peel a feature or affinity matrix into dominant sets"""
    config = cli_config(args, inputs=[args.input], outputs=[args.output])
    matrix = read_matrix(args.input)
    affinity = validate_affinity(matrix) if args.affinity else build_affinity(matrix)
    partition = peel_partition(affinity, config.domset_config())
    response = ClusterResponse(clusters=partition.to_lists(), config=config.provenance())
    emit(dump_json(response), args.output)
    return 0


@logging_middleware
def _cmd_pool(args: argparse.Namespace) -> int:
    """Run the cluster-pool layer on one object"""
    config = cli_config(args, inputs=[args.input, args.hierarchy], outputs=[args.output, args.trace_output])
    features = read_matrix(args.input)
    hierarchy = load_hierarchy(args.hierarchy) if args.hierarchy else None
    config = resolve_structure(config, hierarchy)
    pooled, trace = forward(
        features,
        config.structure,
        fixed_hierarchy=hierarchy,
        max_depth=config.depth,
        cfg=config.domset_config(),
    )
    emit(format_matrix(pooled), args.output)
    if args.trace_output:
        write_json(args.trace_output, trace_to_schema(trace))
    return 0


@logging_middleware
def _cmd_gradcheck(args: argparse.Namespace) -> int:
    """Compare the analytic backward pass with central differences"""
    config = cli_config(args, inputs=[args.input, args.hierarchy], outputs=[args.output])
    features = read_matrix(args.input)
    if args.hierarchy:
        hierarchy = load_hierarchy(args.hierarchy)
        config = resolve_structure(config, hierarchy)
    else:
        config = resolve_structure(config, None)
        _, trace = forward(features, config.structure, max_depth=config.depth, cfg=config.domset_config())
        hierarchy = hierarchy_from_trace(trace, config.structure, config.depth)

    report = gradient_check(features, config.structure, hierarchy, eps=args.eps, seed=config.seed)
    passed = report.max_relative_error < args.threshold
    provenance = config.provenance()
    provenance.update(eps=args.eps)
    response = GradientCheckResponse(
        structure=config.structure,
        max_relative_error=report.max_relative_error,
        threshold=args.threshold,
        passed=passed,
        tie_channels=report.tie_channels,
        config=provenance,
    )
    emit(dump_json(response), args.output)
    if not passed:
        raise NumericalError(
            f"gradient check failed: relative error {report.max_relative_error:.3e} >= {args.threshold:.3e}"
        )
    return 0


@logging_middleware
def _cmd_hierarchy(args: argparse.Namespace) -> int:
    """Build the universal clustering hierarchy of a dataset"""
    config = cli_config(args, inputs=[args.manifest], outputs=[args.output])
    dataset = load_dataset(args.manifest, per_class_limit=args.per_class_limit)
    hierarchy = build_universal_hierarchy(
        dataset.features(), config.structure, config.depth, config.domset_config()
    )
    if args.output is None:
        emit(dump_json(hierarchy_to_schema(hierarchy)))
        return 0
    write_json(args.output, hierarchy_to_schema(hierarchy))
    response = HierarchyResponse(
        structure=hierarchy.structure,
        node_counts=hierarchy.node_counts(),
        config=config.provenance(),
    )
    emit(dump_json(response))
    return 0


def register(subparsers) -> None:
    common = common_options()
    domset = domset_options()

    p_cluster = subparsers.add_parser(
        "cluster",
        parents=[common, domset],
        help="partition the views of one object into dominant sets",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_cluster.add_argument("input", help="feature matrix file (or affinity matrix with --affinity)")
    p_cluster.add_argument("--affinity", action="store_true", help="input is already an affinity matrix")
    p_cluster.set_defaults(handler=_cmd_cluster)

    p_pool = subparsers.add_parser(
        "pool",
        parents=[common, domset],
        help="pool the views of one object into a single vector",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_pool.add_argument("input", help="feature matrix file")
    add_structure(p_pool, default=None)
    p_pool.add_argument("--hierarchy", default=None, help="replay this hierarchy instead of clustering")
    p_pool.add_argument("--trace-output", default=None, help="write the recurrence trace JSON here")
    p_pool.set_defaults(handler=_cmd_pool)

    p_grad = subparsers.add_parser(
        "gradcheck",
        parents=[common, domset],
        help="check the backward pass against finite differences",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_grad.add_argument("input", help="feature matrix file")
    add_structure(p_grad, default=None)
    p_grad.add_argument("--hierarchy", default=None, help="freeze clustering to this hierarchy")
    p_grad.add_argument("--eps", type=float, default=settings.gradcheck_eps, help="central difference step")
    p_grad.add_argument(
        "--threshold", type=float, default=settings.gradcheck_threshold, help="maximum relative error"
    )
    p_grad.set_defaults(handler=_cmd_gradcheck)

    p_hier = subparsers.add_parser(
        "hierarchy",
        parents=[common, domset],
        help="build a universal clustering hierarchy from a dataset manifest",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_hier.add_argument("manifest", help="dataset manifest JSON")
    add_structure(p_hier)
    p_hier.add_argument("--per-class-limit", type=int, default=None, help="use only the first k objects per class")
    p_hier.set_defaults(handler=_cmd_hierarchy)
