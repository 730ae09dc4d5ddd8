"""Command line interface.

Exit codes: 0 success, 1 domain failure (bad data, infeasible constraints),
2 usage errors (click's default).  All JSON output is deterministic: sorted
keys, fixed indentation, and every random choice is driven by --seed.
"""

from __future__ import annotations

import functools
import json
import sys

import click

from .bundle import load_bundle, save_bundle
from .errors import ActionLoomError
from .evaluation import (
    make_synthetic_bundle,
    report_csv,
    report_json,
    report_table,
    run_experiment,
)
from .propagation import (
    PropagationConfig,
    extract_segments,
    grid_search_config,
    propagate_over_actions,
)
from .alignment import AlignmentConstraints, align_pair
from .evaluation import category_alignments
from .session import Session
from .svg import render_svg


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def emit(text: str, output: str) -> None:
    if output == "-":
        click.echo(text, nl=False)
    else:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)


def domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ActionLoomError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)
    return wrapper


def parse_frame_pairs(values) -> set:
    pairs = set()
    for raw in values:
        try:
            a, b = raw.split(",")
            pairs.add((int(a), int(b)))
        except ValueError:
            raise click.UsageError(
                f"expected FRAME,FRAME but got {raw!r}")
    return pairs


@click.group()
@click.version_option(package_name="actionloom")
def main():
    """Storyline-based review tooling for temporal action localization."""


@main.command()
@click.option("--bundle", "bundle_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--pair", nargs=2, type=int, required=True,
              metavar="P Q", help="action ids to align")
@click.option("--must-link", multiple=True, metavar="FRAME,FRAME")
@click.option("--cannot-link", multiple=True, metavar="FRAME,FRAME")
@click.option("--output", default="-", show_default=True)
@domain_errors
def align(bundle_path, pair, must_link, cannot_link, output):
    """Align two actions and print the matched frame pairs."""
    bundle = load_bundle(bundle_path)
    p, q = (bundle.action_by_id.get(i) for i in pair)
    if p is None or q is None:
        click.echo(f"error: unknown action in pair {pair}", err=True)
        sys.exit(1)
    constraints = AlignmentConstraints(must_link=parse_frame_pairs(must_link),
                                       cannot_link=parse_frame_pairs(cannot_link))
    result = align_pair(bundle, p, q, constraints)
    emit(dump_json(result.to_json()), output)


@main.command()
@click.option("--bundle", "bundle_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--beta", default=1.0, show_default=True)
@click.option("--tau", default=1.0, show_default=True)
@click.option("--max-iters", default=500, show_default=True)
@click.option("--margin", default=16, show_default=True)
@click.option("--grid", is_flag=True,
              help="pick alpha/beta/tau by grid search against ground truth")
@click.option("--save", "save_path", default=None,
              type=click.Path(file_okay=False),
              help="write a copy of the bundle with updated spans")
@click.option("--output", default="-", show_default=True)
@domain_errors
def propagate(bundle_path, alpha, beta, tau, max_iters, margin, grid,
              save_path, output):
    """Propagate annotations along alignments and decode new boundaries."""
    bundle = load_bundle(bundle_path)
    alignments = category_alignments(bundle)
    results = [r for per_cat in alignments.values() for r in per_cat.values()]
    config = PropagationConfig(alpha=alpha, beta=beta, tau=tau,
                               max_iters=max_iters)
    if grid:
        config = grid_search_config(bundle, results, base=config, margin=margin)
    updated = {a.action_id: a for a in bundle.actions}
    anomalies = []
    iterations = 0
    for cat, per_cat in alignments.items():
        actions = sorted(bundle.actions_of_category(cat),
                         key=lambda a: a.action_id)
        if not actions:
            continue
        lm = propagate_over_actions(bundle, actions, per_cat.values(),
                                    bundle.boundaries, config=config,
                                    margin=margin)
        iterations += len(lm.objective_trace) - 1
        decoded, odd = extract_segments(lm, bundle, actions)
        anomalies.extend(int(e.action_id) for e in odd)
        for act in decoded:
            updated[act.action_id] = act
    changed = [
        {"action": a.action_id, "video": a.video_id,
         "old": [bundle.action_by_id[a.action_id].start,
                 bundle.action_by_id[a.action_id].end],
         "new": [a.start, a.end], "category": a.category}
        for a in (updated[i] for i in sorted(updated))
        if (a.start, a.end) != (bundle.action_by_id[a.action_id].start,
                                bundle.action_by_id[a.action_id].end)
    ]
    report = {
        "config": {"alpha": config.alpha, "beta": config.beta,
                   "tau": config.tau, "max_iters": config.max_iters},
        "changed": changed,
        "anomalies": sorted(anomalies),
        "iterations": iterations,
    }
    if save_path:
        save_bundle(bundle.replace_actions([updated[i] for i in sorted(updated)]),
                    save_path)
    emit(dump_json(report), output)


@main.command()
@click.option("--bundle", "bundle_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--category", type=int, required=True)
@click.option("--output", default="-", show_default=True)
@domain_errors
def cluster(bundle_path, category, output):
    """Build the divisive hierarchy for one category."""
    bundle = load_bundle(bundle_path)
    session = Session(bundle)
    emit(dump_json(session.hierarchy(category).to_json()), output)


@main.command()
@click.option("--bundle", "bundle_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--category", type=int, default=None,
              help="category whose root cluster is drawn")
@click.option("--cluster", "cluster_id", type=int, default=None,
              help="explicit cluster node id (overrides --category)")
@click.option("--depth", default=1, show_default=True)
@click.option("--svg", "svg_path", default=None, type=click.Path(),
              help="also write an SVG rendering here")
@click.option("--output", default="-", show_default=True)
@domain_errors
def layout(bundle_path, category, cluster_id, depth, svg_path, output):
    """Compute a storyline layout for a cluster and emit JSON (and SVG)."""
    if category is None and cluster_id is None:
        raise click.UsageError("need --category or --cluster")
    bundle = load_bundle(bundle_path)
    session = Session(bundle)
    if cluster_id is None:
        cluster_id = session.root_cluster_id(category)
    payload = session.cluster_layout(cluster_id, depth)
    if svg_path:
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(render_svg(payload))
    emit(dump_json(payload), output)


@main.command(name="eval")
@click.option("--bundle", "bundle_path", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="bundle with ground truth; omit to use synthetic data")
@click.option("--categories", default=3, show_default=True)
@click.option("--actions-per-category", default=20, show_default=True)
@click.option("--videos-per-category", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="synthetic data seed")
@click.option("--v", "v_values", default="2,5,10,20", show_default=True,
              help="annotation percentages, comma separated")
@click.option("--seeds", default="0,1,2,3,4", show_default=True,
              help="sampling seeds, comma separated")
@click.option("--csv", "csv_path", default=None, type=click.Path())
@click.option("--output", default="-", show_default=True)
@domain_errors
def eval_command(bundle_path, categories, actions_per_category,
                 videos_per_category, seed, v_values, seeds, csv_path, output):
    """Score baseline vs propagated segments under simulated annotation."""
    if bundle_path:
        bundle = load_bundle(bundle_path)
    else:
        bundle = make_synthetic_bundle(
            n_categories=categories,
            actions_per_category=actions_per_category,
            videos_per_category=videos_per_category, seed=seed)
    try:
        v_list = tuple(float(v) for v in v_values.split(","))
        seed_list = tuple(int(s) for s in seeds.split(","))
    except ValueError:
        raise click.UsageError("--v and --seeds take comma-separated numbers")
    report = run_experiment(bundle, v_values=v_list, seeds=seed_list)
    click.echo(report_table(report), err=True)
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(report_csv(report))
    emit(report_json(report) + "\n", output)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--sessions-dir", default=None, type=click.Path(file_okay=False))
def serve(host, port, sessions_dir):
    """Run the interactive review service."""
    from .service import serve as run_service

    run_service(host=host, port=port, sessions_dir=sessions_dir)


if __name__ == "__main__":
    main()
