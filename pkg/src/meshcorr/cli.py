"""Command-line frontend.

Exit codes: 0 success, 2 argument errors, 3 data errors, 4 numeric
errors. Diagnostics go to stderr; structured logs (JSON lines) are
available behind --log-json.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import evalbench, funcmap, pipeline, spectral, transfer
from .errors import ArgumentError, DataError, MeshCorrError, NumericError
from .features import FeatureBundle, load_features, write_features
from .funcmap import FmapWeights
from .mesh import normalize_mesh, vertex_areas
from .meshio import load_mesh, save_mesh

EXIT_ARGUMENT = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ArgumentError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ARGUMENT)
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except NumericError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except MeshCorrError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
    return wrapper


def _log(log_json, **payload):
    if log_json:
        click.echo(json.dumps(payload, sort_keys=True))


@click.group()
def main():
    """Dense vertex correspondence between textured triangle meshes."""


def _solver_options(fn):
    for opt in reversed([
        click.option("-k", "--basis-size", type=int, default=10,
                     show_default=True, help="spectral basis size"),
        click.option("--alpha", type=float, default=funcmap.DEFAULT_ALPHA,
                     show_default=True, help="isometry weight"),
        click.option("--beta", type=float, default=funcmap.DEFAULT_BETA,
                     show_default=True, help="pointwise commutativity weight"),
        click.option("--w-entropy", type=float,
                     default=funcmap.DEFAULT_W_ENTROPY, show_default=True),
        click.option("--w-sum", type=float, default=funcmap.DEFAULT_W_SUM,
                     show_default=True),
        click.option("--descriptors", default="hks,wks,posenc",
                     show_default=True,
                     help="comma-separated stack used when no feature "
                          "files are given"),
        click.option("--recovery", type=click.Choice(["argmax", "nearest"]),
                     default="argmax", show_default=True),
        click.option("--max-iter", type=int, default=500, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--log-json", is_flag=True),
    ]):
        fn = opt(fn)
    return fn


def _make_config(basis_size, alpha, beta, w_entropy, w_sum, descriptors,
                 recovery, max_iter, seed, preprocess=True):
    weights = FmapWeights(alpha, beta, w_entropy, w_sum)
    names = tuple(d.strip() for d in descriptors.split(",") if d.strip())
    return pipeline.RunConfig(k=basis_size, weights=weights,
                              descriptors=names, recovery=recovery,
                              max_iter=max_iter, seed=seed,
                              preprocess=preprocess)


@main.command("match")
@click.option("--source", required=True, type=click.Path())
@click.option("--target", required=True, type=click.Path())
@click.option("--source-features", type=click.Path(), default=None)
@click.option("--target-features", type=click.Path(), default=None)
@click.option("-o", "--output", required=True, type=click.Path())
@_solver_options
@_handle_errors
def cmd_match(source, target, source_features, target_features, output,
              basis_size, alpha, beta, w_entropy, w_sum, descriptors,
              recovery, max_iter, seed, log_json):
    """Compute a dense map between two meshes and write it as JSON."""
    external = source_features is not None or target_features is not None
    config = _make_config(basis_size, alpha, beta, w_entropy, w_sum,
                          descriptors, recovery, max_iter, seed,
                          preprocess=not external)
    src = load_mesh(source)
    tgt = load_mesh(target)
    sf = tf = None
    if external:
        sf = load_features(source_features, src.n_vertices)
        tf = load_features(target_features, tgt.n_vertices)
    start = time.perf_counter()
    result = pipeline.match_meshes(src, tgt, config, sf, tf)
    wall = time.perf_counter() - start
    funcmap.save_map(output, result.fmap, result.pmap, config.weights)
    click.echo(f"objective {result.fmap.final_objective:.6g}  "
               f"iterations {result.fmap.iterations}  wall {wall:.2f}s")
    _log(log_json, command="match", objective=result.fmap.final_objective,
         iterations=result.fmap.iterations, wall_s=wall, output=str(output))


@main.command("eval")
@click.option("--map", "map_path", required=True, type=click.Path())
@click.option("--source-instance", required=True, type=click.Path(),
              help="dataset instance directory of the source mesh")
@click.option("--target-instance", required=True, type=click.Path())
@click.option("--max-threshold", type=float,
              default=evalbench.DEFAULT_MAX_THRESHOLD, show_default=True)
@click.option("--log-json", is_flag=True)
@_handle_errors
def cmd_eval(map_path, source_instance, target_instance, max_threshold,
             log_json):
    """Evaluate a stored map against ground-truth semantic groups."""
    src = evalbench._load_instance(Path(source_instance),
                                   Path(source_instance).parent.name, "test")
    tgt = evalbench._load_instance(Path(target_instance),
                                   Path(target_instance).parent.name, "test")
    _, pmap, _ = funcmap.load_map(map_path)
    errors = evalbench.geodesic_error(pmap, src.groups, tgt.groups, src.geo,
                                      src.areas)
    included = errors[~np.isnan(errors)]
    _, area = evalbench.auc(included, max_threshold)
    click.echo(f"err {included.mean():.4f}  auc {area:.4f}  "
               f"coverage {len(included) / len(errors):.3f}")
    _log(log_json, command="eval", err=float(included.mean()),
         auc=area, coverage=len(included) / len(errors))


@main.command("benchmark")
@click.option("--dataset", "dataset_root", required=True, type=click.Path())
@click.option("--category", default=None,
              help="restrict to one category (default: all)")
@click.option("--split", default="test", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--csv", "csv_path", required=True, type=click.Path())
@click.option("--json", "json_path", required=True, type=click.Path())
@click.option("--max-threshold", type=float,
              default=evalbench.DEFAULT_MAX_THRESHOLD, show_default=True)
@_solver_options
@_handle_errors
def cmd_benchmark(dataset_root, category, split, jobs, csv_path, json_path,
                  max_threshold, basis_size, alpha, beta, w_entropy, w_sum,
                  descriptors, recovery, max_iter, seed, log_json):
    """Run the all-pairs protocol over dataset categories."""
    config = _make_config(basis_size, alpha, beta, w_entropy, w_sum,
                          descriptors, recovery, max_iter, seed,
                          preprocess=False)

    def matcher(src_inst, tgt_inst):
        # dataset vertex order carries the annotation; only rescale
        s = normalize_mesh(src_inst.remeshed)
        t = normalize_mesh(tgt_inst.remeshed)
        return pipeline.match_meshes(s, t, config).pmap

    instances = evalbench.load_dataset(dataset_root, split=split)
    categories = sorted({i.category for i in instances})
    if category is not None:
        if category not in categories:
            raise ArgumentError(f"category '{category}' not in dataset "
                                f"(found {categories})")
        categories = [category]
    all_results = []
    aggregates = {}
    for cat in categories:
        results, agg = evalbench.benchmark_category(
            instances, cat, matcher, jobs=jobs, max_threshold=max_threshold)
        all_results.extend(results)
        aggregates[cat] = agg
        _log(log_json, command="benchmark", category=cat, **{
            k: v for k, v in agg.items() if k != "category"})
        click.echo(f"{cat}: pairs {agg['pairs']}  err {agg['err_mean']:.4f}  "
                   f"auc {agg['auc_mean']:.4f}")
    evalbench.write_results_csv(csv_path, all_results)
    evalbench.write_aggregates_json(json_path, aggregates)


@main.command("transfer-color")
@click.option("--source-textured", required=True, type=click.Path())
@click.option("--source", required=True, type=click.Path(),
              help="simplified source mesh the map was solved on")
@click.option("--target", required=True, type=click.Path())
@click.option("--map", "map_path", required=True, type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path())
@_handle_errors
def cmd_transfer_color(source_textured, source, target, map_path, output):
    """Transfer vertex colors through a stored point map."""
    textured = load_mesh(source_textured)
    src = load_mesh(source)
    tgt = load_mesh(target)
    _, pmap, _ = funcmap.load_map(map_path)
    colored = transfer.transfer_colors(textured, src, tgt, pmap)
    save_mesh(output, colored)
    click.echo(f"wrote {output}")


@main.command("transfer-keypoints")
@click.option("--source", required=True, type=click.Path(),
              help="template mesh carrying the keypoints")
@click.option("--target", required=True, type=click.Path())
@click.option("--keypoints", required=True, type=click.Path())
@click.option("--map", "map_path", required=True, type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("-k", "--basis-size", type=int, default=10, show_default=True)
@_handle_errors
def cmd_transfer_keypoints(source, target, keypoints, map_path, output,
                           basis_size):
    """Transfer template keypoints through a stored map."""
    src = load_mesh(source)
    tgt = load_mesh(target)
    kps = transfer.load_keypoints(keypoints, src)
    fmap, pmap, _ = funcmap.load_map(map_path)
    config = pipeline.RunConfig(k=basis_size, preprocess=False)
    basis_s = pipeline.prepare_mesh(src, config).basis.truncate(basis_size)
    basis_t = pipeline.prepare_mesh(tgt, config).basis.truncate(basis_size)
    results = transfer.transfer_keypoints(kps, pmap, basis_s, basis_t, fmap.C)
    transfer.save_transferred_keypoints(output, results)
    click.echo(f"wrote {output}")


@main.command("descriptors")
@click.option("--mesh", "mesh_path", required=True, type=click.Path())
@click.option("--hks", "hks_times", type=int, default=None,
              help="write an HKS stack with this many time samples")
@click.option("--wks", "wks_energies", type=int, default=None)
@click.option("--posenc", "posenc_bands", type=int, default=None)
@click.option("-k", "--basis-size", type=int,
              default=spectral.DEFAULT_DESC_K, show_default=True)
@click.option("--no-preprocess", is_flag=True,
              help="skip cleanup/normalization (keeps vertex order)")
@click.option("-o", "--output", required=True, type=click.Path())
@_handle_errors
def cmd_descriptors(mesh_path, hks_times, wks_energies, posenc_bands,
                    basis_size, no_preprocess, output):
    """Compute a descriptor stack and write it as a DMF feature file."""
    chosen = []
    if hks_times is not None:
        chosen.append("hks")
    if wks_energies is not None:
        chosen.append("wks")
    if posenc_bands is not None:
        chosen.append("posenc")
    if not chosen:
        raise ArgumentError("choose at least one of --hks/--wks/--posenc")
    config = pipeline.RunConfig(
        descriptors=tuple(chosen),
        descriptor_k=basis_size,
        hks_times=hks_times or pipeline.DEFAULT_HKS_TIMES,
        wks_energies=wks_energies or pipeline.DEFAULT_WKS_ENERGIES,
        posenc_bands=posenc_bands if posenc_bands is not None
        else pipeline.DEFAULT_POSENC_BANDS,
        preprocess=not no_preprocess)
    mesh = load_mesh(mesh_path)
    prep = pipeline.prepare_mesh(mesh, config)
    stack = pipeline.descriptor_stack(prep, config)
    write_features(output, stack)
    click.echo(f"wrote {output} ({stack.n}x{stack.dim})")


if __name__ == "__main__":
    main()
