"""Command-line surface for the pipeline.

Machine output (JSONL, JSON, PGM, CSV) goes to files or stdout; progress
and error reports go to stderr. Exit codes: 0 success, 1 validation or
processing failures, 2 usage errors.
"""

from __future__ import annotations

import json
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from . import dataset, geometry, inference, stats
from .dataset import AnnotateConfig, DUMP_MAGIC
from .relevance import DumpValidationError


def _check_epsilon(ctx, param, value):
    if not 0.0 < value <= 1.0:
        raise click.BadParameter(f"must be in (0, 1], got {value}")
    return value


def _check_nonneg(ctx, param, value):
    if value < 0.0:
        raise click.BadParameter(f"must be >= 0, got {value}")
    return value


def _check_positive(ctx, param, value):
    if value is not None and value < 1:
        raise click.BadParameter(f"must be >= 1, got {value}")
    return value


@click.group()
def main():
    """Question-conditioned ROI pipeline: annotate training data, run the
    two-step inference loop, analyze ROI distributions, verify files."""


_annotate_options = [
    click.option("--dumps", "dumps_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Directory of attention dump files."),
    click.option("--regions", "regions_file", required=True, type=click.Path(exists=True, dir_okay=False), help="Region catalog JSON."),
    click.option("--qa", "qa_file", required=True, type=click.Path(exists=True, dir_okay=False), help="QA pairs JSONL."),
    click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False), help="Output records JSONL."),
    click.option("--epsilon", default=0.5, show_default=True, callback=_check_epsilon, help="Region score threshold."),
    click.option("--margin", default=0.05, show_default=True, callback=_check_nonneg, help="ROI extension margin."),
    click.option("--aggregation", default="mean", show_default=True, type=click.Choice(["mean", "max"]), help="Text-row readout aggregation."),
    click.option("--seed", default=42, show_default=True, help="Sampling seed."),
    click.option("--jobs", default=None, type=int, callback=_check_positive, help="Worker processes [default: logical cores]."),
    click.option("--images", "images_dir", default=None, type=click.Path(file_okay=False), help="Base directory recorded in image paths."),
]


def _with_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


def _scan_dumps(dumps_dir: str):
    """Index dump files by (image_id, question_id); unreadable files are
    collected as errors, not fatal."""
    index: dict[tuple[str, str], Path] = {}
    errors: list[str] = []
    for path in sorted(Path(dumps_dir).iterdir()):
        if not path.is_file():
            continue
        try:
            dump = dataset.read_dump(path)
        except (dataset.FormatError, dataset.TruncationError, DumpValidationError) as e:
            errors.append(f"{path}: {e}")
            continue
        index[(dump.image_id, dump.question_id)] = path
    return index, errors


def _annotate_one(task) -> str:
    """Worker: load one dump and produce one serialized record line."""
    dump_path, catalog, qa, config, image_path, provenance_extra = task
    dump = dataset.read_dump(dump_path)
    rec = dataset.annotate(dump, catalog, qa, config, image_path=image_path)
    rec.provenance.update(provenance_extra)
    return dataset.record_to_line(rec)


def _run_annotation(dumps_dir, regions_file, qa_file, out_file, epsilon, margin,
                    aggregation, seed, jobs, images_dir, epochs):
    config = AnnotateConfig(epsilon=epsilon, margin=margin, aggregation=aggregation)
    catalogs = dataset.read_catalogs(regions_file)
    groups = dataset.group_by_image(dataset.read_qa(qa_file))
    index, errors = _scan_dumps(dumps_dir)

    tasks = []
    for epoch in epochs:
        for image_id, pairs in groups.items():
            pick = dataset.sample_index(image_id, len(pairs), epoch, seed)
            qa = pairs[pick]
            dump_path = index.get((image_id, str(pick)))
            if dump_path is None:
                errors.append(
                    f"{image_id}: no dump for sampled question {pick} in {dumps_dir}"
                )
                continue
            if image_id not in catalogs:
                errors.append(f"{image_id}: no region catalog entry")
                continue
            image_path = str(Path(images_dir) / image_id) if images_dir else None
            extra = {"seed": seed, "epoch": epoch}
            tasks.append((dump_path, catalogs[image_id], qa, config, image_path, extra))

    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(tasks) <= 1:
        lines = [_annotate_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lines = list(pool.map(_annotate_one, tasks))

    with open(out_file, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")

    click.echo(f"wrote {len(lines)} records to {out_file}", err=True)
    if errors:
        for msg in errors:
            click.echo(f"error: {msg}", err=True)
        click.echo(f"{len(errors)} error(s), {len(lines)} record(s) written", err=True)
        sys.exit(1)


@main.command()
@_with_options(_annotate_options)
@click.option("--epoch", default=0, show_default=True, help="Sampling epoch.")
def annotate(dumps_dir, regions_file, qa_file, out_file, epsilon, margin, aggregation,
             seed, jobs, images_dir, epoch):
    """Produce one annotated record per image for one sampling epoch."""
    _run_annotation(dumps_dir, regions_file, qa_file, out_file, epsilon, margin,
                    aggregation, seed, jobs, images_dir, [epoch])


@main.command(name="build-dataset")
@_with_options(_annotate_options)
@click.option("--epochs", default=1, show_default=True, callback=_check_positive,
              help="Number of sampling epochs (one record per image each).")
def build_dataset(dumps_dir, regions_file, qa_file, out_file, epsilon, margin,
                  aggregation, seed, jobs, images_dir, epochs):
    """Annotate across several epochs into one training JSONL."""
    _run_annotation(dumps_dir, regions_file, qa_file, out_file, epsilon, margin,
                    aggregation, seed, jobs, images_dir, list(range(epochs)))


@main.command()
@click.option("--image", "image_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--question", required=True)
@click.option("--oracle", "oracle_cmd", default=None, help="Command line of a stdio oracle process.")
@click.option("--mock", "mock_file", default=None, type=click.Path(exists=True, dir_okay=False), help="JSON file with a list of scripted responses.")
@click.option("--resolution", default=336, show_default=True, callback=_check_positive)
@click.option("--roi-out", "roi_out", default=None, type=click.Path(dir_okay=False), help="Where to write the cropped region image.")
@click.option("--timeout", default=30.0, show_default=True, help="Oracle response timeout (stdio only).")
def infer(image_file, question, oracle_cmd, mock_file, resolution, roi_out, timeout):
    """Run the two-step locate/answer interaction; transcript JSON to stdout.

    A locate answer that yields no usable box falls back to the full image;
    that is flagged in the transcript, not an error.
    """
    if (oracle_cmd is None) == (mock_file is None):
        raise click.UsageError("exactly one of --oracle or --mock is required")
    config = inference.InferConfig(resolution=resolution, roi_path=roi_out)
    if mock_file is not None:
        script = json.loads(Path(mock_file).read_text("utf-8"))
        if not isinstance(script, list) or not all(isinstance(s, str) for s in script):
            raise click.UsageError(f"{mock_file} must hold a JSON array of strings")
        oracle = inference.MockOracle(script)
        close = lambda: None
    else:
        oracle = inference.StdioOracle(shlex.split(oracle_cmd), timeout=timeout)
        close = oracle.close
    try:
        transcript = inference.run_two_step(oracle, image_file, question, config)
    except inference.OracleError as e:
        click.echo(f"oracle failure ({e.kind}): {e}", err=True)
        click.echo(json.dumps({"partial": e.partial}, indent=2), err=True)
        sys.exit(1)
    finally:
        close()
    click.echo(json.dumps(transcript.to_jsonable(), indent=2))


@main.command(name="stats")
@click.option("--records", "records_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--grid", default=stats.DEFAULT_GRID, show_default=True, callback=_check_positive, help="Heatmap grid size.")
@click.option("--heatmap", "heatmap_file", default=None, type=click.Path(dir_okay=False), help="Write normalized heatmap PGM here.")
@click.option("--csv", "csv_file", default=None, type=click.Path(dir_okay=False), help="Write raw count CSV here.")
def stats_cmd(records_file, grid, heatmap_file, csv_file):
    """ROI area statistics (JSON to stdout) and optional coverage heatmap."""
    try:
        records = dataset.read_records(records_file)
    except dataset.ParseError as e:
        click.echo(f"error: {records_file}: {e}", err=True)
        sys.exit(1)
    if not records:
        click.echo("error: no records", err=True)
        sys.exit(1)
    if heatmap_file or csv_file:
        heatmap = stats.aggregate_heatmap(records, grid)
        if heatmap_file:
            stats.heatmap_to_pgm(heatmap, heatmap_file)
            click.echo(f"wrote heatmap to {heatmap_file}", err=True)
        if csv_file:
            stats.heatmap_to_csv(heatmap, csv_file)
            click.echo(f"wrote counts to {csv_file}", err=True)
    click.echo(json.dumps(stats.area_stats(records)))


@main.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def verify(files):
    """Validate dump files and record JSONL files; exit 1 on any failure."""
    failures = 0
    for file in files:
        path = Path(file)
        try:
            with open(path, "rb") as fh:
                is_dump = fh.read(8) == DUMP_MAGIC
            if is_dump:
                dump = dataset.read_dump(path)
                click.echo(
                    f"OK {path}: dump image={dump.image_id} question={dump.question_id} "
                    f"layers={dump.n_layers} heads={dump.n_heads} "
                    f"N={dump.seq_len} checksum={dump.checksum[:12]}",
                    err=True,
                )
            else:
                records = dataset.read_records(path)
                click.echo(f"OK {path}: {len(records)} record(s)", err=True)
        except (dataset.FormatError, dataset.TruncationError, dataset.ParseError,
                DumpValidationError, OSError) as e:
            click.echo(f"FAIL {path}: {e}", err=True)
            failures += 1
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
