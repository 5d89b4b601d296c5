"""Command-line orchestration of the full pipeline.

Stages: ingest -> preprocess -> train -> score -> metrics -> analyze
(-> agreement). Every stage writes its outputs before the next begins,
records a content-hash stamp, and is a no-op when rerun on unchanged
inputs. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click

from . import __version__
from .analysis import (VARIANTS, model_agreement_experiment, read_ratings_csv,
                       run_hypothesis_suite)
from .archive import load_archive, save_archive
from .errors import IssueSurprisalError
from .ingest import DEFAULT_RATE_LIMIT, GitHubClient, filter_repositories
from .metrics import (compute_all_metrics, read_label_map_csv,
                      read_metrics_csv, suggest_label_map, write_label_map_csv,
                      write_metrics_csv)
from .ngram import SMOOTHING_MKN, KneserNeyModel, SurprisalScore, train
from .records import Dataset, parse_timestamp
from .report import build_report, write_report_json, write_report_md
from .textprep import PreprocessConfig, TokenSequence, preprocess_corpus

log = logging.getLogger(__name__)

MODES = ("conditional_ngram", "literal_unigram")

SCORES_FIELDS = ["repo", "number", "kind", "cross_entropy_bits_per_token",
                 "token_count", "mode"]


@dataclass
class PipelineConfig:
    archive_path: Path
    output_dir: Path
    order: int = 3
    mode: str = "conditional_ngram"
    alpha: float = 0.05
    rate_limit: int = DEFAULT_RATE_LIMIT
    min_issues: int = 1000
    analysis_time: Optional[str] = None
    remove_stopwords: bool = True
    apply_stemming: bool = True
    lowercase: bool = True

    def __post_init__(self):
        if not 1 <= self.order <= 10:
            raise click.UsageError(f"order must be in 1..10, got {self.order}")
        if not 0.0 < self.alpha < 1.0:
            raise click.UsageError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.mode not in MODES:
            raise click.UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.rate_limit < 1:
            raise click.UsageError("rate-limit must be positive")
        self.archive_path = Path(self.archive_path)
        self.output_dir = Path(self.output_dir)

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(remove_stopwords=self.remove_stopwords,
                                apply_stemming=self.apply_stemming,
                                lowercase=self.lowercase)

    def resolved_dict(self) -> Dict:
        return {
            "archive_path": str(self.archive_path),
            "output_dir": str(self.output_dir),
            "order": self.order,
            "mode": self.mode,
            "alpha": self.alpha,
            "rate_limit": self.rate_limit,
            "min_issues": self.min_issues,
            "analysis_time": self.analysis_time or "",
            "remove_stopwords": self.remove_stopwords,
            "apply_stemming": self.apply_stemming,
            "lowercase": self.lowercase,
        }


CONFIG_KEYS = ("archive_path", "output_dir", "order", "mode", "alpha",
               "rate_limit", "min_issues", "analysis_time",
               "remove_stopwords", "apply_stemming", "lowercase")


def _load_config(config_path: Optional[str], overrides: Dict) -> PipelineConfig:
    values: Dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise click.UsageError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise click.UsageError(f"malformed config file {path}: {exc}")
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise click.UsageError(f"unknown config keys: {', '.join(unknown)}")
        values.update(data)
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if "archive_path" not in values:
        raise click.UsageError("an archive path is required (--archive or config file)")
    values.setdefault("output_dir", str(Path(values["archive_path"]).parent / "output"))
    return PipelineConfig(**values)


def _write_resolved_config(config: PipelineConfig) -> None:
    lines = []
    for key, value in config.resolved_dict().items():
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, (int, float)):
            rendered = repr(value)
        else:
            rendered = json.dumps(value)
        lines.append(f"{key} = {rendered}")
    (config.output_dir / "resolved_config.toml").write_text(
        "\n".join(lines) + "\n", encoding="utf-8")


# -- idempotence stamps ----------------------------------------------------

def _hash_paths(paths: Sequence[Path], extra: str = "") -> str:
    digest = hashlib.sha256()
    digest.update(extra.encode("utf-8"))
    for path in sorted(Path(p) for p in paths):
        digest.update(str(path.name).encode("utf-8"))
        if path.is_dir():
            for child in sorted(path.iterdir()):
                digest.update(child.name.encode("utf-8"))
                digest.update(child.read_bytes())
        elif path.exists():
            digest.update(path.read_bytes())
    return digest.hexdigest()


def _stage_is_current(config: PipelineConfig, stage: str, input_hash: str,
                      outputs: Sequence[Path]) -> bool:
    stamp = config.output_dir / f"{stage}.stamp"
    if not stamp.exists() or not all(Path(p).exists() for p in outputs):
        return False
    try:
        recorded = json.loads(stamp.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    return recorded.get("input_hash") == input_hash


def _write_stamp(config: PipelineConfig, stage: str, input_hash: str,
                 outputs: Sequence[Path]) -> None:
    stamp = {"input_hash": input_hash, "outputs": sorted(str(p) for p in outputs)}
    (config.output_dir / f"{stage}.stamp").write_text(
        json.dumps(stamp, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- stage implementations -------------------------------------------------

def _prepare(config: PipelineConfig) -> None:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(config)


def cmd_ingest(config: PipelineConfig, token: str, repo_count: int) -> None:
    """Mine repositories, issues, and releases into the archive directory."""
    _prepare(config)
    client = GitHubClient(token=token, rate_limit=config.rate_limit)
    repos = filter_repositories(client.fetch_top_repositories(repo_count),
                                min_issues=config.min_issues)
    issues: List = []
    releases: List = []
    for repo in repos:
        issues.extend(client.fetch_issues(repo))
        releases.extend(client.fetch_releases(repo))
    analysis_time = (parse_timestamp(config.analysis_time)
                     if config.analysis_time else None)
    from datetime import datetime, timezone
    dataset = Dataset(repositories=tuple(repos), issues=tuple(issues),
                      releases=tuple(releases),
                      analysis_time=analysis_time or datetime.now(timezone.utc))
    save_archive(dataset, config.archive_path)
    click.echo(f"archived {len(issues)} issues from {len(repos)} repositories "
               f"to {config.archive_path}")


TOKENS_FILE = "tokens.txt"
CORPUS_STATS_FILE = "corpus_stats.json"
MODEL_FILE = "model.tsv"
SCORES_FILE = "scores.csv"
METRICS_FILE = "metrics.csv"
LABEL_MAP_FILE = "label_map.csv"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"
AGREEMENT_JSON = "agreement.json"
AGREEMENT_MD = "agreement.md"


def _read_tokens(path: Path) -> List[TokenSequence]:
    corpus = []
    fingerprint = ""
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            if line.startswith("# config_fingerprint"):
                fingerprint = line.split("\t")[-1]
            continue
        repo, number, tokens = line.split("\t", 2)
        corpus.append(TokenSequence(tokens=tuple(tokens.split(" ")),
                                    source=(repo, int(number)),
                                    config_fingerprint=fingerprint))
    return corpus


def cmd_preprocess(config: PipelineConfig) -> Path:
    """Turn every issue title+body into a token sequence dump."""
    _prepare(config)
    out = config.output_dir / TOKENS_FILE
    stats_path = config.output_dir / CORPUS_STATS_FILE
    pp = config.preprocess_config()
    input_hash = _hash_paths([config.archive_path], extra=pp.fingerprint())
    if _stage_is_current(config, "preprocess", input_hash, [out, stats_path]):
        click.echo("preprocess: up to date")
        return out
    dataset = load_archive(config.archive_path)
    corpus = preprocess_corpus(dataset.issues, pp)
    lines = [f"# config_fingerprint\t{pp.fingerprint()}"]
    for seq in corpus:
        lines.append(f"{seq.source[0]}\t{seq.source[1]}\t{' '.join(seq.tokens)}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    stats = {
        "documents": len(corpus),
        "skipped_empty": len(dataset.issues) - len(corpus),
        "total_tokens": sum(len(s.tokens) for s in corpus),
        "vocabulary_size": len({t for s in corpus for t in s.tokens}),
    }
    stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    _write_stamp(config, "preprocess", input_hash, [out, stats_path])
    click.echo(f"preprocess: {stats['documents']} documents, "
               f"{stats['total_tokens']} tokens")
    return out


def cmd_train(config: PipelineConfig) -> Path:
    """Train the Kneser-Ney model on the token dump."""
    _prepare(config)
    tokens_path = config.output_dir / TOKENS_FILE
    if not tokens_path.exists():
        cmd_preprocess(config)
    out = config.output_dir / MODEL_FILE
    input_hash = _hash_paths([tokens_path], extra=f"order={config.order}")
    if _stage_is_current(config, "train", input_hash, [out]):
        click.echo("train: up to date")
        return out
    corpus = _read_tokens(tokens_path)
    fingerprint = corpus[0].config_fingerprint if corpus else ""
    model = train(corpus, config.order, smoothing=SMOOTHING_MKN,
                  config_fingerprint=fingerprint)
    model.save_tsv(out)
    _write_stamp(config, "train", input_hash, [out])
    click.echo(f"train: order-{config.order} model over "
               f"{len(model.vocabulary)} word types")
    return out


def _write_scores_csv(scores: Sequence[SurprisalScore], path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCORES_FIELDS)
        writer.writeheader()
        for s in scores:
            writer.writerow({
                "repo": s.repo, "number": s.number, "kind": s.kind,
                "cross_entropy_bits_per_token": f"{s.cross_entropy_bits_per_token:.10f}",
                "token_count": s.token_count, "mode": s.mode,
            })


def _read_scores_csv(path: Path) -> List[SurprisalScore]:
    out = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(SurprisalScore(
                repo=rec["repo"], number=int(rec["number"]), kind=rec["kind"],
                cross_entropy_bits_per_token=float(rec["cross_entropy_bits_per_token"]),
                token_count=int(rec["token_count"]), mode=rec["mode"]))
    return out


def cmd_score(config: PipelineConfig) -> Path:
    """Score every document's surprisal under the trained model."""
    _prepare(config)
    model_path = config.output_dir / MODEL_FILE
    tokens_path = config.output_dir / TOKENS_FILE
    if not model_path.exists():
        cmd_train(config)
    out = config.output_dir / SCORES_FILE
    input_hash = _hash_paths([model_path, tokens_path], extra=config.mode)
    if _stage_is_current(config, "score", input_hash, [out]):
        click.echo("score: up to date")
        return out
    model = KneserNeyModel.load_tsv(model_path)
    corpus = _read_tokens(tokens_path)
    dataset = load_archive(config.archive_path)
    kinds = {issue.source: issue.kind for issue in dataset.issues}
    scores = model.score_corpus(corpus, mode=config.mode, kinds=kinds)
    _write_scores_csv(scores, out)
    _write_stamp(config, "score", input_hash, [out])
    click.echo(f"score: {len(scores)} documents")
    return out


def cmd_metrics(config: PipelineConfig, label_map_path: Optional[str]) -> Path:
    """Extract the per-issue response variables."""
    _prepare(config)
    out = config.output_dir / METRICS_FILE
    resolved_map = config.output_dir / LABEL_MAP_FILE
    inputs = [config.archive_path] + ([Path(label_map_path)] if label_map_path else [])
    input_hash = _hash_paths(inputs)
    if _stage_is_current(config, "metrics", input_hash, [out, resolved_map]):
        click.echo("metrics: up to date")
        return out
    dataset = load_archive(config.archive_path)
    if label_map_path:
        label_map = read_label_map_csv(label_map_path)
        classifications = None
    else:
        # No human classification supplied: draft one heuristically and
        # emit it for review.
        all_labels = sorted({l for issue in dataset.issues for l in issue.labels})
        classifications = suggest_label_map(all_labels)
        label_map = {c.raw_label: c.verdict for c in classifications}
    if classifications is not None:
        write_label_map_csv(classifications, resolved_map)
    else:
        rows = sorted(label_map.items())
        with resolved_map.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["raw_label", "verdict"])
            writer.writerows(rows)
    analysis_time = (parse_timestamp(config.analysis_time)
                     if config.analysis_time else None)
    rows = compute_all_metrics(dataset, label_map, analysis_time)
    write_metrics_csv(rows, out)
    _write_stamp(config, "metrics", input_hash, [out, resolved_map])
    click.echo(f"metrics: {len(rows)} rows")
    return out


def cmd_analyze(config: PipelineConfig) -> Tuple[Path, Path]:
    """Run the hypothesis suite and emit report.json / report.md."""
    _prepare(config)
    scores_path = config.output_dir / SCORES_FILE
    metrics_path = config.output_dir / METRICS_FILE
    if not scores_path.exists() or not metrics_path.exists():
        raise click.UsageError("analyze needs scores.csv and metrics.csv; "
                               "run the score and metrics stages first")
    out_json = config.output_dir / REPORT_JSON
    out_md = config.output_dir / REPORT_MD
    input_hash = _hash_paths([scores_path, metrics_path],
                             extra=f"alpha={config.alpha}")
    if _stage_is_current(config, "analyze", input_hash, [out_json, out_md]):
        click.echo("analyze: up to date")
        return out_json, out_md
    scores = _read_scores_csv(scores_path)
    metrics_rows = read_metrics_csv(metrics_path)
    outcomes = run_hypothesis_suite(scores, metrics_rows, alpha=config.alpha)
    report = build_report(outcomes, scores, metrics_rows, config.alpha)
    write_report_json(report, out_json)
    write_report_md(report, out_md)
    _write_stamp(config, "analyze", input_hash, [out_json, out_md])
    rejected = sum(1 for o in outcomes if o.decision == "reject_null")
    click.echo(f"analyze: {len(outcomes)} hypotheses, {rejected} null rejections")
    return out_json, out_md


def cmd_agreement(config: PipelineConfig, ratings_paths: Sequence[str],
                  repo: str, orders: Sequence[int] = tuple(range(1, 11))) -> Path:
    """Run the model-agreement experiment grid."""
    _prepare(config)
    tokens_path = config.output_dir / TOKENS_FILE
    if not tokens_path.exists():
        cmd_preprocess(config)
    out_json = config.output_dir / AGREEMENT_JSON
    out_md = config.output_dir / AGREEMENT_MD
    input_hash = _hash_paths([tokens_path] + [Path(p) for p in ratings_paths],
                             extra=f"{repo}|{','.join(map(str, orders))}")
    if _stage_is_current(config, "agreement", input_hash, [out_json, out_md]):
        click.echo("agreement: up to date")
        return out_json
    ratings = []
    for path in ratings_paths:
        ratings.extend(read_ratings_csv(path))
    corpus = _read_tokens(tokens_path)
    grid = model_agreement_experiment(ratings, corpus, repo,
                                      orders=orders, variants=VARIANTS)
    report = build_report([], [], [], config.alpha, grid=grid)
    write_report_json(report, out_json)
    write_report_md(report, out_md)
    _write_stamp(config, "agreement", input_hash, [out_json, out_md])
    click.echo(f"agreement: kappa {grid.inter_rater_kappa:.4f}, "
               f"{len(grid.cells)} grid cells")
    return out_json


def cmd_run_all(config: PipelineConfig, label_map_path: Optional[str],
                ratings_paths: Sequence[str], repo: Optional[str]) -> None:
    """preprocess -> train -> score -> metrics -> analyze [-> agreement]."""
    cmd_preprocess(config)
    cmd_train(config)
    cmd_score(config)
    cmd_metrics(config, label_map_path)
    cmd_analyze(config)
    if ratings_paths:
        if not repo:
            raise click.UsageError("--repo is required when rating files are given")
        cmd_agreement(config, ratings_paths, repo)


# -- click wiring ----------------------------------------------------------

_GLOBAL_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="TOML config file."),
    click.option("--archive", "archive_path", type=click.Path(), default=None,
                 help="Archive directory."),
    click.option("--output-dir", type=click.Path(), default=None,
                 help="Directory for stage outputs."),
    click.option("--order", type=int, default=None, help="N-gram order (1..10)."),
    click.option("--mode", type=click.Choice(MODES), default=None,
                 help="Surprisal mode."),
    click.option("--alpha", type=float, default=None, help="Significance level."),
    click.option("--rate-limit", type=int, default=None, help="API calls per hour."),
]


def _with_global_options(fn):
    for option in reversed(_GLOBAL_OPTIONS):
        fn = option(fn)
    return fn


def _config_from(kwargs) -> PipelineConfig:
    overrides = {
        "archive_path": kwargs.pop("archive_path"),
        "output_dir": kwargs.pop("output_dir"),
        "order": kwargs.pop("order"),
        "mode": kwargs.pop("mode"),
        "alpha": kwargs.pop("alpha"),
        "rate_limit": kwargs.pop("rate_limit"),
    }
    return _load_config(kwargs.pop("config_path"), overrides)


def _run(fn):
    try:
        fn()
    except click.ClickException:
        raise
    except (IssueSurprisalError, OSError) as exc:
        raise click.ClickException(str(exc))


@click.group()
@click.version_option(version=__version__)
def main():
    """Surprisal analysis of software issue reports."""
    logging.basicConfig(level=os.environ.get("LOG_LEVEL", "WARNING"))


@main.command("ingest")
@_with_global_options
@click.option("--repo-count", type=int, default=5000, show_default=True,
              help="How many top-starred repositories to mine.")
@click.option("--token", envvar="GITHUB_TOKEN", default=None,
              help="API token (or set GITHUB_TOKEN).")
def ingest_command(repo_count, token, **kwargs):
    """Mine repositories, issues, and releases into an archive."""
    config = _config_from(kwargs)
    if not token:
        raise click.UsageError("an API token is required (--token or GITHUB_TOKEN)")
    _run(lambda: cmd_ingest(config, token, repo_count))


@main.command("preprocess")
@_with_global_options
def preprocess_command(**kwargs):
    """Turn issue titles and bodies into token sequences."""
    _run(lambda: cmd_preprocess(_config_from(kwargs)))


@main.command("train")
@_with_global_options
def train_command(**kwargs):
    """Train the Kneser-Ney n-gram model on the token dump."""
    _run(lambda: cmd_train(_config_from(kwargs)))


@main.command("score")
@_with_global_options
def score_command(**kwargs):
    """Score per-document surprisal under the trained model."""
    _run(lambda: cmd_score(_config_from(kwargs)))


@main.command("metrics")
@_with_global_options
@click.option("--label-map", "label_map_path", type=click.Path(exists=True),
              default=None, help="CSV mapping raw labels to importance verdicts.")
def metrics_command(label_map_path, **kwargs):
    """Extract the per-issue response variables."""
    _run(lambda: cmd_metrics(_config_from(kwargs), label_map_path))


@main.command("analyze")
@_with_global_options
def analyze_command(**kwargs):
    """Run the hypothesis suite and write report.json/report.md."""
    _run(lambda: cmd_analyze(_config_from(kwargs)))


@main.command("agreement")
@_with_global_options
@click.option("--ratings", "ratings_paths", type=click.Path(exists=True),
              multiple=True, required=True, help="Rating CSV (repeatable).")
@click.option("--repo", required=True, help="Repository whose issues were rated.")
def agreement_command(ratings_paths, repo, **kwargs):
    """Run the 3-variant x 10-order model-agreement experiment."""
    _run(lambda: cmd_agreement(_config_from(kwargs), ratings_paths, repo))


@main.command("run-all")
@_with_global_options
@click.option("--label-map", "label_map_path", type=click.Path(exists=True),
              default=None)
@click.option("--ratings", "ratings_paths", type=click.Path(exists=True),
              multiple=True)
@click.option("--repo", default=None)
def run_all_command(label_map_path, ratings_paths, repo, **kwargs):
    """Run every stage in order on one archive."""
    _run(lambda: cmd_run_all(_config_from(kwargs), label_map_path,
                             ratings_paths, repo))


if __name__ == "__main__":
    sys.exit(main())
