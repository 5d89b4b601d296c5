"""Line-delimited JSON archive for mined datasets.

Layout: one directory per dataset with ``repos.jsonl``, ``issues.jsonl``,
``releases.jsonl`` (one UTF-8 JSON object per line) and ``meta.json``
holding the analysis timestamp and tool version. Writing then reading a
dataset reproduces it structurally bit-for-bit.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from . import __version__
from .errors import SchemaError
from .records import Dataset, IssueRecord, ReleaseRecord, RepositorySnapshot, format_timestamp, parse_timestamp

REPOS_FILE = "repos.jsonl"
ISSUES_FILE = "issues.jsonl"
RELEASES_FILE = "releases.jsonl"
META_FILE = "meta.json"


def save_archive(dataset: Dataset, path: Union[str, Path]) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    _write_jsonl(root / REPOS_FILE, [r.to_dict() for r in dataset.repositories])
    _write_jsonl(root / ISSUES_FILE, [i.to_dict() for i in dataset.issues])
    _write_jsonl(root / RELEASES_FILE, [r.to_dict() for r in dataset.releases])
    meta = {
        "analysis_time": format_timestamp(dataset.analysis_time) if dataset.analysis_time else None,
        "tool_version": __version__,
    }
    (root / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_archive(path: Union[str, Path]) -> Dataset:
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"archive directory not found: {root}")
    repos = _read_jsonl(root / REPOS_FILE, RepositorySnapshot.from_dict)
    issues = _read_jsonl(root / ISSUES_FILE, IssueRecord.from_dict)
    releases = _read_jsonl(root / RELEASES_FILE, ReleaseRecord.from_dict)
    meta_path = root / META_FILE
    analysis_time = None
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(str(exc), filename=META_FILE) from exc
        if meta.get("analysis_time"):
            analysis_time = parse_timestamp(meta["analysis_time"])
    return Dataset(repositories=repos, issues=issues, releases=releases, analysis_time=analysis_time)


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path, builder):
    if not path.exists():
        return ()
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"malformed JSON: {exc.msg}", filename=path.name, line=lineno) from exc
            try:
                out.append(builder(raw))
            except (KeyError, ValueError, TypeError) as exc:
                field = exc.args[0] if isinstance(exc, KeyError) else ""
                raise SchemaError(str(exc), filename=path.name, line=lineno, field=str(field)) from exc
    return tuple(out)
