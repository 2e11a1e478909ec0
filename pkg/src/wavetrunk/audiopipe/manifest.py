"""Manifest files: delimiter-separated indexes of audio paths, labels, splits."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path


class ManifestError(ValueError):
    pass


_HEADERS = (["path"], ["path", "label"], ["path", "label", "split"])


@dataclass
class ManifestRow:
    path: Path
    label: str | None = None
    split: str | None = None


class Manifest:
    """Parsed manifest with a contiguous 0-based label vocabulary.

    Paths are resolved relative to the manifest's directory and must exist at
    load time. The vocabulary is the sorted set of labels in the whole file,
    so split filtering never renumbers classes.
    """

    def __init__(self, rows: list[ManifestRow], class_names: list[str]):
        self.rows = rows
        self.class_names = class_names
        self._index = {name: i for i, name in enumerate(class_names)}

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"manifest not found: {path}")
        base = path.parent
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ManifestError(f"{path}: empty manifest") from None
            header = [h.strip() for h in header]
            if header not in _HEADERS:
                raise ManifestError(
                    f"{path}: header must be one of "
                    + ", ".join("/".join(h) for h in _HEADERS)
                    + f"; got {','.join(header)}"
                )
            rows: list[ManifestRow] = []
            for lineno, fields in enumerate(reader, start=2):
                if not fields or (len(fields) == 1 and not fields[0].strip()):
                    continue
                if len(fields) != len(header):
                    raise ManifestError(
                        f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
                    )
                record = dict(zip(header, (f.strip() for f in fields)))
                clip_path = base / record["path"]
                if not clip_path.exists():
                    raise ManifestError(f"{path}:{lineno}: no such file: {clip_path}")
                rows.append(
                    ManifestRow(clip_path, record.get("label") or None, record.get("split") or None)
                )
        class_names = sorted({r.label for r in rows if r.label is not None})
        return cls(rows, class_names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def label_id(self, row: ManifestRow) -> int:
        if row.label is None:
            raise ManifestError(f"row {row.path} carries no label")
        return self._index[row.label]

    def filter_split(self, split: str) -> "Manifest":
        return Manifest([r for r in self.rows if r.split == split], self.class_names)

    def __len__(self) -> int:
        return len(self.rows)


def write_manifest(path: str | Path, rows: list[ManifestRow], labeled: bool = True,
                   with_split: bool = True) -> None:
    """Write rows with paths stored relative to the manifest location."""
    path = Path(path)
    base = path.parent
    if labeled and with_split:
        header = "path,label,split"
    elif labeled:
        header = "path,label"
    else:
        header = "path"
    lines = [header]
    for r in rows:
        rel = Path(os.path.relpath(r.path, base))
        if labeled and with_split:
            lines.append(f"{rel},{r.label},{r.split}")
        elif labeled:
            lines.append(f"{rel},{r.label}")
        else:
            lines.append(str(rel))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
