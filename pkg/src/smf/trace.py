"""Metric trace CSV: one `step,mean_reward,precision,recall,f1` row per
periodic evaluation. Shared by both trainers."""

from __future__ import annotations

from pathlib import Path

from .errors import DataError

COLUMNS = ("step", "mean_reward", "precision", "recall", "f1")


def write_trace(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(
                f"{int(row['step'])},{repr(float(row['mean_reward']))},"
                f"{repr(float(row['precision']))},{repr(float(row['recall']))},"
                f"{repr(float(row['f1']))}\n"
            )


def read_trace(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(COLUMNS):
                raise DataError(f"{path}:{lineno}: expected {len(COLUMNS)} columns")
            try:
                rows.append({
                    "step": int(parts[0]),
                    "mean_reward": float(parts[1]),
                    "precision": float(parts[2]),
                    "recall": float(parts[3]),
                    "f1": float(parts[4]),
                })
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return rows
