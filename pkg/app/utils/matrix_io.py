import math
import os
import tempfile
from pathlib import Path
from typing import Dict

import numpy as np
from dotenv import dotenv_values

from app.utils.errors import DataError

MANIFEST_KEYS = (
    "features",
    "prototypes_seen",
    "prototypes_unseen",
    "labels",
    "annotated_mask",
    "test_features",
    "test_labels",
    "initial_attributes",
    "pool_features",
)


# --- Matrix text format ---
def _data_lines(text: str):
    """Yield (line_number, stripped_line) for non-comment, non-blank lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        yield lineno, s


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    """
    Parse the matrix text format:
        ROWS COLS
        v11 v12 ... v1COLS
        ...
    '#' starts a comment line. Errors name the offending line.
    """
    lines = list(_data_lines(text))
    if not lines:
        raise DataError(f"{source}: empty matrix file")

    header_no, header = lines[0]
    parts = header.split(" ")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise DataError(f"{source}:{header_no}: malformed header {header!r}, expected 'ROWS COLS'")
    rows, cols = int(parts[0]), int(parts[1])

    body = lines[1:]
    if cols == 0:
        if body:
            raise DataError(f"{source}:{body[0][0]}: data line in a matrix with 0 columns")
        return np.zeros((rows, 0))
    if len(body) != rows:
        where = body[rows][0] if len(body) > rows else (body[-1][0] if body else header_no)
        raise DataError(f"{source}:{where}: expected {rows} rows, found {len(body)}")

    out = np.empty((rows, cols), dtype=np.float64)
    for i, (lineno, line) in enumerate(body):
        tokens = line.split(" ")
        if len(tokens) != cols:
            raise DataError(f"{source}:{lineno}: ragged row, expected {cols} values, found {len(tokens)}")
        for j, tok in enumerate(tokens):
            try:
                val = float(tok)
            except ValueError:
                raise DataError(f"{source}:{lineno}: non-numeric token {tok!r}") from None
            if not math.isfinite(val):
                raise DataError(f"{source}:{lineno}: non-finite value {tok!r}")
            out[i, j] = val
    return out


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"matrix file not found: {path}")
    return parse_matrix(path.read_text(encoding="utf-8"), source=str(path))


def format_matrix(matrix: np.ndarray) -> str:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = matrix.shape
    lines = [f"{rows} {cols}"]
    if cols:
        # %.17g round-trips every float64 exactly
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in matrix)
    return "\n".join(lines) + "\n"


# --- Atomic writes ---
def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_matrix(path: str | Path, matrix: np.ndarray) -> Path:
    return atomic_write_text(path, format_matrix(matrix))


# --- Manifest ---
def read_manifest(path: str | Path) -> Dict[str, Path]:
    """
    Read a key=value dataset manifest.
    Returns known keys mapped to paths resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")

    raw = dotenv_values(path, interpolate=False)
    unknown = sorted(set(raw) - set(MANIFEST_KEYS))
    if unknown:
        raise DataError(f"{path}: unknown manifest keys {unknown}")

    base = path.resolve().parent
    return {key: base / value for key, value in raw.items() if value}


def write_manifest(path: str | Path, entries: Dict[str, str]) -> Path:
    lines = [f"{key}={value}" for key, value in entries.items()]
    return atomic_write_text(path, "\n".join(lines) + "\n")
