"""
OD matrix files: a CSV of the non-zero cells plus a JSON sidecar holding the
label, kind, dimension, normalization and every window (empty windows
included). Counts are written with 17 significant digits so a read returns
the exact float64 values.
"""
import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from apps.common.csvio import CsvReader, check_malformed, parse_floats
from apps.common.exceptions import InputError, ValidationError
from apps.common.utils import format_count, open_input, require_file, write_json
from apps.od.matrix import ODMatrix
from apps.od.schemas import OD_COLUMNS, MatrixKind, Normalization

logger = logging.getLogger(__name__)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_matrices(path, matrices: Sequence[ODMatrix], metadata: dict | None = None) -> Path:
    if not matrices:
        raise ValidationError("matrices", "Nothing to write")
    first = matrices[0]
    rows = []
    for matrix in matrices:
        first.check_compatible(matrix, same_window=False)
        window_start, window_end = format_count(matrix.t_start), format_count(matrix.t_end)
        for i, k in zip(*np.nonzero(matrix.values)):
            rows.append((int(i), int(k), window_start, window_end, format_count(matrix.values[i, k])))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=OD_COLUMNS).to_csv(path, index=False, lineterminator="\n")
    write_json(
        sidecar_path(path),
        {
            "label": first.label,
            "kind": first.kind.value,
            "n_districts": first.n_districts,
            "normalization": first.normalization.value if first.normalization else None,
            "windows": [[format_count(m.t_start), format_count(m.t_end)] for m in matrices],
            "source_windows": [len(m.windows) for m in matrices],
            "metadata": metadata or {},
        },
    )
    logger.info(f"Wrote {len(matrices)} matrices ({len(rows):,} non-zero cells) to {path}")
    return path


def read_matrices(path) -> list[ODMatrix]:
    sidecar = require_file(sidecar_path(path))
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        n_districts = int(meta["n_districts"])
        kind = MatrixKind(meta["kind"])
        normalization = Normalization(meta["normalization"]) if meta.get("normalization") else None
        windows = [(float(s), float(e)) for s, e in meta["windows"]]
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{sidecar}: unreadable OD sidecar ({exc})")
    cube = np.zeros((len(windows), n_districts, n_districts))
    positions = {window: index for index, window in enumerate(windows)}

    n_bad = 0
    with open_input(path) as stream:
        reader = CsvReader(stream, OD_COLUMNS, source=str(path))
        for chunk, _ in reader:
            numbers = np.column_stack([parse_floats(chunk[column]) for column in OD_COLUMNS])
            for i, k, s, e, count in numbers:
                window = positions.get((s, e))
                if window is None or not (0 <= i < n_districts and 0 <= k < n_districts) or not np.isfinite(count):
                    n_bad += 1
                    continue
                cube[window, int(i), int(k)] = count
    check_malformed(n_bad + reader.n_malformed, reader.n_lines, 0.0, str(path))
    return [
        ODMatrix(cube[w], s, e, meta.get("label", ""), kind, normalization)
        for w, (s, e) in enumerate(windows)
    ]
