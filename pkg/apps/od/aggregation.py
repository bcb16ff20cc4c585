from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np

from apps.common.exceptions import ErrorCode, OdflowError, ValidationError
from apps.od.matrix import ODMatrix
from apps.od.schemas import Normalization
from apps.od.windows import WindowFilter


def _utc_date(t: float):
    return datetime.fromtimestamp(t, tz=timezone.utc).date()


def aggregate(
    matrices: Sequence[ODMatrix],
    window_filter: WindowFilter | Callable[[ODMatrix], bool] | None = None,
    normalize: Normalization = Normalization.TOTAL,
) -> ODMatrix:
    """
    Elementwise sum of the matrices selected by ``window_filter``. PER_DAY
    divides by the number of distinct (local) days contributing.
    """
    if not matrices:
        raise ValidationError("matrices", "Nothing to aggregate")
    first = matrices[0]
    for matrix in matrices[1:]:
        if matrix.kind != first.kind:
            raise OdflowError(
                ErrorCode.KIND_MISMATCH,
                f"Cannot aggregate {first.kind.value} and {matrix.kind.value} matrices",
            )
        first.check_compatible(matrix, same_window=False)

    selected = [m for m in matrices if window_filter is None or window_filter(m)]
    values = np.zeros_like(first.values)
    for matrix in selected:
        values += matrix.values

    if isinstance(window_filter, WindowFilter):
        days = {window_filter.local_date(m.t_start) for m in selected}
        name = window_filter.name
    else:
        days = {_utc_date(m.t_start) for m in selected}
        name = getattr(window_filter, "name", "all") if window_filter else "all"
    if normalize == Normalization.PER_DAY and days:
        values = values / len(days)

    if selected:
        t_start, t_end = min(m.t_start for m in selected), max(m.t_end for m in selected)
    else:
        t_start, t_end = min(m.t_start for m in matrices), max(m.t_end for m in matrices)
    return ODMatrix(
        values,
        t_start,
        t_end,
        label=f"{first.label}/{name}",
        kind=first.kind,
        normalization=normalize,
        windows=[m.window for m in selected],
    )


def align(*series: Sequence[ODMatrix]) -> list[list[ODMatrix]]:
    """
    Pad every series with zero matrices so all of them cover the same
    windows, in time order.
    """
    windows = sorted({m.window for matrices in series for m in matrices})
    aligned = []
    for matrices in series:
        if not matrices:
            raise ValidationError("matrices", "Cannot align an empty series")
        by_window = {m.window: m for m in matrices}
        template = matrices[0]
        aligned.append(
            [
                by_window.get(window)
                or ODMatrix.zeros(template.n_districts, *window, label=template.label, kind=template.kind)
                for window in windows
            ]
        )
    return aligned
