import logging

import numpy as np

from apps.analysis.schemas import PrivateDiagnostics
from apps.od.matrix import ODMatrix
from apps.od.schemas import MatrixKind

logger = logging.getLogger(__name__)


def private_od(overall: ODMatrix, public: ODMatrix) -> tuple[ODMatrix, PrivateDiagnostics]:
    """
    Overall minus public, cell by cell. Negative cells are clamped to 0 and
    their magnitude summed into ``residual``.
    """
    overall.check_compatible(public)
    difference = overall.values - public.values
    negative = difference < 0
    diagnostics = PrivateDiagnostics(
        n_clamped_cells=int(negative.sum()),
        residual=float(-difference[negative].sum()),
    )
    if diagnostics.n_clamped_cells:
        logger.warning(
            f"{overall.label}: {diagnostics.n_clamped_cells} cells with more public trips than estimated "
            f"overall trips; clamped residual {diagnostics.residual:.6g}"
        )
    return (
        overall.with_values(np.where(negative, 0.0, difference), label="private-est", kind=MatrixKind.ESTIMATE),
        diagnostics,
    )
