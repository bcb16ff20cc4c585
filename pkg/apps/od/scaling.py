"""
Frequent-user bias correction and population upscaling.

Both are elementwise multiplications, so they commute and may be applied to
hourly matrices before aggregation.
"""
import logging
from typing import Sequence

import numpy as np

from apps.common.exceptions import ErrorCode, OdflowError, ValidationError
from apps.od.matrix import ODMatrix
from apps.od.schemas import MatrixKind, ScalingConfig
from apps.places.schemas import DistrictShares

logger = logging.getLogger(__name__)

# Operator figures used to derive the default market share and penetration
SUBSCRIBERS = 3.4e6
POPULATION = 5.2e6


def correction_factors(shares: DistrictShares) -> np.ndarray:
    """
    D x D factors sqrt(phi^2 / (phi_i phi_k)). A district without frequent
    places (or without any place) takes phi_i = phi, a neutral factor.
    """
    phi = shares.phi
    if phi <= 0:
        raise OdflowError(
            ErrorCode.NO_FREQUENT_USERS,
            "No significant place of a very frequent user: the overall share phi is 0",
        )
    phi_i = shares.phi_i.astype(float)
    fallback = (shares.n == 0) | (phi_i == 0)
    for district_id in np.flatnonzero(fallback):
        logger.warning(f"District {district_id}: phi_i unavailable, using overall phi = {phi:.4f}")
    phi_i[fallback] = phi
    return np.sqrt(phi**2 / np.outer(phi_i, phi_i))


def correct_bias(matrix: ODMatrix, shares: DistrictShares, factors: np.ndarray | None = None) -> ODMatrix:
    if len(shares) != matrix.n_districts:
        raise OdflowError(
            ErrorCode.SHAPE_MISMATCH,
            f"{len(shares)} district shares for a {matrix.n_districts}-district matrix",
        )
    factors = correction_factors(shares) if factors is None else factors
    return matrix.with_values(matrix.values * factors, label=f"{matrix.label}+corrected")


def correct_bias_series(matrices: Sequence[ODMatrix], shares: DistrictShares) -> list[ODMatrix]:
    factors = correction_factors(shares)
    return [correct_bias(m, shares, factors) for m in matrices]


def upscale(matrix: ODMatrix, cfg: ScalingConfig) -> ODMatrix:
    """Divide by market share x penetration x frequent share; the result is an ESTIMATE."""
    for name in ("market_share", "penetration", "frequent_share"):
        value = getattr(cfg, name)
        if not 0 < value <= 3:
            raise ValidationError(name, f"Scaling factor must lie in (0, 3], got {value}")
    return matrix.with_values(matrix.values / cfg.divisor, kind=MatrixKind.ESTIMATE, label=f"{matrix.label}+upscaled")


def subscriber_check(
    subscribers: float = SUBSCRIBERS,
    market_share: float = ScalingConfig.model_fields["market_share"].default,
    population: float = POPULATION,
) -> dict:
    """Mobile subscriptions implied by the operator's subscribers and the resulting penetration."""
    subscriptions = subscribers / market_share
    return {
        "subscribers": subscribers,
        "market_share": market_share,
        "subscriptions": subscriptions,
        "population": population,
        "penetration": subscriptions / population,
    }
