"""Mean distance between two uniform random points of the same district."""
import logging
import math

import numpy as np
import shapely
from shapely.geometry import Polygon

from apps.analysis.references import DETECTABILITY_FLOOR_M
from apps.analysis.schemas import DistrictDistance, IntraDistanceReport
from apps.common.exceptions import ValidationError
from apps.geo.districts import DistrictMap

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
# mean distance of two uniform points in the unit square
CLASSICAL_CONSTANT = (2.0 + SQRT2 + 5.0 * math.log(1.0 + SQRT2)) / 15.0
# the printed variant of the same constant, reported for comparison only
PRINTED_CONSTANT = SQRT2 * (2.0 + 5.0 * math.sqrt(5.0) + math.log(SQRT2 + 1.0) + 2.0 * SQRT2) / 30.0
MIN_SAMPLES = 10_000


def sample_in_polygon(polygon: Polygon, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` uniform points by rejection from the bounding box."""
    minx, miny, maxx, maxy = polygon.bounds
    fill = polygon.area / ((maxx - minx) * (maxy - miny))
    shapely.prepare(polygon)
    xs, ys, collected = [], [], 0
    while collected < n:
        batch = int((n - collected) / fill * 1.1) + 64
        cx = rng.uniform(minx, maxx, batch)
        cy = rng.uniform(miny, maxy, batch)
        inside = shapely.contains_xy(polygon, cx, cy)
        xs.append(cx[inside])
        ys.append(cy[inside])
        collected += int(inside.sum())
    return np.concatenate(xs)[:n], np.concatenate(ys)[:n]


def mean_pair_distance(polygon: Polygon, n_samples: int, rng: np.random.Generator) -> float:
    xs, ys = sample_in_polygon(polygon, 2 * n_samples, rng)
    return float(np.hypot(xs[:n_samples] - xs[n_samples:], ys[:n_samples] - ys[n_samples:]).mean())


def intra_district_mean_distance(district_map: DistrictMap, n_samples: int = 100_000, seed: int = 0) -> IntraDistanceReport:
    """
    Monte Carlo mean distance per district next to the square approximation
    c * s with s = sqrt(total area / D).
    """
    if n_samples < MIN_SAMPLES:
        raise ValidationError("intra_samples", f"At least {MIN_SAMPLES} samples are required")
    districts, total_area = [], 0.0
    for district in district_map.districts:
        polygon = district_map.projected_polygon(district.district_id)
        area = float(polygon.area)
        if area <= 0:
            logger.warning(f"District {district.district_id} has no area; skipped")
            districts.append(DistrictDistance(district.district_id, district.name, 0.0, None))
            continue
        # one stream per district keeps each estimate independent of the others
        rng = np.random.default_rng([seed, district.district_id])
        mean = mean_pair_distance(polygon, n_samples, rng)
        districts.append(DistrictDistance(district.district_id, district.name, area, mean))
        total_area += area

    side_m = math.sqrt(total_area / len(district_map))
    means = [d.mean_distance_m for d in districts if d.mean_distance_m is not None]
    report = IntraDistanceReport(
        districts=districts,
        n_samples=n_samples,
        side_m=side_m,
        classical_estimate_m=CLASSICAL_CONSTANT * side_m,
        printed_estimate_m=PRINTED_CONSTANT * side_m,
        mean_distance_m=float(np.mean(means)) if means else None,
        detectability_floor_m=DETECTABILITY_FLOOR_M,
    )
    logger.info(
        f"Intra-district mean distance {report.mean_distance_m or 0:.0f} m "
        f"(square estimate {report.classical_estimate_m:.0f} m, floor {DETECTABILITY_FLOOR_M:.0f} m)"
    )
    return report
