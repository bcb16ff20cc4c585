"""
End-to-end run: ingest -> frequent users -> trips -> places -> bin ->
correct -> upscale -> public OD -> subtract -> reports.
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from pydantic import ValidationError as PydanticValidationError

from apps.analysis.reports import ReportBundle, build_report, write_report
from apps.cdr.grouping import group_events
from apps.cdr.parsers import load_cdr
from apps.cdr.stats import compute_user_stats, filter_frequent, summarize
from apps.cdr.trips import extract_all_trips, write_trips
from apps.cdr.utils import cdr_schema
from apps.common.exceptions import ErrorCode, OdflowError, config_errors
from apps.common.utils import require_file, write_json
from apps.geo.districts import DistrictMap
from apps.od.binning import aligned_span, bin_trips
from apps.od.files import write_matrices
from apps.od.matrix import ODMatrix
from apps.od.scaling import correct_bias_series, subscriber_check, upscale
from apps.od.schemas import ScalingConfig
from apps.od.windows import window_filters
from apps.pipeline.schemas import RunConfig
from apps.places.clustering import detect_places
from apps.places.schemas import PlaceSchema
from apps.places.shares import district_shares, place_counts_frame
from apps.places.utils import write_place_counts, write_places
from apps.transit.journeys import chain_all, public_od, write_journeys
from apps.transit.parsers import StationIndex, load_legs
from apps.transit.schemas import LegSchema

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    manifest: dict
    bundle: ReportBundle
    raw: list[ODMatrix] = field(default_factory=list)
    corrected: list[ODMatrix] = field(default_factory=list)
    overall: list[ODMatrix] = field(default_factory=list)
    public: list[ODMatrix] = field(default_factory=list)


class Stage:
    """Logs how long a stage took; durations never reach the output files."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        self.started = time.perf_counter()
        logger.info(f"{self.name}...")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            logger.info(f"{self.name} done in {time.perf_counter() - self.started:.2f}s")


def study_span(cfg: RunConfig, event_t: np.ndarray, legs) -> tuple[float, float]:
    """The configured study window, else every event and leg in whole windows."""
    if cfg.study_start is not None and cfg.study_end is not None:
        return cfg.study_start, cfg.study_end
    times = np.concatenate([event_t, legs["board_t"].to_numpy(dtype=float), legs["alight_t"].to_numpy(dtype=float)])
    if cfg.study_start is not None:
        times = times[times >= cfg.study_start]
    if cfg.study_end is not None:
        times = times[times < cfg.study_end]
    return aligned_span(times.min(), times.max(), cfg.granularity_s)


def scaling_config(cfg: RunConfig, measured_phi: float) -> ScalingConfig:
    if cfg.frequent_share is None and not measured_phi:
        measured_phi = settings.ODFLOW["FALLBACK_FREQUENT_SHARE"]
        logger.warning(f"No significant places to measure phi, using {measured_phi}")
    try:
        return ScalingConfig(
            market_share=cfg.market_share,
            penetration=cfg.penetration,
            frequent_share=cfg.frequent_share if cfg.frequent_share is not None else measured_phi,
        )
    except PydanticValidationError as exc:
        raise config_errors(exc)


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    for path in cfg.input_paths:
        require_file(path)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metadata = {"config": cfg.model_dump(mode="json"), "config_hash": cfg.config_hash}
    district_map = DistrictMap.from_geojson(cfg.districts)

    with Stage("Parsing CDR"):
        schema = cdr_schema(
            cfg.ts_format,
            cfg.towers,
            cfg.max_malformed_fraction,
            study_start=cfg.study_start,
            study_end=cfg.study_end,
        )
        parsed = load_cdr(cfg.cdr, schema)
        groups = group_events(parsed.events)

    with Stage("Selecting very frequent users"):
        stats = compute_user_stats(groups)
        inter_event, stats_diagnostics = summarize(stats, cfg.frequent_threshold_min)
        frequent = filter_frequent(stats, cfg.frequent_threshold_min)
        if not frequent:
            raise OdflowError(
                ErrorCode.NO_FREQUENT_USERS,
                f"No user has an inter-event time below {cfg.frequent_threshold_min} min",
            )

    with Stage("Extracting trips"):
        trips, trip_diagnostics = extract_all_trips(
            groups.select(frequent), district_map, cfg.delta_d_m, cfg.delta_t_min, cfg.workers
        )

    with Stage("Detecting significant places"):
        try:
            place_schema = PlaceSchema(radius_m=cfg.radius_m, min_share=cfg.min_share, max_iter=cfg.max_iter)
        except PydanticValidationError as exc:
            raise config_errors(exc)
        places, place_diagnostics = detect_places(groups, district_map, place_schema, cfg.workers)
        shares = district_shares([p for p in places if p.user_id in frequent], places, district_map)

    with Stage("Chaining smart-card journeys"):
        try:
            leg_schema = LegSchema(
                ts_format=cfg.ts_format,
                max_malformed_fraction=cfg.max_malformed_fraction,
                chunk_rows=settings.ODFLOW["CSV_CHUNK_ROWS"],
            )
        except PydanticValidationError as exc:
            raise config_errors(exc)
        stations = StationIndex.load(cfg.stations, district_map)
        legs = load_legs(cfg.legs, leg_schema)
        journeys, journey_diagnostics = chain_all(legs.legs, cfg.transfer_min)

    span = study_span(cfg, parsed.events["t"].to_numpy(dtype=float), legs.legs)
    with Stage("Building OD matrices"):
        raw, binning = bin_trips(trips, district_map, cfg.granularity_s, span=span)
        corrected = correct_bias_series(raw, shares)
        scaling = scaling_config(cfg, shares.phi)
        overall = [upscale(m, scaling) for m in corrected] if cfg.upscale else corrected
        public, public_binning = public_od(journeys, stations, cfg.granularity_s, span)

    with Stage("Reporting"):
        filters = window_filters(cfg.windows, cfg.timezone, cfg.workdays, cfg.holidays)
        bundle = build_report(
            overall,
            public,
            district_map,
            filters,
            top_k=cfg.top_k,
            intra_samples=cfg.intra_samples,
            seed=cfg.seed,
            detected_hourly=raw,
        )

    write_trips(out_dir / "trips.csv", trips)
    write_places(out_dir / "places.csv", places)
    write_place_counts(out_dir / "place_counts.csv", place_counts_frame(shares, district_map))
    write_journeys(out_dir / "journeys.csv", journeys)
    for name, matrices in (("raw", raw), ("corrected", corrected), ("overall", overall), ("public", public)):
        write_matrices(out_dir / "od" / f"{name}.csv", matrices, metadata)
    write_report(bundle, out_dir, district_map, geojson=True, metadata=metadata)

    manifest = {
        **metadata,
        "span": list(span),
        "counts": {
            "cdr_lines": parsed.diagnostics.n_lines,
            "events": parsed.diagnostics.n_records,
            "users": len(groups),
            "frequent_users": len(frequent),
            "trips_extracted": binning.n_trips,
            "trips_without_district": binning.n_without_district,
            "trips_out_of_window": binning.n_out_of_window,
            "trips_binned": binning.n_binned,
            "places": place_diagnostics.n_places,
            "legs": legs.diagnostics.n_legs,
            "journeys": journey_diagnostics.n_journeys,
            "journeys_binned": public_binning.n_binned,
            "windows": len(raw),
        },
        "diagnostics": {
            "cdr": parsed.diagnostics.model_dump(),
            "stats": stats_diagnostics.model_dump(),
            "trips": trip_diagnostics.model_dump(),
            "places": place_diagnostics.model_dump(),
            "legs": legs.diagnostics.model_dump(),
            "journeys": journey_diagnostics.model_dump(),
            "binning": binning.model_dump(),
            "public_binning": public_binning.model_dump(),
            "private_residuals": {name: r.model_dump() for name, r in bundle.residuals.items()},
        },
        "inter_event": inter_event,
        "frequent_share": {"measured": shares.phi, "used": scaling.frequent_share},
        "scaling": {"divisor": scaling.divisor, "upscaled": cfg.upscale},
        "subscriber_check": subscriber_check(market_share=cfg.market_share),
    }
    write_json(out_dir / "manifest.json", manifest)
    logger.info(f"Run {cfg.config_hash} written to {out_dir}")
    return PipelineResult(manifest, bundle, raw, corrected, overall, public)
