from pathlib import Path

from django.conf import settings
from pydantic import ValidationError as PydanticValidationError

from apps.cdr.grouping import group_events
from apps.cdr.stats import compute_user_stats, filter_frequent
from apps.cdr.utils import add_cdr_arguments, load_cdr_from_options
from apps.common.commands import OdflowCommand
from apps.common.exceptions import config_errors
from apps.geo.districts import DistrictMap
from apps.places.clustering import detect_places
from apps.places.schemas import PlaceSchema
from apps.places.shares import district_shares, place_counts_frame
from apps.places.utils import write_place_counts, write_places


class Command(OdflowCommand):
    help = "Detect significant places (home/work) per user and count them per district"

    def add_arguments(self, parser):
        add_cdr_arguments(parser)
        parser.add_argument("--districts", required=True, help="District GeoJSON")
        parser.add_argument("--out", required=True, help="Places CSV")
        parser.add_argument("--counts-out", help="Per-district counts CSV (default: place_counts.csv next to --out)")
        parser.add_argument("--radius-m", type=float, default=settings.ODFLOW["RADIUS_M"])
        parser.add_argument("--min-share", type=float, default=settings.ODFLOW["MIN_SHARE"])
        parser.add_argument("--max-iter", type=int, default=settings.ODFLOW["MAX_ITER"])
        parser.add_argument(
            "--frequent-threshold-min",
            type=float,
            default=settings.ODFLOW["FREQUENT_THRESHOLD_MIN"],
        )
        parser.add_argument("--workers", type=int, default=settings.ODFLOW["WORKERS"])

    def handle(self, **options) -> None:
        try:
            schema = PlaceSchema(
                radius_m=options["radius_m"],
                min_share=options["min_share"],
                max_iter=options["max_iter"],
            )
        except PydanticValidationError as exc:
            raise config_errors(exc)
        district_map = DistrictMap.from_geojson(options["districts"])
        parsed = load_cdr_from_options(options)
        groups = group_events(parsed.events)
        frequent = filter_frequent(compute_user_stats(groups), options["frequent_threshold_min"])

        places, diagnostics = detect_places(groups, district_map, schema, options["workers"])
        shares = district_shares([p for p in places if p.user_id in frequent], places, district_map)

        out = Path(options["out"])
        counts_out = Path(options["counts_out"] or out.with_name("place_counts.csv"))
        write_places(out, places)
        write_place_counts(counts_out, place_counts_frame(shares, district_map))
        self.success(
            f"✅ {diagnostics.n_places:,} places of {diagnostics.n_users:,} users written to {out}; "
            f"phi = {shares.phi:.4f}"
        )
