from django.conf import settings

from apps.cdr.grouping import group_events
from apps.cdr.stats import compute_user_stats, filter_frequent
from apps.cdr.trips import extract_all_trips, write_trips
from apps.cdr.utils import add_cdr_arguments, load_cdr_from_options
from apps.common.commands import OdflowCommand
from apps.geo.districts import DistrictMap


class Command(OdflowCommand):
    help = "Extract trips between dwell clusters from a CDR log"

    def add_arguments(self, parser):
        add_cdr_arguments(parser)
        parser.add_argument("--districts", required=True, help="District GeoJSON")
        parser.add_argument("--out", required=True, help="Trips CSV")
        parser.add_argument("--delta-d-m", type=float, default=settings.ODFLOW["DELTA_D_M"])
        parser.add_argument("--delta-t-min", type=float, default=settings.ODFLOW["DELTA_T_MIN"])
        parser.add_argument(
            "--frequent-threshold-min",
            type=float,
            default=settings.ODFLOW["FREQUENT_THRESHOLD_MIN"],
        )
        parser.add_argument(
            "--all-users",
            action="store_true",
            help="Extract trips for every user instead of very frequent users only",
        )
        parser.add_argument("--workers", type=int, default=settings.ODFLOW["WORKERS"])

    def handle(self, **options) -> None:
        district_map = DistrictMap.from_geojson(options["districts"])
        parsed = load_cdr_from_options(options)
        groups = group_events(parsed.events)
        if not options["all_users"]:
            stats = compute_user_stats(groups)
            groups = groups.select(filter_frequent(stats, options["frequent_threshold_min"]))
        trips, diagnostics = extract_all_trips(
            groups,
            district_map,
            options["delta_d_m"],
            options["delta_t_min"],
            options["workers"],
        )
        write_trips(options["out"], trips)
        self.success(
            f"✅ {diagnostics.n_trips:,} trips from {diagnostics.n_users:,} users written to {options['out']}"
        )
