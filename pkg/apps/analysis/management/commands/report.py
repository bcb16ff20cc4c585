from datetime import date

from django.conf import settings

from apps.analysis.reports import build_report, write_report
from apps.common.commands import OdflowCommand
from apps.common.exceptions import ValidationError
from apps.geo.districts import DistrictMap
from apps.od.files import read_matrices
from apps.od.windows import window_filters


def parse_holiday(value: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise ValidationError("holiday", f"'{value}' is not an ISO date")


class Command(OdflowCommand):
    help = "Private trips, mode shares per window and the most used connections"

    def add_arguments(self, parser):
        parser.add_argument("--overall", required=True, help="Hourly overall OD matrices (od command output)")
        parser.add_argument("--public", required=True, help="Hourly public OD matrices (public-od command output)")
        parser.add_argument("--districts", required=True, help="District GeoJSON")
        parser.add_argument("--out-dir", required=True)
        parser.add_argument("--top-k", type=int, default=settings.ODFLOW["TOP_K"])
        parser.add_argument("--format", choices=["csv", "geojson"], default="csv", help="geojson also writes connection lines")
        parser.add_argument("--timezone", default=settings.ODFLOW["TIMEZONE"])
        parser.add_argument("--holiday", action="append", default=[], help="ISO date excluded from every window; repeatable")
        parser.add_argument(
            "--intra-samples",
            type=int,
            default=settings.ODFLOW["INTRA_SAMPLES"],
            help="Point pairs per district for the intra-district distance; 0 skips it",
        )
        parser.add_argument("--seed", type=int, default=settings.ODFLOW["SEED"])

    def handle(self, **options) -> None:
        if options["top_k"] < 1:
            raise ValidationError("top_k", "Must be at least 1")
        district_map = DistrictMap.from_geojson(options["districts"])
        filters = window_filters(
            tz=options["timezone"],
            holidays=[parse_holiday(value) for value in options["holiday"]],
        )
        bundle = build_report(
            read_matrices(options["overall"]),
            read_matrices(options["public"]),
            district_map,
            filters,
            top_k=options["top_k"],
            intra_samples=options["intra_samples"],
            seed=options["seed"],
        )
        write_report(
            bundle,
            options["out_dir"],
            district_map,
            geojson=options["format"] == "geojson",
            metadata={"overall": options["overall"], "public": options["public"]},
        )
        self.success(f"✅ Report for {len(filters)} windows written to {options['out_dir']}")
