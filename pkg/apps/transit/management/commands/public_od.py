from pathlib import Path

from django.conf import settings
from pydantic import ValidationError as PydanticValidationError

from apps.common.commands import OdflowCommand
from apps.common.exceptions import config_errors
from apps.common.utils import parse_granularity
from apps.geo.districts import DistrictMap
from apps.od.files import write_matrices
from apps.transit.journeys import chain_all, public_od, write_journeys
from apps.transit.parsers import StationIndex, load_legs
from apps.transit.schemas import LegSchema


class Command(OdflowCommand):
    help = "Chain smart-card legs into journeys and count them into public-transport OD matrices"

    def add_arguments(self, parser):
        parser.add_argument("--legs", required=True, help="Smart-card legs CSV")
        parser.add_argument("--stations", required=True, help="Stations CSV station_id,lon,lat")
        parser.add_argument("--districts", required=True, help="District GeoJSON")
        parser.add_argument("--out", required=True, help="Public OD matrix CSV")
        parser.add_argument("--journeys-out", help="Optional journeys CSV")
        parser.add_argument("--transfer-min", type=float, default=settings.ODFLOW["TRANSFER_MIN"])
        parser.add_argument("--granularity", default="1h")
        parser.add_argument("--ts-format", choices=["unix", "rfc3339"], default="unix")
        parser.add_argument(
            "--max-malformed-fraction",
            type=float,
            default=settings.ODFLOW["MAX_MALFORMED_FRACTION"],
        )

    def handle(self, **options) -> None:
        granularity_s = parse_granularity(options["granularity"])
        try:
            schema = LegSchema(
                ts_format=options["ts_format"],
                max_malformed_fraction=options["max_malformed_fraction"],
                chunk_rows=settings.ODFLOW["CSV_CHUNK_ROWS"],
            )
        except PydanticValidationError as exc:
            raise config_errors(exc)
        district_map = DistrictMap.from_geojson(options["districts"])
        stations = StationIndex.load(options["stations"], district_map)
        parsed = load_legs(options["legs"], schema)
        journeys, diagnostics = chain_all(parsed.legs, options["transfer_min"])
        matrices, binning = public_od(journeys, stations, granularity_s)

        if options["journeys_out"]:
            write_journeys(Path(options["journeys_out"]), journeys)
        if not matrices:
            self.success("No journeys to count; nothing written")
            return
        write_matrices(
            options["out"],
            matrices,
            {
                "legs": parsed.diagnostics.model_dump(),
                "journeys": diagnostics.model_dump(),
                "binning": binning.model_dump(),
                "transfer_min": options["transfer_min"],
            },
        )
        self.success(f"✅ {diagnostics.n_journeys:,} journeys counted into {len(matrices)} matrices at {options['out']}")
