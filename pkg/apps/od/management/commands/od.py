from django.conf import settings
from pydantic import ValidationError as PydanticValidationError

from apps.cdr.trips import read_trips
from apps.common.commands import OdflowCommand
from apps.common.exceptions import ValidationError, config_errors
from apps.common.utils import parse_granularity
from apps.geo.districts import DistrictMap
from apps.od.binning import bin_trips
from apps.od.files import write_matrices
from apps.od.scaling import correct_bias_series, upscale
from apps.od.schemas import ScalingConfig
from apps.places.utils import read_place_counts


def study_span(start: float | None, end: float | None) -> tuple[float, float] | None:
    if start is None and end is None:
        return None
    if start is None or end is None:
        raise ValidationError("study_window", "Pass both --study-start and --study-end")
    return start, end


class Command(OdflowCommand):
    help = "Bin trips into OD matrices by end time, optionally bias-corrected and upscaled"

    def add_arguments(self, parser):
        parser.add_argument("--trips", required=True, help="Trips CSV written by the trips command")
        parser.add_argument("--districts", required=True, help="District GeoJSON")
        parser.add_argument("--out", required=True, help="OD matrix CSV (a .json sidecar is written next to it)")
        parser.add_argument("--granularity", default="1h", help="Window length: 1h, 30min, 900s, ...")
        parser.add_argument("--study-start", type=float, help="UTC seconds, inclusive; every window is written")
        parser.add_argument("--study-end", type=float, help="UTC seconds, exclusive")
        parser.add_argument("--place-counts", help="place_counts.csv; enables the frequent-user bias correction")
        parser.add_argument("--upscale", action="store_true", help="Divide by market share x penetration x frequent share")
        parser.add_argument("--market-share", type=float, default=settings.ODFLOW["MARKET_SHARE"])
        parser.add_argument("--penetration", type=float, default=settings.ODFLOW["PENETRATION"])
        parser.add_argument(
            "--frequent-share",
            type=float,
            default=settings.ODFLOW["FREQUENT_SHARE"],
            help="Default: phi measured from --place-counts, else the reference value",
        )

    def handle(self, **options) -> None:
        granularity_s = parse_granularity(options["granularity"])
        span = study_span(options["study_start"], options["study_end"])
        district_map = DistrictMap.from_geojson(options["districts"])
        matrices, diagnostics = bin_trips(read_trips(options["trips"]), district_map, granularity_s, span=span)

        shares = read_place_counts(options["place_counts"]) if options["place_counts"] else None
        if shares is not None:
            matrices = correct_bias_series(matrices, shares)
        if options["upscale"]:
            frequent_share = options["frequent_share"]
            if frequent_share is None:
                frequent_share = shares.phi if shares is not None else settings.ODFLOW["FALLBACK_FREQUENT_SHARE"]
            try:
                cfg = ScalingConfig(
                    market_share=options["market_share"],
                    penetration=options["penetration"],
                    frequent_share=frequent_share,
                )
            except PydanticValidationError as exc:
                raise config_errors(exc)
            matrices = [upscale(m, cfg) for m in matrices]

        if not matrices:
            self.success("No trips to bin and no study window; nothing written")
            return
        write_matrices(options["out"], matrices, {"binning": diagnostics.model_dump(), "granularity_s": granularity_s})
        self.success(f"✅ {diagnostics.n_binned:,} trips binned into {len(matrices)} matrices at {options['out']}")
