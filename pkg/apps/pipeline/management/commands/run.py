from apps.common.commands import OdflowCommand
from apps.common.exceptions import ValidationError
from apps.common.utils import format_count, parse_granularity
from apps.pipeline.runner import run_pipeline
from apps.pipeline.schemas import RunConfig


def parse_window(value: str) -> tuple[str, tuple[float, float]]:
    """``morning=6-10`` -> ``("morning", (6.0, 10.0))``"""
    try:
        name, hours = value.split("=", 1)
        start, end = hours.split("-", 1)
        return name.strip(), (float(start), float(end))
    except ValueError:
        raise ValidationError("window", f"Expected NAME=START-END in hours, got '{value}'")


class Command(OdflowCommand):
    help = "Run every stage from raw logs to mode-share reports in one go"

    def add_arguments(self, parser):
        # every flag defaults to None so the config file and settings apply
        parser.add_argument("--config", help="JSON run configuration; flags override its keys")
        parser.add_argument("--cdr", help="CDR log (CSV)")
        parser.add_argument("--districts", help="District GeoJSON")
        parser.add_argument("--legs", help="Smart-card legs (CSV)")
        parser.add_argument("--stations", help="Station file station_id,lon,lat")
        parser.add_argument("--towers", help="Tower file; switches the CDR to tower mode")
        parser.add_argument("--out-dir", help="Output directory")
        parser.add_argument("--ts-format", choices=["unix", "rfc3339"])
        parser.add_argument("--max-malformed-fraction", type=float)
        parser.add_argument("--study-start", type=float, help="UTC seconds, inclusive")
        parser.add_argument("--study-end", type=float, help="UTC seconds, exclusive")
        parser.add_argument("--delta-d-m", type=float)
        parser.add_argument("--delta-t-min", type=float)
        parser.add_argument("--frequent-threshold-min", type=float)
        parser.add_argument("--radius-m", type=float)
        parser.add_argument("--min-share", type=float)
        parser.add_argument("--max-iter", type=int)
        parser.add_argument("--transfer-min", type=float)
        parser.add_argument("--no-upscale", dest="upscale", action="store_const", const=False)
        parser.add_argument("--market-share", type=float)
        parser.add_argument("--penetration", type=float)
        parser.add_argument("--frequent-share", type=float, help="Default: phi measured from significant places")
        parser.add_argument("--granularity", help="Window length: 1h, 30min, 900s, ...")
        parser.add_argument("--window", action="append", help="NAME=START-END local hours; repeatable")
        parser.add_argument("--timezone")
        parser.add_argument("--workday", dest="workdays", type=int, action="append", help="ISO weekday; repeatable")
        parser.add_argument("--holiday", dest="holidays", action="append", help="YYYY-MM-DD; repeatable")
        parser.add_argument("--top-k", type=int)
        parser.add_argument("--intra-samples", type=int, help="0 skips the intra-district distance check")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--workers", type=int)

    def handle(self, **options) -> None:
        overrides = {key: options.get(key) for key in RunConfig.model_fields}
        if options["granularity"]:
            overrides["granularity_s"] = parse_granularity(options["granularity"])
        if options["window"]:
            overrides["windows"] = dict(parse_window(value) for value in options["window"])
        cfg = RunConfig.load(options["config"], overrides)

        result = run_pipeline(cfg)
        counts = result.manifest["counts"]
        self.success(
            f"✅ {format_count(counts['trips_binned'])} trips and {format_count(counts['journeys_binned'])} "
            f"journeys over {counts['windows']} windows written to {cfg.out_dir}"
        )
