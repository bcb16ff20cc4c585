from django.conf import settings
from pydantic import ValidationError as PydanticValidationError

from apps.cdr.parsers import ParsedCdr, load_cdr, load_towers
from apps.cdr.schemas import CdrSchema
from apps.common.exceptions import config_errors


def add_cdr_arguments(parser):
    parser.add_argument("--cdr", required=True, help="CDR log (CSV)")
    parser.add_argument("--ts-format", choices=["unix", "rfc3339"], default="unix")
    parser.add_argument("--towers", help="Tower file tower_id,lon,lat; switches the log to tower mode")
    parser.add_argument(
        "--max-malformed-fraction",
        type=float,
        default=settings.ODFLOW["MAX_MALFORMED_FRACTION"],
    )


def cdr_schema(ts_format="unix", towers=None, max_malformed_fraction=None, **extra) -> CdrSchema:
    if max_malformed_fraction is None:
        max_malformed_fraction = settings.ODFLOW["MAX_MALFORMED_FRACTION"]
    try:
        return CdrSchema(
            ts_format=ts_format,
            towers=load_towers(towers) if towers else None,
            max_malformed_fraction=max_malformed_fraction,
            chunk_rows=settings.ODFLOW["CSV_CHUNK_ROWS"],
            **extra,
        )
    except PydanticValidationError as exc:
        raise config_errors(exc)


def load_cdr_from_options(options: dict) -> ParsedCdr:
    schema = cdr_schema(options["ts_format"], options.get("towers"), options["max_malformed_fraction"])
    return load_cdr(options["cdr"], schema)
