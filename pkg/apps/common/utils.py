import hashlib
import json
import re
from pathlib import Path

from django.core.serializers.json import DjangoJSONEncoder

from apps.common.exceptions import InputMissingError, ValidationError

GRANULARITY_RE = re.compile(r"^\s*(\d+)\s*(s|m|min|h)\s*$")
GRANULARITY_UNITS = {"s": 1, "m": 60, "min": 60, "h": 3600}


def hash_params(params: dict) -> str:
    """Create a consistent hash from parameters."""
    sorted_params = json.dumps(params, sort_keys=True, default=str)
    return hashlib.md5(sorted_params.encode()).hexdigest()


def format_count(value: float) -> str:
    # 17 significant digits reproduce every float64 bit-exactly
    if float(value).is_integer() and abs(value) < 1e17:
        return str(int(value))
    return format(float(value), ".17g")


def dump_json(data) -> str:
    return json.dumps(data, cls=DjangoJSONEncoder, sort_keys=True, indent=2)


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(data) + "\n", encoding="utf-8")
    return path


def require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise InputMissingError(path)
    return path


def open_input(path):
    """Open an input file as a binary stream, raising input-missing when absent."""
    return require_file(path).open("rb")


def parse_granularity(value) -> int:
    """'1h', '30min', '900s' or a plain number of seconds."""
    if isinstance(value, (int, float)):
        seconds = int(value)
    else:
        match = GRANULARITY_RE.match(str(value))
        if not match:
            raise ValidationError("granularity", f"Unrecognised granularity '{value}'")
        seconds = int(match.group(1)) * GRANULARITY_UNITS[match.group(2)]
    if seconds <= 0:
        raise ValidationError("granularity", "Must be positive")
    return seconds
