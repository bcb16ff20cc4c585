class ErrorCode:
    INPUT_MISSING = "input-missing"
    INPUT_MALFORMED = "input-malformed"
    INVALID_CONFIG = "invalid-config"
    INVALID_VALUE = "invalid-value"
    SHAPE_MISMATCH = "shape-mismatch"
    WINDOW_MISMATCH = "window-mismatch"
    KIND_MISMATCH = "kind-mismatch"
    INFEASIBLE_SPEC = "infeasible-spec"
    NO_FREQUENT_USERS = "no-frequent-users"
    UNKNOWN_STATION = "unknown-station"
    INTERNAL_ERROR = "internal-error"


class ExitCode:
    OK = 0
    INTERNAL = 1
    INPUT = 2
    CONFIG = 3


class OdflowError(Exception):
    def __init__(
        self,
        err_code: str,
        err_msg: str,
        exit_code: int = ExitCode.INTERNAL,
        data: dict = None,
    ) -> None:
        self.err_code = err_code
        self.err_msg = err_msg
        self.exit_code = exit_code
        self.data = data
        super().__init__(err_msg)


class InputError(OdflowError):
    """
    Missing, unreadable or malformed input files
    """

    def __init__(self, err_msg, err_code=ErrorCode.INPUT_MALFORMED, data=None):
        super().__init__(err_code, err_msg, ExitCode.INPUT, data)


class InputMissingError(InputError):
    def __init__(self, path):
        super().__init__(
            f"Input file not found: {path}",
            ErrorCode.INPUT_MISSING,
            {"path": str(path)},
        )


class ConfigError(OdflowError):
    def __init__(self, err_msg, data=None):
        super().__init__(ErrorCode.INVALID_CONFIG, err_msg, ExitCode.CONFIG, data)


class ValidationError(ConfigError):
    """
    For a single bad value that isn't caught by a schema but is validated manually
    """

    def __init__(self, field, field_err_msg):
        super().__init__("Invalid Entry", {field: field_err_msg})


def error_record(exc: OdflowError) -> dict:
    err_dict = {
        "status": "failure",
        "code": exc.err_code,
        "message": exc.err_msg,
    }
    if exc.data:
        err_dict["data"] = exc.data
    return err_dict


def config_errors(exc) -> ConfigError:
    """Turn a pydantic ValidationError into a ConfigError with one message per field."""
    modified_details = {}
    for error in exc.errors():
        field_name = ".".join(str(loc) for loc in error["loc"]) or "__root__"
        err_msg = error["msg"]
        err_type = error["type"]
        if err_type == "extra_forbidden":
            err_msg = "Unknown key"
        elif err_type == "missing":
            err_msg = "Required"
        modified_details[field_name] = err_msg
    return ConfigError("Invalid configuration", modified_details)

