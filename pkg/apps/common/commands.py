import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from apps.common.exceptions import (
    ErrorCode,
    OdflowError,
    error_record,
)
from apps.common.utils import write_json

logger = logging.getLogger(__name__)


class OdflowCommand(BaseCommand):
    """
    Base for every odflow subcommand.

    Domain errors leave the process with the error's exit code and a
    machine-readable error record on stderr (and in ``<out-dir>/error.json``
    when the command writes to a directory that exists).
    """

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except OdflowError as exc:
            self.fail(exc, options)
        except Exception as exc:
            logger.exception(f"Unhandled error in {self.__module__}")
            self.fail(
                OdflowError(ErrorCode.INTERNAL_ERROR, f"{type(exc).__name__}: {exc}"),
                options,
            )

    def fail(self, exc: OdflowError, options: dict):
        logger.error(f"{exc.err_code}: {exc.err_msg}")
        self.stderr.write(json.dumps(error_record(exc), sort_keys=True))
        out_dir = options.get("out_dir")
        if out_dir and Path(out_dir).is_dir():
            write_json(Path(out_dir) / "error.json", error_record(exc))
        raise CommandError(exc.err_msg, returncode=exc.exit_code)

    def success(self, message: str):
        self.stdout.write(self.style.SUCCESS(message))
