"""`odflow` console entry point.

Thin wrapper around Django's management utility: `odflow public-od ...` runs
the `public_od` management command.
"""
import os
import sys

from decouple import config


def main(argv=None):
    argv = list(sys.argv if argv is None else argv)
    os.environ.setdefault(
        "DJANGO_SETTINGS_MODULE",
        config("DJANGO_SETTINGS_MODULE", default="odflow.settings.prod"),
    )
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    if len(argv) > 1 and not argv[1].startswith("-"):
        argv[1] = argv[1].replace("-", "_")
    argv[0] = "odflow"
    execute_from_command_line(argv)


if __name__ == "__main__":
    main()
