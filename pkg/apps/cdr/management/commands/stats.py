import json

import pandas as pd
from django.conf import settings

from apps.cdr.grouping import group_events
from apps.cdr.stats import compute_user_stats, filter_frequent, summarize
from apps.cdr.utils import add_cdr_arguments, load_cdr_from_options
from apps.common.commands import OdflowCommand


class Command(OdflowCommand):
    help = "Per-user network inter-event times and the dataset-level distribution"

    def add_arguments(self, parser):
        add_cdr_arguments(parser)
        parser.add_argument(
            "--frequent-threshold-min",
            type=float,
            default=settings.ODFLOW["FREQUENT_THRESHOLD_MIN"],
        )
        parser.add_argument("--out", required=True, help="Per-user stats CSV")

    def handle(self, **options) -> None:
        parsed = load_cdr_from_options(options)
        stats = compute_user_stats(group_events(parsed.events))
        threshold = options["frequent_threshold_min"]
        frequent = filter_frequent(stats, threshold)

        pd.DataFrame(
            {
                "user_id": [s.user_id for s in stats],
                "n_events": [s.n_events for s in stats],
                "inter_event_mean_min": [s.inter_event_mean_min for s in stats],
                "t25_min": [s.quartiles_min[0] if s.quartiles_min else None for s in stats],
                "t50_min": [s.quartiles_min[1] if s.quartiles_min else None for s in stats],
                "t75_min": [s.quartiles_min[2] if s.quartiles_min else None for s in stats],
                "frequent": [int(s.user_id in frequent) for s in stats],
            }
        ).to_csv(options["out"], index=False, float_format="%.17g", lineterminator="\n")

        summary, diagnostics = summarize(stats, threshold)
        summary["parse"] = parsed.diagnostics.model_dump()
        summary["users"] = diagnostics.model_dump()
        self.stdout.write(json.dumps(summary, sort_keys=True, indent=2))
        self.success(f"✅ Stats for {len(stats):,} users written to {options['out']}")
