from apps.cdr.trips import read_trips
from apps.common.commands import OdflowCommand
from apps.common.exceptions import ValidationError
from apps.common.utils import write_json
from apps.od.files import read_matrices
from apps.synth.compare import compare_series, trip_recall
from apps.synth.utils import read_truth_trips


class Command(OdflowCommand):
    help = "Error metrics of inferred OD matrices (and trips) against ground truth"

    def add_arguments(self, parser):
        parser.add_argument("--inferred", required=True, help="Inferred OD matrices")
        parser.add_argument("--truth", required=True, help="Ground-truth OD matrices, e.g. truth/frequent_overall.csv")
        parser.add_argument("--trips", help="Extracted trips; enables recall by displacement band")
        parser.add_argument("--truth-trips", help="truth/trips.csv written by synth")
        parser.add_argument("--all-agents", action="store_true", help="Recall over every agent, not frequent ones only")
        parser.add_argument("--out", help="Comparison JSON")

    def handle(self, **options) -> None:
        if bool(options["trips"]) != bool(options["truth_trips"]):
            raise ValidationError("trips", "--trips and --truth-trips go together")
        report = compare_series(read_matrices(options["inferred"]), read_matrices(options["truth"]))
        if options["trips"]:
            report.recall = trip_recall(
                read_trips(options["trips"]),
                read_truth_trips(options["truth_trips"]),
                frequent_only=not options["all_agents"],
            )
        if options["out"]:
            write_json(options["out"], report.model_dump())
        relative = "n/a" if report.relative_error is None else f"{report.relative_error:.4f}"
        self.success(
            f"✅ relative error {relative}, cellwise L1 {report.cellwise_l1:.6g}, "
            f"{report.n_windows_exact}/{report.n_windows} windows exact"
        )
