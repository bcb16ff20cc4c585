from django.conf import settings

from apps.common.commands import OdflowCommand
from apps.common.utils import parse_granularity
from apps.synth.generate import generate
from apps.synth.schemas import WorldSpec
from apps.synth.utils import write_world


class Command(OdflowCommand):
    help = "Generate a synthetic city with CDR and smart-card logs and its exact ground truth"

    def add_arguments(self, parser):
        parser.add_argument("--spec", help="WorldSpec JSON; defaults apply to missing keys")
        parser.add_argument("--out-dir", required=True)
        parser.add_argument("--seed", type=int, help="Overrides the seed in --spec")
        parser.add_argument("--granularity", default="1h", help="Window length of the ground-truth matrices")
        parser.add_argument("--workers", type=int, default=settings.ODFLOW["WORKERS"])

    def handle(self, **options) -> None:
        spec = WorldSpec.load(options["spec"]) if options["spec"] else WorldSpec()
        if options["seed"] is not None:
            spec = spec.model_copy(update={"seed": options["seed"]})
        world = generate(spec, options["workers"], parse_granularity(options["granularity"]))
        write_world(world, options["out_dir"])
        self.success(
            f"✅ {world.diagnostics.n_agents:,} agents, {world.diagnostics.n_events:,} events and "
            f"{world.diagnostics.n_legs:,} legs written to {options['out_dir']}"
        )
