import logging

from django.core.management.base import BaseCommand, CommandError

from common.config import load_run_config
from common.exceptions import FokasError, InputError, InvariantFailure
from common.formats import format_report
from pipeline.services import PipelineService, RunLedger, ServiceResult

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """
    Base for the pipeline commands.

    Resolves the run configuration, records the run, prints the report as
    key=value lines and turns errors into exit codes 1 (failed check),
    2 (bad input) or 3 (numerical failure).
    """

    command_name = ""

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Flat key=value configuration file")
        parser.add_argument(
            "--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE",
            help="Override one configuration value (repeatable)",
        )
        parser.add_argument("--output-dir", help="Directory for every file written")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, service: PipelineService, options) -> ServiceResult:
        raise NotImplementedError

    @staticmethod
    def boundary_paths(options, required: bool = False):
        paths = [options.get(name) for name in ("g0", "g1", "g2")]
        if not any(paths) and not required:
            return None
        if not all(paths):
            raise InputError("boundary data needs all of --g0, --g1 and --g2")
        return paths

    def handle(self, *args, **options):
        try:
            overrides = list(options["overrides"])
            if options.get("output_dir"):
                overrides.append(f"output_dir={options['output_dir']}")
            config = load_run_config(options.get("config"), overrides)
            with RunLedger(self.command_name, config) as ledger:
                result = self.run(PipelineService(config), options)
                for path in result.outputs:
                    result.report[f"output.{path.name}"] = str(path)
                ledger.finish(result, 0 if result.passed else InvariantFailure.exit_code)
        except FokasError as e:
            logger.error(f"Error in {self.command_name}: {str(e)}")
            raise CommandError(str(e), returncode=e.exit_code)

        self.stdout.write(format_report(result.report), ending="")
        if not result.passed:
            raise CommandError(f"failed checks: {', '.join(result.failures)}", returncode=InvariantFailure.exit_code)
