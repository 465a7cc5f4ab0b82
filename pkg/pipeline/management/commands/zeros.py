from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Locate zeros of a, alpha and A and write the residue data of every problem'
    command_name = 'zeros'

    def add_command_arguments(self, parser):
        parser.add_argument('tables', nargs='+')
        parser.add_argument('--u0', required=True)
        parser.add_argument('--g0', required=True)
        parser.add_argument('--g1', required=True)
        parser.add_argument('--g2', required=True)

    def run(self, service, options):
        return service.zeros(options['tables'], options['u0'], self.boundary_paths(options, required=True))
