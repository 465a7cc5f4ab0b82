from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Extract u0, g0, g1, g2 and the y = L slice from an oracle field'
    command_name = 'traces'

    def add_command_arguments(self, parser):
        parser.add_argument('field', help='Field file written by the oracle command')

    def run(self, service, options):
        return service.traces(options['field'])
