from common.exceptions import InputError
from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Evolve initial data by finite differences and write the field'
    command_name = 'oracle'

    def add_command_arguments(self, parser):
        parser.add_argument('u0', nargs='?', help='Initial profile (not needed with --manufactured)')
        parser.add_argument('--manufactured', action='store_true',
                            help='Run the forced problem with a known solution and print a convergence table')
        parser.add_argument('--levels', type=int, default=3, help='Refinement levels for --manufactured')

    def run(self, service, options):
        if not options['manufactured'] and not options.get('u0'):
            raise InputError('an initial profile is required unless --manufactured is given')
        return service.oracle(options.get('u0'), options['manufactured'], options['levels'])
