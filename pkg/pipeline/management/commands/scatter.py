from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Tabulate a(lam), b(lam) of an initial profile on the contour and sector lines'
    command_name = 'scatter'

    def add_command_arguments(self, parser):
        parser.add_argument('u0', help='Initial profile file (x-tagged)')
        parser.add_argument('--oracle-check', action='store_true',
                            help='Compare against the matrix-exponential oracle for piecewise-constant data')
        parser.add_argument('--steps', help='Piecewise-constant description of the profile, for --oracle-check')
        parser.add_argument('--mode', choices=['spline', 'step'], default='spline',
                            help='Interpolation of the sampled profile')

    def run(self, service, options):
        return service.scatter(options['u0'], options['oracle_check'], options.get('steps'), options['mode'])
