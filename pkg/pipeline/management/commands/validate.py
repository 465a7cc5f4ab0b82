from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Run the invariant suites on spectral tables; exits 1 when any check fails'
    command_name = 'validate'

    def add_command_arguments(self, parser):
        parser.add_argument('tables', nargs='+', help='spectral_ab.txt and spectral_AB.txt')
        parser.add_argument('--u0', help='Initial profile, enables the a/b parity suite')
        parser.add_argument('--g0')
        parser.add_argument('--g1')
        parser.add_argument('--g2')
        parser.add_argument('--x', type=float, default=0.5, help='x at which jump matrices are checked')
        parser.add_argument('--y', type=float, help='y at which jump matrices are checked (default L/2)')

    def run(self, service, options):
        return service.validate(
            options['tables'], options.get('u0'), self.boundary_paths(options), options['x'], options.get('y'),
        )
