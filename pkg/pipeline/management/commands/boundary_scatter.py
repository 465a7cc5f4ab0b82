from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Tabulate A(lam), B(lam) of boundary data g0, g1, g2'
    command_name = 'boundary_scatter'

    def add_command_arguments(self, parser):
        parser.add_argument('g0', help='Dirichlet trace (y-tagged)')
        parser.add_argument('g1', help='First x-derivative trace')
        parser.add_argument('g2', help='Second x-derivative trace')
        parser.add_argument('--L', type=float, dest='L', help='Interval length; must match the data grid')
        parser.add_argument('--mode', choices=['spline', 'step'], default='spline')

    def run(self, service, options):
        return service.boundary_scatter([options['g0'], options['g1'], options['g2']], options.get('L'), options['mode'])
