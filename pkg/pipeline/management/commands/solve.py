from pipeline.management.base import PipelineCommand
from rhp.jumps import FAMILIES


class Command(PipelineCommand):
    help = 'Solve a Riemann-Hilbert problem on an (x, y) grid and reconstruct the field'
    command_name = 'solve'

    def add_command_arguments(self, parser):
        parser.add_argument('tables', nargs='+')
        parser.add_argument('--x', type=float, nargs='+', default=[0.0], help='Uniform x grid starting at 0')
        parser.add_argument('--y', type=float, nargs='+', default=[0.0], help='Uniform y grid starting at 0')
        parser.add_argument('--problem', choices=FAMILIES, default='principal')
        parser.add_argument('--fixture-residues', help='Residue data file for the chosen problem')
        parser.add_argument('--reference', help='Profile to compare the reconstruction against')
        parser.add_argument('--g0')
        parser.add_argument('--g1')
        parser.add_argument('--g2')

    def run(self, service, options):
        return service.solve(
            options['tables'], options['x'], options['y'], options['problem'],
            options.get('fixture_residues'), options.get('reference'), self.boundary_paths(options),
        )
