"""
Management command to score a decoded cloud against its ground truth.
Run with: python manage.py eval decoded.json cloud.json
"""
from django.core.management.base import BaseCommand

from cli.services import fail, read_json_file, write_output
from evalgen.services import GroundTruth, evaluate
from sizing.services import CloudData


class Command(BaseCommand):
    help = 'Compare decoded word data with ground truth and print an RMSE/recovery report'

    def add_arguments(self, parser):
        parser.add_argument('decoded', help='JSON written by the decode command')
        parser.add_argument('truth', help='Ground-truth JSON written by the synth command')
        parser.add_argument('--out', help='Report file (default: stdout)')

    def handle(self, *args, **options):
        try:
            decoded = CloudData.from_dict(read_json_file(options['decoded']))
            truth = GroundTruth.from_dict(read_json_file(options['truth']))
            report = evaluate(decoded, truth)
            write_output(report.to_json() + "\n", options['out'], self.stdout)
        except Exception as e:
            raise fail(self.stderr, e) from e
