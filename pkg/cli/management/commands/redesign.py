"""
Management command to redraw decoded word data as a bar chart.
Run with: python manage.py redesign decoded.json --out chart.svg
"""
from django.core.management.base import BaseCommand

from cli.services import fail, read_json_file, render_bar_chart, write_output
from sizing.services import CloudData


class Command(BaseCommand):
    help = 'Render decoded word data as a static SVG bar chart sorted by weight'

    def add_arguments(self, parser):
        parser.add_argument('decoded', help='JSON written by the decode command')
        parser.add_argument('--out', help='SVG file (default: stdout)')
        parser.add_argument('--title', default='Decoded word cloud', help='Chart title')

    def handle(self, *args, **options):
        try:
            cloud = CloudData.from_dict(read_json_file(options['decoded']))
            write_output(render_bar_chart(cloud, options['title']), options['out'], self.stdout)
        except Exception as e:
            raise fail(self.stderr, e) from e

        if options['out']:
            self.stdout.write(self.style.SUCCESS(f'Bar chart with {len(cloud.words)} bars written to {options["out"]}'))
