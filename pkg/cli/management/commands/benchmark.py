"""
Management command to measure decoder accuracy on seeded synthetic clouds.
Run with: python manage.py benchmark --clouds 10 --words 20 --check
"""
import json

from django.core.management.base import BaseCommand, CommandError

from cli.services import EXIT_PROCESSING, add_pipeline_arguments, fail, resolve_config, write_output
from evalgen.services import LayoutConfig, run_benchmark


class Command(BaseCommand):
    help = 'Synthesize, decode and score a seeded corpus; report mean RMSE, recovery and rank agreement'

    def add_arguments(self, parser):
        add_pipeline_arguments(parser)
        parser.add_argument('--clouds', type=int, default=10, help='Number of clouds (default: 10)')
        parser.add_argument('--words', type=int, default=20, help='Words per cloud (default: 20)')
        parser.add_argument('--seed', type=int, default=0, help='First cloud seed (default: 0)')
        parser.add_argument('--min-size', type=int, default=12, help='Smallest font size (default: 12)')
        parser.add_argument('--max-size', type=int, default=72, help='Largest font size (default: 72)')
        parser.add_argument('--p-vertical', type=float, default=0.2, help='Share of rotated words (default: 0.2)')
        parser.add_argument('--out', help='Report file (default: stdout)')
        parser.add_argument(
            '--check',
            action='store_true',
            help='Exit with code 3 when accuracy thresholds are not met',
        )

    def handle(self, *args, **options):
        try:
            config = resolve_config(options)
            report = run_benchmark(
                clouds=options['clouds'],
                words=options['words'],
                seed=options['seed'],
                layout=LayoutConfig(p_vertical=options['p_vertical'], font=config.font),
                config=config,
                min_size=options['min_size'],
                max_size=options['max_size'],
            )
            write_output(json.dumps(report.to_dict(), indent=2) + "\n", options['out'], self.stdout)
        except Exception as e:
            raise fail(self.stderr, e) from e

        failures = report.failures() if options['check'] else []
        if failures:
            message = f"Thresholds not met: {', '.join(failures)}"
            self.stderr.write(json.dumps({"error": "threshold", "message": message, "exit_code": EXIT_PROCESSING}))
            raise CommandError(message, returncode=EXIT_PROCESSING)
        if options['check']:
            self.stdout.write(self.style.SUCCESS('All accuracy thresholds met'))
