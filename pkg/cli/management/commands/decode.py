"""
Management command to decode word cloud images into (word, weight) data.
Run with: python manage.py decode cloud.png [--format csv] [--out data.json]
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from WordCloudDJ.config import OUTPUT_FORMATS
from cli.services import (
    DecodeJob,
    add_pipeline_arguments,
    decode_file,
    fail,
    init_worker,
    resolve_config,
    write_output,
)

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Decode word cloud PNG images into JSON or CSV word data'

    def add_arguments(self, parser):
        parser.add_argument('images', nargs='*', help='PNG files to decode')
        add_pipeline_arguments(parser)
        parser.add_argument(
            '--format',
            dest='output_format',
            choices=OUTPUT_FORMATS,
            help='Output format (default: json)',
        )
        parser.add_argument(
            '--out',
            help='Output file; a directory when several images are given (default: stdout)',
        )
        parser.add_argument(
            '--debug',
            metavar='DIR',
            help='Write component maps and sweep traces into this directory',
        )
        parser.add_argument(
            '--jobs',
            type=int,
            default=1,
            help='Decode several images in parallel worker processes (default: 1)',
        )
        parser.add_argument(
            '--dump-config',
            action='store_true',
            help='Print the effective config as JSON and exit',
        )

    def handle(self, *args, **options):
        try:
            config = resolve_config(options, output_format=options['output_format'])
            if options['dump_config']:
                write_output(config.to_json() + "\n", options['out'], self.stdout)
                return
            if not options['images']:
                raise ValidationError("No images given", code="invalid")
            if options['jobs'] < 1:
                raise ValidationError("--jobs must be >= 1", code="invalid")

            jobs = [DecodeJob(path, config, options['debug']) for path in options['images']]
            outputs = self._run(jobs, options['jobs'])
            self._write(jobs, outputs, options['out'], config.output_format)
        except Exception as e:
            raise fail(self.stderr, e) from e

        if options['out']:
            self.stdout.write(self.style.SUCCESS(f'Decoded {len(jobs)} image(s) into {options["out"]}'))

    def _run(self, jobs, workers):
        if workers == 1 or len(jobs) == 1:
            return [decode_file(job) for job in jobs]
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), initializer=init_worker) as pool:
            # map keeps input order
            return list(pool.map(decode_file, jobs))

    def _write(self, jobs, outputs, out, output_format):
        if len(jobs) == 1:
            write_output(outputs[0], out, self.stdout)
            return
        if not out:
            for output in outputs:
                write_output(output, None, self.stdout)
            return
        folder = Path(out)
        folder.mkdir(parents=True, exist_ok=True)
        for job, output in zip(jobs, outputs):
            target = folder / f"{Path(job.path).stem}.{output_format}"
            write_output(output, str(target), self.stdout)
            logger.info(f"Wrote {target}")
