"""
Management command to render a synthetic word cloud with its ground truth.
Run with: python manage.py synth data:48 cloud:30 --out fixtures/cloud --seed 1
"""
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from cli.services import fail, read_json_file
from evalgen.services import LayoutConfig, random_entries, save_cloud, synthesize_cloud
from glyph.services import DEFAULT_ALPHABET, DEFAULT_FONT


def parse_inline(spec: str):
    text, sep, size = spec.rpartition(":")
    if not sep or not text:
        raise ValidationError(f"Entry '{spec}' must look like word:size", code="invalid")
    try:
        return text, float(size)
    except ValueError as e:
        raise ValidationError(f"Entry '{spec}' has a non-numeric size", code="invalid") from e


def parse_entries_file(path):
    data = read_json_file(path)
    if not isinstance(data, list):
        raise ValidationError(f"{path} must hold a list of entries", code="invalid")
    entries = []
    for item in data:
        if isinstance(item, dict) and "text" in item and "size" in item:
            entries.append((str(item["text"]), float(item["size"])))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            entries.append((str(item[0]), float(item[1])))
        else:
            raise ValidationError(f"Malformed entry {item!r}", code="invalid")
    return entries


class Command(BaseCommand):
    help = 'Render a synthetic word cloud to <prefix>.png with ground truth in <prefix>.json'

    def add_arguments(self, parser):
        parser.add_argument('entries', nargs='*', help='Inline entries as word:size')
        parser.add_argument('--entries-file', help='JSON list of {"text", "size"} objects')
        parser.add_argument(
            '--random',
            type=int,
            metavar='N',
            help='Draw N random vocabulary words with sizes in [--min-size, --max-size]',
        )
        parser.add_argument('--min-size', type=int, default=12, help='Smallest random font size (default: 12)')
        parser.add_argument('--max-size', type=int, default=72, help='Largest random font size (default: 72)')
        parser.add_argument('--out', required=True, help='Output prefix')
        parser.add_argument('--seed', type=int, default=0, help='Layout and color seed (default: 0)')
        parser.add_argument('--width', type=int, default=800, help='Image width (default: 800)')
        parser.add_argument('--height', type=int, default=600, help='Image height (default: 600)')
        parser.add_argument(
            '--p-vertical',
            type=float,
            default=0.2,
            help='Probability a word is rotated (default: 0.2)',
        )
        parser.add_argument('--font', default=DEFAULT_FONT, help="Font path or 'default'")

    def handle(self, *args, **options):
        try:
            entries = [parse_inline(spec) for spec in options['entries']]
            if options['entries_file']:
                entries.extend(parse_entries_file(options['entries_file']))
            if options['random']:
                entries.extend(random_entries(
                    options['seed'], options['random'], options['min_size'], options['max_size'],
                ))
            layout = LayoutConfig(
                width=options['width'],
                height=options['height'],
                p_vertical=options['p_vertical'],
                font=options['font'],
            )
            image, truth = synthesize_cloud(entries, layout, seed=options['seed'], alphabet=DEFAULT_ALPHABET)
            png_path, json_path = save_cloud(image, truth, options['out'])
        except Exception as e:
            raise fail(self.stderr, e) from e

        self.stdout.write(
            self.style.SUCCESS(f'Wrote {png_path} and {json_path} ({len(truth.entries)} words)')
        )
