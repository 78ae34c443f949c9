import io
import json
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import patch

from config import config
from src.cli import create_parser, parse_config
from src.exceptions import ConfigurationError, WriteError
from src.main import main


def run_cli(argv):
    """``main(argv)`` with logging setup stubbed.

    Returns the exit code, stdout and the last stderr line (the error JSON).
    """
    with patch('src.main.setup_logging'), \
            patch('sys.stdout', new_callable=io.StringIO) as out, \
            patch('sys.stderr', new_callable=io.StringIO) as err:
        code = main(argv)
    lines = err.getvalue().strip().splitlines()
    return code, out.getvalue(), lines[-1] if lines else ''


class TestParseConfig(unittest.TestCase):

    def setUp(self):
        self.temp_dir = TemporaryDirectory()
        self.root = Path(self.temp_dir.name)
        self.parser = create_parser()

    def tearDown(self):
        self.temp_dir.cleanup()

    def _config_file(self, data) -> str:
        path = self.root / 'run.json'
        path.write_text(json.dumps(data), encoding='utf-8')
        return str(path)

    def test_defaults_come_from_settings(self):
        cfg = parse_config(self.parser.parse_args(['run', '-i', 'in', '-o', 'out']))
        self.assertEqual(cfg.crop_size, config.CROP_SIZE)
        self.assertEqual(cfg.window, config.WINDOW_FRAMES)
        self.assertEqual(cfg.specular_masking, config.SPECULAR_MASKING)
        self.assertEqual((cfg.input, cfg.output), ('in', 'out'))

    def test_flags_override_config_file(self):
        path = self._config_file({'crop_size': 320, 'window': 9})
        args = self.parser.parse_args(['run', '-i', 'in', '-o', 'out', '--config', path,
                                       '--crop-size', '256', '--no-specular-masking'])
        cfg = parse_config(args)
        self.assertEqual(cfg.crop_size, 256)
        self.assertEqual(cfg.window, 9)
        self.assertFalse(cfg.specular_masking)

    def test_invalid_values(self):
        cases = [
            ('zero crop', ['--crop-size', '0'], None),
            ('even kernel', ['--specular-kernel', '4'], None),
            ('file mode without detections', ['--detector', 'file'], None),
            ('unknown key in file', [], {'crop': 640}),
            ('file is not an object', [], [1, 2]),
        ]
        for label, flags, file_data in cases:
            with self.subTest(label):
                argv = ['run', '-i', 'in', '-o', 'out'] + flags
                if file_data is not None:
                    argv += ['--config', self._config_file(file_data)]
                with self.assertRaises(ConfigurationError):
                    parse_config(self.parser.parse_args(argv))

    def test_missing_config_file(self):
        args = self.parser.parse_args(['run', '--config', str(self.root / 'none.json')])
        with self.assertRaises(ConfigurationError):
            parse_config(args)


class TestMain(unittest.TestCase):

    def setUp(self):
        self.temp_dir = TemporaryDirectory()
        self.root = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_bad_flag_value_exits_with_usage_error(self):
        code, _, err = run_cli(['run', '-i', 'in', '-o', str(self.root), '--crop-size', '0'])
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)['error'], 'ConfigurationError')

    def test_missing_output(self):
        code, _, err = run_cli(['run', '-i', 'in'])
        self.assertEqual(code, 2)
        self.assertIn('--output', json.loads(err)['message'])

    def test_argparse_errors_exit_2(self):
        with patch('sys.stderr', new_callable=io.StringIO), self.assertRaises(SystemExit) as ctx:
            create_parser().parse_args(['run', '--crop-size', 'wide'])
        self.assertEqual(ctx.exception.code, 2)

    def test_missing_input_is_a_runtime_failure(self):
        code, _, err = run_cli(['run', '-i', str(self.root / 'missing'), '-o', str(self.root / 'o')])
        self.assertEqual(code, 1)
        error = json.loads(err)
        self.assertEqual(error['error'], 'InputFormatError')
        self.assertEqual(error['stage'], 'load')

    def test_list_benchmarks(self):
        code, out, _ = run_cli(['synth', '--list-benchmarks'])
        self.assertEqual(code, 0)
        self.assertIn('specular-on-odr', out)

    def test_synth_requires_a_source(self):
        code, _, _ = run_cli(['synth', '-o', str(self.root)])
        self.assertEqual(code, 2)

    def test_synth_then_detect_and_localize(self):
        video = self.root / 'video'
        code, _, _ = run_cli(['synth', '--benchmark', 'clean-static', '--scale', '0.1',
                              '-o', str(video), '--threads', '2'])
        self.assertEqual(code, 0)
        self.assertTrue((video / 'truth.csv').exists())

        out = self.root / 'out'
        code, out_text, _ = run_cli(['detect', '-i', str(video), '-o', str(out)])
        self.assertEqual(code, 0)
        records = json.loads((out / 'detections.json').read_text(encoding='utf-8'))
        self.assertEqual(len(records), 150)
        self.assertIn('150/150', out_text)

        code, _, _ = run_cli(['localize', '-i', str(video), '-o', str(out)])
        self.assertEqual(code, 0)
        clips = json.loads((out / 'clips.json').read_text(encoding='utf-8'))
        self.assertEqual(len(clips['clips']), 1)
        self.assertTrue((out / 'trajectory.csv').exists())

    def test_failed_clip_write_exits_1(self):
        video = self.root / 'video'
        code, _, _ = run_cli(['synth', '--benchmark', 'clean-static', '--scale', '0.1',
                              '-o', str(video)])
        self.assertEqual(code, 0)
        with patch('src.pipeline.save_sequence', side_effect=WriteError('disk full')):
            code, _, err = run_cli(['run', '-i', str(video), '-o', str(self.root / 'out')])
        self.assertEqual(code, 1)
        error = json.loads(err)
        self.assertEqual(error['error'], 'WriteError')
        self.assertEqual(error['stage'], 'stabilize')


if __name__ == '__main__':
    unittest.main()
