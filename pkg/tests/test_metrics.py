import json
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from src.exceptions import AlignmentError, TooShortError
from src.flow import FlowStats, read_flow_profile
from src.metrics import (
    ClipEntry,
    ClipScore,
    StabilityReport,
    read_report,
    score_sequence,
    trajectory_error,
    write_report,
)
from src.natm import MatchResult
from src.synth import benchmark, generate
from src.video_io import make_sequence


def textured_frames(n, size=64, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8) for _ in range(n)]


def match_at(cx, cy, frame=0):
    return MatchResult(frame_index=frame, position=(0, 0), score=0.0, valid_fraction=1.0,
                       center=(cx, cy))


def stats(var_u, var_v, var_mag=0.0):
    return FlowStats(var_u=var_u, var_v=var_v, var_mag=var_mag, mean_u=0.0, mean_v=0.0)


class TestScoreSequence(unittest.TestCase):

    def test_still_sequence_scores_zero(self):
        img = textured_frames(1)[0]
        score = score_sequence(make_sequence([img] * 5, fps=30), block_size=16, search_radius=3)
        self.assertEqual(score.n_frames, 5)
        self.assertEqual(len(score.profile), 4)
        self.assertEqual(score.mean_variance, 0.0)
        self.assertEqual(score.frame_indices, [0, 1, 2, 3, 4])

    def test_frame_range(self):
        seq = make_sequence(textured_frames(6), fps=30, start_index=10)
        score = score_sequence(seq, 16, 2, frame_range=(11, 13))
        self.assertEqual(score.n_frames, 3)
        self.assertEqual(score.frame_indices, [11, 12, 13])

    def test_single_frame_is_too_short(self):
        with self.assertRaises(TooShortError) as ctx:
            score_sequence(make_sequence(textured_frames(1), fps=30))
        self.assertEqual(ctx.exception.stage, 'score')

    def test_means(self):
        score = ClipScore(n_frames=3, profile=[stats(1.0, 3.0, 2.0), stats(3.0, 5.0, 4.0)])
        self.assertEqual(score.mean_var_u, 2.0)
        self.assertEqual(score.mean_var_v, 4.0)
        self.assertEqual(score.mean_var_mag, 3.0)
        self.assertEqual(score.mean_variance, 6.0)
        self.assertEqual(score.to_dict()['frame_pairs'], 2)


class TestTrajectoryError(unittest.TestCase):

    def test_distances(self):
        truth = [(100.0, 100.0), (103.0, 104.0)]
        err = trajectory_error(truth, [match_at(100.0, 100.0), match_at(100.0, 100.0, 1)])
        self.assertEqual(err.mean, 2.5)
        self.assertEqual(err.max, 5.0)
        self.assertAlmostEqual(err.p95, 4.75)
        self.assertEqual(err.n_frames, 2)

    def test_perfect_tracking(self):
        truth = [(50.5, 60.5)] * 4
        err = trajectory_error(truth, [match_at(50.5, 60.5, t) for t in range(4)])
        self.assertEqual((err.mean, err.p95, err.max), (0.0, 0.0, 0.0))

    def test_length_mismatch(self):
        with self.assertRaises(AlignmentError):
            trajectory_error([(0.0, 0.0)] * 3, [match_at(0.0, 0.0)])

    def test_empty(self):
        self.assertEqual(trajectory_error([], []).n_frames, 0)


class TestJitterAmplitudeOrdering(unittest.TestCase):

    def test_input_variance_grows_with_amplitude(self):
        means = []
        for name in ('clean-static', 'sinusoid-10', 'sinusoid-20', 'sinusoid-40'):
            spec = benchmark(name, scale=0.2).model_copy(update={'n_frames': 60})
            seq = generate(spec, threads=2).sequence
            means.append(score_sequence(seq, block_size=16, search_radius=6).mean_var_mag)
        self.assertEqual(means[0], 0.0)
        self.assertEqual(means, sorted(means), means)
        self.assertGreater(means[-1], 0.0)


class TestReport(unittest.TestCase):

    def setUp(self):
        self.temp_dir = TemporaryDirectory()
        self.out = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def _report(self):
        stabilized = ClipScore(n_frames=3, profile=[stats(1.0, 1.0), stats(3.0, 1.0)],
                               frame_indices=[0, 1, 2])
        original = ClipScore(n_frames=3, profile=[stats(9.0, 9.0), stats(7.0, 9.0)],
                             frame_indices=[40, 41, 42])
        entry = ClipEntry(name='clip_0', stabilized=stabilized, start_frame=40, end_frame=42,
                          original=original, template_frame=41)
        return StabilityReport(per_clip=[entry], config_echo={'crop_size': 640}, notes=['n'])

    def test_empty_report_has_no_usable_clips(self):
        data = StabilityReport(notes=['No ODR detected in any frame']).to_dict()
        self.assertTrue(data['no_usable_clips'])
        self.assertEqual(data['per_clip'], [])
        self.assertIsNone(data['overall']['stabilized'])

    def test_overall_pools_frame_pairs(self):
        overall = self._report().overall()
        self.assertEqual(overall['clips'], 1)
        self.assertEqual(overall['stabilized']['mean_variance'], 3.0)
        self.assertEqual(overall['original']['mean_var_u'], 8.0)

    def test_write_report_and_profiles(self):
        write_report(self._report(), self.out / 'report.json')
        data = read_report(self.out / 'report.json')
        self.assertEqual(data['version'], 1)
        self.assertEqual(data['config_echo'], {'crop_size': 640})
        clip = data['per_clip'][0]
        self.assertEqual(clip['stabilized']['profile'], 'flow_profile_clip_0.csv')
        self.assertEqual(clip['original']['profile'], 'flow_profile_clip_0_original.csv')
        self.assertIsNone(clip['trajectory_error'])

        lines = (self.out / 'flow_profile_clip_0_original.csv').read_text().splitlines()
        self.assertTrue(lines[1].startswith('40-41,'))
        self.assertTrue((self.out / 'flow_profile_clip_0.csv').exists())

    def test_aggregates_match_profiles_read_back(self):
        frames = textured_frames(6, seed=11)
        seq = make_sequence(frames, fps=30)
        stabilized = score_sequence(seq, block_size=16, search_radius=4, frame_range=(0, 3))
        original = score_sequence(seq, block_size=16, search_radius=4)
        entry = ClipEntry(name='clip_0', stabilized=stabilized, start_frame=0, end_frame=5,
                          original=original)
        write_report(StabilityReport(per_clip=[entry]), self.out / 'report.json')
        data = read_report(self.out / 'report.json')

        pooled = {'stabilized': [], 'original': []}
        for kind in pooled:
            written = data['per_clip'][0][kind]
            rows = read_flow_profile(self.out / written['profile'])
            self.assertEqual(len(rows), written['frame_pairs'])
            for key in ('var_u', 'var_v', 'var_mag'):
                recomputed = sum(getattr(r, key) for r in rows) / len(rows)
                self.assertAlmostEqual(written[f'mean_{key}'], recomputed, delta=1e-9)
            pooled[kind].extend(rows)

        self.assertGreater(data['overall']['original']['mean_var_mag'], 0.0)
        for kind, rows in pooled.items():
            recomputed = sum(r.var_mag for r in rows) / len(rows)
            self.assertAlmostEqual(data['overall'][kind]['mean_var_mag'], recomputed, delta=1e-9)

    def test_report_bytes_are_stable(self):
        write_report(self._report(), self.out / 'a' / 'report.json')
        write_report(self._report(), self.out / 'b' / 'report.json')
        a = (self.out / 'a' / 'report.json').read_bytes()
        b = (self.out / 'b' / 'report.json').read_bytes()
        self.assertEqual(a, b)
        self.assertEqual(list(json.loads(a)), sorted(json.loads(a)))


if __name__ == '__main__':
    unittest.main()
