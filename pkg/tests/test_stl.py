import csv
import tempfile
import unittest
from pathlib import Path

from hypothesis import given, settings, strategies as st

from src.detection import BoundingBox, DetectionTimeline
from src.exceptions import ValidationError
from src.stl import (
    ClipSegment,
    build_trajectory,
    filter_jitters,
    segment_clips,
    write_trajectory_csv,
)


def timeline_from(centers, side=20):
    """Timeline whose box centers are exactly ``centers`` (None = undetected)."""
    timeline = DetectionTimeline(n_frames=len(centers))
    for t, c in enumerate(centers):
        if c is not None:
            timeline.offer(t, BoundingBox(int(c[0]) - side // 2, int(c[1]) - side // 2, side, side))
    return timeline


def detected_runs(n_frames, runs):
    centers = [None] * n_frames
    for start, end in runs:
        for t in range(start, end + 1):
            centers[t] = (100, 100)
    return timeline_from(centers)


timelines = st.lists(
    st.one_of(st.none(), st.tuples(st.integers(20, 400), st.integers(20, 400))),
    min_size=1, max_size=60,
)


class TestBuildTrajectory(unittest.TestCase):

    def test_empty_timeline_is_all_gaps(self):
        traj = build_trajectory(DetectionTimeline(n_frames=5))
        self.assertEqual(traj.points, [None] * 5)
        self.assertEqual(traj.gradient, [None] * 5)
        self.assertEqual(traj.variance_series, [None] * 5)

    def test_three_four_five(self):
        traj = build_trajectory(timeline_from([(100, 100), (103, 104)]))
        self.assertIsNone(traj.gradient[0])
        self.assertEqual(traj.gradient[1], 5.0)

    def test_constant_centers(self):
        traj = build_trajectory(timeline_from([(200, 150)] * 50), window=15)
        self.assertTrue(all(g == 0.0 for g in traj.gradient[1:]))
        self.assertTrue(all(v == 0.0 for v in traj.variance_series[2:]))
        self.assertIsNone(traj.variance_series[1])

    def test_gaps_are_not_bridged(self):
        traj = build_trajectory(timeline_from([(100, 100), None, (110, 100), (113, 104)]))
        self.assertIsNone(traj.gradient[1])
        self.assertIsNone(traj.gradient[2])
        self.assertEqual(traj.gradient[3], 5.0)

    def test_rolling_variance_window(self):
        # gradients 0, 2, 0, 2 ... ; window 2 -> variance of (0, 2) = 1
        centers = [(100 + 2 * (t // 2), 100) for t in range(10)]
        traj = build_trajectory(timeline_from(centers), window=2)
        self.assertEqual(traj.variance_series[3], 1.0)

    def test_deviation_from_first_detection(self):
        traj = build_trajectory(timeline_from([None, (100, 100), (104, 97)]))
        self.assertIsNone(traj.deviation[0])
        self.assertEqual(traj.deviation[1], (0.0, 0.0))
        self.assertEqual(traj.deviation[2], (4.0, -3.0))

    def test_window_must_be_at_least_two(self):
        with self.assertRaises(ValidationError):
            build_trajectory(DetectionTimeline(n_frames=3), window=1)

    @settings(max_examples=50, deadline=None)
    @given(timelines, st.integers(-15, 15), st.integers(-15, 15))
    def test_gradient_is_translation_invariant(self, centers, dx, dy):
        moved = [None if c is None else (c[0] + dx, c[1] + dy) for c in centers]
        a = build_trajectory(timeline_from(centers))
        b = build_trajectory(timeline_from(moved))
        self.assertEqual(a.gradient, b.gradient)

    @settings(max_examples=50, deadline=None)
    @given(timelines)
    def test_variance_is_nonnegative(self, centers):
        traj = build_trajectory(timeline_from(centers), window=5)
        self.assertTrue(all(v >= 0 for v in traj.variance_series if v is not None))


class TestFilterJitters(unittest.TestCase):

    def test_constant_trajectory(self):
        self.assertEqual(filter_jitters(build_trajectory(timeline_from([(50, 50)] * 20)), 50), set())

    def test_single_jump_removes_both_endpoints(self):
        centers = [(100, 100)] * 10 + [(300, 100)] * 10
        self.assertEqual(filter_jitters(build_trajectory(timeline_from(centers)), 50), {9, 10})

    def test_smooth_drift(self):
        centers = [(100 + 2 * t, 100) for t in range(40)]
        self.assertEqual(filter_jitters(build_trajectory(timeline_from(centers)), 50), set())

    def test_threshold_must_be_positive(self):
        with self.assertRaises(ValidationError):
            filter_jitters(build_trajectory(timeline_from([(1, 1)])), 0)

    @settings(max_examples=50, deadline=None)
    @given(timelines, st.floats(1, 300), st.floats(0, 300))
    def test_monotone_in_threshold(self, centers, low, extra):
        traj = build_trajectory(timeline_from(centers))
        self.assertLessEqual(filter_jitters(traj, low + extra), filter_jitters(traj, low))


class TestSegmentClips(unittest.TestCase):

    def test_single_run(self):
        clips = segment_clips(detected_runs(100, [(0, 99)]), set(), fps=30, min_seconds=1.0)
        self.assertEqual(clips, [ClipSegment(0, 99, 30)])

    def test_short_run_is_dropped(self):
        clips = segment_clips(detected_runs(101, [(0, 20), (40, 100)]), set(), fps=30, min_seconds=1.0)
        self.assertEqual(clips, [ClipSegment(40, 100, 30)])

    def test_nothing_detected(self):
        self.assertEqual(segment_clips(DetectionTimeline(n_frames=50), set(), 30, 1.0), [])

    def test_removed_frames_split_runs(self):
        clips = segment_clips(detected_runs(100, [(0, 99)]), {49, 50}, fps=30, min_seconds=1.0)
        self.assertEqual(clips, [ClipSegment(0, 48, 30), ClipSegment(51, 99, 30)])

    def test_minimum_rounds_up(self):
        # 1.5 s at 29 fps needs 44 frames (43.5 rounded up)
        timeline = detected_runs(44, [(0, 43)])
        self.assertEqual(len(segment_clips(timeline, set(), 29, 1.5)), 1)
        self.assertEqual(segment_clips(detected_runs(43, [(0, 42)]), set(), 29, 1.5), [])

    def test_exact_minimum_survives_float_noise(self):
        # 2.2 * 25 is not exactly 55.0 in binary
        clips = segment_clips(detected_runs(55, [(0, 54)]), set(), fps=25, min_seconds=2.2)
        self.assertEqual(clips, [ClipSegment(0, 54, 25)])
        self.assertEqual(segment_clips(detected_runs(54, [(0, 53)]), set(), 25, 2.2), [])

    def test_clip_length(self):
        clip = ClipSegment(10, 54, 30)
        self.assertEqual(clip.n_frames, 45)
        self.assertEqual(clip.length_seconds, 1.5)
        with self.assertRaises(ValidationError):
            ClipSegment(5, 4, 30)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.booleans(), min_size=1, max_size=80),
           st.sets(st.integers(0, 79)),
           st.integers(1, 10))
    def test_segments_are_exactly_the_long_kept_runs(self, detected, removed, min_frames):
        timeline = timeline_from([(50, 50) if d else None for d in detected])
        clips = segment_clips(timeline, removed, fps=1.0, min_seconds=float(min_frames))

        covered = []
        for a, b in zip(clips, clips[1:]):
            self.assertLess(a.end_frame + 1, b.start_frame)
        for clip in clips:
            self.assertGreaterEqual(clip.n_frames, min_frames)
            for t in clip.frames():
                self.assertTrue(timeline.is_detected(t))
                self.assertNotIn(t, removed)
                covered.append(t)

        # every kept frame outside a clip belongs to a short run
        kept = [timeline.is_detected(t) and t not in removed for t in range(len(detected))]
        for t, ok in enumerate(kept):
            if ok and t not in covered:
                lo = t
                while lo > 0 and kept[lo - 1]:
                    lo -= 1
                hi = t
                while hi + 1 < len(kept) and kept[hi + 1]:
                    hi += 1
                self.assertLess(hi - lo + 1, min_frames)


class TestTrajectoryCsv(unittest.TestCase):

    def test_columns_and_empty_cells(self):
        traj = build_trajectory(timeline_from([(100, 100), None, (110, 100), (113, 104)]))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'trajectory.csv')
            write_trajectory_csv(traj, {3}, path)
            with open(path, newline='') as fh:
                rows = list(csv.DictReader(fh))
        self.assertEqual(list(rows[0]), ['frame', 'detected', 'cx', 'cy', 'gradient',
                                         'rolling_variance', 'removed'])
        self.assertEqual(rows[1]['detected'], '0')
        self.assertEqual(rows[1]['cx'], '')
        self.assertEqual(rows[3]['gradient'], '5.0')
        self.assertEqual(rows[3]['removed'], '1')
        self.assertEqual(rows[0]['cx'], '100.0')


if __name__ == '__main__':
    unittest.main()
