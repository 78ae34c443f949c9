import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
from hypothesis import given, settings, strategies as st

from src.exceptions import (
    CorruptInputError,
    EmptyInputError,
    InputFormatError,
    ValidationError,
)
from src.video_io import (
    Frame,
    VideoSequence,
    channel,
    find_truth_file,
    load_sequence,
    make_sequence,
    save_sequence,
    to_grayscale,
)


def _random_images(n, h=12, w=16, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8) for _ in range(n)]


def _write_y4m(path: Path, planes, width, height, header_extra=b''):
    with open(path, 'wb') as fh:
        fh.write(b'YUV4MPEG2 W%d H%d F30:1 Ip A1:1 C444' % (width, height) + header_extra + b'\n')
        for y, u, v in planes:
            fh.write(b'FRAME\n')
            fh.write(y.tobytes() + u.tobytes() + v.tobytes())


class TestGrayscale(unittest.TestCase):

    def test_pure_colors(self):
        px = np.zeros((1, 4, 3), dtype=np.uint8)
        px[0, 0] = (255, 255, 255)
        px[0, 1] = (255, 0, 0)
        px[0, 2] = (0, 255, 0)
        px[0, 3] = (0, 0, 255)
        gray = to_grayscale(px)
        # 0.299*255 = 76.245, 0.587*255 = 149.685, 0.114*255 = 29.07
        self.assertEqual(gray.tolist(), [[255, 76, 150, 29]])
        self.assertEqual(gray.dtype, np.uint8)

    def test_rounds_to_nearest(self):
        # 0.299*10 + 0.587*10 + 0.114*15 = 10.57 -> 11; (1, 0, 3) -> 0.641 -> 1
        px = np.array([[[10, 10, 15], [1, 0, 3]]], dtype=np.uint8)
        self.assertEqual(to_grayscale(px).tolist(), [[11, 1]])

    @given(st.integers(0, 255))
    def test_gray_input_is_fixed_point(self, value):
        px = np.full((2, 2, 3), value, dtype=np.uint8)
        self.assertTrue(np.all(to_grayscale(px) == value))

    def test_channel_extracts_plane(self):
        frame = Frame(index=0, pixels=_random_images(1)[0])
        self.assertTrue(np.array_equal(channel(frame, 'G'), frame.pixels[..., 1]))
        self.assertTrue(np.array_equal(channel(frame, 'b'), frame.pixels[..., 2]))
        with self.assertRaises(ValidationError):
            channel(frame, 'X')


class TestSequence(unittest.TestCase):

    def test_rejects_bad_pixels(self):
        with self.assertRaises(ValidationError):
            Frame(index=0, pixels=np.zeros((4, 4), dtype=np.uint8))
        with self.assertRaises(ValidationError):
            Frame(index=0, pixels=np.zeros((4, 4, 3), dtype=np.float32))
        with self.assertRaises(ValidationError):
            Frame(index=-1, pixels=np.zeros((4, 4, 3), dtype=np.uint8))

    def test_indices_must_increase(self):
        imgs = _random_images(2)
        with self.assertRaises(CorruptInputError):
            VideoSequence(frames=[Frame(1, imgs[0]), Frame(1, imgs[1])], fps=30)

    def test_sizes_must_match(self):
        a = np.zeros((4, 4, 3), dtype=np.uint8)
        b = np.zeros((4, 5, 3), dtype=np.uint8)
        with self.assertRaises(CorruptInputError):
            VideoSequence(frames=[Frame(0, a), Frame(1, b)], fps=30)

    def test_get_uses_frame_index(self):
        seq = make_sequence(_random_images(3), fps=25, start_index=10)
        self.assertEqual(seq.indices, [10, 11, 12])
        self.assertIs(seq.get(11), seq.frames[1])
        with self.assertRaises(ValidationError):
            seq.get(0)

    def test_slice_is_inclusive(self):
        seq = make_sequence(_random_images(6), fps=25)
        self.assertEqual(seq.slice(2, 4).indices, [2, 3, 4])
        self.assertEqual(seq.slice(2, 4).fps, 25)


class TestDirectoryFormat(unittest.TestCase):

    def test_save_load_is_bit_exact(self):
        seq = make_sequence(_random_images(4, seed=3), fps=29.97, source_id='eye-left')
        with tempfile.TemporaryDirectory() as tmp:
            save_sequence(seq, tmp)
            loaded = load_sequence(tmp)
        self.assertEqual(loaded.indices, seq.indices)
        self.assertEqual(loaded.fps, 29.97)
        self.assertEqual(loaded.source_id, 'eye-left')
        for a, b in zip(seq.frames, loaded.frames):
            self.assertTrue(np.array_equal(a.pixels, b.pixels))

    def test_save_replaces_stale_frames(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_sequence(make_sequence(_random_images(5), fps=30), tmp)
            save_sequence(make_sequence(_random_images(2), fps=30), tmp)
            self.assertEqual(len(load_sequence(tmp)), 2)

    def test_missing_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(InputFormatError):
                load_sequence(tmp)

    def test_manifest_without_frames(self):
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, 'meta.json').write_text(json.dumps({'fps': 30, 'width': 4, 'height': 4}))
            with self.assertRaises(EmptyInputError):
                load_sequence(tmp)

    def test_size_mismatch_with_manifest(self):
        seq = make_sequence(_random_images(2), fps=30)
        with tempfile.TemporaryDirectory() as tmp:
            save_sequence(seq, tmp)
            Path(tmp, 'meta.json').write_text(json.dumps({'fps': 30, 'width': 99, 'height': 12}))
            with self.assertRaises(CorruptInputError):
                load_sequence(tmp)

    def test_undecodable_png(self):
        seq = make_sequence(_random_images(2), fps=30)
        with tempfile.TemporaryDirectory() as tmp:
            save_sequence(seq, tmp)
            Path(tmp, '000001.png').write_bytes(b'not a png')
            with self.assertRaises(CorruptInputError):
                load_sequence(tmp)

    def test_missing_path(self):
        with self.assertRaises(InputFormatError):
            load_sequence('/nonexistent/frames')

    def test_truth_file_lookup(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertIsNone(find_truth_file(tmp))
            Path(tmp, 'truth.csv').write_text('frame,cx,cy\n')
            self.assertEqual(find_truth_file(tmp), Path(tmp, 'truth.csv'))


class TestY4M(unittest.TestCase):

    def test_444_full_range_gray(self):
        h, w = 4, 6
        y = np.full((h, w), 100, dtype=np.uint8)
        u = np.full((h, w), 128, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'clip.y4m')
            _write_y4m(path, [(y, u, u)] * 3, w, h, b' XCOLORRANGE=FULL')
            seq = load_sequence(path)
        self.assertEqual(len(seq), 3)
        self.assertEqual(seq.fps, 30.0)
        self.assertEqual(seq.source_id, 'clip')
        self.assertTrue(np.all(seq.frames[0].pixels == 100))

    def test_limited_range_black_and_white(self):
        h, w = 2, 2
        y = np.array([[16, 235], [16, 235]], dtype=np.uint8)
        u = np.full((h, w), 128, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'clip.y4m')
            _write_y4m(path, [(y, u, u)], w, h)
            seq = load_sequence(path)
        px = seq.frames[0].pixels
        self.assertTrue(np.all(px[:, 0] == 0))
        self.assertTrue(np.all(px[:, 1] == 255))

    def test_420_chroma_is_replicated(self):
        h, w = 4, 4
        y = np.full((h, w), 128, dtype=np.uint8)
        u = np.array([[128, 200], [128, 128]], dtype=np.uint8)
        v = np.full((2, 2), 128, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'clip.y4m')
            with open(path, 'wb') as fh:
                fh.write(b'YUV4MPEG2 W4 H4 F25:1 C420jpeg XCOLORRANGE=FULL\nFRAME\n')
                fh.write(y.tobytes() + u.tobytes() + v.tobytes())
            px = load_sequence(path).frames[0].pixels
        # top-right 2x2 block carries the blue chroma sample
        self.assertTrue(np.all(px[0:2, 2:4, 2] > px[0:2, 0:2, 2]))
        self.assertTrue(np.array_equal(px[0, 2], px[1, 3]))

    def test_truncated_frame(self):
        h, w = 4, 4
        y = np.zeros((h, w), dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'clip.y4m')
            _write_y4m(path, [(y, y, y)], w, h)
            data = path.read_bytes()
            path.write_bytes(data[:-5])
            with self.assertRaises(CorruptInputError):
                load_sequence(path)

    def test_unknown_file_format(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'clip.bin')
            path.write_bytes(b'RIFF0000')
            with self.assertRaises(InputFormatError):
                load_sequence(path)


class TestSaveLoadProperty(unittest.TestCase):

    @settings(max_examples=10, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**16))
    def test_round_trip_any_shape(self, n, h, w, seed):
        seq = make_sequence(_random_images(n, h, w, seed), fps=30)
        with tempfile.TemporaryDirectory() as tmp:
            save_sequence(seq, tmp)
            loaded = load_sequence(tmp)
        self.assertTrue(all(np.array_equal(a.pixels, b.pixels)
                            for a, b in zip(seq.frames, loaded.frames)))


if __name__ == '__main__':
    unittest.main()
