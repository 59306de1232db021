import io
import numpy as np
import pytest
from apiae import writers


def test_pgm_roundtrip(tmp_path):
    image = np.linspace(0, 1, 12).reshape(3, 4)
    fn = writers.write_pgm(str(tmp_path / "a.pgm"), image)
    with open(fn, "rb") as fh:
        assert fh.read(3) == b"P5\n"
    back = writers.read_pgm(fn)
    assert back.shape == (3, 4)
    assert np.allclose(back, image, atol=0.5 / 255)


def test_pgm_clips():
    assert np.array_equal(writers.to_gray([-1.0, 0.5, 2.0]), [0, 128, 255])


def test_pgm_files_are_reproducible(tmp_path):
    image = np.eye(4)
    a = writers.write_pgm(str(tmp_path / "a.pgm"), image)
    b = writers.write_pgm(str(tmp_path / "b.pgm"), image)
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_strip_layout(tmp_path):
    frames = [np.ones(4), np.zeros(4), np.ones(4)]
    strip = writers.frame_strip(frames, 2, 2)
    assert strip.shape == (2, 8)
    assert np.all(strip[:, 2] == 0)
    fn = writers.write_strip(str(tmp_path / "s.pgm"), [frames, frames[:1]], 2, 2)
    assert writers.read_pgm(fn).shape == (5, 8)


def test_csv_writer(tmp_path):
    fn = str(tmp_path / "t.csv")
    with writers.CSVWriter(fn, ["a", "b"]) as w:
        w.write_row([1, 0.5])
        w.write_rows([[2, 1e-20], [3, -4.0]])
    columns, rows = writers.read_csv(fn)
    assert columns == ["a", "b"]
    assert rows == [[1.0, 0.5], [2.0, 1e-20], [3.0, -4.0]]


def test_csv_writer_in_place(tmp_path):
    fn = str(tmp_path / "t.csv")
    w = writers.CSVWriter(fn, ["x"], in_place=True)
    w.write_row([1])
    w.close()
    assert writers.read_csv(fn) == (["x"], [[1.0]])


def test_csv_writer_stream_and_errors():
    out = io.StringIO()
    w = writers.CSVWriter(out, ["x", "y"])
    w.write_row([1, 2])
    assert out.getvalue() == "x,y\n1,2\n"
    with pytest.raises(ValueError):
        w.write_row([1])
    with pytest.raises(ValueError):
        writers.CSVWriter(io.StringIO(), ["x"], in_place=True)
