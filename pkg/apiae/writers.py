##
## Writers: CSV tables of training curves and bounds, PGM images of frames.
##
import tempfile
import shutil
import numpy as np
from apiae.version import version


class CSVWriter(object):
    """
    Simple CSV writer for numeric result tables.

    Parameters
    ----------
    out : string or file-like object
        If a string, parsed as a filename, otherwise, a file-like object to
        write to.

    columns : list of str
        Column names, written as the first line.

    in_place : bool
        If True and `out` is a filename, write to a temporary file and move
        it into place on close.
    """

    def __init__(self, out, columns, in_place=False):
        self.out = out
        self.columns = list(columns)
        self.in_place = in_place
        self.temp_file = None
        if isinstance(out, str):
            if self.in_place:
                self.temp_file = tempfile.NamedTemporaryFile(delete=False)
                self.out_stream = open(self.temp_file.name, "w")
            else:
                self.out_stream = open(self.out, "w")
        else:
            if self.in_place:
                raise ValueError("Cannot use 'in_place' when writing to a stream.")
            self.out_stream = out
        self.out_stream.write(",".join(self.columns) + "\n")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @staticmethod
    def _format(value):
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        return str(value)

    def write_row(self, row):
        if len(row) != len(self.columns):
            raise ValueError(
                "row has %s fields, expected %s" % (len(row), len(self.columns))
            )
        self.out_stream.write(",".join(self._format(v) for v in row) + "\n")
        self.out_stream.flush()

    def write_rows(self, rows):
        for row in rows:
            self.write_row(row)

    def close(self):
        if isinstance(self.out, str):
            self.out_stream.close()
            if self.in_place:
                shutil.move(self.temp_file.name, self.out)


def read_csv(fn):
    """
    Read a CSV written by CSVWriter into (columns, rows of floats).
    """
    with open(fn) as fh:
        columns = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return columns, rows


def to_gray(frame):
    """Clip to [0, 1] and scale to 8-bit."""
    return np.round(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(fn, image, with_header=True):
    """
    Write a 2-D array with values in [0, 1] as a binary (P5) PGM file.
    """
    image = np.atleast_2d(image)
    height, width = image.shape
    with open(fn, "wb") as fout:
        fout.write(b"P5\n")
        if with_header:
            fout.write(("# created by apiae v%s\n" % version).encode("ascii"))
        fout.write(("%d %d\n255\n" % (width, height)).encode("ascii"))
        fout.write(to_gray(image).tobytes())
    return fn


def read_pgm(fn):
    """
    Read a P5 PGM written by `write_pgm`, returning values in [0, 1].
    """
    with open(fn, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end]
        pos = end + 1
        if line.startswith(b"#"):
            continue
        fields.extend(line.split())
    if fields[0] != b"P5":
        raise ValueError("%s is not a binary PGM" % fn)
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width) / float(maxval)


def frame_strip(frames, height, width, gap=1):
    """
    Lay flattened frames side by side, separated by `gap` black columns.
    """
    frames = [np.asarray(f).reshape(height, width) for f in frames]
    spacer = np.zeros((height, gap))
    parts = []
    for i, f in enumerate(frames):
        if i:
            parts.append(spacer)
        parts.append(f)
    return np.hstack(parts)


def write_strip(fn, rows, height, width, gap=1):
    """
    Write several frame strips stacked vertically (e.g. data above
    reconstruction) as one PGM.
    """
    strips = [frame_strip(r, height, width, gap) for r in rows]
    width_total = max(s.shape[1] for s in strips)
    padded = []
    for i, s in enumerate(strips):
        if i:
            padded.append(np.zeros((gap, width_total)))
        padded.append(np.pad(s, ((0, 0), (0, width_total - s.shape[1]))))
    return write_pgm(fn, np.vstack(padded))
