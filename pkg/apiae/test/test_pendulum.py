import struct
import numpy as np
import pytest
from apiae import constants
from apiae import pendulum
from apiae.exceptions import DataError
from apiae.pendulum import PendulumState


def test_render_range_and_shape():
    frame = pendulum.render(0.3)
    assert frame.shape == (16, 16)
    assert frame.min() >= 0.0
    assert frame.max() <= 1.0


def test_render_mass_is_nearly_constant():
    masses = np.array([pendulum.render(a).sum() for a in np.linspace(0, 2 * np.pi, 361)])
    assert np.all(np.abs(masses / masses.mean() - 1) < 0.02)


def test_render_is_periodic():
    for a in (0.0, 0.7, 2.5, -1.2):
        assert np.allclose(pendulum.render(a), pendulum.render(a + 2 * np.pi), atol=1e-12)


def test_render_orientation():
    # hanging down lights the lower half, upright the upper half
    down = pendulum.render(0.0)
    up = pendulum.render(np.pi)
    assert down[12:].sum() > down[:4].sum()
    assert up[:4].sum() > up[12:].sum()
    assert np.allclose(up, down[::-1], atol=1e-12)


def test_opposite_angles_differ():
    for a in np.linspace(0, 2 * np.pi, 24, endpoint=False):
        diff = np.abs(pendulum.render(a) - pendulum.render(a + np.pi))
        assert np.sum(diff >= 0.2) >= 10


def test_render_accepts_state():
    s = PendulumState(1.0, -3.0)
    assert np.array_equal(pendulum.render(s), pendulum.render(1.0))


def test_energy_never_increases_without_disturbance():
    state = PendulumState(1.0, 0.5)
    e = pendulum.energy(state)
    for _ in range(5000):
        state = pendulum.step_pendulum(state, 1e-3)
        e_next = pendulum.energy(state)
        assert e_next <= e + 1e-9
        e = e_next
    assert e < pendulum.energy(PendulumState(1.0, 0.5))


def test_step_agrees_with_fine_reference():
    def run(dt):
        state = PendulumState(1.0, 0.5)
        for _ in range(int(round(1.0 / dt))):
            state = pendulum.step_pendulum(state, dt)
        return np.array(state)

    assert np.allclose(run(1e-4), run(1e-6), atol=1e-3)


def test_resting_pendulum_stays():
    state = pendulum.step_pendulum(PendulumState(0.0, 0.0), 0.1)
    assert state == (0.0, 0.0)


def test_generate_shapes_and_determinism():
    a = pendulum.generate(4, 5, seed=3)
    b = pendulum.generate(6, 5, seed=3)
    assert a.frames.shape == (4, 5, 256)
    assert a.states.shape == (4, 5, 2)
    # sequence i depends only on (seed, i)
    assert np.array_equal(a.frames, b.frames[:4])
    assert abs(a.states[:, 0, 0]).max() <= np.pi
    assert abs(a.states[:, 0, 1]).max() <= 2.0
    # pixel noise is clipped back into range
    assert a.frames.min() >= 0.0
    assert a.frames.max() <= 1.0


def test_noiseless_frames_rerender_from_states():
    data = pendulum.generate(3, 4, pixel_noise_sigma=0.0, seed=1)
    for frames, states in zip(data.frames, data.states):
        for f, s in zip(frames, states):
            assert np.array_equal(f, pendulum.render(s[0]).ravel())


def test_generate_rejects_bad_sizes():
    with pytest.raises(DataError):
        pendulum.generate(0, 5)
    with pytest.raises(DataError):
        pendulum.generate(3, 1)


def test_write_read(tmp_path):
    data = pendulum.generate(3, 4, seed=2)
    fn = str(tmp_path / "a.bin")
    data.write(fn)
    back = pendulum.Dataset.read(fn)
    assert np.array_equal(back.frames, data.frames)
    assert np.array_equal(back.states, data.states)
    assert back.header() == data.header()

    # equal datasets give byte-identical files
    other = str(tmp_path / "b.bin")
    pendulum.generate(3, 4, seed=2).write(other)
    with open(fn, "rb") as f1, open(other, "rb") as f2:
        assert f1.read() == f2.read()


def test_read_rejects_bad_files(tmp_path):
    fn = str(tmp_path / "bad.bin")
    with open(fn, "wb") as fout:
        fout.write(b"not a dataset")
    with pytest.raises(DataError):
        pendulum.Dataset.read(fn)

    good = str(tmp_path / "good.bin")
    pendulum.generate(2, 3, seed=0).write(good)
    with open(good, "rb") as fh:
        payload = fh.read()

    truncated = str(tmp_path / "truncated.bin")
    with open(truncated, "wb") as fout:
        fout.write(payload[:-8])
    with pytest.raises(DataError):
        pendulum.Dataset.read(truncated)

    future = str(tmp_path / "future.bin")
    with open(future, "wb") as fout:
        n = len(constants.DATASET_MAGIC)
        fout.write(payload[:n] + struct.pack("<I", 99) + payload[n + 4 :])
    with pytest.raises(DataError):
        pendulum.Dataset.read(future)


def test_dataset_validation():
    with pytest.raises(DataError):
        pendulum.Dataset(np.zeros((2, 3, 10)), np.zeros((2, 3, 2)), 0.1)
    with pytest.raises(DataError):
        pendulum.Dataset(np.zeros((2, 3, 256)), np.zeros((2, 4, 2)), 0.1)


def test_subset():
    data = pendulum.generate(5, 3, seed=4)
    sub = data.subset([4, 0])
    assert len(sub) == 2
    assert np.array_equal(sub.frames[0], data.frames[4])
    assert sub.dt == data.dt
