import numpy as np

from surfdk.rng import NoiseStream, block_generator, stream_key


def test_keys_differ_by_seed_and_name():
    keys = {tuple(stream_key(s, n)) for s in (0, 1) for n in ("fvm-noise", "particle-noise")}
    assert len(keys) == 4


def test_draw_is_addressable_in_any_order():
    a = NoiseStream(7, "fvm-noise", (2, 3, 3), block_steps=8)
    b = NoiseStream(7, "fvm-noise", (2, 3, 3), block_steps=8)
    forward = [a.draw(k).copy() for k in range(40)]
    for k in (33, 2, 17, 39, 0, 8):
        np.testing.assert_array_equal(b.draw(k), forward[k])


def test_block_size_does_not_change_block_start():
    # the first step of every block equals a fresh generator at that block
    s = NoiseStream(3, "x", (5,), block_steps=4)
    np.testing.assert_array_equal(s.draw(8), block_generator(3, "x", 2).standard_normal((4, 5))[0])


def test_streams_are_independent():
    a = NoiseStream(1, "fvm-noise", (20_000,)).draw(0)
    b = NoiseStream(1, "particle-noise", (20_000,)).draw(0)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(20_000)


def test_draws_are_standard_normal():
    s = NoiseStream(11, "fvm-noise", (2, 16, 16), block_steps=64)
    x = np.stack([s.draw(k) for k in range(256)])
    n = x.size
    assert abs(x.mean()) < 4 / np.sqrt(n)
    assert abs(x.var() - 1) < 4 * np.sqrt(2 / n)
    # no correlation between neighbouring cells or consecutive steps
    assert abs(np.mean(x[:, 0, 1:, :] * x[:, 0, :-1, :])) < 4 / np.sqrt(n / 2)
    assert abs(np.mean(x[1:] * x[:-1])) < 4 / np.sqrt(n)
