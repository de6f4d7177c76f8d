import numpy as np
import pytest

from packcool.core.errors import InvalidArgumentError
from packcool.modules.environment import PackCoolingEnv, TrajectoryBuffer
from packcool.modules.render import (
    curve_band,
    dump_trajectory,
    merge_seed_curves,
    plot_curves,
    read_table,
    rolling_mean,
    write_table,
)


@pytest.fixture
def three_steps(small_env):
    env = PackCoolingEnv(small_env)
    env.reset(seed=4)
    for a in (-1.0, 0.0, 1.0):
        env.step(a)
    return env.render()


class TestTrajectoryDump:
    def test_files_and_shapes(self, three_steps, small_env, tmp_path):
        paths = dump_trajectory(three_steps, tmp_path, small_env.dx)
        assert sorted(p.name for p in paths) == ["sigma.csv", "sigma.svg", "u.csv", "u.svg", "w.csv", "w.svg"]
        header, sigma = read_table(tmp_path / "sigma.csv")
        assert header == ["t", "sigma"]
        assert sigma.shape == (3, 2)
        assert sigma[:, 1].tolist() == [0.0, 0.5, 1.0]
        header, u = read_table(tmp_path / "u.csv")
        assert len(header) == small_env.n_x and header[0] == "x=0.1" and header[-1] == "x=1"
        assert u.shape == (3, small_env.n_x)

    def test_values_survive_text(self, three_steps, small_env, tmp_path):
        dump_trajectory(three_steps, tmp_path, small_env.dx)
        _, _, u_hist, w_hist = three_steps.arrays()
        assert np.array_equal(read_table(tmp_path / "u.csv")[1], u_hist)
        assert np.array_equal(read_table(tmp_path / "w.csv")[1], w_hist)

    def test_repeat_dump_is_identical(self, three_steps, small_env, tmp_path):
        dump_trajectory(three_steps, tmp_path / "a", small_env.dx)
        dump_trajectory(three_steps, tmp_path / "b", small_env.dx)
        for name in ("sigma.csv", "u.csv", "w.csv", "sigma.svg", "u.svg", "w.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_empty_trajectory(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            dump_trajectory(TrajectoryBuffer(), tmp_path, 0.1)


class TestTables:
    def test_integer_and_float_columns(self, tmp_path):
        path = write_table(tmp_path / "m.csv", ["episode", "reward"], [np.array([1, 2]), np.array([-0.1, -2.5])], fmt=["%d", "%.17g"])
        assert path.read_text(encoding="utf-8") == "episode,reward\n1,-0.10000000000000001\n2,-2.5\n"


class TestSeedMerge:
    def test_two_seeds(self):
        episodes, mean, std = merge_seed_curves([np.array([0.0]), np.array([-2.0])], window=1)
        assert episodes.tolist() == [1]
        assert mean.tolist() == [-1.0] and std.tolist() == [1.0]

    def test_single_seed_has_zero_spread(self):
        _, mean, std = merge_seed_curves([np.array([-3.0, -1.0, -2.0])], window=2)
        assert np.allclose(mean, [-3.0, -2.0, -1.5])
        assert np.all(std == 0.0)

    def test_cut_to_shortest(self):
        episodes, _, _ = merge_seed_curves([np.ones(5), np.ones(3)], window=20)
        assert episodes.tolist() == [1, 2, 3]

    def test_nothing_to_merge(self):
        with pytest.raises(InvalidArgumentError):
            merge_seed_curves([np.array([])])

    def test_rolling_mean_window(self):
        assert np.allclose(rolling_mean(np.array([1.0, 2.0, 3.0, 4.0]), 2), [1.0, 1.5, 2.5, 3.5])

    def test_band_is_a_fifth_of_the_spread(self):
        _, mean, std = merge_seed_curves([np.array([0.0]), np.array([-2.0])], window=1)
        low, high = curve_band(mean, std)
        assert np.allclose(low, [-1.2]) and np.allclose(high, [-0.8])

    def test_curve_plot(self, tmp_path):
        curves = {"ppo": merge_seed_curves([np.array([-3.0, -2.0]), np.array([-1.0, -2.0])])}
        path = plot_curves(curves, tmp_path / "curves.svg")
        assert path.read_text(encoding="utf-8").lstrip().startswith("<?xml")
