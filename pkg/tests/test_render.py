import numpy as np
import pytest

from pointsup.losses import GridPrediction, grid_cell_centers
from pointsup.render import RenderConfig, rank_by_uncertainty, render, render_dense, uncertainty, upsample_x2

from .test_losses import scalar_bilinear


class TestUpsample:
    def test_constant(self):
        g = upsample_x2(GridPrediction(np.full((3, 3), 0.7)))
        assert g.values.shape == (6, 6)
        assert np.all(g.values == 0.7)

    def test_2x2_hand_values(self):
        src = GridPrediction(np.array([[0.0, 1.0], [2.0, 3.0]]))
        up = upsample_x2(src)
        for j in range(4):
            for i in range(4):
                want = scalar_bilinear(src.values, (i + 0.5) / 4, (j + 0.5) / 4)
                assert up.values[j, i] == pytest.approx(want, abs=1e-15)
        # corner cells replicate the corner values (clamped)
        assert up.values[0, 0] == 0.0 and up.values[3, 3] == 3.0

    def test_preserves_bounds(self):
        rng = np.random.default_rng(0)
        src = GridPrediction(rng.random((5, 5)))
        up = upsample_x2(src)
        assert up.values.min() >= src.values.min()
        assert up.values.max() <= src.values.max()


class TestUncertainty:
    def test_half_is_maximal(self):
        assert uncertainty(0.5) == 0.0

    def test_extremes_minimal(self):
        assert uncertainty(0.0) == -0.5
        assert uncertainty(1.0) == -0.5

    def test_ranking_with_tie_break(self):
        order = rank_by_uncertainty(np.array([0.1, 0.45, 0.9, 0.5]))
        assert order.tolist() == [3, 1, 0, 2]

    def test_logit_space_same_ranking(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0.01, 0.99, 40)
        a = rank_by_uncertainty(p, "probability")
        b = rank_by_uncertainty(p, "logit")
        assert np.array_equal(a, b)


class TestRender:
    def test_constant_fn_eval_count(self):
        fn = lambda coords: np.full(len(coords), 0.25)
        grid, evals = render(fn, RenderConfig())
        assert np.all(grid.values == 0.25)
        assert grid.values.shape == (224, 224)
        assert evals == 28 * 28 + 3 * 784 == 3136

    def test_eval_count_identity(self):
        fn = lambda coords: np.clip(coords[:, 0], 0, 1)
        for cfg in [RenderConfig(4, 16, 5), RenderConfig(8, 64, 20), RenderConfig(2, 2, 9)]:
            _, evals = render(fn, cfg)
            want = cfg.start_res**2 + sum(
                min(cfg.n_select, (cfg.start_res * 2 ** (s + 1)) ** 2) for s in range(cfg.steps)
            )
            assert evals == want
        # with the paper defaults this is 3136 evaluations vs 50176 dense (16x)
        _, evals = render(fn, RenderConfig())
        assert evals == 28 * 28 + 3 * 784 == 3136
        assert 224 * 224 == 16 * evals

    def test_full_replacement_equals_dense(self):
        rng = np.random.default_rng(2)
        table = rng.random((64, 64))

        def fn(coords):
            # deterministic, feature-rich point function
            return table[
                np.floor(coords[:, 1] * 64).astype(int).clip(0, 63),
                np.floor(coords[:, 0] * 64).astype(int).clip(0, 63),
            ]

        cfg = RenderConfig(start_res=4, target_res=32, n_select=32 * 32)
        got, evals = render(fn, cfg)
        want, _ = render_dense(fn, 32)
        assert np.array_equal(got.values, want.values)
        assert evals == 16 + 64 + 256 + 1024

    def test_replaced_cells_carry_fn_values_bit_exact(self):
        def fn(coords):
            return 0.001 + 0.13 * coords[:, 0] + 0.61 * coords[:, 1]

        cfg = RenderConfig(start_res=2, target_res=8, n_select=3)
        grid, _ = render(fn, cfg)
        dense = fn(grid_cell_centers(8, 8)).reshape(8, 8)
        exact_matches = int((grid.values == dense).sum())
        assert exact_matches >= cfg.n_select  # at least the final step's picks

    def test_deterministic(self):
        rng_table = np.random.default_rng(3).random((32, 32))

        def fn(coords):
            return rng_table[
                np.floor(coords[:, 1] * 32).astype(int).clip(0, 31),
                np.floor(coords[:, 0] * 32).astype(int).clip(0, 31),
            ]

        cfg = RenderConfig(4, 32, 40)
        a, _ = render(fn, cfg)
        b, _ = render(fn, cfg)
        assert np.array_equal(a.values, b.values)

    def test_monotone_refinement(self):
        rng = np.random.default_rng(4)
        freqs = rng.standard_normal((2, 3))

        def fn(coords):
            z = np.cos(coords @ freqs * 4).sum(axis=1)
            return 1 / (1 + np.exp(-z))

        dense, _ = render_dense(fn, 32)
        errs = []
        for nsel in (4, 16, 64, 256, 1024):
            got, _ = render(fn, RenderConfig(4, 32, nsel))
            errs.append(float(np.abs(got.values - dense.values).mean()))
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
        assert errs[-1] == 0.0  # full replacement

    def test_bad_ratio_rejected(self):
        with pytest.raises(ValueError):
            RenderConfig(start_res=28, target_res=100)
        with pytest.raises(ValueError):
            RenderConfig(start_res=28, target_res=14)
