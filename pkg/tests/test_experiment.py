"""Experiment pipeline tests: run_attack, the size x scheme grid, scaling."""

import json

import numpy as np
import pytest

import pufforge.experiment as experiment
from pufforge import (
    GeneratorAttack,
    LinearAttack,
    PufConfig,
    RidgeAttack,
    fhd,
    gabor_binarize,
    make_kernel,
    select_alpha,
    upsample_nearest,
)
from pufforge.dataset import Dataset, generate_dataset
from pufforge.experiment import (
    like_pair_fhds,
    make_model,
    mean_test_fhd,
    resolve_threads,
    run_attack,
    run_matrix,
    scale_experiment,
)
from pufforge.reports import attack_rows


class TestResolveThreads:
    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("PUF_FORGE_THREADS", "7")
        assert resolve_threads(4) == 4

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("PUF_FORGE_THREADS", "3")
        assert resolve_threads() == 3

    def test_default_single(self, monkeypatch):
        monkeypatch.delenv("PUF_FORGE_THREADS", raising=False)
        assert resolve_threads() == 1
        monkeypatch.setenv("PUF_FORGE_THREADS", "")
        assert resolve_threads() == 1

    def test_clamped_to_one(self):
        assert resolve_threads(0) == 1
        assert resolve_threads(-5) == 1


class TestMakeModel:
    def test_kinds(self):
        assert isinstance(make_model("lr"), LinearAttack)
        assert make_model("lr").features == "raw"
        assert make_model("qlr").features == "quadratic"
        ridge = make_model("ridge", alpha=2.5)
        assert isinstance(ridge, RidgeAttack) and ridge.alpha == 2.5
        assert make_model("qrr").features == "quadratic"
        gen = make_model("generator", generator_params={"epochs": 5})
        assert isinstance(gen, GeneratorAttack) and gen.epochs == 5

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown model"):
            make_model("svm")


class TestRunAttack:
    def test_lr_matches_direct_fit(self, quad_dataset):
        model, predictions, metadata = run_attack(quad_dataset, "lr")
        direct = LinearAttack(features="raw").fit(
            quad_dataset.train_challenges, quad_dataset.train_responses
        )
        np.testing.assert_array_equal(
            predictions, direct.predict(quad_dataset.test_challenges)
        )
        assert metadata["model"] == "lr"
        assert metadata["l"] == 3 and metadata["scheme"] == quad_dataset.scheme
        assert metadata["train_count"] == quad_dataset.train_count
        assert metadata["test_count"] == quad_dataset.test_count
        assert metadata["rank"] == model.rank_
        assert "residual_summary" in metadata

    def test_qlr_matches_direct_fit(self, quad_dataset):
        _, predictions, _ = run_attack(quad_dataset, "qlr")
        direct = LinearAttack(features="quadratic").fit(
            quad_dataset.train_challenges, quad_dataset.train_responses
        )
        np.testing.assert_array_equal(
            predictions, direct.predict(quad_dataset.test_challenges)
        )

    def test_ridge_explicit_alpha(self, quad_dataset):
        _, predictions, metadata = run_attack(quad_dataset, "ridge", alpha=0.5)
        assert metadata["alpha"] == 0.5
        assert "alpha_selection" not in metadata
        direct = RidgeAttack(features="raw", alpha=0.5).fit(
            quad_dataset.train_challenges, quad_dataset.train_responses
        )
        np.testing.assert_array_equal(
            predictions, direct.predict(quad_dataset.test_challenges)
        )

    def test_qrr_auto_alpha(self, quad_dataset):
        _, predictions, metadata = run_attack(quad_dataset, "qrr", alpha="auto", alpha_seed=1)
        assert metadata["alpha_selection"] == "auto"
        picked = select_alpha(
            quad_dataset.train_challenges,
            quad_dataset.train_responses,
            features="quadratic",
            seed=1,
        )
        assert metadata["alpha"] == picked
        direct = RidgeAttack(features="quadratic", alpha=picked).fit(
            quad_dataset.train_challenges, quad_dataset.train_responses
        )
        np.testing.assert_array_equal(
            predictions, direct.predict(quad_dataset.test_challenges)
        )

    def test_generator_matches_direct_fit(self):
        config = PufConfig(grid_side=3, image_side=64, crop_side=16, speckle_smoothing=1.0, seed=7)
        ds = generate_dataset(config, "A", 30, 2)
        params = {
            "hidden_widths": (8, 16),
            "output_side": 8,
            "epochs": 3,
            "batch_size": 8,
            "learning_rate": 0.003,
            "seed": 0,
        }
        _, predictions, metadata = run_attack(ds, "generator", generator_params=params)
        assert predictions.shape == (ds.test_count, 16, 16)
        direct = GeneratorAttack(**params).fit(ds.train_challenges, ds.train_responses)
        np.testing.assert_array_equal(
            predictions, upsample_nearest(direct.predict(ds.test_challenges), 16)
        )
        assert metadata["generator"]["hidden_widths"] == [8, 16]
        assert metadata["final_loss"] == float(direct.loss_curve_[-1])

    def test_empty_test_split_rejected(self):
        config = PufConfig(grid_side=3, image_side=16, crop_side=8, seed=1)
        ds = generate_dataset(config, "A", 10, 5, train_count=10)
        with pytest.raises(ValueError, match="nonempty train and test"):
            run_attack(ds, "lr")


class TestMeanTestFhd:
    def test_perfect_predictions_zero(self, quad_dataset):
        assert mean_test_fhd(quad_dataset, quad_dataset.test_responses.copy()) == 0.0

    def test_matches_manual_loop(self, quad_dataset):
        rng = np.random.default_rng(8)
        pred = quad_dataset.test_responses + rng.random(quad_dataset.test_responses.shape)
        for preset in ("G1", "G2"):
            kernel = make_kernel(preset)
            want = np.mean(
                [
                    fhd(gabor_binarize(t, kernel), gabor_binarize(p, kernel))
                    for t, p in zip(quad_dataset.test_responses, pred)
                ]
            )
            assert mean_test_fhd(quad_dataset, pred, preset=preset) == want


@pytest.fixture(scope="module")
def noisy_dataset():
    config = PufConfig(
        grid_side=3, image_side=128, crop_side=64, speckle_smoothing=1.0, seed=11, noise_std=0.1
    )
    return generate_dataset(config, "A", 12, 6)


class TestLikePairs:
    def test_noise_free_token_gives_zero(self, quad_dataset):
        vals = like_pair_fhds(quad_dataset, 5)
        np.testing.assert_array_equal(vals, np.zeros(5))

    def test_noisy_token_small_nonzero(self, noisy_dataset):
        vals = like_pair_fhds(noisy_dataset, 8, seed=1)
        assert vals.shape == (8,)
        assert np.all(vals > 0.0) and np.all(vals < 0.4)

    def test_seeded_and_capped(self, noisy_dataset):
        a = like_pair_fhds(noisy_dataset, 50, seed=2)
        b = like_pair_fhds(noisy_dataset, 50, seed=2)
        np.testing.assert_array_equal(a, b)
        assert a.size == noisy_dataset.count  # capped at the record count
        c = like_pair_fhds(noisy_dataset, 50, seed=2, noise_seed_base=2000)
        assert not np.array_equal(a, c)

    def test_needs_simulated_dataset(self, quad_dataset):
        manifest = dict(quad_dataset.manifest, puf=None)
        ds = Dataset(manifest, quad_dataset.challenges, quad_dataset.responses)
        with pytest.raises(ValueError, match="simulated dataset"):
            like_pair_fhds(ds, 3)

    def test_pairs_validated(self, quad_dataset):
        with pytest.raises(ValueError, match="pairs must be >= 1"):
            like_pair_fhds(quad_dataset, 0)


@pytest.fixture(scope="module")
def matrix_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("matrix")
    summary = run_matrix(
        out,
        sizes=(3,),
        schemes=("A", "B"),
        models=("lr",),
        count=24,
        puf_seed=5,
        challenge_seed=40,
    )
    return out, summary


class TestRunMatrix:
    def test_layout_and_summary(self, matrix_out):
        out, summary = matrix_out
        assert summary["sizes"] == [3] and summary["schemes"] == ["A", "B"]
        assert set(summary["cells"]) == {"l3_A", "l3_B"}
        on_disk = json.loads((out / "matrix_summary.json").read_text())
        assert on_disk == json.loads(json.dumps(summary))
        for cell in ("l3_A", "l3_B"):
            assert (out / "cells" / cell / "dataset" / "manifest.json").is_file()
            assert (out / "cells" / cell / "lr" / "attack_summary.json").is_file()
            assert (out / "cells" / cell / "cell_summary.json").is_file()
        table = (out / "matrix_table.csv").read_text().splitlines()
        assert table[0] == "l,scheme,model,mean_fhd_g1,mean_fhd_g2"
        assert len(table) == 3

    def test_cell_seeds_derived_from_bases(self, matrix_out):
        out, summary = matrix_out
        man_a = json.loads((out / "cells" / "l3_A" / "dataset" / "manifest.json").read_text())
        man_b = json.loads((out / "cells" / "l3_B" / "dataset" / "manifest.json").read_text())
        assert man_a["puf"]["seed"] == 5 and man_b["puf"]["seed"] == 5  # shared per size
        assert man_a["challenge_seed"] == 40
        assert man_b["challenge_seed"] == 41

    def test_cell_matches_direct_attack(self, matrix_out):
        _, summary = matrix_out
        config = PufConfig(grid_side=3, seed=5)
        ds = generate_dataset(config, "A", 24, 40)
        _, predictions, _ = run_attack(ds, "lr")
        rows = attack_rows(ds, predictions)
        want = float(np.mean([r[1] for r in rows]))
        got = summary["cells"]["l3_A"]["models"]["lr"]["mean_fhd_g1"]
        assert got == pytest.approx(want, abs=1e-12)

    def test_failed_cell_recorded_and_grid_continues(self, tmp_path, monkeypatch):
        real = experiment._run_cell

        def flaky(cell_dir, config, scheme, *args):
            if scheme == "B":
                raise RuntimeError("boom")
            return real(cell_dir, config, scheme, *args)

        monkeypatch.setattr(experiment, "_run_cell", flaky)
        summary = run_matrix(
            tmp_path / "m",
            sizes=(3,),
            schemes=("A", "B"),
            models=("lr",),
            count=12,
            puf_seed=5,
            challenge_seed=40,
        )
        assert summary["cells"]["l3_B"]["error"] == "RuntimeError: boom"
        assert "trace" in summary["cells"]["l3_B"]
        assert "models" in summary["cells"]["l3_A"]
        table = (tmp_path / "m" / "matrix_table.csv").read_text().splitlines()
        assert len(table) == 2  # header + the surviving cell

    def test_threaded_run_identical(self, matrix_out, tmp_path):
        _, summary = matrix_out
        threaded = run_matrix(
            tmp_path / "t",
            sizes=(3,),
            schemes=("A", "B"),
            models=("lr",),
            count=24,
            puf_seed=5,
            challenge_seed=40,
            threads=2,
        )
        assert threaded["cells"] == summary["cells"]

    def test_unknown_model_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown model"):
            run_matrix(tmp_path / "x", models=("lr", "nope"))


class TestScaleExperiment:
    def test_identical_datasets_zero_improvement(self, quad_dataset, tmp_path):
        out = tmp_path / "scale"
        result = scale_experiment(quad_dataset, quad_dataset, ("lr", "qlr"), out_dir=out)
        for name in ("lr", "qlr"):
            row = result["models"][name]
            assert row["fhd_small"] == row["fhd_large"]
            assert row["improvement_percent"] == 0.0
        assert json.loads((out / "scale_summary.json").read_text()) == json.loads(
            json.dumps(result)
        )
        table = (out / "scale_table.csv").read_text().splitlines()
        assert table[0] == "model,fhd_small,fhd_large,improvement_percent"
        assert len(table) == 3

    def test_improvement_formula(self):
        config = PufConfig(grid_side=3, image_side=128, crop_side=64, speckle_smoothing=1.0, seed=2)
        small = generate_dataset(config, "A", 20, 31, train_count=6)
        large = generate_dataset(config, "A", 60, 32)
        result = scale_experiment(small, large, ("lr",), alpha=0.0)
        row = result["models"]["lr"]
        if row["fhd_small"] > 0:
            want = 100.0 * (row["fhd_small"] - row["fhd_large"]) / row["fhd_small"]
            assert row["improvement_percent"] == want
        else:
            assert row["improvement_percent"] in (0.0, None)
        assert row["train_small"] == 6 and row["train_large"] == 54

    def test_token_mismatch_rejected(self):
        a = generate_dataset(PufConfig(grid_side=3, image_side=16, crop_side=8, seed=1), "A", 6, 1)
        b = generate_dataset(PufConfig(grid_side=3, image_side=16, crop_side=8, seed=2), "A", 6, 1)
        with pytest.raises(ValueError, match="different tokens"):
            scale_experiment(a, b, ("lr",))

    def test_scheme_mismatch_rejected(self):
        config = PufConfig(grid_side=3, image_side=16, crop_side=8, seed=1)
        a = generate_dataset(config, "A", 6, 1)
        b = generate_dataset(config, "C", 6, 1)
        with pytest.raises(ValueError, match="different challenge schemes"):
            scale_experiment(a, b, ("lr",))
