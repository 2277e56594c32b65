"""Simulator tests: quadratic readout physics, cropping, refinement, noise."""

import dataclasses

import numpy as np
import pytest

from pufforge import (
    PufConfig,
    TransmissionMatrix,
    build_puf,
    crop_center,
    generate_challenges,
    load_puf,
    refine,
    respond,
    save_puf,
    split_blocks,
)
from pufforge.simulator import block_pattern, load_puf_config


class TestConfig:
    def test_defaults(self):
        cfg = PufConfig()
        assert (cfg.grid_side, cfg.image_side, cfg.crop_side) == (5, 512, 128)
        assert cfg.n == 25

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"grid_side": 4},
            {"grid_side": 1},
            {"image_side": 0},
            {"crop_side": 0},
            {"crop_side": 513},
            {"speckle_smoothing": -1.0},
            {"scale_factor": 3},
            {"noise_std": -0.1},
            {"seed": -1},
            {"seed": 2**64},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            PufConfig(**kwargs)

    def test_envelope_sigma(self):
        assert PufConfig(image_side=512).envelope_sigma == pytest.approx(512 / 6)
        assert PufConfig(image_side=512, scale_factor=2).envelope_sigma == pytest.approx(512 / 3)

    def test_dict_round_trip(self):
        cfg = PufConfig(grid_side=7, seed=9, noise_std=0.05)
        assert PufConfig.from_dict(cfg.to_dict()) == cfg


class TestBuild:
    def test_pattern_shape_and_dtype(self, tiny_puf, tiny_config):
        p = tiny_config.image_side
        assert tiny_puf.patterns.shape == (9, p, p)
        assert tiny_puf.patterns.dtype == np.complex128

    def test_deterministic(self, tiny_config, tiny_puf):
        again = build_puf(tiny_config)
        np.testing.assert_array_equal(again.patterns, tiny_puf.patterns)

    def test_seed_changes_patterns(self, tiny_config, tiny_puf):
        other = build_puf(dataclasses.replace(tiny_config, seed=8))
        assert not np.array_equal(other.patterns, tiny_puf.patterns)

    def test_blocks_use_independent_streams(self, tiny_config, tiny_puf):
        # pattern j is a pure function of (seed, j): standalone draw matches
        np.testing.assert_array_equal(block_pattern(tiny_config, 4), tiny_puf.patterns[4])

    def test_block_index_range(self, tiny_config):
        with pytest.raises(ValueError, match="out of range"):
            block_pattern(tiny_config, 9)

    def test_envelope_concentrates_centre(self, tiny_puf, tiny_config):
        # mean |T|^2 over blocks decays from the image centre outward
        power = np.mean(np.abs(tiny_puf.patterns) ** 2, axis=0)
        p = tiny_config.image_side
        centre = power[p // 2 - 4 : p // 2 + 4, p // 2 - 4 : p // 2 + 4].mean()
        corner = power[:8, :8].mean()
        assert centre > 10 * corner

    def test_pattern_shape_mismatch_rejected(self, tiny_config):
        with pytest.raises(ValueError, match="does not match config"):
            TransmissionMatrix(tiny_config, np.zeros((9, 8, 8)))


class TestRespond:
    def test_nonnegative(self, tiny_puf):
        ch = generate_challenges(3, 40, "A", seed=1)
        assert (respond(tiny_puf, ch) >= 0).all()

    def test_matches_quadratic_form_oracle(self, tiny_puf, tiny_config):
        # independent O(n^2) evaluation: I = sum_jk b_j b_k Re(T_j conj T_k)
        ch = generate_challenges(3, 6, "A", seed=2)
        got = respond(tiny_puf, ch)
        T = tiny_puf.patterns
        for row, image in zip(ch, got):
            oracle = np.zeros((tiny_config.image_side,) * 2)
            for j in range(9):
                for k in range(9):
                    if row[j] and row[k]:
                        oracle += (T[j] * np.conj(T[k])).real
            np.testing.assert_allclose(image, oracle, rtol=1e-10, atol=1e-12)

    def test_empty_challenge_is_dark(self, tiny_puf):
        assert not respond(tiny_puf, np.zeros(9, dtype=np.uint8)).any()

    def test_single_challenge_rank(self, tiny_puf, tiny_config):
        one = np.zeros(9, dtype=np.uint8)
        one[0] = 1
        img = respond(tiny_puf, one)
        assert img.shape == (tiny_config.image_side,) * 2
        batch = respond(tiny_puf, one[np.newaxis])
        np.testing.assert_array_equal(batch[0], img)

    def test_chunked_equals_split_batches(self, tiny_puf):
        # a batch larger than the internal chunk equals the concatenation of
        # per-chunk calls exactly, and per-row calls up to summation order
        ch = generate_challenges(3, 70, "A", seed=3)
        batch = respond(tiny_puf, ch)
        halves = np.vstack([respond(tiny_puf, ch[:64]), respond(tiny_puf, ch[64:])])
        np.testing.assert_array_equal(batch, halves)
        rows = np.stack([respond(tiny_puf, c) for c in ch])
        np.testing.assert_allclose(batch, rows, rtol=1e-12, atol=1e-12)

    def test_crop_window_equals_cropped_full(self, tiny_puf):
        ch = generate_challenges(3, 5, "A", seed=4)
        full = respond(tiny_puf, ch)
        windowed = respond(tiny_puf, ch, crop=16)
        np.testing.assert_allclose(windowed, crop_center(full, 16), rtol=1e-12)

    def test_wrong_challenge_length(self, tiny_puf):
        with pytest.raises(ValueError, match="does not match"):
            respond(tiny_puf, np.ones(8, dtype=np.uint8))

    def test_nonbinary_challenge(self, tiny_puf):
        with pytest.raises(ValueError, match="0 or 1"):
            respond(tiny_puf, np.full(9, 2))

    def test_energy_grows_with_open_blocks(self):
        # with unsmoothed i.i.d. patterns, opening one more block raises the
        # expected total intensity; holds for nearly every realization
        wins = 0
        base = np.zeros(9, dtype=np.uint8)
        base[:4] = 1
        more = base.copy()
        more[4] = 1
        for seed in range(100):
            cfg = PufConfig(
                grid_side=3, image_side=32, crop_side=32, speckle_smoothing=0.0, seed=seed
            )
            puf = build_puf(cfg)
            pair = respond(puf, np.stack([base, more]))
            wins += pair[1].sum() > pair[0].sum()
        assert wins >= 90


class TestCropCenter:
    def test_identity_when_full(self):
        img = np.arange(16.0).reshape(4, 4)
        np.testing.assert_array_equal(crop_center(img, 4), img)

    def test_even_margin_split(self):
        img = np.arange(16.0).reshape(4, 4)
        np.testing.assert_array_equal(crop_center(img, 2), img[1:3, 1:3])

    def test_standard_crop_window(self):
        img = np.zeros((512, 512))
        img[192, 192] = 1.0
        assert crop_center(img, 128)[0, 0] == 1.0

    def test_stack_support(self):
        stack = np.arange(32.0).reshape(2, 4, 4)
        out = crop_center(stack, 2)
        assert out.shape == (2, 2, 2)
        np.testing.assert_array_equal(out[1], stack[1, 1:3, 1:3])

    def test_rejects_oversized_crop(self):
        with pytest.raises(ValueError, match="exceeds"):
            crop_center(np.zeros((4, 4)), 5)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            crop_center(np.zeros((4, 5)), 2)


@pytest.fixture(scope="module")
def noisy_puf():
    return build_puf(PufConfig(grid_side=3, image_side=32, crop_side=32, seed=5, noise_std=0.05))


class TestNoise:

    def test_noise_free_by_default(self, noisy_puf):
        ch = generate_challenges(3, 3, "A", seed=0)
        np.testing.assert_array_equal(respond(noisy_puf, ch), respond(noisy_puf, ch))

    def test_noise_is_seeded(self, noisy_puf):
        ch = generate_challenges(3, 3, "A", seed=0)
        a = respond(noisy_puf, ch, add_noise=True, noise_seed=1)
        b = respond(noisy_puf, ch, add_noise=True, noise_seed=1)
        c = respond(noisy_puf, ch, add_noise=True, noise_seed=2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_noise_perturbs_multiplicatively(self, noisy_puf):
        ch = generate_challenges(3, 3, "A", seed=0)
        clean = respond(noisy_puf, ch)
        noisy = respond(noisy_puf, ch, add_noise=True, noise_seed=1)
        ratio = noisy[clean > 0] / clean[clean > 0]
        assert abs(ratio.mean() - 1.0) < 0.01
        assert 0.03 < ratio.std() < 0.07

    def test_extreme_noise_stays_nonnegative(self):
        cfg = PufConfig(grid_side=3, image_side=32, crop_side=32, seed=5, noise_std=5.0)
        puf = build_puf(cfg)
        ch = generate_challenges(3, 10, "A", seed=0)
        out = respond(puf, ch, add_noise=True, noise_seed=3)
        assert (out >= 0).all()

    def test_add_noise_ignored_at_zero_std(self, tiny_puf):
        ch = generate_challenges(3, 2, "A", seed=0)
        np.testing.assert_array_equal(
            respond(tiny_puf, ch, add_noise=True, noise_seed=9), respond(tiny_puf, ch)
        )


class TestRefine:
    @pytest.mark.parametrize("factor", [3, 5])
    def test_split_challenge_reproduces_response(self, tiny_puf, factor):
        ch = generate_challenges(3, 8, "A", seed=6)
        fine = refine(tiny_puf, factor)
        assert fine.config.grid_side == 3 * factor
        coarse_resp = respond(tiny_puf, ch)
        fine_resp = respond(fine, split_blocks(ch, factor))
        np.testing.assert_allclose(fine_resp, coarse_resp, rtol=1e-12, atol=1e-12)

    def test_factor_one_returns_same_token(self, tiny_puf):
        assert refine(tiny_puf, 1) is tiny_puf

    def test_bad_factor(self, tiny_puf):
        with pytest.raises(ValueError):
            refine(tiny_puf, 0)

    def test_even_factor_rejected(self, tiny_puf):
        with pytest.raises(ValueError, match="odd"):
            refine(tiny_puf, 2)

    def test_derived_token_not_header_saveable(self, tiny_puf, tmp_path):
        fine = refine(tiny_puf, 3)
        assert not fine.regenerable
        with pytest.raises(ValueError, match="derived"):
            save_puf(fine, tmp_path / "fine.json")


class TestPersistence:
    def test_round_trip_from_token(self, tiny_puf, tiny_config, tmp_path):
        path = tmp_path / "puf.json"
        save_puf(tiny_puf, path)
        assert load_puf_config(path) == tiny_config
        np.testing.assert_array_equal(load_puf(path).patterns, tiny_puf.patterns)

    def test_round_trip_from_config(self, tiny_config, tmp_path):
        path = tmp_path / "puf.json"
        save_puf(tiny_config, path)
        assert load_puf_config(path) == tiny_config

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError, match="not a saved token"):
            load_puf_config(path)
