import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import pixel_histograms
from conftest import canonical, setup_image

from tvdiar.eval_kit import f1_cuts
from tvdiar.io import read_frame_dir
from tvdiar.shot_analysis import (
    BlockHistogram,
    EmptyImage,
    EmptyInput,
    FrameDescriptor,
    LayoutMismatch,
    ShotAnalysisError,
    ShotConfig,
    compute_block_histograms,
    cut_positions,
    detect_cuts,
    detect_similar_shots,
    frame_similarity,
    rgb_to_hsv,
    shots_from_cuts,
)


def frame(i, masses, grid=(1, 1), bins=(2, 1, 1)):
    return FrameDescriptor(i, i / 25.0, BlockHistogram(np.atleast_2d(np.asarray(masses, float)), grid, bins))


def frames_from_similarities(sims):
    """Two-bin frames whose adjacent correlations are exactly the given +/-1 pattern."""
    out = [frame(0, [1, 0])]
    for s in sims:
        prev = out[-1].histogram.masses[0]
        out.append(frame(len(out), prev if s > 0 else prev[::-1]))
    return out


class TestHistograms:
    def test_uniform_image_single_bin(self):
        img = np.full((50, 60, 3), (30, 200, 90), dtype=np.uint8)
        h = compute_block_histograms(img)
        assert h.masses.shape == (30, 128)
        assert np.all(h.masses.max(axis=1) == 1.0)
        assert np.all((h.masses > 0).sum(axis=1) == 1)

    def test_half_red_half_blue(self):
        img = np.zeros((10, 10, 3), dtype=np.uint8)
        img[:, :5] = (255, 0, 0)
        img[:, 5:] = (0, 0, 255)
        h = compute_block_histograms(img, ShotConfig(block_rows=1, block_cols=1))
        nz = np.flatnonzero(h.masses[0])
        assert len(nz) == 2
        assert np.allclose(h.masses[0, nz], 0.5)

    def test_fixture_matches_pixel_oracle(self):
        img = setup_image(np.random.default_rng(3))
        cfg = ShotConfig()
        got = compute_block_histograms(img, cfg).masses
        want = np.array(pixel_histograms(img.tolist(), 5, 6, (8, 4, 4)))
        assert np.array_equal(got, want)

    @settings(max_examples=30, deadline=None)
    @given(
        arrays(np.uint8, st.tuples(st.integers(3, 17), st.integers(2, 13), st.just(3))),
        st.integers(1, 3),
        st.integers(1, 2),
    )
    def test_random_rasters_match_pixel_oracle(self, img, rows, cols):
        cfg = ShotConfig(block_rows=rows, block_cols=cols, bins_h=6, bins_s=3, bins_v=5)
        got = compute_block_histograms(img, cfg).masses
        want = np.array(pixel_histograms(img.tolist(), rows, cols, (6, 3, 5)))
        assert np.array_equal(got, want)

    def test_remainder_absorbed_by_last_block(self):
        img = np.zeros((7, 7, 3), dtype=np.uint8)
        img[6, :] = 255
        img[:, 6] = 255
        h = compute_block_histograms(img, ShotConfig(block_rows=2, block_cols=2, bins_h=1, bins_s=1, bins_v=2))
        # block (1,1) covers rows 3..6, cols 3..6: 7 of 16 pixels white
        assert h.masses[3, 1] == pytest.approx(7 / 16)
        assert np.allclose(h.masses.sum(axis=1), 1.0)

    def test_rgb_to_hsv_primary_colours(self):
        hsv = rgb_to_hsv(np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 0]]], dtype=np.uint8))
        assert np.allclose(hsv[0], [[0, 1, 1], [1 / 3, 1, 1], [0, 0, 0]])

    def test_empty_and_too_small(self):
        with pytest.raises(EmptyImage):
            compute_block_histograms(np.zeros((0, 0, 3), dtype=np.uint8))
        with pytest.raises(EmptyImage):
            compute_block_histograms(np.zeros((4, 4, 3), dtype=np.uint8))
        with pytest.raises(ShotAnalysisError):
            compute_block_histograms(np.zeros((10, 10), dtype=np.uint8))


class TestSimilarity:
    def test_identical(self):
        img = setup_image(np.random.default_rng(0))
        f = FrameDescriptor(0, 0.0, compute_block_histograms(img))
        assert frame_similarity(f, f) == pytest.approx(1.0)

    def test_anti_correlated(self):
        a = frame(0, [[1, 0]] * 4, grid=(2, 2))
        b = frame(1, [[0, 1]] * 4, grid=(2, 2))
        assert frame_similarity(a, b) == pytest.approx(-1.0)

    def test_constant_conventions(self):
        const = frame(0, [0.5, 0.5])
        other = frame(1, [1, 0])
        assert frame_similarity(const, other) == 0.0
        assert frame_similarity(const, const) == 1.0

    def test_layout_mismatch(self):
        with pytest.raises(LayoutMismatch):
            frame_similarity(frame(0, [1, 0]), frame(1, [1, 0, 0], bins=(3, 1, 1)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, (2, 3, 4), elements=st.floats(0, 1)))
    def test_bounded_and_symmetric(self, m):
        a = frame(0, m[0], grid=(3, 1), bins=(4, 1, 1))
        b = frame(1, m[1], grid=(3, 1), bins=(4, 1, 1))
        s = frame_similarity(a, b)
        assert -1 - 1e-12 <= s <= 1 + 1e-12
        assert s == pytest.approx(frame_similarity(b, a))


class TestCuts:
    def test_identical_frames_one_shot(self):
        shots = detect_cuts([frame(i, [1, 0]) for i in range(6)])
        assert len(shots) == 1
        assert (shots[0].start_frame, shots[0].end_frame) == (0, 5)

    def test_threshold_example(self):
        # adjacent similarities [1, -1, 1]: one cut after frame 1
        frames = frames_from_similarities([1, -1, 1])
        shots = detect_cuts(frames, ShotConfig(cut_threshold=0.5))
        assert [(s.start_frame, s.end_frame) for s in shots] == [(0, 1), (2, 3)]

    def test_vacuous_threshold(self):
        frames = frames_from_similarities([-1, -1, -1, -1])
        assert len(detect_cuts(frames, ShotConfig(cut_threshold=-1))) == 1

    def test_shots_tile_stream(self):
        frames = frames_from_similarities([1, -1, -1, 1, 1, -1])
        shots = detect_cuts(frames)
        assert shots[0].start_frame == 0 and shots[-1].end_frame == len(frames) - 1
        for a, b in zip(shots, shots[1:]):
            assert b.start_frame == a.end_frame + 1
            assert b.start_time == a.end_time

    def test_raising_tau1_never_removes_cuts(self):
        rng = np.random.default_rng(1)
        frames = [frame(i, rng.random(4), bins=(4, 1, 1)) for i in range(40)]
        previous = set()
        for tau in np.linspace(-1, 1, 21):
            cuts = set(cut_positions(detect_cuts(frames, ShotConfig(cut_threshold=tau))))
            assert previous <= cuts
            previous = cuts

    def test_errors(self):
        with pytest.raises(EmptyInput):
            detect_cuts([])
        with pytest.raises(ShotAnalysisError):
            detect_cuts([frame(1, [1, 0]), frame(0, [1, 0])])

    def test_last_shot_end_time(self):
        frames = [frame(i, [1, 0]) for i in range(4)]
        shots = shots_from_cuts(frames, [1])
        assert shots[-1].end_time == pytest.approx(4 / 25.0)


class TestSimilarShots:
    def test_single_shot(self):
        frames = [frame(0, [1, 0])]
        assert detect_similar_shots(detect_cuts(frames), frames).labels == [0]

    def test_alternating_fixture(self):
        x, y = [1, 0, 0], [0, 1, 0]
        masses = [x, x, y, y, x, x, y, y]
        frames = [frame(i, m, bins=(3, 1, 1)) for i, m in enumerate(masses)]
        shots = detect_cuts(frames)
        assert detect_similar_shots(shots, frames).labels == [0, 1, 0, 1]

    def test_impossible_threshold(self):
        x, y = [1, 0, 0], [0, 1, 0]
        frames = [frame(i, m, bins=(3, 1, 1)) for i, m in enumerate([x, y, x, y])]
        shots = detect_cuts(frames)
        labels = detect_similar_shots(shots, frames, ShotConfig(similarity_threshold=1 + 1e-9)).labels
        assert labels == [0, 1, 2, 3]

    def test_lowering_tau2_only_merges(self):
        rng = np.random.default_rng(2)
        frames = [frame(i, rng.random(5), bins=(5, 1, 1)) for i in range(30)]
        shots = detect_cuts(frames, ShotConfig(cut_threshold=1.1))
        prev = None
        for tau in np.linspace(1, -1, 11):
            labels = detect_similar_shots(shots, frames, ShotConfig(similarity_threshold=tau)).labels
            if prev is not None:
                # coarsening: shots sharing a label keep sharing one
                for i in range(len(labels)):
                    for j in range(len(labels)):
                        if prev[i] == prev[j]:
                            assert labels[i] == labels[j]
            prev = labels


class TestPpmFixtures:
    def test_planted_cuts_and_labels(self, ppm_episode):
        directory, planted_cuts, planted_setups = ppm_episode
        frames = read_frame_dir(directory)
        cfg = ShotConfig(cut_threshold=0.5, similarity_threshold=0.8)
        shots = detect_cuts(frames, cfg)
        assert cut_positions(shots) == planted_cuts
        assert f1_cuts(planted_cuts, cut_positions(shots)).f1 == 1.0
        labels = detect_similar_shots(shots, frames, cfg).labels
        assert labels == canonical(planted_setups)
