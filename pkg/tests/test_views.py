"""View generation: crops, masks, augmentations, tokenization, projection."""

import numpy as np
import pytest
from scipy import stats

from aufuse import tensor as T
from aufuse import views
from aufuse.audio import LogMelSpectrogram
from aufuse.tensor import Tensor, check_gradients
from aufuse.views import (
    AudioView,
    VideoView,
    ViewProjector,
    audio_global_view,
    audio_local_view,
    crop_resize_frames,
    hflip_frames,
    matched_local_views,
    reassemble_audio_tokens,
    reassemble_video_tokens,
    rotate_frames,
    tokenize_audio_view,
    tokenize_video_view,
    video_local_view,
)


def logmel_like(t_len, seed=0):
    rng = np.random.default_rng(seed)
    return LogMelSpectrogram(values=rng.normal(size=(t_len, 80)) - 5.0)


class TestAudioGlobalView:
    def test_passthrough(self):
        lm = logmel_like(250)
        view = audio_global_view(lm)
        assert view.kind == "global"
        np.testing.assert_array_equal(view.matrix, lm.values)
        assert view.mask_spec == []
        assert view.matrix.shape[0] == lm.values.shape[0]


class TestAudioLocalView:
    def test_deterministic_under_seed(self):
        lm = logmel_like(400)
        a = audio_local_view(lm, 123)
        b = audio_local_view(lm, 123)
        assert np.array_equal(a.matrix, b.matrix)
        assert a.mask_spec == b.mask_spec

    def test_mask_semantics(self):
        lm = logmel_like(400, seed=1)
        view = audio_local_view(lm, 7)
        assert view.matrix.shape == (100, 80)
        assert 1 <= len(view.mask_spec) <= 2
        masked = np.zeros(80, dtype=bool)
        for ch0, width in view.mask_spec:
            assert 1 <= width <= 15
            masked[ch0 : ch0 + width] = True
        assert (view.matrix[:, masked] == 0.0).all()
        # unmasked columns must equal some 100-frame slice of the source
        starts = [
            s
            for s in range(lm.values.shape[0] - 99)
            if np.array_equal(
                lm.values[s : s + 100][:, ~masked], view.matrix[:, ~masked]
            )
        ]
        assert len(starts) >= 1

    def test_rejects_short_clip(self):
        with pytest.raises(ValueError, match="shorter"):
            audio_local_view(logmel_like(99), 0)

    def test_start_coverage_chi_square(self):
        lm = logmel_like(199, seed=2)  # valid starts: 0..99
        starts = []
        for seed in range(1000):
            view = audio_local_view(lm, seed)
            masked = np.zeros(80, dtype=bool)
            for ch0, width in view.mask_spec:
                masked[ch0 : ch0 + width] = True
            for s in range(100):
                if np.array_equal(lm.values[s : s + 100][:, ~masked], view.matrix[:, ~masked]):
                    starts.append(s)
                    break
        counts, _ = np.histogram(starts, bins=10, range=(0, 100))
        assert stats.chisquare(counts).pvalue > 0.001


class TestVideoLocalView:
    def test_flip_involution(self):
        rng = np.random.default_rng(3)
        frames = rng.random((5, 16, 16, 3))
        np.testing.assert_array_equal(hflip_frames(hflip_frames(frames)), frames)

    def test_zero_rotation_full_crop_identity(self):
        rng = np.random.default_rng(4)
        frames = rng.random((4, 12, 12, 3))
        np.testing.assert_array_equal(rotate_frames(frames, 0.0), frames)
        np.testing.assert_array_equal(crop_resize_frames(frames, 1.0, 0.3, 0.7), frames)

    def test_segment_length_is_one_second(self):
        rng = np.random.default_rng(5)
        frames = rng.random((50, 16, 16, 3))
        for fps in (10, 25):
            view = video_local_view(frames, fps=fps, rng_seed=11)
            assert view.kind == "local"
            assert view.frames.shape[0] == round(fps)

    def test_rejects_short_clip(self):
        with pytest.raises(ValueError, match="shorter"):
            video_local_view(np.zeros((9, 8, 8, 3)), fps=10, rng_seed=0)

    def test_crop_area_bound(self):
        rng = np.random.default_rng(6)
        frames = rng.random((3, 20, 20, 3))
        out = crop_resize_frames(frames, views.MIN_CROP_AREA, 0.0, 0.0)
        assert out.shape == frames.shape
        # sqrt(0.8) of 20 pixels, rounded
        assert round(20 * np.sqrt(0.8)) == 18

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(7)
        frames = rng.random((30, 16, 16, 3))
        a = video_local_view(frames, fps=10, rng_seed=42)
        b = video_local_view(frames, fps=10, rng_seed=42)
        assert np.array_equal(a.frames, b.frames)
        assert a.augmentations == b.augmentations

    def test_augmentation_bounds_pinned(self):
        assert views.MIN_CROP_AREA == 0.8
        assert views.MAX_ROTATE_DEG == 10.0

    def test_augmented_pixels_stay_in_source_range(self):
        # crop/flip/rotate are convex combinations of source pixels
        rng = np.random.default_rng(8)
        frames = rng.uniform(0.2, 0.9, size=(20, 16, 16, 3))
        for seed in range(20):
            view = video_local_view(frames, fps=10, rng_seed=seed)
            assert view.frames.min() >= frames.min() - 1e-12
            assert view.frames.max() <= frames.max() + 1e-12


class TestMatchedViews:
    def test_alignment_and_label_slice(self):
        lm = logmel_like(398, seed=8)
        rng = np.random.default_rng(9)
        frames = rng.random((40, 16, 16, 3))
        audio_view, video_view, v0 = matched_local_views(lm, frames, 10.0, 21)
        assert audio_view.matrix.shape[0] == 100
        assert video_view.frames.shape[0] == 10
        assert 0 <= v0 <= 30
        # the audio crop start (v0 * 10 within rounding) stays near the video start
        masked = np.zeros(80, dtype=bool)
        for ch0, width in audio_view.mask_spec:
            masked[ch0 : ch0 + width] = True
        start = next(
            s
            for s in range(299)
            if np.array_equal(lm.values[s : s + 100][:, ~masked], audio_view.matrix[:, ~masked])
        )
        assert abs(start - v0 * 10) <= 10


class TestTokenizeAudio:
    def test_grid_arithmetic(self):
        view = AudioView("local", np.zeros((100, 80)), [])
        seq = tokenize_audio_view(view)
        assert seq.tokens.shape == (50, 160)
        assert seq.grid == (10, 5)

    def test_reassembly_bijection(self):
        rng = np.random.default_rng(10)
        view = AudioView("local", rng.normal(size=(97, 80)), [])  # forces padding
        seq = tokenize_audio_view(view)
        back = reassemble_audio_tokens(seq)
        assert back.shape == (100, 80)
        np.testing.assert_array_equal(back[:97], view.matrix)
        np.testing.assert_array_equal(back[97:], views.LOG_FLOOR)

    def test_time_major_ordering(self):
        matrix = np.zeros((20, 80))
        matrix[0:10, 16:32] = 3.0  # time block 0, frequency block 1
        seq = tokenize_audio_view(AudioView("local", matrix, []))
        assert seq.tokens[1].sum() != 0  # index = t_block * 5 + f_block = 1
        assert seq.tokens[0].sum() == 0
        matrix2 = np.zeros((20, 80))
        matrix2[10:20, 0:16] = 1.0  # time block 1, frequency block 0 -> index 5
        seq2 = tokenize_audio_view(AudioView("local", matrix2, []))
        assert seq2.tokens[5].sum() != 0

    def test_rejects_bad_frequency_split(self):
        with pytest.raises(ValueError, match="divisible"):
            tokenize_audio_view(AudioView("local", np.zeros((10, 80)), []), patch_f=15)


class TestTokenizeVideo:
    def test_grid_arithmetic(self):
        rng = np.random.default_rng(11)
        view = VideoView("global", rng.random((25, 64, 64, 3)), fps=25)
        seq = tokenize_video_view(view)
        assert seq.tokens.shape == (80, 5 * 16 * 16 * 3)
        assert seq.grid == (5, 4, 4)

    def test_reassembly_with_padding(self):
        rng = np.random.default_rng(12)
        view = VideoView("global", rng.random((13, 32, 32, 3)), fps=13)
        seq = tokenize_video_view(view)
        back = reassemble_video_tokens(seq)
        assert back.shape == (15, 32, 32, 3)
        np.testing.assert_array_equal(back[:13], view.frames)
        np.testing.assert_array_equal(back[13], view.frames[-1])  # repeated last frame
        np.testing.assert_array_equal(back[14], view.frames[-1])

    def test_constant_clip_identical_tokens(self):
        view = VideoView("global", np.full((10, 32, 32, 3), 0.6), fps=10)
        seq = tokenize_video_view(view)
        np.testing.assert_array_equal(
            seq.tokens, np.broadcast_to(seq.tokens[0], seq.tokens.shape)
        )

    def test_rejects_indivisible_resolution(self):
        view = VideoView("global", np.zeros((10, 30, 30, 3)), fps=10)
        with pytest.raises(ValueError, match="divisible"):
            tokenize_video_view(view)


class TestProjection:
    def test_zero_weights_zero_embeddings(self):
        rng = np.random.default_rng(13)
        proj = ViewProjector(32, rng)
        proj.audio.weight.data[...] = 0.0
        proj.audio.bias.data[...] = 0.0
        seq = tokenize_audio_view(AudioView("local", rng.normal(size=(100, 80)), []))
        emb = proj.project(seq)
        np.testing.assert_array_equal(emb.vectors.data, 0.0)

    def test_length_preserved_and_shared_dim(self):
        rng = np.random.default_rng(14)
        proj = ViewProjector(48, rng)
        a = proj.project(tokenize_audio_view(AudioView("local", rng.normal(size=(100, 80)), [])))
        v = proj.project(tokenize_video_view(VideoView("global", rng.random((10, 32, 32, 3)), 10)))
        assert a.vectors.shape == (50, 48)
        assert v.vectors.shape == (10 // 5 * 4, 48)
        assert a.vectors.shape[1] == v.vectors.shape[1]

    def test_timestamps_follow_token_grid(self):
        rng = np.random.default_rng(15)
        proj = ViewProjector(16, rng)
        seq = tokenize_audio_view(AudioView("local", rng.normal(size=(100, 80)), []))
        emb = proj.project(seq)
        np.testing.assert_allclose(emb.timestamps[:6], [0.05] * 5 + [0.15])

    def test_rejects_width_mismatch(self):
        rng = np.random.default_rng(16)
        proj = ViewProjector(16, rng)
        seq = tokenize_audio_view(AudioView("local", rng.normal(size=(100, 80)), []))
        seq.tokens = seq.tokens[:, :100]
        with pytest.raises(ValueError, match="projection expects"):
            proj.project(seq)

    def test_projection_gradient(self):
        rng = np.random.default_rng(17)
        w = Tensor(rng.normal(size=(12, 5)), requires_grad=True)
        b = Tensor(rng.normal(size=5), requires_grad=True)
        tokens = Tensor(rng.normal(size=(7, 12)))
        probe = Tensor(rng.normal(size=(7, 5)))
        err = check_gradients(
            lambda w, b: T.tsum((T.matmul(tokens, w) + b) * probe), [w, b]
        )
        assert err <= 1e-4
