"""Visual encoder: preprocessing, stem, blocks, pooling, frame encoding."""

import numpy as np
import pytest

import oracles
from aufuse import tensor as T
from aufuse import vision
from aufuse.tensor import Tensor, check_gradients, no_grad
from aufuse.vision import (
    ConvNextBlock,
    EncoderConfig,
    PatchConv,
    VisualEncoder,
    bilinear_resize,
    global_average_pool,
    preprocess_frame,
    read_ppm,
    write_ppm,
)


class TestPreprocess:
    def test_gray_image_standardizes_to_zero(self):
        img = np.full((32, 32, 3), 0.5)
        out = preprocess_frame(img, 64)
        np.testing.assert_allclose(out, 0.0, atol=1e-9)
        assert out.shape == (64, 64, 3)

    def test_target_sized_resize_is_identity(self):
        rng = np.random.default_rng(0)
        img = rng.random((64, 64, 3))
        out = preprocess_frame(img, 64)
        np.testing.assert_allclose(out, (img - 0.5) / 0.25, rtol=1e-12)

    def test_bilinear_matches_hand_computation(self):
        img = np.array([[[1.0], [2.0]], [[3.0], [4.0]]])  # 2x2, 1 channel
        out = bilinear_resize(img, 4, 4)
        # half-pixel centers with edge clamp: axis weights
        # (1,0), (0.75,0.25), (0.25,0.75), (0,1)
        wts = [(1.0, 0.0), (0.75, 0.25), (0.25, 0.75), (0.0, 1.0)]
        expected = np.zeros((4, 4))
        for i, (ay, by) in enumerate(wts):
            for j, (ax, bx) in enumerate(wts):
                rows = img[:, :, 0]
                top = rows[0, 0] * ax + rows[0, 1] * bx
                bot = rows[1, 0] * ax + rows[1, 1] * bx
                expected[i, j] = top * ay + bot * by
        np.testing.assert_allclose(out[:, :, 0], expected, rtol=1e-12)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError, match="H x W x 3"):
            preprocess_frame(np.zeros((4, 4)), 64)

    def test_missing_frame_error_names_path(self, tmp_path):
        missing = tmp_path / "nope.ppm"
        with pytest.raises(ValueError, match="nope.ppm"):
            read_ppm(missing)


class TestPpm:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.random((8, 6, 3))
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert back.shape == (8, 6, 3)
        np.testing.assert_allclose(back, img, atol=0.5 / 255)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.ppm"
        body = bytes(range(2 * 2 * 3))
        path.write_bytes(b"P6\n# a comment\n2 2\n255\n" + body)
        img = read_ppm(path)
        assert img.shape == (2, 2, 3)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(b"P6\n4 4\n255\n\x00\x00")
        with pytest.raises(ValueError, match="truncated"):
            read_ppm(path)


class TestPatchifyStem:
    def test_shape(self):
        rng = np.random.default_rng(2)
        stem = PatchConv(4, 3, 32, rng)
        out = stem(Tensor(rng.random((64, 64, 3)).astype(np.float32)))
        assert out.shape == (16, 16, 32)

    def test_constant_input_identical_positions(self):
        rng = np.random.default_rng(3)
        stem = PatchConv(4, 3, 8, rng)
        out = stem(Tensor(np.full((16, 16, 3), 0.4, dtype=np.float32))).data
        np.testing.assert_allclose(out, np.broadcast_to(out[0, 0], out.shape), atol=1e-6)

    def test_matches_strided_loop_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(12, 12, 3))
        w = rng.normal(size=(4 * 4 * 3, 5))
        got = T.patch_conv2d(Tensor(x), Tensor(w), 4).data
        np.testing.assert_allclose(got, oracles.strided_conv_loops(x, w, 4), atol=1e-6)

    def test_rejects_non_divisible(self):
        rng = np.random.default_rng(5)
        stem = PatchConv(4, 3, 8, rng)
        with pytest.raises(ValueError, match="divisible"):
            stem(Tensor(np.zeros((10, 10, 3), dtype=np.float32)))


class TestConvNextBlock:
    def test_zeroed_projection_is_identity(self):
        rng = np.random.default_rng(6)
        block = ConvNextBlock(8, 7, rng)
        block.project.weight.data[...] = 0.0
        block.project.bias.data[...] = 0.0
        x = rng.normal(size=(6, 6, 8)).astype(np.float32)
        out = block(Tensor(x)).data
        np.testing.assert_array_equal(out, x)

    def test_shape_preserved(self):
        rng = np.random.default_rng(7)
        block = ConvNextBlock(16, 7, rng)
        out = block(Tensor(rng.normal(size=(3, 5, 5, 16)).astype(np.float32)))
        assert out.shape == (3, 5, 5, 16)

    def test_single_position_matches_dense_composition(self):
        rng = np.random.default_rng(8)
        block = ConvNextBlock(6, 3, rng)
        x = rng.normal(size=(1, 1, 6))
        got = block(Tensor(x.astype(np.float64))).data[0, 0]
        # on a 1x1 grid only the center tap of the depthwise kernel fires
        h = x[0, 0] * block.dw_weight.data[1, 1] + block.dw_bias.data
        mu, var = h.mean(), h.var()
        h = (h - mu) / np.sqrt(var + 1e-5)
        h = h * block.norm.gamma.data + block.norm.beta.data
        h = h @ block.expand.weight.data + block.expand.bias.data
        c = np.sqrt(2 / np.pi)
        h = 0.5 * h * (1 + np.tanh(c * (h + 0.044715 * h**3)))
        h = h @ block.project.weight.data + block.project.bias.data
        np.testing.assert_allclose(got, x[0, 0] + h, atol=1e-6)


class TestGlobalAveragePool:
    def test_constant_map(self):
        out = global_average_pool(Tensor(np.full((4, 4, 3), 2.5)))
        np.testing.assert_allclose(out.data, 2.5, rtol=1e-7)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(5, 5, 4))
        flat = x.reshape(25, 4)
        perm = flat[rng.permutation(25)].reshape(5, 5, 4)
        a = global_average_pool(Tensor(x)).data
        b = global_average_pool(Tensor(perm)).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_matches_direct_means(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(4, 4, 2))
        expected = np.array([x[:, :, c].sum() / 16 for c in range(2)])
        np.testing.assert_allclose(global_average_pool(Tensor(x)).data, expected, atol=1e-7)

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError, match="empty"):
            global_average_pool(Tensor(np.zeros((0, 4, 2))))


class TestEncoder:
    def test_default_output_is_128(self):
        rng = np.random.default_rng(11)
        enc = VisualEncoder(EncoderConfig(), rng)
        img = preprocess_frame(rng.random((64, 64, 3)), 64)
        with no_grad():
            out = enc(Tensor(img.astype(np.float32)))
        assert out.shape == (128,)

    def test_identical_frames_identical_embeddings(self):
        rng = np.random.default_rng(12)
        enc = VisualEncoder(EncoderConfig(), rng)
        img = preprocess_frame(rng.random((64, 64, 3)), 64).astype(np.float32)
        with no_grad():
            a = enc(Tensor(img)).data
            b = enc(Tensor(img)).data
        assert np.array_equal(a, b)

    def test_shape_algebra(self):
        cfg = EncoderConfig(resolution=64, widths=(8, 16, 32), depths=(1, 1, 1))
        assert cfg.total_stride == 4 * 2 ** (len(cfg.widths) - 1) == 16
        rng = np.random.default_rng(13)
        enc = VisualEncoder(cfg, rng)
        with no_grad():
            grid = enc.forward_grid(Tensor(np.zeros((64, 64, 3), dtype=np.float32)))
        assert grid.shape == (64 // 16, 64 // 16, 32)

    def test_rejects_indivisible_resolution(self):
        with pytest.raises(ValueError, match="divisible"):
            VisualEncoder(EncoderConfig(resolution=60), np.random.default_rng(0))

    def test_zeroed_blocks_realize_identity_stage(self):
        rng = np.random.default_rng(14)
        cfg = EncoderConfig(resolution=16, widths=(8,), depths=(2,))
        enc = VisualEncoder(cfg, rng)
        for block in enc.stages[0]:
            block.project.weight.data[...] = 0.0
            block.project.bias.data[...] = 0.0
        x = rng.normal(size=(16, 16, 3)).astype(np.float32)
        with no_grad():
            stem_out = enc.stem_norm(enc.stem(Tensor(x))).data
            full = enc.forward_grid(Tensor(x)).data
        assert np.array_equal(stem_out, full)

    def test_pixel_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        cfg = EncoderConfig(resolution=8, widths=(4, 6), depths=(1, 1))
        enc = VisualEncoder(cfg, rng)
        oracles.cast_params_f64(enc)
        probe = Tensor(rng.normal(size=6))
        x = Tensor(rng.normal(size=(8, 8, 3)), requires_grad=True)
        err = check_gradients(lambda x: T.tsum(enc(x) * probe), [x])
        assert err <= 1e-4
