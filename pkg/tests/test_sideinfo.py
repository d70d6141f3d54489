"""Pseudo-HDR, structure tensor, difference mask, and the prior pyramid."""

import numpy as np
import pytest

from ihdr.images import DataError, LdrImage
from ihdr.sideinfo import (
    laplacian_edge_map,
    build_bundle,
    difference_mask,
    equalize_blur_gray,
    gaussian_kernel,
    max_pool_levels,
    multiscale_st,
    pseudo_hdr,
    structure_tensor,
)

from conftest import constant_ldr, textured_ldr

LUMA = np.array([0.299, 0.587, 0.114])


class TestPseudoHdr:
    def test_identity_endpoint(self):
        img = constant_ldr(1.0, exposure_time=1.0)
        assert np.all(pseudo_hdr(img, 2.2).pixels == 1.0)

    def test_zero_maps_to_zero(self):
        img = constant_ldr(0.0, exposure_time=0.123)
        assert np.all(pseudo_hdr(img, 2.2).pixels == 0.0)

    def test_scalar_value(self):
        img = constant_ldr(0.5, exposure_time=2.0)
        expected = 0.5**2.2 / 2.0  # scalar pow oracle
        assert pseudo_hdr(img, 2.2).pixels[0, 0, 0] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.108819, abs=1e-6)

    def test_monotone_in_l(self, rng):
        a = rng.uniform(0, 0.98, size=(8, 8, 3))
        lo = LdrImage(pixels=a, exposure_time=0.5)
        hi = LdrImage(pixels=a + 0.02, exposure_time=0.5)
        assert np.all(pseudo_hdr(hi, 2.2).pixels >= pseudo_hdr(lo, 2.2).pixels)

    def test_requires_positive_gamma(self):
        with pytest.raises(DataError, match="gamma"):
            pseudo_hdr(constant_ldr(0.5), 0.0)


def brute_force_structure_tensor(luma, window):
    """Oracle: assemble G^T G per pixel from explicit gradient windows and
    eigendecompose with numpy."""
    h, w = luma.shape
    px = np.pad(luma, ((0, 0), (1, 1)), mode="edge")
    py = np.pad(luma, ((1, 1), (0, 0)), mode="edge")
    gx = (px[:, 2:] - px[:, :-2]) / 2.0
    gy = (py[2:, :] - py[:-2, :]) / 2.0
    r = window // 2
    gx_p = np.pad(gx, r, mode="edge")
    gy_p = np.pad(gy, r, mode="edge")
    eig_max = np.zeros((h, w))
    eig_min = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            wx = gx_p[i : i + window, j : j + window].ravel()
            wy = gy_p[i : i + window, j : j + window].ravel()
            g = np.stack([wx, wy], axis=1)
            vals = np.linalg.eigvalsh(g.T @ g)
            eig_min[i, j], eig_max[i, j] = vals
    return eig_max, eig_min


class TestStructureTensor:
    def test_constant_image_is_flat(self):
        st = structure_tensor(constant_ldr(0.4))
        assert np.all(st.eigen_max == 0.0)
        assert np.all(st.eigen_min == 0.0)
        assert np.all(st.flat_map == 1.0)
        assert np.all(st.reversed_flat == 0.0)

    def test_horizontal_ramp_is_edge_at_interior(self):
        n = 32
        xx = np.tile(np.arange(n) / n, (n, 1))
        img = LdrImage(pixels=np.repeat(xx[:, :, None], 3, axis=2), exposure_time=1.0)
        st = structure_tensor(img, window=3, tau=1e-3)
        # closed form at interior pixels: gradients are (1/n, 0) at all C
        # window samples, so G^T G = diag(C/n^2, 0)
        expected = 9.0 / n**2
        interior = st.eigen_max[2:-2, 2:-2]
        assert np.allclose(interior, expected, rtol=1e-9)
        assert np.allclose(st.eigen_min[2:-2, 2:-2], 0.0, atol=1e-15)
        assert np.all(st.edge_map[2:-2, 2:-2] == 1.0)

    def test_quadrant_corner_detected(self):
        n = 24
        pixels = np.zeros((n, n, 3))
        pixels[n // 2 :, n // 2 :] = 0.8
        img = LdrImage(pixels=pixels, exposure_time=1.0)
        st = structure_tensor(img, window=3, tau=1e-3)
        c = n // 2
        assert st.corner_map[c, c] == 1.0 or st.corner_map[c - 1, c - 1] == 1.0
        # far from the corner the horizontal boundary is a pure edge
        assert st.edge_map[c, c + 8] + st.edge_map[c - 1, c + 8] >= 1.0

    def test_matches_brute_force_eigendecomposition(self, rng):
        img = textured_ldr(size=12, seed=21)
        st = structure_tensor(img, window=3, tau=1e-3)
        eig_max, eig_min = brute_force_structure_tensor(img.pixels @ LUMA, 3)
        assert np.allclose(st.eigen_max, eig_max, rtol=1e-9, atol=1e-12)
        assert np.allclose(st.eigen_min, eig_min, rtol=1e-9, atol=1e-12)

    def test_trace_and_det_identities(self, rng):
        img = textured_ldr(size=16, seed=8)
        st = structure_tensor(img)
        luma = img.pixels @ LUMA
        px = np.pad(luma, ((0, 0), (1, 1)), mode="edge")
        py = np.pad(luma, ((1, 1), (0, 0)), mode="edge")
        gx = (px[:, 2:] - px[:, :-2]) / 2.0
        gy = (py[2:, :] - py[:-2, :]) / 2.0
        from scipy import ndimage

        sxx = ndimage.uniform_filter(gx * gx, 3, mode="nearest") * 9
        sxy = ndimage.uniform_filter(gx * gy, 3, mode="nearest") * 9
        syy = ndimage.uniform_filter(gy * gy, 3, mode="nearest") * 9
        trace = sxx + syy
        det = sxx * syy - sxy * sxy
        assert np.allclose(st.eigen_max + st.eigen_min, trace, rtol=1e-9, atol=1e-15)
        assert np.allclose(st.eigen_max * st.eigen_min, np.maximum(det, 0), rtol=1e-9, atol=1e-15)

    def test_classification_partitions(self, rng):
        img = textured_ldr(size=20, seed=4)
        st = structure_tensor(img)
        assert np.all(st.edge_map + st.corner_map + st.flat_map == 1.0)
        assert np.all(st.reversed_flat == 1.0 - st.flat_map)
        assert np.all(st.eigen_max >= st.eigen_min)
        assert np.all(st.eigen_min >= 0.0)

    def test_rejects_bad_window(self):
        img = constant_ldr(0.5)
        with pytest.raises(DataError, match="window"):
            structure_tensor(img, window=4)
        with pytest.raises(DataError, match="window"):
            structure_tensor(img, window=1)

    def test_reversed_flat_beats_laplacian_on_noise(self, rng):
        # the windowed tensor aggregates gradients, so pixel noise that
        # lights up the per-pixel Laplacian map stays below its threshold
        noise = np.clip(0.5 + rng.normal(0, 0.004, size=(32, 32, 3)), 0, 1)
        img = LdrImage(pixels=noise, exposure_time=1.0)
        lap = laplacian_edge_map(img, threshold=1e-2)
        st = structure_tensor(img, tau=1e-2)
        assert lap.mean() > st.reversed_flat.mean()


def oracle_transform(pixels, radius):
    """Independent reimplementation of T = rgb2gray(Blur(HistEq(.)))."""
    out = np.zeros_like(pixels)
    for c in range(3):
        ch = pixels[:, :, c]
        bins = np.minimum((ch * 256).astype(int), 255)
        hist = np.bincount(bins.ravel(), minlength=256)
        cdf = np.cumsum(hist) / ch.size
        eq = cdf[bins]
        sigma = radius / 3.0
        xs = np.arange(-radius, radius + 1)
        k = np.exp(-(xs**2) / (2 * sigma**2))
        k /= k.sum()
        padded = np.pad(eq, radius, mode="edge")
        rows = np.zeros_like(eq)
        for di, kv in enumerate(k):
            rows += kv * padded[di : di + eq.shape[0], radius : radius + eq.shape[1]]
        blurred = np.zeros_like(eq)
        rows_p = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
        for dj, kv in enumerate(k):
            blurred += kv * rows_p[:, dj : dj + eq.shape[1]]
        out[:, :, c] = blurred
    return out @ LUMA


class TestDifferenceMask:
    def test_identical_frames_give_zero(self):
        img = textured_ldr(size=32, seed=2)
        d = difference_mask(img, img)
        assert np.all(d.mask == 0.0)

    def test_symmetric(self):
        a = textured_ldr(size=32, seed=5)
        b = textured_ldr(size=32, seed=6)
        assert np.array_equal(difference_mask(a, b).mask, difference_mask(b, a).mask)

    def test_matches_oracle_transform(self):
        a = textured_ldr(size=48, seed=7)
        b = textured_ldr(size=48, seed=8)
        lib = difference_mask(a, b, threshold=0.2, blur_radius=7)
        oracle = (
            np.abs(oracle_transform(a.pixels, 7) - oracle_transform(b.pixels, 7)) > 0.2
        ).astype(float)
        assert np.array_equal(lib.mask, oracle)

    def test_displaced_square_iou(self, rng):
        n, square, shift = 128, 32, 16
        background = rng.uniform(0.35, 0.45, size=(n, n, 3))

        def with_square(x0):
            px = background.copy()
            px[48 : 48 + square, x0 : x0 + square] = rng.uniform(
                0.85, 0.95, size=(square, square, 3)
            )
            return LdrImage(pixels=px, exposure_time=1.0)

        ref = with_square(32)
        nonref = with_square(32 + shift)
        d = difference_mask(ref, nonref)

        # geometric ground truth: pixels whose content actually changes
        # (symmetric difference of the two square footprints)
        in_a = np.zeros((n, n), dtype=bool)
        in_b = np.zeros((n, n), dtype=bool)
        in_a[48 : 48 + square, 32 : 32 + square] = True
        in_b[48 : 48 + square, 32 + shift : 32 + shift + square] = True
        motion = in_a ^ in_b

        mask = d.mask.astype(bool)
        iou = (mask & motion).sum() / (mask | motion).sum()
        assert iou >= 0.5

    def test_uniform_superthreshold_difference_fires_everywhere(self, rng):
        # A rank-rich texture equalizes to a near-uniform distribution whose
        # blur is ~0.5, while a constant field equalizes to exactly 1.0, so
        # the transformed difference is ~0.5 everywhere: far above 0.2.
        n = 64
        texture = LdrImage(pixels=rng.uniform(0, 1, size=(n, n, 3)), exposure_time=1.0)
        flat = constant_ldr(0.5, size=n)
        t_tex = equalize_blur_gray(texture)
        t_flat = equalize_blur_gray(flat)
        diff = np.abs(t_tex - t_flat)
        assert np.allclose(t_flat, 1.0, atol=1e-12)
        assert np.all(np.abs(diff - 0.5) < 0.15)  # uniform within blur ripple
        d = difference_mask(texture, flat)
        assert np.all(d.mask == 1.0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DataError, match="equal shapes"):
            difference_mask(constant_ldr(0.5, size=16), constant_ldr(0.5, size=8))

    def test_gaussian_kernel_shape(self):
        k = gaussian_kernel(7)
        assert k.shape == (15,)
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(k == k[::-1])  # symmetric


class TestMultiscale:
    def test_three_levels_shapes(self):
        st = structure_tensor(textured_ldr(size=128, seed=1))
        levels = multiscale_st(st, levels=3)
        assert [m.shape for m in levels] == [(128, 128), (64, 64), (32, 32)]

    def test_zero_input_stays_zero(self):
        st = structure_tensor(constant_ldr(0.5, size=32))
        assert all(np.all(m == 0.0) for m in multiscale_st(st, 3))

    def test_single_activation_survives_pooling(self):
        plane = np.zeros((16, 16))
        plane[5, 9] = 1.0
        levels = max_pool_levels(plane, 3)
        assert all(m.max() == 1.0 for m in levels)
        # oracle: brute-force block max
        for level, m in enumerate(levels):
            f = 2**level
            expected = plane.reshape(16 // f, f, 16 // f, f).max(axis=(1, 3))
            assert np.array_equal(m, expected)

    def test_indivisible_dimensions_rejected(self):
        with pytest.raises(DataError, match="divisible"):
            max_pool_levels(np.zeros((18, 18)), 3)


class TestBundle:
    def test_build_bundle_shapes_agree(self):
        a = textured_ldr(size=32, seed=1, exposure_time=0.5)
        b = textured_ldr(size=32, seed=2, exposure_time=1.0)
        bundle = build_bundle(a, b, gamma=2.2)
        assert bundle.shape == (32, 32, 3)
        assert bundle.ref_pseudo_hdr.pixels.shape == (32, 32, 3)
        assert bundle.st.reversed_flat.shape == (32, 32)
        assert bundle.diff.mask.shape == (32, 32)
