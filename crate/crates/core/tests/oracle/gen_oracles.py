"""Independent reference values for the imaging tests (numpy + scikit-image).

Run: python3 gen_oracles.py > values.txt
"""
import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity


def pattern_a(h, w, c):
    y, x, ch = np.meshgrid(np.arange(h), np.arange(w), np.arange(c), indexing="ij")
    return ((y * 7 + x * 3 + ch * 5) % 17) / 16.0


def pattern_b(h, w, c):
    y, x, ch = np.meshgrid(np.arange(h), np.arange(w), np.arange(c), indexing="ij")
    return ((y * 5 + x * 11 + ch * 2) % 13) / 12.0


def keys(x, a=-0.5):
    x = np.abs(x)
    return np.where(
        x <= 1,
        (a + 2) * x**3 - (a + 3) * x**2 + 1,
        np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0),
    )


def resample_matrix(n, s):
    """Dense (n//s, n) matrix; out-of-range taps reflect with edge repetition."""
    m = np.zeros((n // s, n))
    for j in range(n // s):
        c = (j + 0.5) * s - 0.5
        idx = np.arange(int(np.floor(c - 2 * s)) - 1, int(np.ceil(c + 2 * s)) + 2)
        wts = keys((idx - c) / s)
        wts = wts / wts.sum()
        for i, wt in zip(idx, wts):
            k = i
            while k < 0 or k >= n:
                k = -k - 1 if k < 0 else 2 * n - k - 1
            m[j, k] += wt
    return m


def downsample(img, s):
    h, w, _ = img.shape
    out = np.einsum("ay,yxc->axc", resample_matrix(h, s), img)
    out = np.einsum("bx,axc->abc", resample_matrix(w, s), out)
    return np.clip(out, 0.0, 1.0)


def dump(name, arr):
    flat = ", ".join(repr(float(v)) for v in np.asarray(arr).ravel())
    print(f"{name} = [{flat}]")


ramp = np.tile((np.arange(8) / 7.0)[None, :, None], (8, 1, 1))
dump("RAMP_8_S2", downsample(ramp, 2))
dump("A_12x10x1_S2", downsample(pattern_a(12, 10, 1), 2))
dump("A_12x10x1_S3", downsample(pattern_a(12, 10, 1), 3))
dump("A_9x12x3_S4", downsample(pattern_a(9, 12, 3), 4))

a = pattern_a(24, 20, 3)
b = pattern_b(24, 20, 3)
print("PSNR_AB =", repr(peak_signal_noise_ratio(a, b, data_range=1.0)))
kw = dict(data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, win_size=11)
print("SSIM_AB =", repr(structural_similarity(a, b, channel_axis=2, **kw)))
print("SSIM_A_HALF =", repr(structural_similarity(a, 0.5 * a + 0.25, channel_axis=2, **kw)))
const = np.full((16, 16), 0.3)
print("SSIM_CONST =", repr(structural_similarity(const, np.full((16, 16), 0.7), **kw)))
