"""Slow, obviously-correct reference implementations used as test oracles."""

import numpy as np


def naive_window(img, size, mode="max"):
    """Direct scan of the truncated size x size window at every pixel."""
    r = size // 2
    h, w = img.shape[:2]
    out = np.empty_like(img, dtype=np.float64)
    f = np.max if mode == "max" else np.min
    for y in range(h):
        for x in range(w):
            patch = img[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
            out[y, x] = f(patch, axis=(0, 1))
    return out


def padded_window(img, size, mode="max"):
    """Every full size x size window of the image padded with the identity
    element, reduced directly; same result as naive_window, vectorized."""
    r = size // 2
    fill = -np.inf if mode == "max" else np.inf
    pad = [(r, r), (r, r)] + [(0, 0)] * (img.ndim - 2)
    win = np.lib.stride_tricks.sliding_window_view(np.pad(img, pad, constant_values=fill), (size, size), axis=(0, 1))
    return win.max(axis=(-2, -1)) if mode == "max" else win.min(axis=(-2, -1))


def naive_box_sum(img, y0, x0, y1, x1):
    total = 0.0
    for y in range(y0, y1):
        for x in range(x0, x1):
            total += float(img[y, x])
    return total


def naive_box_mean(img, r):
    h, w = img.shape
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = img[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].mean()
    return out


def exact_guided_filter(I, p, r, eps):
    """Guided filter written out with explicit window means."""
    mI = naive_box_mean(I, r)
    mp = naive_box_mean(p, r)
    corr_Ip = naive_box_mean(I * p, r)
    corr_II = naive_box_mean(I * I, r)
    a = (corr_Ip - mI * mp) / (corr_II - mI * mI + eps)
    b = mp - a * mI
    return naive_box_mean(a, r) * I + naive_box_mean(b, r)


def area_downsample(img, k):
    """Mean of each k x k block (integer k dividing the image size)."""
    h, w = img.shape[:2]
    return img.reshape(h // k, k, w // k, k, *img.shape[2:]).mean(axis=(1, 3))


def lambert_pixel(point, normal, light_pos, light_color, beta_l, d_min=0.5):
    """One pixel, one light, scalar arithmetic."""
    dx = [light_pos[i] - point[i] for i in range(3)]
    d = (dx[0] ** 2 + dx[1] ** 2 + dx[2] ** 2) ** 0.5
    cos = sum(dx[i] * normal[i] for i in range(3)) / d if d > 0 else 1.0
    gain = beta_l / max(d, d_min) ** 2 * max(cos, 0.0)
    return [gain * c for c in light_color]


# Published CIEDE2000 verification pairs: (Lab1, Lab2, dE00).
SHARMA_PAIRS = [
    ((50.0000, 2.6772, -79.7751), (50.0000, 0.0000, -82.7485), 2.0425),
    ((50.0000, 3.1571, -77.2803), (50.0000, 0.0000, -82.7485), 2.8615),
    ((50.0000, 2.8361, -74.0200), (50.0000, 0.0000, -82.7485), 3.4412),
    ((50.0000, -1.3802, -84.2814), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, -1.1848, -84.8006), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, -0.9009, -85.5211), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, 0.0000, 0.0000), (50.0000, -1.0000, 2.0000), 2.3669),
    ((50.0000, -1.0000, 2.0000), (50.0000, 0.0000, 0.0000), 2.3669),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0009), 7.1792),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0010), 7.1792),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0011), 7.2195),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0012), 7.2195),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0009, -2.4900), 4.8045),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0010, -2.4900), 4.8045),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0011, -2.4900), 4.7461),
    ((50.0000, 2.5000, 0.0000), (50.0000, 0.0000, -2.5000), 4.3065),
    ((50.0000, 2.5000, 0.0000), (73.0000, 25.0000, -18.0000), 27.1492),
    ((50.0000, 2.5000, 0.0000), (61.0000, -5.0000, 29.0000), 22.8977),
    ((50.0000, 2.5000, 0.0000), (56.0000, -27.0000, -3.0000), 31.9030),
    ((50.0000, 2.5000, 0.0000), (58.0000, 24.0000, 15.0000), 19.4535),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.1736, 0.5854), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.2972, 0.0000), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 1.8634, 0.5757), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.2592, 0.3350), 1.0000),
    ((60.2574, -34.0099, 36.2677), (60.4626, -34.1751, 39.4387), 1.2644),
    ((63.0109, -31.0961, -5.8663), (62.8187, -29.7946, -4.0864), 1.2630),
    ((61.2901, 3.7196, -5.3901), (61.4292, 2.2480, -4.9620), 1.8731),
    ((35.0831, -44.1164, 3.7933), (35.0232, -40.0716, 1.5901), 1.8645),
    ((22.7233, 20.0904, -46.6940), (23.0331, 14.9730, -42.5619), 2.0373),
    ((36.4612, 47.8580, 18.3852), (36.2715, 50.5065, 21.2231), 1.4146),
    ((90.8027, -2.0831, 1.4410), (91.1528, -1.6435, 0.0447), 1.4441),
    ((90.9257, -0.5406, -0.9208), (88.6381, -0.8985, -0.7239), 1.5381),
    ((6.7747, -0.2908, -2.4247), (5.8714, -0.0985, -2.2286), 0.6377),
    ((2.0776, 0.0795, -1.1350), (0.9033, -0.0636, -0.5514), 0.9082),
]
