"""Regenerates the reference fixtures with Pillow and NumPy.

Run from this directory: python3 make_fixtures.py
"""
import numpy as np
from PIL import Image


def write_values(path, arr):
    with open(path, "w") as f:
        for row in arr.reshape(arr.shape[0], -1):
            f.write(" ".join(str(int(v)) for v in row) + "\n")


rng = np.random.default_rng(1234)

# 4x4 8-bit grayscale written by Pillow's PGM encoder
gray = rng.integers(0, 256, size=(4, 4), dtype=np.uint8)
Image.fromarray(gray).save("gray4x4.pgm")
decoded = np.asarray(Image.open("gray4x4.pgm"))
write_values("gray4x4.txt", decoded)

# 3x5 RGB 8-bit PNG
rgb = rng.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)
Image.fromarray(rgb).save("rgb3x5.png")
write_values("rgb3x5.txt", np.asarray(Image.open("rgb3x5.png")))

# 2x3 16-bit grayscale PNG
g16 = np.array([[0, 1, 256], [32768, 65534, 65535]], dtype=np.uint16)
Image.fromarray(g16).save("gray16_2x3.png")
write_values("gray16_2x3.txt", np.asarray(Image.open("gray16_2x3.png")).astype(np.uint16))


def make_colorwheel():
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[0:ry, 0] = 255
    wheel[0:ry, 1] = np.floor(255 * np.arange(0, ry) / ry)
    col += ry
    wheel[col:col + yg, 0] = 255 - np.floor(255 * np.arange(0, yg) / yg)
    wheel[col:col + yg, 1] = 255
    col += yg
    wheel[col:col + gc, 1] = 255
    wheel[col:col + gc, 2] = np.floor(255 * np.arange(0, gc) / gc)
    col += gc
    wheel[col:col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col:col + cb, 2] = 255
    col += cb
    wheel[col:col + bm, 2] = 255
    wheel[col:col + bm, 0] = np.floor(255 * np.arange(0, bm) / bm)
    col += bm
    wheel[col:col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col:col + mr, 0] = 255
    return wheel


def uv_to_colors(u, v):
    out = np.zeros(u.shape + (3,), np.uint8)
    wheel = make_colorwheel()
    n = wheel.shape[0]
    rad = np.sqrt(np.square(u) + np.square(v))
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (n - 1)
    k0 = np.floor(fk).astype(np.int32)
    k1 = k0 + 1
    k1[k1 == n] = 0
    f = fk - k0
    for i in range(3):
        col0 = wheel[k0, i] / 255.0
        col1 = wheel[k1, i] / 255.0
        col = (1 - f) * col0 + f * col1
        inside = rad <= 1
        col[inside] = 1 - rad[inside] * (1 - col[inside])
        col[~inside] = col[~inside] * 0.75
        out[..., i] = np.floor(255 * col)
    return out


# direction sweep: rows are magnitudes, columns are angles; max magnitude 1
angles = np.linspace(-np.pi, np.pi, 64, endpoint=False)
mags = np.array([0.25, 0.5, 1.0, 1.5])
u = (mags[:, None] * np.cos(angles[None, :])).astype(np.float32)
v = (mags[:, None] * np.sin(angles[None, :])).astype(np.float32)
h, w = u.shape
with open("wheel_sweep.flo", "wb") as f:
    np.array([202021.25], "<f4").tofile(f)
    np.array([w, h], "<i4").tofile(f)
    np.stack([u, v], axis=-1).astype("<f4").tofile(f)
colors = uv_to_colors(u.astype(np.float64), v.astype(np.float64))
Image.fromarray(colors).save("wheel_sweep.ppm")
