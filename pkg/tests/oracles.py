"""Plain-Python reference implementations, independent of the numpy kernels."""

import math


def matmul_loops(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i][p] * b[p][j]
            out[i][j] = s
    return out


def conv_loops(x, w, b):
    """x: [N][C][H][W], w: [O][C][K][K], b: [O]; valid, stride 1."""
    n_, c_, h, wd = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    o_, k = len(w), len(w[0][0])
    ho, wo = h - k + 1, wd - k + 1
    out = [[[[0.0] * wo for _ in range(ho)] for _ in range(o_)] for _ in range(n_)]
    for n in range(n_):
        for o in range(o_):
            for y in range(ho):
                for xx in range(wo):
                    s = b[o]
                    for c in range(c_):
                        for dy in range(k):
                            for dx in range(k):
                                s += x[n][c][y + dy][xx + dx] * w[o][c][dy][dx]
                    out[n][o][y][xx] = s
    return out


def maxpool_loops(x):
    """Returns (pooled values, flat winner indices), 2x2 stride 2, floor semantics."""
    n_, c_, h, w = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    ho, wo = h // 2, w // 2
    out = [[[[0.0] * wo for _ in range(ho)] for _ in range(c_)] for _ in range(n_)]
    idx = [[[[0] * wo for _ in range(ho)] for _ in range(c_)] for _ in range(n_)]
    for n in range(n_):
        for c in range(c_):
            for i in range(ho):
                for j in range(wo):
                    best, where = -math.inf, None
                    for dy in range(2):
                        for dx in range(2):
                            v = x[n][c][2 * i + dy][2 * j + dx]
                            if v > best:
                                best, where = v, ((n * c_ + c) * h + 2 * i + dy) * w + 2 * j + dx
                    out[n][c][i][j] = best
                    idx[n][c][i][j] = where
    return out, idx


def dense_loops(x, w, b):
    y = matmul_loops(x, w)
    return [[v + b[j] for j, v in enumerate(row)] for row in y]


def bilinear_pixel(src, y, x, out_h, out_w):
    """One output pixel of a half-pixel-centre bilinear resize of 2-D ``src``."""
    in_h, in_w = len(src), len(src[0])
    sy = min(max((y + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
    sx = min(max((x + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
    y0, x0 = int(math.floor(sy)), int(math.floor(sx))
    y1, x1 = min(y0 + 1, in_h - 1), min(x0 + 1, in_w - 1)
    fy, fx = sy - y0, sx - x0
    return (
        src[y0][x0] * (1 - fy) * (1 - fx)
        + src[y0][x1] * (1 - fy) * fx
        + src[y1][x0] * fy * (1 - fx)
        + src[y1][x1] * fy * fx
    )


def central_difference(f, x, eps=1e-5):
    """Gradient of scalar f w.r.t. numpy array x (perturbed in place, restored)."""
    import numpy as np

    g = np.zeros_like(x, dtype=float)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        v = flat[i]
        flat[i] = v + eps
        hi = f()
        flat[i] = v - eps
        lo = f()
        flat[i] = v
        gf[i] = (hi - lo) / (2 * eps)
    return g
