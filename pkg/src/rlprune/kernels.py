"""Hot numeric kernels: direct 2-D convolution and max pooling.

Each kernel exists twice: a numba @njit version (parallel over the batch or
output-channel axis, no racy reductions, so results are thread-count
independent) and a pure-numpy version built on im2col /
sliding_window_view.  `backend.USE_NUMBA` picks the pair at import time.

Accumulation is float64 in both paths, outputs are float32.
"""

import numpy as np

from .backend import USE_NUMBA

# ---------------------------------------------------------------- numpy path


def _im2col(x, k, stride, pad):
    # x: (B, C, H, W) -> (B, C*k*k, Ho*Wo)
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, k, k)
    ho, wo = view.shape[2], view.shape[3]
    cols = view.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * k * k, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _conv2d_forward_np(x, w, stride, pad):
    b = x.shape[0]
    cout, cin, k, _ = w.shape
    cols, ho, wo = _im2col(x, k, stride, pad)
    y = np.matmul(w.reshape(cout, -1).astype(np.float64), cols.astype(np.float64))
    return y.reshape(b, cout, ho, wo).astype(np.float32)


def _conv2d_backward_np(x, w, gy, stride, pad):
    b, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho, wo = gy.shape[2], gy.shape[3]
    cols, _, _ = _im2col(x, k, stride, pad)
    g = gy.reshape(b, cout, ho * wo).astype(np.float64)
    gw = np.einsum("bop,bip->oi", g, cols.astype(np.float64))
    gw = gw.reshape(cout, cin, k, k).astype(np.float32)
    # grad wrt input: scatter W^T @ gy back through the im2col geometry
    gcols = np.matmul(w.reshape(cout, -1).T.astype(np.float64), g)  # (B, C*k*k, P)
    gcols = gcols.reshape(b, cin, k, k, ho, wo)
    gx = np.zeros((b, cin, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            gx[:, :, kh:kh + stride * ho:stride, kw:kw + stride * wo:stride] += gcols[:, :, kh, kw]
    if pad:
        gx = gx[:, :, pad:pad + h, pad:pad + wd]
    gb = gy.astype(np.float64).sum(axis=(0, 2, 3)).astype(np.float32)
    return gx.astype(np.float32), gw, gb


def _pool_view(x, k, stride):
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    return view[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, k, k)


def _maxpool_forward_np(x, k, stride):
    view = _pool_view(x, k, stride)
    b, c, ho, wo = view.shape[:4]
    flat = view.reshape(b, c, ho, wo, k * k)
    idx = flat.argmax(axis=4).astype(np.int64)
    y = np.take_along_axis(flat, idx[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), idx


def _maxpool_backward_np(x, gy, idx, k, stride):
    b, c, h, w = x.shape
    ho, wo = gy.shape[2], gy.shape[3]
    gx = np.zeros((b, c, h, w), dtype=np.float32)
    oh = np.arange(ho)[:, None]
    ow = np.arange(wo)[None, :]
    ih = oh * stride + idx // k  # (B,C,Ho,Wo) after broadcast
    iw = ow * stride + idx % k
    bb = np.arange(b)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    np.add.at(gx, (bb, cc, ih, iw), gy)
    return gx


# ---------------------------------------------------------------- numba path

if USE_NUMBA:
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def _conv2d_forward_nb(x, w, stride, pad):  # pragma: no cover - jitted
        b, cin, h, wd = x.shape
        cout, _, k, _ = w.shape
        ho = (h + 2 * pad - k) // stride + 1
        wo = (wd + 2 * pad - k) // stride + 1
        y = np.empty((b, cout, ho, wo), dtype=np.float32)
        for bi in prange(b):
            for co in range(cout):
                for oh in range(ho):
                    hs = oh * stride - pad
                    for ow in range(wo):
                        ws = ow * stride - pad
                        acc = 0.0
                        for ci in range(cin):
                            for kh in range(k):
                                ih = hs + kh
                                if ih < 0 or ih >= h:
                                    continue
                                for kw in range(k):
                                    iw = ws + kw
                                    if 0 <= iw < wd:
                                        acc += x[bi, ci, ih, iw] * w[co, ci, kh, kw]
                        y[bi, co, oh, ow] = acc
        return y

    @njit(cache=True, parallel=True)
    def _conv2d_backward_gx_nb(w, gy, stride, pad, h, wd):  # pragma: no cover
        b, cout, ho, wo = gy.shape
        _, cin, k, _ = w.shape
        gx = np.zeros((b, cin, h, wd), dtype=np.float32)
        for bi in prange(b):
            for co in range(cout):
                for oh in range(ho):
                    hs = oh * stride - pad
                    for ow in range(wo):
                        ws = ow * stride - pad
                        g = gy[bi, co, oh, ow]
                        for ci in range(cin):
                            for kh in range(k):
                                ih = hs + kh
                                if ih < 0 or ih >= h:
                                    continue
                                for kw in range(k):
                                    iw = ws + kw
                                    if 0 <= iw < wd:
                                        gx[bi, ci, ih, iw] += g * w[co, ci, kh, kw]
        return gx

    @njit(cache=True, parallel=True)
    def _conv2d_backward_gw_nb(x, gy, stride, pad, k):  # pragma: no cover
        b, cin, h, wd = x.shape
        cout, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3]
        gw = np.zeros((cout, cin, k, k), dtype=np.float32)
        for co in prange(cout):
            for ci in range(cin):
                for kh in range(k):
                    for kw in range(k):
                        acc = 0.0
                        for bi in range(b):
                            for oh in range(ho):
                                ih = oh * stride - pad + kh
                                if ih < 0 or ih >= h:
                                    continue
                                for ow in range(wo):
                                    iw = ow * stride - pad + kw
                                    if 0 <= iw < wd:
                                        acc += gy[bi, co, oh, ow] * x[bi, ci, ih, iw]
                        gw[co, ci, kh, kw] = acc
        return gw

    @njit(cache=True, parallel=True)
    def _maxpool_forward_nb(x, k, stride):  # pragma: no cover
        b, c, h, w = x.shape
        ho = (h - k) // stride + 1
        wo = (w - k) // stride + 1
        y = np.empty((b, c, ho, wo), dtype=np.float32)
        idx = np.empty((b, c, ho, wo), dtype=np.int64)
        for bi in prange(b):
            for ci in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        best = np.float32(-np.inf)
                        bidx = 0
                        for kh in range(k):
                            for kw in range(k):
                                v = x[bi, ci, oh * stride + kh, ow * stride + kw]
                                if v > best:
                                    best = v
                                    bidx = kh * k + kw
                        y[bi, ci, oh, ow] = best
                        idx[bi, ci, oh, ow] = bidx
        return y, idx

    @njit(cache=True, parallel=True)
    def _maxpool_backward_nb(gy, idx, k, stride, h, w):  # pragma: no cover
        b, c, ho, wo = gy.shape
        gx = np.zeros((b, c, h, w), dtype=np.float32)
        for bi in prange(b):
            for ci in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        p = idx[bi, ci, oh, ow]
                        gx[bi, ci, oh * stride + p // k, ow * stride + p % k] += gy[bi, ci, oh, ow]
        return gx


# ---------------------------------------------------------------- dispatch


def conv2d_forward(x, w, stride, pad):
    """x (B,Cin,H,W) float32, w (Cout,Cin,K,K) -> y (B,Cout,Ho,Wo)."""
    if USE_NUMBA:
        return _conv2d_forward_nb(x, w, stride, pad)
    return _conv2d_forward_np(x, w, stride, pad)


def conv2d_backward(x, w, gy, stride, pad):
    """Returns (gx, gw, gb)."""
    if USE_NUMBA:
        gx = _conv2d_backward_gx_nb(w, gy, stride, pad, x.shape[2], x.shape[3])
        gw = _conv2d_backward_gw_nb(x, gy, stride, pad, w.shape[2])
        gb = gy.astype(np.float64).sum(axis=(0, 2, 3)).astype(np.float32)
        return gx, gw, gb
    return _conv2d_backward_np(x, w, gy, stride, pad)


def maxpool_forward(x, k, stride):
    """Returns (y, argmax indices into the flattened k*k window)."""
    if USE_NUMBA:
        return _maxpool_forward_nb(x, k, stride)
    return _maxpool_forward_np(x, k, stride)


def maxpool_backward(x, gy, idx, k, stride):
    if USE_NUMBA:
        return _maxpool_backward_nb(gy, idx, k, stride, x.shape[2], x.shape[3])
    return _maxpool_backward_np(x, gy, idx, k, stride)
