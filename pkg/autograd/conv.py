"""2-D convolution (cross-correlation) via strided window views"""

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autograd.tensor import Function, ShapeError, Tensor, as_tensor


def conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class Conv2dFn(Function):
    def forward(self, x, w, bias=None):
        if x.ndim != 4 or w.ndim != 4:
            raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape}, {w.shape}")
        batch, c_in, height, width = x.shape
        c_out, w_in, kh, kw = w.shape
        if w_in != c_in:
            raise ShapeError(f"conv2d channel mismatch: input {c_in}, weight {w_in}")
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
        s, p = self.stride, self.padding
        out_h = conv_output_extent(height, kh, s, p)
        out_w = conv_output_extent(width, kw, s, p)
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"conv2d output extent < 1 for input {height}x{width}")

        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        # [B, C, H', W', kh, kw]
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s][:, :, :out_h, :out_w]
        self.windows, self.w = windows, w
        self.x_shape, self.padded_shape = x.shape, xp.shape
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if bias is not None:
            out = out + bias.reshape(1, c_out, 1, 1)
        return np.ascontiguousarray(out)

    def backward(self, grad):
        s, p = self.stride, self.padding
        _, _, out_h, out_w = grad.shape
        kh, kw = self.w.shape[2:]
        grad_w = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_b = grad.sum(axis=(0, 2, 3)) if len(self.needs_input_grad) > 2 else None

        # [B, H', W', C, kh, kw]
        dwin = np.tensordot(grad, self.w, axes=([1], [0]))
        dxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + s * out_h : s, j : j + s * out_w : s] += dwin[..., i, j].transpose(0, 3, 1, 2)
        height, width = self.x_shape[2:]
        grad_x = dxp[:, :, p : p + height, p : p + width]
        grads = (np.ascontiguousarray(grad_x), grad_w)
        return grads + ((grad_b,) if grad_b is not None else ())


def conv2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate ``x`` [B,C_in,H,W] with ``w`` [C_out,C_in,kh,kw].

    Output extents are floor((H + 2p - kh) / s) + 1 and likewise for W.
    """
    x = as_tensor(x)
    inputs = (x, as_tensor(w, like=x)) + ((as_tensor(bias, like=x),) if bias is not None else ())
    return Conv2dFn.apply(*inputs, stride=stride, padding=padding)
