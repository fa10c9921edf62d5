"""Bilinear sampling of feature maps at continuous points.

Points are normalized (x, y) in [0, 1]^2 and map to pixel coordinates with
x_pix = x * W - 0.5, so integer pixel coordinates are pixel centers. Neighbors
outside the map contribute zero (zero padding); this is the only sampling
convention used in the package.
"""

import numpy as np

from autograd.tensor import Function, ShapeError, Tensor, as_tensor


def scatter_add(size: int, index: np.ndarray, values: np.ndarray, dtype) -> np.ndarray:
    """Sum ``values`` into a flat buffer of ``size`` at ``index``."""
    return np.bincount(index.ravel(), weights=values.ravel(), minlength=size).astype(dtype)


class BilinearSample(Function):
    def forward(self, value, points):
        if value.ndim != 4 or points.ndim != 3 or points.shape[-1] != 2:
            raise ShapeError(f"bilinear_sample expects [B,C,H,W] and [B,P,2], got {value.shape}, {points.shape}")
        if value.shape[0] != points.shape[0]:
            raise ShapeError("bilinear_sample batch extents differ")
        batch, channels, height, width = value.shape
        x = points[..., 0] * width - 0.5
        y = points[..., 1] * height - 0.5
        x0 = np.floor(x)
        y0 = np.floor(y)
        wx1 = x - x0
        wy1 = y - y0
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)

        # [B, H, W, C] so a gather yields [B, P, C]
        vt = np.ascontiguousarray(value.transpose(0, 2, 3, 1))
        b_idx = np.arange(batch)[:, None]
        corners = []
        for dy, wy in ((0, 1 - wy1), (1, wy1)):
            for dx, wx in ((0, 1 - wx1), (1, wx1)):
                yc, xc = y0 + dy, x0 + dx
                valid = (yc >= 0) & (yc < height) & (xc >= 0) & (xc < width)
                ycl = np.clip(yc, 0, height - 1)
                xcl = np.clip(xc, 0, width - 1)
                sampled = vt[b_idx, ycl, xcl] * valid[..., None]
                corners.append((dy, dx, wy, wx, valid, ycl, xcl, sampled))

        self.shape_info = (batch, channels, height, width)
        self.corners, self.b_idx = corners, b_idx
        self.dtype = value.dtype
        out = np.zeros(points.shape[:2] + (channels,), dtype=value.dtype)
        for _, _, wy, wx, _, _, _, sampled in corners:
            out += (wy * wx)[..., None] * sampled
        return out

    def backward(self, grad):
        batch, channels, height, width = self.shape_info
        grad_value = grad_points = None

        if self.needs_input_grad[0]:
            size = batch * height * width * channels
            flat = np.zeros(size, dtype=np.float64)
            chan = np.arange(channels)
            for _, _, wy, wx, valid, ycl, xcl, _ in self.corners:
                cell = (self.b_idx * height + ycl) * width + xcl
                index = cell[..., None] * channels + chan
                weights = grad * ((wy * wx) * valid)[..., None]
                flat += scatter_add(size, index, weights, np.float64)
            grad_value = flat.reshape(batch, height, width, channels).transpose(0, 3, 1, 2).astype(self.dtype)

        if self.needs_input_grad[1]:
            v = {(dy, dx): sampled for dy, dx, _, _, _, _, _, sampled in self.corners}
            wy1 = self.corners[3][2]
            wx1 = self.corners[3][3]
            wy0, wx0 = 1 - wy1, 1 - wx1
            d_dx = wy0[..., None] * (v[0, 1] - v[0, 0]) + wy1[..., None] * (v[1, 1] - v[1, 0])
            d_dy = wx0[..., None] * (v[1, 0] - v[0, 0]) + wx1[..., None] * (v[1, 1] - v[0, 1])
            gx = (grad * d_dx).sum(axis=-1) * width
            gy = (grad * d_dy).sum(axis=-1) * height
            grad_points = np.stack([gx, gy], axis=-1).astype(self.dtype)

        return grad_value, grad_points


def bilinear_sample(value: Tensor, points: Tensor) -> Tensor:
    """Sample ``value`` [B,C,H,W] at normalized ``points`` [B,P,2] -> [B,P,C]."""
    value = as_tensor(value)
    return BilinearSample.apply(value, as_tensor(points, like=value))
