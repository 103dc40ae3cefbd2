"""Convolutional perception head and its attention read-out.

A small stack of strided convolutions (tanh activations) followed by a
dense layer produces the sensory feature vector for the recurrent network.
The per-layer activation maps are kept so the saliency read-out can
backproject channel-averaged maps layer by layer down to input resolution
(multiplying at each scale, absolute value and max-normalization at the
end).

Images are (H, W, 3) float arrays in [0, 1]; internally the stack runs
NCHW.  The paper-style pipeline standardizes each image to zero mean and
unit variance before the first convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, primitive, value_of
from .errors import StructuralError

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class ConvLayerSpec:
    out_channels: int
    kernel: int
    stride: int
    activation: str = "tanh"  # "tanh" | "linear"

    @property
    def pad(self) -> int:
        return self.kernel // 2


@dataclass(frozen=True)
class ConvHeadSpec:
    """Architecture of the head; defaults give a 3-layer, 32-feature stack."""

    input_height: int = 32
    input_width: int = 48
    input_channels: int = 3
    layers: tuple = (ConvLayerSpec(8, 5, 2), ConvLayerSpec(12, 5, 2),
                     ConvLayerSpec(16, 3, 2))
    n_features: int = 32

    def layer_shapes(self):
        """(channels, height, width) after each conv layer."""
        h, w = self.input_height, self.input_width
        shapes = []
        for layer in self.layers:
            h = -(-h // layer.stride)  # ceil: 'same' padding, strided
            w = -(-w // layer.stride)
            shapes.append((layer.out_channels, h, w))
        return shapes

    @property
    def dense_in(self) -> int:
        c, h, w = self.layer_shapes()[-1]
        return c * h * w


@dataclass
class ConvHeadParams:
    spec: ConvHeadSpec
    kernels: list = field(default_factory=list)   # (Cout, Cin, k, k) each
    biases: list = field(default_factory=list)    # (Cout,) each
    dense_w: np.ndarray = None                    # (dense_in, n_features)
    dense_b: np.ndarray = None                    # (n_features,)

    def as_dict(self):
        d = {}
        for i, (w, b) in enumerate(zip(self.kernels, self.biases)):
            d[f"conv{i}_w"] = w
            d[f"conv{i}_b"] = b
        d["dense_w"] = self.dense_w
        d["dense_b"] = self.dense_b
        return d

    def replace_from(self, d):
        out = ConvHeadParams(spec=self.spec)
        out.kernels = [np.asarray(d[f"conv{i}_w"], dtype=np.float64)
                       for i in range(len(self.kernels))]
        out.biases = [np.asarray(d[f"conv{i}_b"], dtype=np.float64)
                      for i in range(len(self.biases))]
        out.dense_w = np.asarray(d["dense_w"], dtype=np.float64)
        out.dense_b = np.asarray(d["dense_b"], dtype=np.float64)
        return out


def init_conv_head(spec: ConvHeadSpec, rng) -> ConvHeadParams:
    """Glorot-uniform kernels, zero biases."""
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    params = ConvHeadParams(spec=spec)
    c_in = spec.input_channels
    for layer in spec.layers:
        fan_in = c_in * layer.kernel ** 2
        fan_out = layer.out_channels * layer.kernel ** 2
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.kernels.append(rng.uniform(
            -limit, limit, size=(layer.out_channels, c_in,
                                 layer.kernel, layer.kernel)))
        params.biases.append(np.zeros(layer.out_channels))
        c_in = layer.out_channels
    limit = np.sqrt(6.0 / (spec.dense_in + spec.n_features))
    params.dense_w = rng.uniform(-limit, limit,
                                 size=(spec.dense_in, spec.n_features))
    params.dense_b = np.zeros(spec.n_features)
    return params


def standardize(image):
    """Shift/scale each image to zero mean and unit variance.

    Works on one image (H, W, C) or a batch (B, H, W, C); a constant image
    maps to all zeros via the standard-deviation floor.  float32 input is
    processed in float32 (the fast path), anything else in float64.
    """
    image = np.asarray(image)
    if image.dtype != np.float32:
        image = image.astype(np.float64)
    axes = tuple(range(image.ndim - 3, image.ndim))
    mean = image.mean(axis=axes, keepdims=True, dtype=np.float64)
    std = image.std(axis=axes, keepdims=True, dtype=np.float64)
    return ((image - mean) / np.maximum(std, STD_FLOOR)).astype(image.dtype)


def _out_size(padded: int, kernel: int, stride: int) -> int:
    return (padded - kernel) // stride + 1


def _im2col(xp, kernel: int, stride: int):
    """Unfold padded (B, C, Hp, Wp) into window columns (B, C*k*k, Ho*Wo).

    For strided convolutions the input is first split into its stride
    phases (one contiguous copy), after which every window slice is a
    unit-stride block copy; the naive k*k strided slicing spends most of
    its time in stride-2 inner loops.
    """
    batch, c_in, hp, wp = xp.shape
    ho, wo = _out_size(hp, kernel, stride), _out_size(wp, kernel, stride)
    cols = np.empty((batch, c_in, kernel, kernel, ho, wo), dtype=xp.dtype)
    if stride == 1:
        for ky in range(kernel):
            for kx in range(kernel):
                cols[:, :, ky, kx] = xp[:, :, ky:ky + ho, kx:kx + wo]
    else:
        phases = {}
        for py in range(stride):
            for px in range(stride):
                phases[(py, px)] = np.ascontiguousarray(
                    xp[:, :, py::stride, px::stride])
        for ky in range(kernel):
            for kx in range(kernel):
                ph = phases[(ky % stride, kx % stride)]
                oy, ox = ky // stride, kx // stride
                cols[:, :, ky, kx] = ph[:, :, oy:oy + ho, ox:ox + wo]
    return cols.reshape(batch, c_in * kernel * kernel, ho * wo), ho, wo


def _col2im(dcols, shape, kernel: int, stride: int, ho: int, wo: int):
    """Adjoint of :func:`_im2col`: scatter-add window columns back."""
    batch, c_in, hp, wp = shape
    dcols = dcols.reshape(batch, c_in, kernel, kernel, ho, wo)
    dxp = np.zeros(shape, dtype=dcols.dtype)
    if stride == 1:
        for ky in range(kernel):
            for kx in range(kernel):
                dxp[:, :, ky:ky + ho, kx:kx + wo] += dcols[:, :, ky, kx]
        return dxp
    phase_h = [len(range(py, hp, stride)) for py in range(stride)]
    phase_w = [len(range(px, wp, stride)) for px in range(stride)]
    acc = {(py, px): np.zeros((batch, c_in, phase_h[py], phase_w[px]),
                              dtype=dcols.dtype)
           for py in range(stride) for px in range(stride)}
    for ky in range(kernel):
        for kx in range(kernel):
            oy, ox = ky // stride, kx // stride
            acc[(ky % stride, kx % stride)][:, :, oy:oy + ho, ox:ox + wo] \
                += dcols[:, :, ky, kx]
    for (py, px), block in acc.items():
        dxp[:, :, py::stride, px::stride] = block
    return dxp


def conv2d(x, w, b, stride: int, pad: int):
    """Strided 'same'-padded convolution as one differentiable primitive.

    ``x`` is (B, Cin, H, W), ``w`` is (Cout, Cin, k, k), ``b`` is (Cout,).
    Forward and both adjoints are im2col/col2im around batched BLAS
    matmuls; the window matrix is kept for the weight adjoint.  The
    computation runs in the input's dtype (float32 input -> float32 math),
    and the adjoints come back in the parameters' own dtype.
    """
    xv = value_of(x)
    dtype = xv.dtype
    wv = value_of(w).astype(dtype, copy=False)
    bv = value_of(b).astype(dtype, copy=False)
    batch, c_in, h, wdt = xv.shape
    kernel = wv.shape[2]
    c_out = wv.shape[0]
    xp = np.pad(xv, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols, ho, wo = _im2col(xp, kernel, stride)          # (B, K, R)
    w_mat = wv.reshape(c_out, -1)                       # (Co, K)
    out = (w_mat @ cols).reshape(batch, c_out, ho, wo) \
        + bv[None, :, None, None]
    if not (isinstance(x, Tensor) or isinstance(w, Tensor)
            or isinstance(b, Tensor)):
        return out

    inputs = [t for t in (x, w, b) if isinstance(t, Tensor)]

    def backward(g):
        g3 = np.ascontiguousarray(g.reshape(batch, c_out, ho * wo),
                                  dtype=dtype)
        grads = {}
        if isinstance(b, Tensor):
            grads[id(b)] = g.sum(axis=(0, 2, 3))
        if isinstance(w, Tensor):
            # batched (Co, R) @ (R, K), summed over the batch; avoids the
            # big transpose copy a flat 2-D contraction would need
            dw3 = np.matmul(g3, cols.transpose(0, 2, 1))
            grads[id(w)] = dw3.sum(axis=0).reshape(wv.shape)
        if isinstance(x, Tensor):
            dcols = np.matmul(np.ascontiguousarray(w_mat.T), g3)  # (B, K, R)
            dxp = _col2im(dcols, xp.shape, kernel, stride, ho, wo)
            grads[id(x)] = dxp[:, :, pad:pad + h, pad:pad + wdt]
        return [grads[id(t)] for t in inputs]

    return primitive(out, inputs, backward)


def conv_forward(spec: ConvHeadSpec, params, images):
    """Run the head on standardized images (B, H, W, C) or (H, W, C).

    ``params`` is a field dict (arrays or Tensors) as produced by
    :meth:`ConvHeadParams.as_dict`.  Returns ``(features, activations)``
    where features is (B, n_features) (or (n_features,) for one image) and
    activations is the list of post-activation maps, one per conv layer.
    """
    arr = np.asarray(value_of(images))
    if arr.dtype != np.float32:
        arr = arr.astype(np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[1:] != (spec.input_height, spec.input_width,
                         spec.input_channels):
        raise StructuralError(
            f"image batch {arr.shape} does not match configured input "
            f"{(spec.input_height, spec.input_width, spec.input_channels)}")
    x = np.ascontiguousarray(arr.transpose(0, 3, 1, 2))  # NCHW; no grad path

    activations = []
    for i, layer in enumerate(spec.layers):
        x = conv2d(x, params[f"conv{i}_w"], params[f"conv{i}_b"],
                   layer.stride, layer.pad)
        if layer.activation == "tanh":
            x = ad.tanh(x)
        activations.append(x)
    shape = value_of(x).shape
    flat = ad.reshape(x, (shape[0], shape[1] * shape[2] * shape[3]))
    features = ad.matmul(flat, params["dense_w"]) + params["dense_b"]
    if single:
        fv = value_of(features)
        features = features if isinstance(features, Tensor) else fv[0]
        if isinstance(features, Tensor):
            features = ad.reshape(features, (fv.shape[1],))
        activations = [value_of(a)[0] for a in activations]
    return features, activations


def visual_backprop(activations, strides, input_shape):
    """Backproject channel-averaged activation maps to input resolution.

    ``activations`` is the per-layer list for ONE image ((C, H, W) each,
    shallowest first), ``strides`` the per-layer strides, ``input_shape``
    the (H, W) of the input image.  Returns a map in [0, 1] of that shape.
    """
    maps = [value_of(a).mean(axis=0) for a in activations]
    vb = maps[-1]
    for i in range(len(maps) - 1, 0, -1):
        vb = _upscale(vb, strides[i], maps[i - 1].shape)
        vb = vb * maps[i - 1]
    vb = _upscale(vb, strides[0], input_shape)
    vb = np.abs(vb)
    peak = vb.max()
    if peak > 0:
        vb = vb / peak
    return vb


def _upscale(m, stride, target):
    """Nearest-neighbor backprojection through a stride, cropped to target."""
    up = np.repeat(np.repeat(m, stride, axis=0), stride, axis=1)
    return up[:target[0], :target[1]]


def saliency_map(spec: ConvHeadSpec, params, image):
    """Convenience wrapper: standardize, forward, backproject one image."""
    std = standardize(image)
    _, acts = conv_forward(spec, params, std)
    strides = [layer.stride for layer in spec.layers]
    return visual_backprop(acts, strides,
                           (spec.input_height, spec.input_width))


def write_pgm(path, image):
    """8-bit binary PGM; values are clipped to [0, 1] then scaled to 255."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    """Read back a binary PGM written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise StructuralError(f"{path} is not a binary PGM")
        dims = fh.readline().split()
        maxval = int(fh.readline())
        w, h = int(dims[0]), int(dims[1])
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    return data.reshape(h, w).astype(np.float64) / maxval
