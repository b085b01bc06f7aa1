"""Small convolutional encoder with hand-written gradients.

Each block is a 3x3 stride-2 convolution (zero padding 1, so spatial size
goes n -> ceil(n/2)) followed by ReLU; a global average pool over the last
block gives the embedding. Weights live as float32 (that is what gets
serialized); all arithmetic runs in float64.
"""

import struct

import numpy as np

from .core import CorruptDataError, SeededRng
from .kernels import conv2d_s2, conv2d_s2_grads

MAGIC = b"MSQW"
VERSION = 1


class Encoder:
    """Stack of conv-ReLU blocks plus global average pooling.

    widths: output channels per block; the last entry is the embedding size.
    """

    def __init__(self, widths=(16, 32, 64), in_channels=3, rng=None, input_side=64):
        self.widths = tuple(int(w) for w in widths)
        self.in_channels = int(in_channels)
        # informational: the side patches were resized to during training
        self.input_side = int(input_side)
        if not self.widths:
            raise ValueError("need at least one block")
        rng = rng if rng is not None else SeededRng(0)
        self.weights = []
        self.biases = []
        ci = self.in_channels
        for co in self.widths:
            fan_in = ci * 3 * 3
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(co, ci, 3, 3)).astype(np.float32)
            self.weights.append(w)
            self.biases.append(np.zeros(co, dtype=np.float32))
            ci = co

    @property
    def embed_dim(self):
        return self.widths[-1]

    def params(self):
        """Flat interleaved list [w0, b0, w1, b1, ...] (float32 views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, params):
        if len(params) != 2 * len(self.widths):
            raise ValueError("parameter count mismatch")
        for i in range(len(self.widths)):
            w = np.asarray(params[2 * i], dtype=np.float32)
            b = np.asarray(params[2 * i + 1], dtype=np.float32)
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError("parameter shape mismatch")
            self.weights[i] = w
            self.biases[i] = b

    def forward(self, x, want_cache=False):
        """x: (h, w, c) or (c, h, w) float array -> (embed_dim,) embedding."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ValueError(f"expected 3-d input, got shape {x.shape}")
        if x.shape[0] != self.in_channels and x.shape[2] == self.in_channels:
            x = np.ascontiguousarray(np.transpose(x, (2, 0, 1)))
        if x.shape[0] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got shape {x.shape}"
            )
        cache = {"inputs": [], "pre": []}
        cur = x
        for w, b in zip(self.weights, self.biases):
            cache["inputs"].append(cur)
            y = conv2d_s2(cur, w.astype(np.float64), b.astype(np.float64))
            cache["pre"].append(y)
            cur = np.maximum(y, 0.0)
        z = cur.mean(axis=(1, 2))
        if want_cache:
            cache["last"] = cur
            return z, cache
        return z

    def backward(self, cache, dz):
        """Gradients of a scalar loss wrt params, given d(loss)/d(embedding).

        Returns the flat interleaved list matching params(), in float64.
        """
        last = cache["last"]
        _, h, w = last.shape
        da = np.broadcast_to(
            np.asarray(dz, dtype=np.float64)[:, None, None] / (h * w), last.shape
        ).copy()
        grads = [None] * (2 * len(self.widths))
        for i in range(len(self.widths) - 1, -1, -1):
            dy = da * (cache["pre"][i] > 0.0)
            dw, db, dx = conv2d_s2_grads(
                cache["inputs"][i], self.weights[i].astype(np.float64), dy
            )
            grads[2 * i] = dw
            grads[2 * i + 1] = db
            da = dx
        return grads


def save_weights(path, encoder, subband=0, epoch=0):
    """Binary weights file: header then raw little-endian float32 tensors."""
    parts = [MAGIC]
    parts.append(struct.pack("<I", VERSION))
    parts.append(struct.pack("<I", encoder.in_channels))
    parts.append(struct.pack("<I", encoder.input_side))
    parts.append(struct.pack("<I", len(encoder.widths)))
    for wd in encoder.widths:
        parts.append(struct.pack("<I", wd))
    parts.append(struct.pack("<i", int(subband)))
    parts.append(struct.pack("<I", int(epoch)))
    for w, b in zip(encoder.weights, encoder.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_weights(path):
    """Read a weights file back; returns (encoder, subband, epoch)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CorruptDataError(f"{path}: not a weights file")
    off = 4

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise CorruptDataError(f"{path}: truncated header")
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals[0]

    version = take("<I")
    if version != VERSION:
        raise CorruptDataError(f"{path}: unsupported version {version}")
    in_channels = take("<I")
    input_side = take("<I")
    nblocks = take("<I")
    if nblocks == 0 or nblocks > 64:
        raise CorruptDataError(f"{path}: implausible block count {nblocks}")
    widths = [take("<I") for _ in range(nblocks)]
    subband = take("<i")
    epoch = take("<I")

    enc = Encoder(
        widths=widths, in_channels=in_channels, rng=SeededRng(0), input_side=input_side
    )
    params = []
    ci = in_channels
    for co in widths:
        for shape in ((co, ci, 3, 3), (co,)):
            n = int(np.prod(shape))
            size = 4 * n
            if off + size > len(data):
                raise CorruptDataError(f"{path}: truncated tensor data")
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
            params.append(arr.copy())
            off += size
        ci = co
    if off != len(data):
        raise CorruptDataError(f"{path}: trailing bytes")
    enc.set_params(params)
    return enc, subband, epoch
