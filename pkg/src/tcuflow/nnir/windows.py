"""Sliding-window index tables shared by executors and the compiler.

For a window layer the table maps (output position, tap) to a flattened
input spatial index, or -1 where the tap falls into padding. Both executors
and the instruction lowering consume the same table, which keeps their
window enumeration identical by construction.
"""

from __future__ import annotations

import numpy as np

from .shapes import pad_before, window_out


def window_table(in_spatial, kernel, stride, padding):
    """Index table [positions, taps] into the flattened input spatial grid.

    in_spatial/kernel/stride are 1- or 2-tuples; entries are -1 out of range.
    """
    if len(in_spatial) == 1:
        length, = in_spatial
        k, = kernel
        s, = stride
        out = window_out(length, k, s, padding)
        pb = pad_before(length, k, s, padding)
        pos = np.arange(out)[:, None] * s + np.arange(k)[None, :] - pb
        table = np.where((pos >= 0) & (pos < length), pos, -1)
        return table, (out,)
    h, w = in_spatial
    kh, kw = kernel
    sh, sw = stride
    oh = window_out(h, kh, sh, padding)
    ow = window_out(w, kw, sw, padding)
    ph = pad_before(h, kh, sh, padding)
    pw = pad_before(w, kw, sw, padding)
    rows = np.arange(oh)[:, None] * sh + np.arange(kh)[None, :] - ph  # [oh, kh]
    cols = np.arange(ow)[:, None] * sw + np.arange(kw)[None, :] - pw  # [ow, kw]
    valid = ((rows >= 0) & (rows < h))[:, None, :, None] \
        & ((cols >= 0) & (cols < w))[None, :, None, :]
    flat = rows[:, None, :, None] * w + cols[None, :, None, :]  # [oh, ow, kh, kw]
    table = np.where(valid, flat, -1).reshape(oh * ow, kh * kw)
    return table, (oh, ow)


def gather_patches(flat_values, table, fill):
    """Gather [positions, taps, channels] patches from [spatial, channels]
    values using a window table, substituting `fill` for padding taps."""
    clipped = np.maximum(table, 0)
    patches = flat_values[clipped]
    patches = np.where((table < 0)[:, :, None], fill, patches)
    return patches
