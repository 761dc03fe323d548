"""Vectorized numpy versions of the compiled kernels.

Used when the extension is not built or ``PHASESUB_BACKEND=python`` is set.
Results agree with the compiled kernels to rounding (summation order differs).
"""

import numpy as np

_ROW_CHUNK_ELEMENTS = 4_000_000


def simulate_event(pos, amp, element_x, angle, c, fs, fc, duration, hann, out):
    if len(amp) == 0:
        return
    nsamp = out.shape[1]
    x = pos[:, 0][:, None]
    z = pos[:, 1][:, None]
    tau = (z * np.cos(angle) + x * np.sin(angle)) / c + np.sqrt((x - element_x[None, :]) ** 2 + z * z) / c
    half = 0.5 * duration
    n0 = np.ceil((tau - half) * fs).astype(np.int64)
    n1 = np.floor((tau + half) * fs).astype(np.int64)
    width = int((n1 - n0).max()) + 1
    elem = np.broadcast_to(np.arange(len(element_x))[None, :], tau.shape)
    flat = out.reshape(-1)
    for k in range(width):
        n = n0 + k
        ok = (n <= n1) & (n >= 0) & (n < nsamp)
        if not ok.any():
            continue
        t_rel = n[ok] / fs - tau[ok]
        env = 0.5 * (1.0 + np.cos(2.0 * np.pi * t_rel / duration)) if hann else 1.0
        vals = np.broadcast_to(amp[:, None], tau.shape)[ok] * env * np.cos(2.0 * np.pi * fc * t_rel)
        np.add.at(flat, elem[ok] * nsamp + n[ok], vals)


def das_frame(rf, element_x, angles, px, pz, lo, hi, c, fs, dc_offset, linear, out):
    na, ne, nsamp = rf.shape
    nz, nx = len(pz), len(px)
    rows = max(1, _ROW_CHUNK_ELEMENTS // max(1, nx * ne))
    e_idx = np.arange(ne)
    flat = rf.reshape(na, ne * nsamp)
    for r0 in range(0, nz, rows):
        z = pz[r0:r0 + rows][:, None, None]
        x = px[None, :, None]
        l = lo[r0:r0 + rows][:, :, None]
        h = hi[r0:r0 + rows][:, :, None]
        n = h - l
        j = e_idx[None, None, :] - l
        inside = (j >= 0) & (j < n) & (n >= 2)
        half_n = n // 2
        wz = np.where(j < half_n, 1.0, np.where(j >= n - half_n, -1.0, 0.0)) * inside
        rx = np.sqrt((x - element_x[None, None, :]) ** 2 + z * z) / c
        acc = np.zeros((4,) + inside.shape[:2])
        for a in range(na):
            tx = (z * np.cos(angles[a]) + x * np.sin(angles[a])) / c
            idx = (tx + rx) * fs
            valid = inside & (idx >= 0.0) & (idx <= nsamp - 1)
            idx = np.where(valid, idx, 0.0)
            base = e_idx[None, None, :] * nsamp
            if linear:
                i0 = np.floor(idx).astype(np.int64)
                frac = idx - i0
                i1 = np.minimum(i0 + 1, nsamp - 1)
                v = flat[a][base + i0] * (1.0 - frac) + flat[a][base + i1] * frac
            else:
                i0 = np.floor(idx + 0.5).astype(np.int64)
                v = flat[a][base + i0]
            v = np.where(valid, v, 0.0)
            acc[0] += (wz * v).sum(axis=-1)
            acc[1] += ((wz + dc_offset) * inside * v).sum(axis=-1)
            acc[2] += ((dc_offset - wz) * inside * v).sum(axis=-1)
            acc[3] += (inside * v).sum(axis=-1)
        out[:, r0:r0 + rows, :] = acc
