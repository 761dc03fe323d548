# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the simulator and the delay-and-sum beamformer.

Signatures mirror :mod:`phasesub._pykernels`; outputs are written in place.
Both functions release the GIL so callers can run them from a thread pool.
"""

from libc.math cimport sqrt, cos, sin, floor, ceil, M_PI


def simulate_event(const double[:, ::1] pos, const double[::1] amp,
                   const double[::1] element_x, double angle, double c, double fs,
                   double fc, double duration, bint hann, double[:, ::1] out):
    """Add the echoes of point scatterers for one plane-wave transmit to ``out``."""
    cdef Py_ssize_t ns = pos.shape[0]
    cdef Py_ssize_t ne = element_x.shape[0]
    cdef Py_ssize_t nsamp = out.shape[1]
    cdef Py_ssize_t s, e, n, n0, n1
    cdef double x, z, a, tau_tx, tau, dxe, t_rel, env
    cdef double half = 0.5 * duration
    cdef double ca = cos(angle)
    cdef double sa = sin(angle)
    with nogil:
        for s in range(ns):
            x = pos[s, 0]
            z = pos[s, 1]
            a = amp[s]
            tau_tx = (z * ca + x * sa) / c
            for e in range(ne):
                dxe = x - element_x[e]
                tau = tau_tx + sqrt(dxe * dxe + z * z) / c
                n0 = <Py_ssize_t>ceil((tau - half) * fs)
                n1 = <Py_ssize_t>floor((tau + half) * fs)
                if n0 < 0:
                    n0 = 0
                if n1 > nsamp - 1:
                    n1 = nsamp - 1
                for n in range(n0, n1 + 1):
                    t_rel = n / fs - tau
                    if hann:
                        env = 0.5 * (1.0 + cos(2.0 * M_PI * t_rel / duration))
                    else:
                        env = 1.0
                    out[e, n] += a * env * cos(2.0 * M_PI * fc * t_rel)


def das_frame(const double[:, :, ::1] rf, const double[::1] element_x,
              const double[::1] angles, const double[::1] px, const double[::1] pz,
              const int[:, ::1] lo, const int[:, ::1] hi, double c, double fs,
              double dc_offset, bint linear, double[:, :, ::1] out):
    """Beamform one compounded frame under the four apodizations.

    ``rf`` is ``(n_angles, n_elements, n_samples)``; ``out`` is
    ``(4, nz, nx)`` ordered zero-mean, dc1, dc2, rectangle. Pixels whose
    aperture holds fewer than two elements are left at zero.
    """
    cdef Py_ssize_t na = rf.shape[0]
    cdef Py_ssize_t nsamp = rf.shape[2]
    cdef Py_ssize_t nz = pz.shape[0]
    cdef Py_ssize_t nx = px.shape[0]
    cdef Py_ssize_t iz, ix, e, a, j, n, half_n, i0
    cdef double x, z, rx, idx, frac, v, wz, dxe
    cdef double s_zm, s_dc1, s_dc2, s_rect
    cdef double tx[256]
    if na > 256:
        raise ValueError("at most 256 steering angles are supported")
    with nogil:
        for iz in range(nz):
            z = pz[iz]
            for ix in range(nx):
                x = px[ix]
                n = hi[iz, ix] - lo[iz, ix]
                out[0, iz, ix] = 0.0
                out[1, iz, ix] = 0.0
                out[2, iz, ix] = 0.0
                out[3, iz, ix] = 0.0
                if n < 2:
                    continue
                for a in range(na):
                    tx[a] = (z * cos(angles[a]) + x * sin(angles[a])) / c
                half_n = n // 2
                s_zm = 0.0
                s_dc1 = 0.0
                s_dc2 = 0.0
                s_rect = 0.0
                for j in range(n):
                    e = lo[iz, ix] + j
                    if j < half_n:
                        wz = 1.0
                    elif j >= n - half_n:
                        wz = -1.0
                    else:
                        wz = 0.0
                    dxe = x - element_x[e]
                    rx = sqrt(dxe * dxe + z * z) / c
                    for a in range(na):
                        idx = (tx[a] + rx) * fs
                        if idx < 0.0 or idx > nsamp - 1:
                            continue
                        if linear:
                            i0 = <Py_ssize_t>floor(idx)
                            frac = idx - i0
                            if i0 + 1 < nsamp:
                                v = rf[a, e, i0] * (1.0 - frac) + rf[a, e, i0 + 1] * frac
                            else:
                                v = rf[a, e, i0]
                        else:
                            i0 = <Py_ssize_t>floor(idx + 0.5)
                            v = rf[a, e, i0]
                        s_zm += wz * v
                        s_dc1 += (wz + dc_offset) * v
                        s_dc2 += (dc_offset - wz) * v
                        s_rect += v
                out[0, iz, ix] = s_zm
                out[1, iz, ix] = s_dc1
                out[2, iz, ix] = s_dc2
                out[3, iz, ix] = s_rect
