# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled per-edge kernels.

Same contracts and operation order as ``_pykernels``.  Callers guarantee
that every position is inside the row and that scratch rows are zeroed.
"""

NAME = "cython"


def mix_pair(double[:, ::1] H, Py_ssize_t u, Py_ssize_t v, list pos_u, list pos_v,
             double au, double bu, double av, double bv, double[::1] du, double[::1] dv):
    cdef Py_ssize_t m, p, M = H.shape[1]
    cdef double x, y
    cdef double cbu = 1.0 - bu, cau = 1.0 - au, cbv = 1.0 - bv, cav = 1.0 - av
    for p in pos_u:
        du[p] = 1.0
    for p in pos_v:
        dv[p] = 1.0
    for m in range(M):
        x = H[u, m]
        y = H[v, m]
        H[u, m] = bu * x + cbu * (au * y + cau * du[m])
        H[v, m] = bv * y + cbv * (av * x + cav * dv[m])
    for p in pos_u:
        du[p] = 0.0
    for p in pos_v:
        dv[p] = 0.0


def mix_self(double[:, ::1] H, Py_ssize_t u, list pos, double a, double b, double[::1] d):
    cdef Py_ssize_t m, p, M = H.shape[1]
    cdef double x
    cdef double cb = 1.0 - b, ca = 1.0 - a
    for p in pos:
        d[p] = 1.0
    for m in range(M):
        x = H[u, m]
        H[u, m] = b * x + cb * (a * x + ca * d[m])
    for p in pos:
        d[p] = 0.0


cdef inline void _gather(double[:, ::1] PT, list pos, double[::1] out):
    cdef Py_ssize_t j, p, k = PT.shape[1]
    for j in range(k):
        out[j] = 0.0
    for p in pos:
        for j in range(k):
            out[j] = out[j] + PT[p, j]


def theta_pair(double[:, ::1] T, Py_ssize_t u, Py_ssize_t v, double[:, ::1] PT,
               list pos_u, list pos_v, double au, double bu, double av, double bv,
               double[::1] hu, double[::1] hv):
    cdef Py_ssize_t j, k = T.shape[1]
    cdef double x, y
    cdef double cbu = 1.0 - bu, cau = 1.0 - au, cbv = 1.0 - bv, cav = 1.0 - av
    _gather(PT, pos_u, hu)
    _gather(PT, pos_v, hv)
    for j in range(k):
        x = T[u, j]
        y = T[v, j]
        T[u, j] = bu * x + cbu * (au * y + cau * hu[j])
        T[v, j] = bv * y + cbv * (av * x + cav * hv[j])


def theta_self(double[:, ::1] T, Py_ssize_t u, double[:, ::1] PT, list pos,
               double a, double b, double[::1] h):
    cdef Py_ssize_t j, k = T.shape[1]
    cdef double x
    cdef double cb = 1.0 - b, ca = 1.0 - a
    _gather(PT, pos, h)
    for j in range(k):
        x = T[u, j]
        T[u, j] = b * x + cb * (a * x + ca * h[j])
