# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ReLU recurrence kernels.

Arrays are C-contiguous float64 shaped (step, batch, hidden).  Row-major
products are issued to column-major BLAS as transposed products.  The
product goes to a scratch buffer with beta = 0; accumulating in place with
beta = 1 takes a much slower OpenBLAS path.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def relu_forward(cnp.ndarray[double, ndim=3, mode="c"] P,
                 cnp.ndarray[double, ndim=2, mode="c"] Ws):
    """S[t] = max(0, P[t] + S[t-1] @ Ws) with S[-1] = 0."""
    cdef int T = P.shape[0], B = P.shape[1], H = P.shape[2]
    if Ws.shape[0] != H or Ws.shape[1] != H:
        raise ValueError("recurrent weight shape does not match hidden width")
    cdef cnp.ndarray[double, ndim=3, mode="c"] S = P.copy()
    cdef cnp.ndarray[double, ndim=1, mode="c"] tmp = np.empty(B * H)
    cdef double *s = &S[0, 0, 0]
    cdef double *w = &Ws[0, 0]
    cdef double *buf = &tmp[0]
    cdef int n = B * H, t, i
    cdef double one = 1.0, zero = 0.0, v
    cdef char nn = b'N'
    cdef double *cur
    for t in range(T):
        cur = s + t * n
        if t > 0:
            dgemm(&nn, &nn, &H, &B, &H, &one, w, &H, cur - n, &H, &zero, buf, &H)
            for i in range(n):
                v = cur[i] + buf[i]
                cur[i] = v if v > 0.0 else 0.0
        else:
            for i in range(n):
                if cur[i] < 0.0:
                    cur[i] = 0.0
    return S


def relu_backward(cnp.ndarray[double, ndim=3, mode="c"] G,
                  cnp.ndarray[double, ndim=3, mode="c"] S,
                  cnp.ndarray[double, ndim=2, mode="c"] Ws):
    """D[t] = (G[t] + D[t+1] @ Ws.T) * (S[t] > 0) with D[T] = 0."""
    cdef int T = G.shape[0], B = G.shape[1], H = G.shape[2]
    if S.shape[0] != T or S.shape[1] != B or S.shape[2] != H:
        raise ValueError("state and gradient shapes differ")
    if Ws.shape[0] != H or Ws.shape[1] != H:
        raise ValueError("recurrent weight shape does not match hidden width")
    cdef cnp.ndarray[double, ndim=3, mode="c"] D = G.copy()
    cdef cnp.ndarray[double, ndim=1, mode="c"] tmp = np.empty(B * H)
    cdef double *d = &D[0, 0, 0]
    cdef double *st = &S[0, 0, 0]
    cdef double *w = &Ws[0, 0]
    cdef double *buf = &tmp[0]
    cdef int n = B * H, t, i
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'T'
    cdef char nn = b'N'
    cdef double *cur
    cdef double *sc
    for t in range(T - 1, -1, -1):
        cur = d + t * n
        sc = st + t * n
        if t < T - 1:
            dgemm(&tn, &nn, &H, &B, &H, &one, w, &H, cur + n, &H, &zero, buf, &H)
            for i in range(n):
                cur[i] = cur[i] + buf[i] if sc[i] > 0.0 else 0.0
        else:
            for i in range(n):
                if sc[i] <= 0.0:
                    cur[i] = 0.0
    return D
