"""Pure-numpy versions of the recurrence kernels in ``_recurrence.pyx``."""

import numpy as np


def relu_forward(P: np.ndarray, Ws: np.ndarray) -> np.ndarray:
    if Ws.shape != (P.shape[2], P.shape[2]):
        raise ValueError("recurrent weight shape does not match hidden width")
    S = np.array(P, dtype=float, order="C", copy=True)
    for t in range(S.shape[0]):
        if t > 0:
            S[t] += S[t - 1] @ Ws
        np.maximum(S[t], 0.0, out=S[t])
    return S


def relu_backward(G: np.ndarray, S: np.ndarray, Ws: np.ndarray) -> np.ndarray:
    if G.shape != S.shape:
        raise ValueError("state and gradient shapes differ")
    D = np.array(G, dtype=float, order="C", copy=True)
    WsT = Ws.T
    for t in range(D.shape[0] - 1, -1, -1):
        if t < D.shape[0] - 1:
            D[t] += D[t + 1] @ WsT
        D[t][S[t] <= 0.0] = 0.0
    return D
