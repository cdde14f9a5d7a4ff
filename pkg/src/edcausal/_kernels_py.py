"""Pure numpy implementations of the hot loops; used when the extension is absent."""
import numpy as np

K1 = 79.047
K2 = 7.4129
GAMMA = 0.37457
H_GAUSS = 0.5 * (1.0 + np.log(2.0 * np.pi))
RHO_EPS = 1e-12


def _logcosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _entropy(u, axis=0):
    m_lc = np.mean(_logcosh(u), axis=axis)
    m_g = np.mean(u * np.exp(-0.5 * u * u), axis=axis)
    return H_GAUSS - K1 * (m_lc - GAMMA) ** 2 - K2 * m_g**2


def pairwise_entropy_diff(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    nrow, q = x.shape
    h = _entropy(x)
    rho = (x.T @ x) / nrow
    out = np.zeros((q, q))
    for i in range(q - 1):
        js = np.arange(i + 1, q)
        r = rho[i, js]
        ok = 1.0 - r * r > RHO_EPS
        scale = np.where(ok, 1.0 / np.sqrt(np.where(ok, 1.0 - r * r, 1.0)), 0.0)
        xi = x[:, i : i + 1]
        xj = x[:, js]
        u = (xi - r * xj) * scale
        v = (xj - r * xi) * scale
        d = (h[js] + _entropy(u)) - (h[i] + _entropy(v))
        out[i, js] = d
        out[js, i] = -d
    return out


def var_recursion(coefs, drive, history):
    coefs = np.asarray(coefs, dtype=np.float64)
    drive = np.asarray(drive, dtype=np.float64)
    history = np.asarray(history, dtype=np.float64)
    lag, n, _ = coefs.shape
    if history.shape != (lag, n) or drive.shape[1] != n:
        raise ValueError("shape mismatch between coefs, drive and history")
    buf = np.vstack([history, drive])
    for t in range(drive.shape[0]):
        row = buf[lag + t]
        for tau in range(1, lag + 1):
            row += buf[lag + t - tau] @ coefs[tau - 1]
    return buf[lag:].copy()
