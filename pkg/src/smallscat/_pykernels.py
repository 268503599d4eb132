"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np

INV4PI = 0.25 / np.pi
_CHUNK = 256


def slp_dense(targets, nodes, weights, fine_nodes, fine_weights, centers,
              radii, eta, self_vals):
    n = targets.shape[0]
    out = np.empty((n, n))
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        t = targets[lo:hi, None, None, :]
        with np.errstate(divide="ignore"):
            r = np.sqrt(((t - nodes[None]) ** 2).sum(-1))
            block = (weights[None] / r).sum(-1)
        d2 = ((targets[lo:hi, None, :] - centers[None]) ** 2).sum(-1)
        near = d2 < (eta * radii[None]) ** 2
        rows, cols = np.nonzero(near)
        if rows.size:
            tn = targets[lo + rows][:, None, :]
            rf = np.sqrt(((tn - fine_nodes[cols]) ** 2).sum(-1))
            with np.errstate(divide="ignore"):
                block[rows, cols] = (fine_weights[cols] / rf).sum(-1)
        out[lo:hi] = block * INV4PI
    idx = np.arange(n)
    out[idx, idx] = self_vals
    return out


def slp_coarse_matvec(targets, nodes, weights, x):
    n = targets.shape[0]
    wx = weights * x[:, None]
    y = np.empty(n)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        r = np.sqrt(((targets[lo:hi, None, None, :] - nodes[None]) ** 2).sum(-1))
        rows = np.arange(hi - lo)
        r[rows, lo + rows] = np.inf
        y[lo:hi] = (wx[None] / r).sum((1, 2))
    return y * INV4PI


def slp_centroid_matvec(points, weights, x):
    return slp_coarse_matvec(points, points[:, None, :], weights[:, None], x)


def helmholtz_pairs(points, kappa):
    r = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(r, 1.0)
    g = np.exp(1j * kappa * r) * (INV4PI / r)
    np.fill_diagonal(g, 0.0)
    return g


def helmholtz_potential(targets, sources, kappa, charges):
    out = np.empty((targets.shape[0], charges.shape[1]), dtype=complex)
    for lo in range(0, targets.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, targets.shape[0])
        r = np.sqrt(((targets[lo:hi, None, :] - sources[None]) ** 2).sum(-1))
        out[lo:hi] = (np.exp(1j * kappa * r) * (INV4PI / r)) @ charges
    return out
