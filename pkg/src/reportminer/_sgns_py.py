"""Numpy twin of the compiled ``_sgns`` kernel, vectorised per block."""
import numpy as np


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def _log_sigmoid(x):
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def sgns_sweep(center_vecs, outer_vecs, centers, outers, negatives, lr, batch, losses):
    n = len(centers)
    if len(outers) != n or len(negatives) != n or len(losses) != n:
        raise ValueError("pair arrays differ in length")
    if outer_vecs.shape[1] != center_vecs.shape[1]:
        raise ValueError("dimension mismatch between parameter matrices")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        c = centers[start:stop]
        rows = np.concatenate([outers[start:stop, None], negatives[start:stop]], axis=1)
        vc = center_vecs[c]                         # b x d
        words = outer_vecs[rows]                    # b x (k+1) x d
        scores = np.einsum("bjd,bd->bj", words, vc)
        losses[start:stop] = -_log_sigmoid(scores[:, 0]) - _log_sigmoid(-scores[:, 1:]).sum(axis=1)
        coefs = _sigmoid(scores)
        coefs[:, 0] = -_sigmoid(-scores[:, 0])
        grads = np.einsum("bj,bjd->bd", coefs, words)
        step = lr / (stop - start)
        np.add.at(outer_vecs, rows.ravel(), (-step * coefs[:, :, None] * vc[:, None, :]).reshape(-1, vc.shape[1]))
        np.add.at(center_vecs, c, -step * grads)
