"""Numpy implementations of the masked structural-equation kernels.

Inputs share one layout:

* ``hist`` (B, L) int64: distinct history variables per transition, padded.
* ``mask`` (B, d, L) float64: sampled adjacency entry A[k, hist[b, m]];
  padding entries are 0.

Outputs are logits ``z`` (B, d) of every structural equation.
"""
import numpy as np


def _dense(hist, mask, d):
    B, L = hist.shape
    flat = ((np.arange(B)[:, None, None] * d + np.arange(d)[None, :, None]) * d
            + hist[:, None, :])
    return np.bincount(flat.ravel(), weights=mask.ravel(),
                       minlength=B * d * d).reshape(B, d, d)


def mlp_forward(hist, mask, w1, b1, w2, b2, slope):
    d = w1.shape[0]
    dense = _dense(hist, mask, d)
    pre = np.matmul(dense.transpose(1, 0, 2), w1).transpose(1, 0, 2) + b1[None]
    act = np.where(pre > 0, pre, slope * pre)
    z = np.einsum("bkh,kh->bk", act, w2) + b2[None]
    return z, pre


def mlp_backward(hist, mask, w1, w2, pre, dz, slope):
    d = w1.shape[0]
    B, L = hist.shape
    act = np.where(pre > 0, pre, slope * pre)
    dw2 = np.einsum("bk,bkh->kh", dz, act)
    db2 = dz.sum(axis=0)
    dpre = dz[:, :, None] * w2[None] * np.where(pre > 0, 1.0, slope)
    db1 = dpre.sum(axis=0)
    dense = _dense(hist, mask, d)
    dpre_k = dpre.transpose(1, 0, 2)
    dw1 = np.matmul(dense.transpose(1, 2, 0), dpre_k)
    ddense = np.matmul(dpre_k, w1.transpose(0, 2, 1))  # (d, B, d)
    dmask = ddense[np.arange(d)[None, :, None], np.arange(B)[:, None, None],
                   hist[:, None, :]]
    return dw1, db1, dw2, db2, dmask


def linear_forward(hist, mask, w, b):
    d = w.shape[0]
    wg = w[np.arange(d)[None, :, None], hist[:, None, :]]  # (B, d, L)
    return (wg * mask).sum(axis=2) + b[None]


def linear_backward(hist, mask, w, dz):
    d = w.shape[0]
    B, L = hist.shape
    rows = np.broadcast_to(np.arange(d)[None, :, None], mask.shape)
    cols = np.broadcast_to(hist[:, None, :], mask.shape)
    contrib = dz[:, :, None] * mask
    dw = np.bincount((rows * d + cols).ravel(), weights=contrib.ravel(),
                     minlength=d * d).reshape(d, d)
    db = dz.sum(axis=0)
    wg = w[rows, cols]
    dmask = dz[:, :, None] * wg
    return dw, db, dmask
