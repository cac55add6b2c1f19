"""Independent straight-line oracles shared by the unit and acceptance tests.

Everything here recomputes results from first principles (raw dense
adjacency, explicit loops) and must stay independent of the library's own
computation paths.
"""

import numpy as np
import pytest

from edgeflip.models import forward_sgc, loss_and_grads, margin
from edgeflip.graph import normalize_adjacency


def norm_from_raw(a):
    """Reference D^{-1/2} (A + I) D^{-1/2} from a raw dense adjacency."""
    n = a.shape[0]
    t = 1.0 / np.sqrt(1.0 + a.sum(axis=1))
    return t[:, None] * t[None, :] * (a + np.eye(n))


def forward_oracle(a, x, weights, arch, hops=2):
    s = norm_from_raw(a)
    if arch == "gcn2":
        return s @ np.maximum(s @ (x @ weights[0]), 0.0) @ weights[1]
    out = x @ weights[0]
    for _ in range(hops):
        out = s @ out
    return out


def loss_oracle(a, g, model, node_set):
    logits = forward_oracle(a, g.features, model.weights, model.config.arch,
                            model.config.hops)
    total = 0.0
    for v in node_set:
        row = logits[v]
        shifted = row - row.max()
        total += -shifted[g.labels[v]] + np.log(np.exp(shifted).sum())
    return total / len(node_set)


def sgc_margin_oracle(g, weight, target, y):
    """Full recomputation of the two-hop surrogate margin on ``g``."""
    logits = forward_sgc(weight, normalize_adjacency(g, dense=True), g.features, 2)
    return margin(logits[target], y)


def finite_difference_check(g, model, node_set, h=1e-4, tol=1e-4):
    """Central finite differences for every weight entry and adjacency pair."""
    loss, weight_grads, adj_grad = loss_and_grads(model, g, node_set)
    a = g.adjacency(dense=True).astype(np.float64)

    assert loss == pytest.approx(loss_oracle(a, g, model, node_set), rel=1e-10)

    def agree(analytic, numeric):
        # The absolute floor absorbs central-difference truncation noise
        # (~h^2 * f''') around structurally zero gradients.
        return abs(analytic - numeric) <= tol * max(abs(analytic), abs(numeric)) + 1e-7

    for k, grad in enumerate(weight_grads):
        w = model.weights[k]
        for idx in np.ndindex(*w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = loss_oracle(a, g, model, node_set)
            w[idx] = orig - h
            down = loss_oracle(a, g, model, node_set)
            w[idx] = orig
            assert agree(grad[idx], (up - down) / (2 * h)), (k, idx)

    n = g.num_nodes
    assert np.allclose(adj_grad, adj_grad.T)
    for p in range(n):
        for q in range(p + 1, n):
            perturbed = a.copy()
            perturbed[p, q] += h
            perturbed[q, p] += h
            up = loss_oracle(perturbed, g, model, node_set)
            perturbed[p, q] -= 2 * h
            perturbed[q, p] -= 2 * h
            down = loss_oracle(perturbed, g, model, node_set)
            assert agree(adj_grad[p, q], (up - down) / (2 * h)), (p, q)
