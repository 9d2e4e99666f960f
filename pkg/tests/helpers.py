"""Shared numerical-check utilities for the test suite."""

import numpy as np

FD_STEP = 1e-5


def fd_worst_rel_err(build_loss, tensors, n_coords=10, h=FD_STEP, seed=0):
    """Worst relative error between autodiff and central-difference grads.

    ``build_loss`` must rebuild the scalar loss from the live tensors so
    the finite-difference probes see perturbed values.
    """
    rng = np.random.default_rng(seed)
    for t in tensors:
        t.zero_grad()
    build_loss().backward()
    worst = 0.0
    for t in tensors:
        flat = t.data.reshape(-1)
        grad = t.grad.reshape(-1)
        coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = build_loss().item()
            flat[c] = orig - h
            down = build_loss().item()
            flat[c] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(grad[c] - fd) / max(abs(grad[c]), abs(fd), 1e-3)
            worst = max(worst, err)
    return worst


def fd_worst_rel_err_params(net, build_loss, per_tensor=3, h=FD_STEP, seed=0):
    """Finite-difference check over sampled coordinates of every parameter."""
    net.zero_grads()
    build_loss().backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _, t in net.named_parameters():
        flat = t.data.reshape(-1)
        grad = t.grad.reshape(-1)
        coords = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = build_loss().item()
            flat[c] = orig - h
            down = build_loss().item()
            flat[c] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(grad[c] - fd) / max(abs(grad[c]), abs(fd), 1e-3)
            worst = max(worst, err)
    return worst
