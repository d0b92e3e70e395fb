"""Shared test helpers: finite-difference gradient checking and tiny graphs."""

from __future__ import annotations

import numpy as np
import pytest

from neuralwalker.autodiff import Tape, Tensor, backward


def fd_gradcheck(make_loss, params, n_probes: int = 20, step: float = 1e-6,
                 rel_tol: float = 1e-4, seed: int = 0) -> float:
    """Compare tape gradients against central finite differences.

    ``make_loss()`` must rebuild the scalar loss from the current parameter
    values. ``params`` maps names to Tensors with ``requires_grad``. Probes
    ``n_probes`` random coordinates; returns the worst relative error and
    asserts it is below ``rel_tol``.
    """
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        loss = make_loss()
    backward(loss, tape, leaves=params.values())
    grads = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for k, p in params.items()}

    rng = np.random.default_rng(seed)
    names = [k for k, p in params.items() if p.data.size > 0]
    worst = 0.0
    for _ in range(n_probes):
        name = names[rng.integers(len(names))]
        p = params[name]
        idx = np.unravel_index(rng.integers(p.data.size), p.data.shape)
        keep = p.data[idx]
        p.data[idx] = keep + step
        up = float(make_loss().data)
        p.data[idx] = keep - step
        down = float(make_loss().data)
        p.data[idx] = keep
        numeric = (up - down) / (2.0 * step)
        analytic = float(grads[name][idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
        worst = max(worst, err)
        assert err < rel_tol, (
            f"gradient mismatch at {name}{list(idx)}: "
            f"analytic {analytic:.10g} vs numeric {numeric:.10g} (rel {err:.3g})")
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_tensor(rng, shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)
