"""Central-finite-difference verification of analytic gradients.

Models under check are built in fp64; the loss is a fixed random projection
of the output so every output element contributes. Parameter and input
coordinates are subsampled for speed.
"""

from __future__ import annotations

import numpy as np

from .core import INFER, TRAIN, model_backward, model_forward, rng_for


def _loss_fn(model, x, proj, mode, rng_seed):
    y, tape = model_forward(model, x, mode, rng_for(rng_seed, "drop"))
    return float(np.sum(y * proj)), y, tape


def check_gradients(model, x, mode=TRAIN, seed=0, n_param_coords=12,
                    n_input_coords=8, h=1e-4, tol=1e-4, max_total_coords=None):
    """Compare analytic gradients against central differences.

    Samples n_param_coords coordinates per parameter (capped globally at
    max_total_coords across all parameters, for whole-model checks). Returns
    the max relative error seen; raises AssertionError above tol. Relative
    error uses max(|fd|, |an|) as denominator with an absolute floor of 1e-7
    for near-zero pairs.

    `x` may be an array or a tuple of arrays (multi-input models); gradients
    with respect to every input are checked.
    """
    rng = np.random.default_rng(seed)
    multi = isinstance(x, tuple)
    if multi:
        x = tuple(np.asarray(a, dtype=np.float64) for a in x)
    else:
        x = np.asarray(x, dtype=np.float64)
    for p in model.params():
        assert p.value.dtype == np.float64, f"{p.name}: gradcheck needs fp64 build"
        p.zero_grad()

    _, y0, _ = _loss_fn(model, x, 0.0, mode, seed)  # shape probe
    proj = rng.standard_normal(y0.shape)
    for p in model.params():
        p.zero_grad()
    _, _, tape = _loss_fn(model, x, proj, mode, seed)
    dx = model_backward(tape, proj.astype(np.float64))

    worst = 0.0

    def rel_err(an, fd):
        denom = max(abs(an), abs(fd), 1e-7)
        return abs(an - fd) / denom if max(abs(an), abs(fd)) > 1e-7 else 0.0

    def fd_at(getter, setter):
        orig = getter()
        setter(orig + h)
        lp, _, _ = _loss_fn(model, x, proj, mode, seed)
        setter(orig - h)
        lm, _, _ = _loss_fn(model, x, proj, mode, seed)
        setter(orig)
        return (lp - lm) / (2 * h)

    candidates = []
    for p in model.params():
        n = p.value.size
        for c in rng.choice(n, size=min(n_param_coords, n), replace=False):
            candidates.append((p, int(c)))
    if max_total_coords is not None and len(candidates) > max_total_coords:
        pick = rng.choice(len(candidates), size=max_total_coords, replace=False)
        candidates = [candidates[i] for i in sorted(pick)]
    for p, c in candidates:
        flat_g = p.grad.ravel()
        flat_v = p.value.ravel()
        fd = fd_at(lambda: flat_v[c], lambda v: flat_v.__setitem__(c, v))
        worst = max(worst, rel_err(flat_g[c], fd))

    xs = x if multi else (x,)
    dxs = dx if multi else (dx,)
    for xa, dxa in zip(xs, dxs):
        flat_x = xa.ravel()
        flat_dx = dxa.ravel()
        coords = rng.choice(flat_x.size, size=min(n_input_coords, flat_x.size), replace=False)
        for c in coords:
            fd = fd_at(lambda c=c: flat_x[c], lambda v, c=c: flat_x.__setitem__(c, v))
            worst = max(worst, rel_err(flat_dx[c], fd))

    assert worst < tol, f"gradient check failed: max relative error {worst:.3e} >= {tol}"
    return worst
