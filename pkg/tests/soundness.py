"""Invariant checks for one selection run, shared by the unit and acceptance suites."""
import math
import warnings
from dataclasses import replace

import numpy as np

from structadapt.estimator import bandwidth_grid, estimate, matrix_single, sphere_grid
from structadapt.kernels import make_kernel
from structadapt.model import IndexVector, TargetFunction, function_library, simulate
from structadapt.selector import SelectionConfig, r_value, select, threshold

LIBRARY = [
    ("constant", (0.7,)),
    ("cosine", (4.0, 1.0)),
    ("cusp", (0.5, 1.0)),
    ("cusp", (1.0, 1.0)),
    ("bump", (0.0, 0.3, 1.0)),
    ("ramp", (0.1,)),
]


def random_case(seed):
    """A seeded small configuration: (field, kernel, x, cfg)."""
    rng = np.random.default_rng(seed)
    name, params = LIBRARY[rng.integers(len(LIBRARY))]
    tg = TargetFunction(function_library(name, params), IndexVector(rng.uniform(0, 2 * math.pi)))
    n = int(rng.choice([64, 128]))
    eps = float(np.exp(rng.uniform(math.log(0.005), math.log(0.3))))
    field = simulate(tg, eps, n, int(rng.integers(2**31)))
    kernel = make_kernel(int(rng.choice([1, 2])))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bw = bandwidth_grid(eps, 2.0 / n, float(rng.choice([2.0, 4.0, 8.0])))
    # C = 0 forces the fallback path now and then
    const = 0.0 if rng.random() < 0.1 else float(rng.uniform(0.25, 3.0))
    cfg = SelectionConfig(const, 2.0, sphere_grid(int(rng.choice([8, 16, 32]))), bw,
                          normalize=bool(rng.random() < 0.8))
    x = tuple(rng.uniform(-0.5, 0.5, 2))
    return field, kernel, x, cfg


def check_selection(field, kernel, x, cfg, n_replay=6, rng=None):
    """Assert every selection invariant for one configuration; returns the trace."""
    rng = rng or np.random.default_rng(0)
    tr = select(field, kernel, x, cfg)
    levels = cfg.bandwidths.levels
    eps = field.epsilon

    # determinism
    assert select(field, kernel, x, cfg).to_dict() == tr.to_dict()

    # decisions agree with the exhaustive evaluation, which has every R exact
    full = select(field, kernel, x, replace(cfg, exhaustive=True))
    assert (full.h_tilde, full.theta_hat_index, full.h_hat, full.estimate) == \
           (tr.h_tilde, tr.theta_hat_index, tr.h_hat, tr.estimate)
    assert full.p_set == tr.p_set
    exact = slice(tr.r_exact_from, None)
    assert np.array_equal(full.r_array[:, exact], tr.r_array[:, exact])
    assert np.all(full.r_array >= tr.r_array)

    # fallback
    assert (len(tr.p_set) == 0) == tr.fell_back
    if tr.fell_back:
        assert tr.h_tilde is None
        assert np.array_equal(tr.theta_hat.components, [1.0, 0.0])
    else:
        assert tr.h_tilde == max(h for _, h in tr.p_set)
        assert tr.theta_hat_index in tr.theta_hat_set
        V = cfg.sphere.vectors
        cand = sorted((V[i, 0], V[i, 1]) for i in tr.theta_hat_set)
        assert tuple(V[tr.theta_hat_index]) == cand[0]

    # maximality of h_tilde over exact R values
    ht = tr.h_tilde if tr.h_tilde is not None else 0.0
    for l, h in enumerate(levels):
        if h > ht:
            assert np.all(full.r_array[:, l] > 0)

    # p_set replay through the public r_value
    ps = tr.p_set
    pick = ps if len(ps) <= n_replay else [ps[k] for k in rng.choice(len(ps), n_replay, replace=False)]
    for i, h in pick:
        assert r_value(field, kernel, i, h, x, cfg) <= 0
        assert r_value(field, kernel, i, h, x, cfg) == tr.r_values[(i, h)]

    # h_hat maximality along theta_hat, with direct (uncached) estimates
    assert tr.h_hat >= levels[-1]
    S = [estimate(field, kernel, matrix_single(tr.theta_hat, h), x, cfg.normalize) for h in levels]
    th = [threshold(h, eps, cfg) for h in levels]
    k = levels.index(tr.h_hat)
    assert all(abs(S[k] - S[m]) <= th[m] for m in range(k, len(levels)))
    if k > 0:
        assert any(abs(S[k - 1] - S[m]) > th[m] for m in range(k - 1, len(levels)))

    # cache consistency
    assert tr.estimate == S[k]
    return tr
