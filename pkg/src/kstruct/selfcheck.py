"""Fast built-in consistency checks behind ``kstruct check``."""

import numpy as np

from .duality import exact_lambda_grid, fenchel_F_to_h, fenchel_h_to_F, structure_function
from .models import ModelSpace
from .rng import make_rng
from .sampler import ProposalKernel, detailed_balance_check, transition_matrix
from .thermo import free_energy_zero_T, gibbs_weights, actions, sweep_lambda


def random_space(rng, max_points=20, max_complexity=30, loss_scale=10.0) -> ModelSpace:
    k = int(rng.integers(1, max_points + 1))
    cs = np.sort(rng.choice(np.arange(1, max_complexity + 1), size=k, replace=False))
    return ModelSpace.from_pairs(cs.tolist(), (loss_scale * rng.random(k)).tolist())


def hull_chord(alphas, h, alpha) -> float:
    """Lower convex envelope at ``alpha`` by brute force over all chords."""
    best = np.inf
    for i in range(len(alphas)):
        for j in range(i, len(alphas)):
            a, b = alphas[i], alphas[j]
            if not a <= alpha <= b:
                continue
            v = h[i] if a == b else h[i] + (h[j] - h[i]) * (alpha - a) / (b - a)
            best = min(best, v)
    return best


def check_duality(n_spaces=100, n_lambdas=50, seed=0) -> float:
    """Largest primal/dual mismatch plus largest biconjugation error."""
    rng = make_rng(seed, 100)
    worst = 0.0
    for _ in range(n_spaces):
        space = random_space(rng)
        sf = structure_function(space)
        for lam in 5.0 * rng.random(n_lambdas):
            worst = max(worst, abs(fenchel_h_to_F(sf, lam) - free_energy_zero_T(space, lam)[0]))
        curve = sweep_lambda(space, exact_lambda_grid(space), 0.0)
        for a in sf.alphas:
            worst = max(worst, abs(fenchel_F_to_h(curve, a) - hull_chord(sf.alphas, sf.h, a)))
    return worst


def check_detailed_balance(n_spaces=20, seed=0) -> float:
    rng = make_rng(seed, 101)
    worst = 0.0
    for _ in range(n_spaces):
        space = random_space(rng, max_points=50, max_complexity=60)
        for kernel in ProposalKernel:
            for lam in (0.0, 0.5, 2.0):
                for T in (0.5, 1.0, 4.0):
                    worst = max(worst, detailed_balance_check(space, kernel, lam, T))
    return worst


def check_stationarity(seed=0) -> float:
    """``||pi P - pi||_inf`` for a random 10-state space."""
    space = random_space(make_rng(seed, 102), max_points=10)
    P = transition_matrix(space, ProposalKernel.UNIFORM_JUMP, 1.0, 1.0)
    pi, _ = gibbs_weights(actions(space, 1.0), 1.0)
    return float(np.max(np.abs(pi @ P - pi)))


CHECKS = {
    "duality": (check_duality, 1e-12),
    "detailed_balance": (check_detailed_balance, 1e-12),
    "stationarity": (check_stationarity, 1e-12),
}


def run_all():
    """Yield ``(name, value, tolerance, passed)`` for every check."""
    for name, (fn, tol) in CHECKS.items():
        v = fn()
        yield name, v, tol, v <= tol
