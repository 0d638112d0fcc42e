"""Pick a batch from posterior predictions by portfolio allocation.

Turns a set of candidate predictions (posterior mean and std) into the
two-objective portfolio, solves for the allocation that maximizes the
generalized Sharpe ratio, and selects the batch with the largest weights.
Then repeats with a naturalness constraint to show how low-likelihood
candidates get pushed out of the batch.

Run with: python3 demos/batch_from_portfolio.py
"""

import numpy as np

from abbo import PortfolioProblem, build_portfolio, select_batch, solve_sharpe


def show(title, problem, batch_size):
    indices, r, z = select_batch(problem, batch_size, return_details=True)
    print(title)
    print("  idx   mean    std  return  weight")
    order = np.argsort(z)[::-1]
    for i in order[:8]:
        mark = "*" if i in indices else " "
        print(
            f"  {i:3d}{mark} {problem.means[i]:6.2f} {problem.stds[i]:6.2f}"
            f" {r[i]:7.3f} {z[i]:7.3f}"
        )
    print(f"  selected: {sorted(indices)}\n")
    return indices


def main():
    rng = np.random.default_rng(12)
    n = 24
    means = rng.uniform(0.0, 2.0, n)
    stds = rng.uniform(0.05, 0.8, n)

    # a couple of standouts: one safe bet, one long shot
    means[3], stds[3] = 2.6, 0.10
    means[17], stds[17] = 1.9, 1.20

    plain = PortfolioProblem(means, stds)
    picked = show("unconstrained allocation", plain, batch_size=6)

    # suppose the long shot and two others look unnatural to the
    # sequence likelihood model
    likelihoods = np.ones(n)
    likelihoods[[17, 5, 9]] = 0.01
    constrained = PortfolioProblem(means, stds, likelihoods=likelihoods)
    picked_c = show("with naturalness constraint", constrained, batch_size=6)

    dropped = sorted(set(picked) - set(picked_c))
    print(f"candidates dropped by the constraint: {dropped}")

    # the allocation itself, for the curious: weights live on the simplex
    r, q = build_portfolio(plain)
    z = solve_sharpe(r, q)
    print(f"weights sum to {z.sum():.12f}, {np.count_nonzero(z > 1e-9)} of {n} nonzero")


if __name__ == "__main__":
    main()
