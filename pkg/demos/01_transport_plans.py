"""Tour of the optimal-transport layer: costs, plans, and feature maps.

Walks from a pairwise cost matrix through the entropically regularized
coupling to the barycentric feature maps the fusion model consumes.
"""

import numpy as np

from parrot import ot


def show(title, arr):
    print(f"\n{title}")
    print(np.array_str(np.asarray(arr), precision=4, suppress_small=True))


def main():
    rng = np.random.default_rng(0)

    print("Two small point clouds play the role of two embedding batches.")
    batch_a = rng.normal(0.0, 1.0, size=(4, 3))
    batch_b = rng.normal(0.5, 1.0, size=(5, 3))

    cost = ot.cost_matrix(batch_a, batch_b)
    show("Cost matrix (pairwise distances, normalized so the peak is 1):",
         cost.values)

    print("\nSinkhorn solves for a coupling with uniform marginals "
          "(rows sum to 1/4, columns to 1/5).")
    for eps in (1.0, 0.1, 0.02):
        plan = ot.sinkhorn(cost, epsilon=eps, max_iters=5000)
        gamma = plan.gamma
        entropy = -np.sum(gamma * np.log(gamma + 1e-300))
        print(f"  eps={eps:<5} sweeps={plan.iterations_used:<5} "
              f"marginal violation={plan.marginal_violation():.2e} "
              f"plan entropy={entropy:.3f}")
    print("Smaller eps concentrates the plan (lower entropy); larger eps "
          "spreads mass toward the independent coupling.")

    plan = ot.sinkhorn(cost, epsilon=0.1, max_iters=5000)
    show("Plan at eps=0.1:", plan.gamma)

    print("\nA zero cost matrix is special-cased: nothing distinguishes any "
          "pairing, so the plan is exactly the uniform product.")
    uniform = ot.sinkhorn(np.zeros((3, 4)), epsilon=0.1)
    show("gamma (all entries 1/12):", uniform.gamma)

    print("\nThe plan moves features between the streams: gamma @ B "
          "expresses each row of A as a weighted average of B's rows, "
          "and gamma.T @ A the reverse.")
    b_seen_from_a, a_seen_from_b = ot.transport(plan, batch_b, batch_a)
    show("B's rows averaged into A's positions (times 4 to undo the 1/4 "
         "row mass):", 4 * b_seen_from_a)
    print("\nEach mapped row lies in the convex hull of the opposite batch; "
          "that is what the fusion model concatenates next to the raw "
          "latents.")


if __name__ == "__main__":
    main()
