"""Monte-Carlo check of the closed-form loss bound.

Under a Gaussian model of fused features the expected intermediate-domain
loss has a Jensen/MGF upper bound. We estimate the expectation by sampling,
watch the estimates settle as M grows, and count the fused configurations a
single layer can produce.
"""
from saff import theory

model, clf, labels = theory.random_problem(seed=0)
print(f"closed-form bound       {theory.mgf_upper_bound(model, clf, labels):.5f}")
print(f"loss at the class means {theory.plain_ce_at_means(model, clf, labels):.5f}")
for row in theory.convergence_report(model, clf, labels, [1000, 10_000, 100_000], seeds=[0, 1, 2]):
    print(f"M={row.M:>7d}  estimate {row.estimate:.5f} +/- {row.stderr:.5f}  gap {row.gap:.4f}  "
          f"Cauchy {'ok' if row.cauchy_pass else 'not yet'}")

count = theory.latent_space_size(600, 600, 18, layers=4)
print(f"fused configurations: one layer ~1e{len(str(count.per_layer)) - 1}, "
      f"four layers compounded ~1e{len(str(count.compounded)) - 1}")
