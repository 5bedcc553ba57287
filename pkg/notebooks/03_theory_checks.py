# %% [markdown]
# # The convergence theory on small dense problems
#
# The estimates behind PPGD are inequalities with explicit constants.
# On an 8-dimensional quartic objective every quantity is computable:
# the minimizer by Newton's method and the Lipschitz constant by sampling.
# Each check reports how many sampled pairs or iterations violate its
# inequality.

# %%
from ppgd.theory import DenseInstance, PerturbationInjector, check_invariant_set, ppgd_setup, run_all_checks

for report in run_all_checks(seed=0):
    print(report.row())

# %% [markdown]
# The invariant-set step size sigma0 is conservative.  Raising it shows
# where the guarantee stops: the adversarial perturbation then pushes the
# iterates out of the ball.

# %%
setup = ppgd_setup(DenseInstance.random(8, 1.0, 0), d0=4.0, seed=0)
print(f"mu={setup.mu:.3f} lhat={setup.lhat:.3f} sigma0={setup.sigma0:.4g} eps0={setup.eps0:.4g}")
for factor in (1, 2, 5, 10, 20):
    injector = PerturbationInjector(setup.instance, setup.minimizer, "adversarial", setup.eps0)
    report = check_invariant_set(setup, factor * setup.sigma0, injector, iters=500)
    print(f"sigma = {factor:>2} sigma0: max d/d0 = {report.details['max_d_over_d0']:.4g}  "
          f"{'inside' if report.passed else 'escaped'}")
