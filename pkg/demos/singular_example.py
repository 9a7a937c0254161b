'''The singular, discontinuous example f(s) = floor(1/s)^(1/2) on (0,1).

Walks the whole pipeline: hypotheses, sub-solution k*phi1, the eps = 1/n
continuation, then the checks on the limit.  The inclusion fraction grows
with n but stays well below one on a fixed mesh: near the boundary u crosses
many jump levels 1/k per element.'''
import numpy as np

from plap.eigen import first_eigenpair
from plap.mesh import build_mesh, norm_Linf
from plap.reaction import check_hypotheses, preset
from plap.solver import build_subsolution, continuation, residual_v
from plap.verify import check_boundary_growth, check_inclusion, check_subsolution

p = 2.0
r = preset('paper_singular', gamma=0.5, lam=0.0)
mesh = build_mesh('interval(0,1)', 512)
eig = first_eigenpair(mesh, p)
report = check_hypotheses(r, p, eig.lambda1)
print(f'lambda1 = {eig.lambda1:.6f}, hypotheses hold: {report.holds_all}, delta = {report.delta:.4g}')

sub = build_subsolution(mesh, eig, r, report)
print(f'sub-solution k = {sub.k:.5f} after {sub.halvings} halvings')

run = continuation(mesh, r, sub, {'n_start': 2, 'n_end': 256}, tol=0)
print('   n   ||u||_1,p   increment   inclusion')
incs = [np.nan] + run.increments
for eps, u, norm, inc in zip(run.epsilons, run.solutions, run.w1p_norms, incs):
    v = residual_v(mesh, u, p)
    frac = check_inclusion(u, v, r).fraction
    print(f'{round(1 / eps):4d}   {norm:.6f}   {inc:.3e}   {frac:.3f}')

u = run.limit
l_hat, sup = check_boundary_growth(u)
print(f'||u||_inf = {norm_Linf(u):.6f}, min(u - ubar) = {check_subsolution(u, sub):.2e}')
print(f'u/d near the boundary >= {l_hat:.4f}, sup u/d = {sup:.4f}')
