'''Strong locality on a forced plateau.

With p = 3 and f = 200 on (0, 0.99), 0.02 on (0.99, 1), 0 above, the
solution rises steeply and flattens at u = 1.  There -Delta_p u must vanish
even though 1 is a jump of f.  The printed max |v| over the plateau points
stays near kappa times the kernel mass below 1, whatever the mesh.'''
from plap.eigen import first_eigenpair
from plap.mesh import build_mesh
from plap.reaction import check_hypotheses, preset
from plap.solver import build_subsolution, continuation
from plap.verify import check_strong_solution

p = 3.0
r = preset('plateau_step', sigma=200.0, kappa=0.02, tau=0.01)
for res, n_end in ((256, 512), (512, 1024), (1024, 2048)):
    mesh = build_mesh('interval(0,1)', res)
    eig = first_eigenpair(mesh, p)
    sub = build_subsolution(mesh, eig, r, check_hypotheses(r, p, eig.lambda1))
    run = continuation(mesh, r, sub, {'n_start': 2, 'n_end': n_end}, tol=0)
    st = check_strong_solution(run.limit, run.residual_field, r, band=1e-2, level=1.0)
    print(f'res {res:4d}, eps = 1/{n_end}: {st.status}, {st.plateau_points} plateau points,'
          f' max|v| = {st.plateau_max_abs_v:.5f}')
