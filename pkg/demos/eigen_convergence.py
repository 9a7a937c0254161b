'''First Dirichlet eigenvalue of the p-Laplacian under refinement.

On the unit disk with p = 2 the exact value is j_{0,1}^2; on (0,1) the
closed form (pi_p)^p holds for every p.  P1 elements approach both from above.'''
import math

from plap.eigen import first_eigenpair
from plap.mesh import build_mesh
from plap.oracles import eigenvalue_closed_form

J01 = 2.404825557695773

print('unit disk, p = 2')
for res in (4, 8, 16, 32):
    eig = first_eigenpair(build_mesh('unit_disk', res), 2.0)
    print(f'  res {res:3d}: lambda1 = {eig.lambda1:.6f}  rel.err = {eig.lambda1 / J01**2 - 1:.2e}')

print('interval (0,1)')
for p in (1.5, 2.0, 3.0, 4.0):
    exact = eigenvalue_closed_form(p)
    for res in (64, 256, 1024):
        eig = first_eigenpair(build_mesh('interval(0,1)', res), p)
        print(f'  p = {p}, res {res:4d}: {eig.lambda1:.8f} vs {exact:.8f}'
              f'  ({eig.iterations} iterations)')
