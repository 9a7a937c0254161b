"""Simplicial meshes, P1 finite-element functions and p-Laplacian assembly.

Supported domains are the interval ``(a, b)``, the unit square and the unit
disk, all with an exactly known distance-to-boundary function.  Every
element-level quantity is vectorised over elements; accumulation into nodal
vectors goes through :func:`numpy.bincount`, which is deterministic for a fixed
element ordering.
"""

from __future__ import annotations

import math
import re
import weakref
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh",
    "FeFunction",
    "GradedRule",
    "GradedIntegral",
    "build_mesh",
    "apply_Ap",
    "operator_matrix",
    "weighted_mass",
    "norm_W1p",
    "norm_Lq",
    "norm_Linf",
    "graded_rule",
    "integrate_distance_power",
    "write_mesh",
    "read_mesh",
    "write_norm_table",
]

# {{{ reference quadrature

_GAUSS_1D_X, _GAUSS_1D_W = np.polynomial.legendre.leggauss(3)
# Gauss-Legendre on [0, 1], exact for degree 5
_REF_BARY_1D = np.stack([(1 - _GAUSS_1D_X) / 2, (1 + _GAUSS_1D_X) / 2], axis=1)
_REF_W_1D = _GAUSS_1D_W / 2

# Strang-Fix / Dunavant 6-point rule, exact for degree 4
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
_REF_BARY_2D = np.array(
    [
        [_A1, _A1, 1 - 2 * _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [1 - 2 * _A1, _A1, _A1],
        [_A2, _A2, 1 - 2 * _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [1 - 2 * _A2, _A2, _A2],
    ]
)
_REF_W_2D = np.array([_W1, _W1, _W1, _W2, _W2, _W2])
_REF_W_2D = _REF_W_2D / _REF_W_2D.sum()


def reference_rule(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and weights (summing to one) of the element rule."""
    if dim == 1:
        return _REF_BARY_1D, _REF_W_1D
    if dim == 2:
        return _REF_BARY_2D, _REF_W_2D
    raise ValueError(f"unsupported dimension: {dim}")


# }}}


# {{{ mesh


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh with boundary flags and nodal distance."""

    nodes: np.ndarray
    simplices: np.ndarray
    boundary: np.ndarray
    distance: np.ndarray
    domain: str | None = None
    _distance_fn: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, repr=False
    )

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        simplices = np.asarray(self.simplices, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "simplices", simplices)
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=bool))
        object.__setattr__(self, "distance", np.asarray(self.distance, dtype=float))
        for arr in (self.nodes, self.simplices, self.boundary, self.distance):
            arr.flags.writeable = False

        if simplices.shape[1] != self.dim + 1:
            raise ValueError("simplices do not match the spatial dimension")
        if self.boundary.shape != (self.n_nodes,):
            raise ValueError("boundary flags must have one entry per node")
        if self.distance.shape != (self.n_nodes,):
            raise ValueError("nodal distance must have one entry per node")
        if np.any(self.volumes <= 0):
            raise ValueError("mesh contains simplices of non-positive measure")

    # {{{ sizes

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.simplices.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        """Indices of the nodes not on the boundary."""
        return np.flatnonzero(~self.boundary)

    @cached_property
    def h(self) -> float:
        """Largest edge length."""
        v = self.nodes[self.simplices]
        lengths = [
            np.linalg.norm(v[:, a] - v[:, b], axis=1)
            for a in range(self.dim + 1)
            for b in range(a + 1, self.dim + 1)
        ]
        return float(np.max(lengths))

    @cached_property
    def diameter(self) -> float:
        lo, hi = self.nodes.min(axis=0), self.nodes.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # }}}

    # {{{ geometry

    @cached_property
    def _jacobians(self) -> np.ndarray:
        v = self.nodes[self.simplices]
        return np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.linalg.det(self._jacobians) / math.factorial(self.dim)

    @cached_property
    def grads(self) -> np.ndarray:
        """Gradients of the nodal basis functions, shape (M, dim + 1, dim)."""
        jinv = np.linalg.inv(self._jacobians)
        ref = np.vstack([-np.ones(self.dim), np.eye(self.dim)])
        # grad lambda_a = J^{-T} grad_ref lambda_a
        return np.einsum("ad,mde->mae", ref, jinv)

    @cached_property
    def touches_boundary(self) -> np.ndarray:
        """Per element: does it have a boundary vertex."""
        return self.boundary[self.simplices].any(axis=1)

    @cached_property
    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Element quadrature: points (M, Q, dim) and weights (M, Q)."""
        bary, w = reference_rule(self.dim)
        v = self.nodes[self.simplices]
        points = np.einsum("qa,mad->mqd", bary, v)
        weights = self.volumes[:, None] * w[None, :]
        return points, weights

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        share = np.repeat(self.volumes / (self.dim + 1), self.dim + 1)
        return np.bincount(self.simplices.ravel(), share, self.n_nodes)

    def distance_at(self, points: np.ndarray) -> np.ndarray:
        """Distance to the boundary at arbitrary points of the domain."""
        points = np.asarray(points, dtype=float)
        if self.dim == 1 and points.shape[-1:] != (1,):
            points = points[..., None]
        if self._distance_fn is not None:
            return self._distance_fn(points)
        return _polygonal_distance(self, points)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        """Node indices of the facets that belong to exactly one element."""
        d = self.dim
        faces = np.concatenate(
            [np.delete(self.simplices, a, axis=1) for a in range(d + 1)]
        )
        faces = np.sort(faces, axis=1)
        uniq, counts = np.unique(faces, axis=0, return_counts=True)
        return uniq[counts == 1]

    # }}}

    # {{{ evaluation helpers

    def gradient(self, u: np.ndarray | FeFunction) -> np.ndarray:
        """Constant per-element gradient of a P1 function, shape (M, dim)."""
        c = _coeffs(u)
        return np.einsum("mad,ma->md", self.grads, c[self.simplices])

    def at_quadrature(self, u: np.ndarray | FeFunction) -> np.ndarray:
        """Values of a P1 function at the element quadrature points (M, Q)."""
        bary, _ = reference_rule(self.dim)
        return np.einsum("qa,ma->mq", bary, _coeffs(u)[self.simplices])

    def assemble(self, local: np.ndarray) -> np.ndarray:
        """Sum element contributions of shape (M, dim + 1) into a nodal vector."""
        return np.bincount(
            self.simplices.ravel(), np.ravel(local), minlength=self.n_nodes
        )

    def load_vector(self, values_q: np.ndarray) -> np.ndarray:
        """Entries int(value * psi_i) for values given at quadrature points."""
        bary, _ = reference_rule(self.dim)
        _, w = self.quadrature
        return self.assemble(np.einsum("mq,qa->ma", values_q * w, bary))

    def integrate(self, values_q: np.ndarray) -> float:
        _, w = self.quadrature
        return float(np.sum(values_q * w))

    # }}}


def _coeffs(u: np.ndarray | FeFunction) -> np.ndarray:
    if isinstance(u, FeFunction):
        return u.values
    return np.asarray(u, dtype=float)


def _polygonal_distance(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    shape = points.shape[:-1]
    x = points.reshape(-1, mesh.dim)
    facets = mesh.nodes[mesh.boundary_facets]
    if mesh.dim == 1:
        dist = np.abs(x[:, None, 0] - facets[None, :, 0, 0])
        return dist.min(axis=1).reshape(shape)

    a, b = facets[:, 0], facets[:, 1]
    ab = b - a
    t = np.einsum("kfd,fd->kf", x[:, None, :] - a[None], ab) / np.sum(ab**2, axis=1)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(x[:, None, :] - proj, axis=2).min(axis=1).reshape(shape)


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Continuous piecewise-linear function given by its nodal values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.n_nodes,):
            raise ValueError(
                f"expected {self.mesh.n_nodes} coefficients, got {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def interpolate(cls, mesh: Mesh, func: Callable[[np.ndarray], np.ndarray]) -> FeFunction:
        x = mesh.nodes[:, 0] if mesh.dim == 1 else mesh.nodes
        return cls(mesh, np.asarray(func(x), dtype=float))

    @classmethod
    def zeros(cls, mesh: Mesh) -> FeFunction:
        return cls(mesh, np.zeros(mesh.n_nodes))

    @property
    def is_zero_trace(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary] == 0.0))

    def with_zero_trace(self) -> FeFunction:
        values = self.values.copy()
        values[self.mesh.boundary] = 0.0
        return FeFunction(self.mesh, values)

    def __add__(self, other: FeFunction) -> FeFunction:
        return FeFunction(self.mesh, self.values + _coeffs(other))

    def __sub__(self, other: FeFunction) -> FeFunction:
        return FeFunction(self.mesh, self.values - _coeffs(other))

    def __mul__(self, c: float) -> FeFunction:
        return FeFunction(self.mesh, c * self.values)

    __rmul__ = __mul__


# }}}


# {{{ construction


def _parse_domain(domain) -> tuple[str, tuple[float, ...]]:
    if isinstance(domain, (tuple, list)):
        name, *args = domain
        return str(name), tuple(float(a) for a in args)
    text = str(domain).strip().replace(" ", "")
    m = re.fullmatch(r"interval\(([^,]+),([^)]+)\)", text)
    if m:
        return "interval", (float(m.group(1)), float(m.group(2)))
    if text in ("interval", "unit_interval"):
        return "interval", (0.0, 1.0)
    if text in ("unit_square", "unit_disk"):
        return text, ()
    raise ValueError(f"unknown domain: {domain!r}")


def build_mesh(domain, resolution: int) -> Mesh:
    """Build a mesh of ``interval(a,b)``, ``unit_square`` or ``unit_disk``.

    ``resolution`` is the number of elements for the interval, the number of
    cells per side for the square and the number of rings for the disk.
    """
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"resolution must be an integer >= 2, got {resolution}")
    n = int(resolution)
    name, args = _parse_domain(domain)

    if name == "interval":
        a, b = args
        if not b > a:
            raise ValueError("interval requires a < b")
        x = np.linspace(a, b, n + 1)
        simplices = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[[0, -1]] = True

        def dist(p):
            return np.maximum(np.minimum(p[..., 0] - a, b - p[..., 0]), 0.0)

        d = dist(x[:, None])
        d[boundary] = 0.0
        return Mesh(x[:, None], simplices, boundary, d, f"interval({a:g},{b:g})", dist)

    if name == "unit_square":
        t = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(t, t, indexing="xy")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        tris = []
        for j in range(n):
            for i in range(n):
                p0 = j * (n + 1) + i
                p1, p2, p3 = p0 + 1, p0 + n + 2, p0 + n + 1
                if (i + j) % 2 == 0:
                    tris += [(p0, p1, p2), (p0, p2, p3)]
                else:
                    tris += [(p0, p1, p3), (p1, p2, p3)]

        def dist(p):
            x, y = p[..., 0], p[..., 1]
            return np.maximum(np.minimum.reduce([x, 1 - x, y, 1 - y]), 0.0)

        d = dist(nodes)
        boundary = d == 0.0
        return Mesh(nodes, np.array(tris), boundary, d, "unit_square", dist)

    if name == "unit_disk":
        nodes = [(0.0, 0.0)]
        rings = [[0]]
        for k in range(1, n + 1):
            m = 6 * k
            theta = 2 * np.pi * np.arange(m) / m
            r = k / n
            start = len(nodes)
            if k == n:
                nodes += list(zip(np.cos(theta), np.sin(theta)))
            else:
                nodes += list(zip(r * np.cos(theta), r * np.sin(theta)))
            rings.append(list(range(start, start + m)))

        tris = []
        for k in range(1, n + 1):
            inner, outer = rings[k - 1], rings[k]
            tris += _zip_rings(inner, outer)
        nodes = np.array(nodes)
        simplices = _orient(nodes, np.array(tris))

        def dist(p):
            return np.maximum(1.0 - np.linalg.norm(p, axis=-1), 0.0)

        boundary = np.zeros(len(nodes), dtype=bool)
        boundary[rings[n]] = True
        d = dist(nodes)
        d[boundary] = 0.0
        return Mesh(nodes, simplices, boundary, d, "unit_disk", dist)

    raise ValueError(f"unknown domain: {domain!r}")


def _zip_rings(inner: list[int], outer: list[int]) -> list[tuple[int, int, int]]:
    m, M = len(inner), len(outer)
    if m == 1:
        return [(inner[0], outer[j], outer[(j + 1) % M]) for j in range(M)]
    tris = []
    i = j = 0
    while i < m or j < M:
        next_in = (i + 1) / m
        next_out = (j + 1) / M
        if j < M and (i == m or next_out <= next_in):
            tris.append((inner[i % m], outer[j], outer[(j + 1) % M]))
            j += 1
        else:
            tris.append((inner[i], outer[j % M], inner[(i + 1) % m]))
            i += 1
    return tris


def _orient(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    v = nodes[tris]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tris = tris.copy()
    flip = det < 0
    tris[flip, 1], tris[flip, 2] = tris[flip, 2], tris[flip, 1].copy()
    return tris


# }}}


# {{{ operator and norms


def _check_p(p: float) -> None:
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")


def _flux_coefficient(grad: np.ndarray, p: float, eta: float) -> np.ndarray:
    s2 = np.sum(grad**2, axis=1)
    if eta == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s2 > 0, s2 ** ((p - 2) / 2), 0.0)
    return (s2 + eta**2) ** ((p - 2) / 2)


def apply_Ap(mesh: Mesh, u, p: float, eta: float = 0.0) -> np.ndarray:
    r"""Nodal vector :math:`\int (|\nabla u|^2 + \eta^2)^{(p-2)/2} \nabla u \cdot \nabla\psi_i`."""
    _check_p(p)
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    g = mesh.gradient(u)
    flux = _flux_coefficient(g, p, eta)[:, None] * g
    local = mesh.volumes[:, None] * np.einsum("md,mad->ma", flux, mesh.grads)
    return mesh.assemble(local)


def operator_matrix(mesh: Mesh, u, p: float, eta: float, newton: bool = False) -> sp.csr_matrix:
    """Lagged-diffusivity stiffness matrix of the smoothed p-Laplacian at ``u``.

    With ``newton=True`` the full Jacobian of :func:`apply_Ap` is returned
    instead; it is symmetric positive semi-definite for every p > 1.
    """
    g = mesh.gradient(u)
    s2 = np.sum(g**2, axis=1) + eta**2
    coef = _flux_coefficient(g, p, eta)
    dim = mesh.dim
    tensor = coef[:, None, None] * np.eye(dim)[None]
    if newton and p != 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            c2 = np.where(s2 > 0, (p - 2) * s2 ** ((p - 4) / 2), 0.0)
        tensor = tensor + c2[:, None, None] * np.einsum("md,me->mde", g, g)
    local = mesh.volumes[:, None, None] * np.einsum(
        "mad,mde,mbe->mab", mesh.grads, tensor, mesh.grads
    )
    return _assemble_matrix(mesh, local)


def weighted_mass(mesh: Mesh, weight_q: np.ndarray | None = None) -> sp.csr_matrix:
    """Consistent mass matrix with an optional weight given at quadrature points."""
    bary, _ = reference_rule(mesh.dim)
    _, w = mesh.quadrature
    ww = w if weight_q is None else w * weight_q
    local = np.einsum("mq,qa,qb->mab", ww, bary, bary)
    return _assemble_matrix(mesh, local)


def _assemble_matrix(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    k = mesh.dim + 1
    rows = np.repeat(mesh.simplices, k, axis=1).ravel()
    cols = np.tile(mesh.simplices, (1, k)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def norm_W1p(u: FeFunction, p: float) -> float:
    r""":math:`\|\,|\nabla u|\,\|_p`, exact for P1 functions."""
    _check_p(p)
    mesh = u.mesh
    g = np.linalg.norm(mesh.gradient(u), axis=1)
    return float(np.sum(mesh.volumes * g**p) ** (1 / p))


def norm_Lq(u: FeFunction, q: float) -> float:
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    return float(u.mesh.integrate(np.abs(u.mesh.at_quadrature(u)) ** q) ** (1 / q))


def norm_Linf(u: FeFunction) -> float:
    return float(np.max(np.abs(u.values)))


# }}}


# {{{ boundary-graded quadrature


class GradedRule(NamedTuple):
    """Quadrature rule refined geometrically toward the boundary."""

    elements: np.ndarray
    bary: np.ndarray
    weights: np.ndarray
    points: np.ndarray

    def evaluate(self, mesh: Mesh, u) -> np.ndarray:
        """Values of a P1 function at the rule's points."""
        c = _coeffs(u)[mesh.simplices[self.elements]]
        return np.einsum("ka,ka->k", self.bary, c)


class GradedIntegral(NamedTuple):
    value: float
    previous: float
    converged: bool


_GRADED_CACHE: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def graded_rule(mesh: Mesh, depth: int = 20) -> GradedRule:
    """Element quadrature with elements touching the boundary subdivided.

    Each boundary-touching element is split recursively toward its boundary
    vertices or facets with ratio 1/2, ``depth`` times.  Interior elements keep
    the standard rule.
    """
    per_mesh = _GRADED_CACHE.setdefault(mesh, {})
    if depth in per_mesh:
        return per_mesh[depth]

    bary_ref, w_ref = reference_rule(mesh.dim)
    pts, wts = mesh.quadrature
    regular = np.flatnonzero(~mesh.touches_boundary)

    elems = [np.repeat(regular, len(w_ref))]
    bary = [np.tile(bary_ref, (len(regular), 1))]
    weights = [wts[regular].ravel()]
    points = [pts[regular].reshape(-1, mesh.dim)]

    scale = mesh.h
    for e in np.flatnonzero(mesh.touches_boundary):
        verts = mesh.nodes[mesh.simplices[e]]
        sub_pts, sub_w = [], []
        if mesh.dim == 1:
            _graded_segment(mesh, verts, depth, scale, sub_pts, sub_w)
        else:
            _graded_triangle(mesh, verts, depth, scale, sub_pts, sub_w)
        x = np.concatenate(sub_pts)
        elems.append(np.full(len(x), e))
        bary.append(_barycentric(mesh, e, x))
        weights.append(np.concatenate(sub_w))
        points.append(x)

    rule = GradedRule(
        np.concatenate(elems),
        np.concatenate(bary),
        np.concatenate(weights),
        np.concatenate(points),
    )
    per_mesh[depth] = rule
    return rule


def _barycentric(mesh: Mesh, e: int, x: np.ndarray) -> np.ndarray:
    v = mesh.nodes[mesh.simplices[e]]
    lam = np.linalg.solve(mesh._jacobians[e], (x - v[0]).T).T
    return np.column_stack([1 - lam.sum(axis=1), lam])


def _on_boundary(mesh: Mesh, x: np.ndarray, scale: float) -> np.ndarray:
    return mesh.distance_at(np.atleast_2d(x)) <= 1e-12 * scale


def _rule_on(verts: np.ndarray, out_pts: list, out_w: list) -> None:
    dim = verts.shape[1]
    bary, w = reference_rule(dim)
    if dim == 1:
        vol = abs(verts[1, 0] - verts[0, 0])
    else:
        e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
        vol = abs(e1[0] * e2[1] - e1[1] * e2[0]) / 2
    out_pts.append(bary @ verts)
    out_w.append(vol * w)


def _graded_segment(mesh, verts, depth, scale, out_pts, out_w) -> None:
    onb = _on_boundary(mesh, verts, scale)
    if not onb.any() or depth == 0:
        _rule_on(verts, out_pts, out_w)
        return
    v = verts if onb[0] else verts[::-1]
    mid = (v[0] + v[1]) / 2
    _rule_on(np.stack([mid, v[1]]), out_pts, out_w)
    _graded_segment(mesh, np.stack([v[0], mid]), depth - 1, scale, out_pts, out_w)


def _graded_triangle(mesh, verts, depth, scale, out_pts, out_w) -> None:
    onb = _on_boundary(mesh, verts, scale)
    if not onb.any() or depth == 0:
        _rule_on(verts, out_pts, out_w)
        return

    edges = [(0, 1), (1, 2), (2, 0)]
    mids = np.array([(verts[a] + verts[b]) / 2 for a, b in edges])
    mid_onb = _on_boundary(mesh, mids, scale)
    bedges = [i for i, (a, b) in enumerate(edges) if onb[a] and onb[b] and mid_onb[i]]

    if len(bedges) == 1:
        a, b = edges[bedges[0]]
        c = 3 - a - b
        if not onb[c]:
            _graded_strip(
                mesh, verts[a], verts[b], verts[c], verts[c], depth, scale, out_pts, out_w
            )
            return

    if len(bedges) == 0 and onb.sum() == 1:
        v = int(np.flatnonzero(onb)[0])
        b, c = [i for i in range(3) if i != v]
        mb, mc = (verts[v] + verts[b]) / 2, (verts[v] + verts[c]) / 2
        _rule_on(np.stack([mb, verts[b], verts[c]]), out_pts, out_w)
        _rule_on(np.stack([mb, verts[c], mc]), out_pts, out_w)
        _graded_triangle(
            mesh, np.stack([verts[v], mb, mc]), depth - 1, scale, out_pts, out_w
        )
        return

    # several boundary vertices not covered by a single boundary facet: split
    # at the midpoint of an edge that is not itself on the boundary
    for i, (a, b) in enumerate(edges):
        if onb[a] and onb[b] and i not in bedges:
            c = 3 - a - b
            m = mids[i]
            _graded_triangle(
                mesh, np.stack([verts[a], m, verts[c]]), depth, scale, out_pts, out_w
            )
            _graded_triangle(
                mesh, np.stack([m, verts[b], verts[c]]), depth, scale, out_pts, out_w
            )
            return
    _rule_on(verts, out_pts, out_w)


def _graded_strip(mesh, a, b, b2, a2, depth, scale, out_pts, out_w) -> None:
    # quadrilateral (a, b, b2, a2) whose side ab lies on the boundary
    if depth == 0:
        _rule_on(np.stack([a, b, b2]), out_pts, out_w)
        _rule_on(np.stack([a, b2, a2]), out_pts, out_w)
        return
    ma, mb = (a + a2) / 2, (b + b2) / 2
    _rule_on(np.stack([ma, mb, b2]), out_pts, out_w)
    _rule_on(np.stack([ma, b2, a2]), out_pts, out_w)
    _graded_strip(mesh, a, b, mb, ma, depth - 1, scale, out_pts, out_w)


def integrate_distance_power(
    mesh: Mesh, gamma: float, q: float, depth: int = 20, tol: float = 1e-3
) -> GradedIntegral:
    r"""Graded-quadrature value of :math:`\int_\Omega d^{-\gamma q}\,dx`.

    ``converged`` is false when the values at grading depths ``depth`` and
    ``depth - 1`` differ by more than ``tol`` relative to the latest value.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if math.isclose(gamma * q, 1.0):
        raise ValueError("the borderline exponent gamma * q = 1 is not supported")
    if depth < 1:
        raise ValueError("depth must be >= 1")

    values = []
    for k in (depth - 1, depth):
        rule = graded_rule(mesh, k)
        d = mesh.distance_at(rule.points)
        values.append(float(np.sum(rule.weights * d ** (-gamma * q))))
    prev, value = values
    converged = abs(value - prev) <= tol * abs(value)
    return GradedIntegral(value, prev, converged)


# }}}


# {{{ file formats


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write ``plapmesh v1`` text: header, node lines, element lines."""
    lines = [f"plapmesh v1 {mesh.dim} {mesh.n_nodes} {mesh.n_elements}"]
    if mesh.domain is not None:
        lines.append(f"# domain {mesh.domain}")
    for x, flag in zip(mesh.nodes, mesh.boundary):
        coords = " ".join(repr(float(c)) for c in x)
        lines.append(f"{coords} {int(flag)}")
    for s in mesh.simplices:
        lines.append(" ".join(str(int(i)) for i in s))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    """Read a ``plapmesh v1`` file.

    When the file names one of the built-in domains the exact distance function
    is restored; otherwise the distance to the polygonal boundary is used.
    """
    raw = Path(path).read_text().splitlines()
    header = raw[0].split()
    if header[:2] != ["plapmesh", "v1"]:
        raise ValueError(f"not a plapmesh v1 file: {path}")
    dim, n_nodes, n_elems = (int(v) for v in header[2:5])
    domain = None
    body = []
    for line in raw[1:]:
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["domain"]:
                domain = parts[1]
            continue
        if line.strip():
            body.append(line.split())
    node_rows = np.array(body[:n_nodes], dtype=float)
    elems = np.array(body[n_nodes : n_nodes + n_elems], dtype=np.int64)
    nodes, flags = node_rows[:, :dim], node_rows[:, dim].astype(bool)

    dist_fn = None
    if domain is not None:
        try:
            ref = build_mesh(domain, 2)
            dist_fn = ref._distance_fn
        except ValueError:
            dist_fn = None
    mesh = Mesh(nodes, elems, flags, np.zeros(n_nodes), domain, dist_fn)
    d = mesh.distance_at(nodes)
    d[flags] = 0.0
    return Mesh(nodes, elems, flags, d, domain, dist_fn)


def write_norm_table(rows, path: str | Path) -> None:
    """CSV with columns (quantity, p_or_q, value)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "p_or_q", "value"])
        for quantity, pq, value in rows:
            writer.writerow([quantity, pq, repr(float(value))])


# }}}
