"""D-vine and C-vine pair-copula constructions.

Variables are numbered 1..d in column order. Edges are listed tree by tree:

* D-vine, tree l: ``(k, k+l; k+1, ..., k+l-1)`` for k = 1..d-l
* C-vine, tree l: ``(l, l+k; 1, ..., l-1)`` for k = 1..d-l

Each edge copula takes ``(F(first | given), F(second | given))`` as its
(u, v) arguments. Parameters are passed per edge, either as scalars or as
arrays with one entry per row of ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from . import copulas as cp

__all__ = ["Edge", "VineSpec", "conditional_cdfs", "log_density", "simulate", "n_edges"]


def n_edges(dim: int) -> int:
    return dim * (dim - 1) // 2


@dataclass(frozen=True)
class Edge:
    tree: int
    index: int
    first: int
    second: int
    given: tuple
    family: cp.Family

    @property
    def label(self) -> str:
        s = f"{self.first}{self.second}"
        if self.given:
            s += ";" + ",".join(str(g) for g in self.given)
        return s


def _layout(kind: str, dim: int):
    out = []
    for tree in range(1, dim):
        for k in range(1, dim - tree + 1):
            if kind == "D":
                out.append((tree, k, k, k + tree, tuple(range(k + 1, k + tree))))
            else:
                out.append((tree, k, tree, tree + k, tuple(range(1, tree))))
    return out


@dataclass(frozen=True)
class VineSpec:
    """Structure of a D- or C-vine with one copula family per edge.

    Parameters
    ----------
    kind : {"D", "C"}
    dim : int
        Number of variables, at least 2.
    families : sequence of Family or str
        One family per edge in tree-by-tree order. A single family is
        broadcast to every edge.
    """

    kind: str
    dim: int
    families: tuple = field(default=("gaussian",))

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in ("D", "C"):
            raise ValueError(f"vine kind must be 'D' or 'C', got {self.kind!r}")
        if int(self.dim) < 2:
            raise ValueError(f"vine dimension must be >= 2, got {self.dim}")
        fams = self.families
        if isinstance(fams, (str, cp.Family)):
            fams = (fams,)
        fams = tuple(cp.parse_family(f) for f in fams)
        nu = n_edges(int(self.dim))
        if len(fams) == 1:
            fams = fams * nu
        if len(fams) != nu:
            raise ValueError(
                f"a {self.dim}-dimensional vine has {nu} edges but {len(fams)} families were given"
            )
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "families", fams)

    @property
    def n_edges(self) -> int:
        return n_edges(self.dim)

    @property
    def edges(self) -> list:
        return [Edge(*t, fam) for t, fam in zip(_layout(self.kind, self.dim), self.families)]

    def edge_index(self, tree: int, k: int) -> int:
        """Flat position of edge ``k`` (1-based) in tree ``tree``."""
        return sum(self.dim - t for t in range(1, tree)) + k - 1

    def reversed(self) -> "VineSpec":
        """The D-vine on variables in reverse order (d, ..., 1).

        Edge (k, k+l) maps to (d+1-k-l, d+1-k) with arguments swapped, so each
        family is transposed.
        """
        if self.kind != "D":
            raise ValueError("reversal is only defined for D-vines")
        return VineSpec("D", self.dim, tuple(self.families[i].transpose() for i in self.reversal_order()))

    def reversal_order(self) -> list:
        """Permutation mapping edges of :meth:`reversed` back to this spec."""
        order = []
        for tree in range(1, self.dim):
            for k in range(1, self.dim - tree + 1):
                order.append(self.edge_index(tree, self.dim + 1 - k - tree))
        return order


def _check(spec: VineSpec, params: Sequence, validate: bool):
    if len(params) != spec.n_edges:
        raise ValueError(f"expected {spec.n_edges} edge parameters, got {len(params)}")
    params = [np.asarray(p, dtype=float) for p in params]
    if validate:
        for fam, p in zip(spec.families, params):
            cp.check_param(fam, p)
    return params


def _as_rows(u, dim):
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != dim:
        raise ValueError(f"u has {u.shape[1]} columns, vine dimension is {dim}")
    return cp.clamp(u), single


def _h(fam, theta, a, b):
    return cp.clamp(cp.h_function(fam, theta, a, b, validate=False))


def _pairs(spec: VineSpec, x, h) -> list:
    """Edge argument pairs from the tree recursion; ``h(e, transposed, a, b)`` conditions ``a`` on ``b``."""
    d = spec.dim
    out = [None] * spec.n_edges
    if spec.kind == "D":
        a_cur = [x[:, k] for k in range(d - 1)]
        b_cur = [x[:, k + 1] for k in range(d - 1)]
        for tree in range(1, d):
            m = d - tree
            idx = [spec.edge_index(tree, k + 1) for k in range(m)]
            for k in range(m):
                out[idx[k]] = (a_cur[k], b_cur[k])
            if tree == d - 1:
                break
            a_nxt = [h(idx[k], False, a_cur[k], b_cur[k]) for k in range(m - 1)]
            b_nxt = [h(idx[k + 1], True, b_cur[k + 1], a_cur[k + 1]) for k in range(m - 1)]
            a_cur, b_cur = a_nxt, b_nxt
    else:
        v = {j: x[:, j] for j in range(d)}
        for tree in range(1, d):
            root = tree - 1
            nxt = {}
            for k in range(1, d - tree + 1):
                e = spec.edge_index(tree, k)
                out[e] = (v[root], v[root + k])
                if tree < d - 1:
                    nxt[root + k] = h(e, True, v[root + k], v[root])
            v = nxt
    return out


def conditional_cdfs(spec: VineSpec, params: Sequence, u, validate=True) -> list:
    """Edge arguments ``(F(first | given), F(second | given))`` for every edge.

    Returns a list aligned with ``spec.edges``; each entry is a pair of arrays
    of shape ``(n,)``. In tree 1 these are the raw u columns; deeper trees are
    obtained through the h-function recursion.
    """
    u, _ = _as_rows(u, spec.dim)
    params = _check(spec, params, validate)
    fams = spec.families

    def h(e, transposed, a, b):
        return _h(fams[e].transpose() if transposed else fams[e], params[e], a, b)

    return _pairs(spec, u, h)


# normal scores of the clamp bounds
_Z_LO, _Z_HI = float(ndtri(cp.U_EPS)), float(ndtri(1.0 - cp.U_EPS))


def _all_gaussian(spec: VineSpec) -> bool:
    return all(f == cp.Family("gaussian", 0) for f in spec.families)


def _gaussian_log_density(spec, params, u):
    # the recursion stays on the normal-score scale, which avoids the precision
    # lost when h-values close to 1 are stored as probabilities
    one_m = [1.0 - r * r for r in params]

    def h(e, transposed, a, b):
        return np.clip((a - params[e] * b) / np.sqrt(one_m[e]), _Z_LO, _Z_HI)

    total = np.zeros(u.shape[0])
    for r, q, (a, b) in zip(params, one_m, _pairs(spec, ndtri(u), h)):
        total = total - 0.5 * np.log1p(-r * r) - (r * r * (a * a + b * b) - 2.0 * r * a * b) / (2.0 * q)
    return total


def log_density(spec: VineSpec, params: Sequence, u, validate=True):
    """Log vine copula density: the sum of log pair-copula densities over all edges."""
    u_arr, single = _as_rows(u, spec.dim)
    if _all_gaussian(spec):
        total = _gaussian_log_density(spec, _check(spec, params, validate), u_arr)
    else:
        pairs = conditional_cdfs(spec, params, u_arr, validate)
        total = np.zeros(u_arr.shape[0])
        for fam, p, (a, b) in zip(spec.families, params, pairs):
            total = total + cp.log_density(fam, p, a, b, validate=False)
    return total[0] if single else total


def simulate(spec: VineSpec, params: Sequence, n: int, rng=None):
    """Draw ``n`` rows from the vine by inverse Rosenblatt transformation.

    Edge parameters may be scalars or arrays of shape ``(n,)``.
    """
    rng = np.random.default_rng(rng)
    params = _check(spec, params, True)
    d = spec.dim
    fams = spec.families
    w = rng.random((n, d))
    u = np.empty((n, d))
    u[:, 0] = w[:, 0]

    def hinv(e, x, cond):
        return cp.h_inverse(fams[e].transpose(), params[e], x, cond, validate=False)

    if spec.kind == "D":
        a = {(1, 0): w[:, 0]}
        b = {}
        for j in range(1, d):
            x = w[:, j]
            for tree in range(j, 0, -1):
                k = j - tree
                x = hinv(spec.edge_index(tree, k + 1), x, a[(tree, k)])
                b[(tree, k)] = x
            u[:, j] = x
            a[(1, j)] = x
            for tree in range(2, j + 2):
                k = j + 1 - tree
                if tree > d - 1 or k > d - 1 - tree:
                    continue
                e = spec.edge_index(tree - 1, k + 1)
                a[(tree, k)] = _h(fams[e], params[e], a[(tree - 1, k)], b[(tree - 1, k)])
    else:
        for j in range(1, d):
            x = w[:, j]
            for tree in range(j, 0, -1):
                x = hinv(spec.edge_index(tree, j - tree + 1), x, w[:, tree - 1])
            u[:, j] = x
    return cp.clamp(u)
