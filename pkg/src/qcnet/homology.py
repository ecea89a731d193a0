"""Exact simplicial homology over the rationals, and vertex-gluing checks.

Complexes are finite abstract simplicial complexes on integer vertices,
stored closed under taking faces.  Boundary matrices use the alternating
sign convention on sorted vertex tuples (the boundary of an edge (a, b) is
(b) - (a)), all arithmetic is fractions.Fraction, and Betti numbers come
from exact ranks: beta_q = n_q - rank d_q - rank d_{q+1}.

Identifying groups of vertices is modeled by attaching a cone: for each
class with at least two members, a fresh apex joined by an edge to every
member (the "star" gluing).  The glued complex deformation-retracts onto
the quotient space, so its homology is the quotient's.  The map induced on
homology by the inclusion of the original complex is onto in degree 0,
injective in degree 1, and an isomorphism above; ``verify_quotient_homology``
machine-checks those statements by computing the rank of the induced map
directly (image of a cycle basis modulo boundaries).

An alternative "pairwise" gluing cones every *pair* inside a class instead.
For classes of size >= 3 it is not a deformation retract onto the quotient:
three mutually coned vertices create an extra cycle, so degree-1 homology
over-counts.  It is kept as a documented counterexample generator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class SubcomplexError(ValueError):
    """Claimed subcomplex has simplices the bigger complex lacks."""


class SimplicialComplex:
    """Face-closed set of simplices, each a sorted tuple of int vertices."""

    def __init__(self, simplices):
        faces: set[tuple[int, ...]] = set()
        for simplex in simplices:
            vs = tuple(sorted(int(v) for v in simplex))
            if not vs:
                raise ValueError("empty simplex")
            if len(set(vs)) != len(vs):
                raise ValueError(f"repeated vertex in simplex {vs}")
            for size in range(1, len(vs) + 1):
                faces.update(itertools.combinations(vs, size))
        self.by_dim: dict[int, list[tuple[int, ...]]] = {}
        for face in faces:
            self.by_dim.setdefault(len(face) - 1, []).append(face)
        for q in self.by_dim:
            self.by_dim[q].sort()
        self.index: dict[int, dict[tuple[int, ...], int]] = {
            q: {s: i for i, s in enumerate(lst)}
            for q, lst in self.by_dim.items()}

    @property
    def dim(self) -> int:
        return max(self.by_dim) if self.by_dim else -1

    @property
    def vertices(self) -> list[int]:
        return [s[0] for s in self.by_dim.get(0, [])]

    def simplices(self, q: int) -> list[tuple[int, ...]]:
        return self.by_dim.get(q, [])

    def n(self, q: int) -> int:
        return len(self.by_dim.get(q, []))

    def contains(self, other: "SimplicialComplex") -> bool:
        return all(set(other.simplices(q)) <= set(self.simplices(q))
                   for q in other.by_dim)


def boundary_matrix(K: SimplicialComplex,
                    q: int) -> tuple[list[list[Fraction]], int]:
    """(rows, n_cols) of d_q: rows are (q-1)-simplices, columns q-simplices.

    d_0 is the zero map (no rows); a q above the dimension gives a matrix
    with zero columns.  Both still have well-defined rank and nullspace.
    """
    cols = K.simplices(q)
    if q == 0:
        return [], len(cols)
    rows_index = K.index.get(q - 1, {})
    rows = [[Fraction(0)] * len(cols) for _ in range(len(rows_index))]
    for j, simplex in enumerate(cols):
        for i in range(len(simplex)):
            face = simplex[:i] + simplex[i + 1:]
            rows[rows_index[face]][j] = Fraction(-1 if i % 2 else 1)
    return rows, len(cols)


def _rref(rows: list[list[Fraction]],
          n_cols: int) -> tuple[int, list[list[Fraction]], list[int]]:
    m = [list(row) for row in rows]
    pivots: list[int] = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = Fraction(1) / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return r, m, pivots


def matrix_rank(rows: list[list[Fraction]], n_cols: int) -> int:
    """Exact rank via Gauss-Jordan elimination."""
    return _rref(rows, n_cols)[0]


def nullspace_basis(rows: list[list[Fraction]],
                    n_cols: int) -> list[list[Fraction]]:
    """One basis vector per free column of the reduced form."""
    _, m, pivots = _rref(rows, n_cols)
    pivot_set = set(pivots)
    basis = []
    for free in range(n_cols):
        if free in pivot_set:
            continue
        vec = [Fraction(0)] * n_cols
        vec[free] = Fraction(1)
        for r_idx, pc in enumerate(pivots):
            vec[pc] = -m[r_idx][free]
        basis.append(vec)
    return basis


def betti_numbers(K: SimplicialComplex, up_to: int | None = None) -> list[int]:
    """beta_0..beta_up_to (default: the complex dimension)."""
    top = K.dim if up_to is None else up_to
    out = []
    for q in range(top + 1):
        rows_q, ncols_q = boundary_matrix(K, q)
        rows_q1, ncols_q1 = boundary_matrix(K, q + 1)
        out.append(K.n(q) - matrix_rank(rows_q, ncols_q)
                   - matrix_rank(rows_q1, ncols_q1))
    return out


# -- vertex identification gluings ------------------------------------------

def normalize_partition(K: SimplicialComplex,
                        classes: list[list[int]]) -> list[list[int]]:
    """Sorted disjoint classes covering every vertex (singletons appended)."""
    seen: set[int] = set()
    verts = set(K.vertices)
    out = []
    for cls in classes:
        cls = sorted(int(v) for v in cls)
        if not cls:
            continue
        for v in cls:
            if v not in verts:
                raise ValueError(f"partition names unknown vertex {v}")
            if v in seen:
                raise ValueError(f"vertex {v} appears in two classes")
            seen.add(v)
        out.append(cls)
    out += [[v] for v in sorted(verts - seen)]
    return out


def _fresh_vertex(K: SimplicialComplex) -> int:
    return (max(K.vertices) + 1) if K.vertices else 0


def star_gluing(K: SimplicialComplex,
                classes: list[list[int]]) -> SimplicialComplex:
    """Attach one apex per class of size >= 2, coned to all its members."""
    partition = normalize_partition(K, classes)
    apex = _fresh_vertex(K)
    simplices = [list(s) for q in sorted(K.by_dim) for s in K.simplices(q)]
    for cls in partition:
        if len(cls) < 2:
            continue
        for v in cls:
            simplices.append([apex, v])
        apex += 1
    return SimplicialComplex(simplices)


def pairwise_gluing(K: SimplicialComplex,
                    classes: list[list[int]]) -> SimplicialComplex:
    """Attach one apex per *pair* inside each class.

    Not homotopy-equivalent to the quotient for classes of size >= 3: the
    apexes of pairs (a,b), (b,c), (a,c) together with the class members form
    an extra loop, inflating degree-1 homology.
    """
    partition = normalize_partition(K, classes)
    apex = _fresh_vertex(K)
    simplices = [list(s) for q in sorted(K.by_dim) for s in K.simplices(q)]
    for cls in partition:
        for u, v in itertools.combinations(cls, 2):
            simplices.append([apex, u])
            simplices.append([apex, v])
            apex += 1
    return SimplicialComplex(simplices)


def inclusion_induced_rank(K: SimplicialComplex, K_big: SimplicialComplex,
                           q: int) -> int:
    """Rank of H_q(K) -> H_q(K_big) induced by the inclusion.

    Computed as rank([embedded cycle basis | boundaries of K_big]) minus
    rank of the boundaries: the dimension the embedded cycles span in the
    homology of the bigger complex.
    """
    if not K_big.contains(K):
        raise SubcomplexError("first complex is not contained in the second")
    rows, n_cols = boundary_matrix(K, q)
    cycles = nullspace_basis(rows, n_cols)
    small = K.simplices(q)
    big_index = K_big.index.get(q, {})
    n_big = K_big.n(q)
    embedded = []
    for vec in cycles:
        col = [Fraction(0)] * n_big
        for local, value in enumerate(vec):
            if value != 0:
                col[big_index[small[local]]] = value
        embedded.append(col)
    b_rows, b_ncols = boundary_matrix(K_big, q + 1)
    boundary_cols = [[b_rows[r][c] for r in range(n_big)]
                     for c in range(b_ncols)]
    all_cols = embedded + boundary_cols
    # Stack as a matrix whose columns are the vectors: transpose into rows.
    stacked_rows = [[col[r] for col in all_cols] for r in range(n_big)]
    rank_all = matrix_rank(stacked_rows, len(all_cols))
    rank_boundaries = matrix_rank(b_rows, b_ncols)
    return rank_all - rank_boundaries


@dataclass
class QuotientHomologyReport:
    """Betti numbers, induced-map ranks, and the per-degree verdicts."""

    construction: str
    betti_base: list[int]
    betti_glued: list[int]
    theta_rank: list[int]
    h0_onto: bool
    h1_injective: bool
    h2_isomorphism: bool
    h3_isomorphism: bool

    @property
    def all_verified(self) -> bool:
        return (self.h0_onto and self.h1_injective
                and self.h2_isomorphism and self.h3_isomorphism)

    def to_dict(self) -> dict:
        return {"construction": self.construction,
                "betti_base": self.betti_base,
                "betti_glued": self.betti_glued,
                "theta_rank": self.theta_rank,
                "h0_onto": self.h0_onto,
                "h1_injective": self.h1_injective,
                "h2_isomorphism": self.h2_isomorphism,
                "h3_isomorphism": self.h3_isomorphism,
                "all_verified": self.all_verified}


def verify_quotient_homology(K: SimplicialComplex, classes: list[list[int]],
                             construction: str = "star"
                             ) -> QuotientHomologyReport:
    """Check the induced-map statements degree by degree (up to 3)."""
    if construction == "star":
        glued = star_gluing(K, classes)
    elif construction == "pairwise":
        glued = pairwise_gluing(K, classes)
    else:
        raise ValueError(f"unknown construction '{construction}'")
    betti_base = betti_numbers(K, up_to=3)
    betti_glued = betti_numbers(glued, up_to=3)
    theta = [inclusion_induced_rank(K, glued, q) for q in range(4)]
    return QuotientHomologyReport(
        construction=construction,
        betti_base=betti_base,
        betti_glued=betti_glued,
        theta_rank=theta,
        h0_onto=theta[0] == betti_glued[0],
        h1_injective=theta[1] == betti_base[1],
        h2_isomorphism=(theta[2] == betti_base[2] == betti_glued[2]),
        h3_isomorphism=(theta[3] == betti_base[3] == betti_glued[3]))


# -- random instances for fuzzing and demos ---------------------------------

def random_flag_complex(n_vertices: int, edge_prob: float,
                        rng: np.random.Generator,
                        max_dim: int = 3) -> SimplicialComplex:
    """Clique complex of an Erdos-Renyi graph, truncated at max_dim."""
    adj = np.zeros((n_vertices, n_vertices), dtype=bool)
    for i in range(n_vertices):
        for j in range(i + 1, n_vertices):
            if rng.random() < edge_prob:
                adj[i, j] = adj[j, i] = True
    simplices = [[v] for v in range(n_vertices)]
    for size in range(2, max_dim + 2):
        for combo in itertools.combinations(range(n_vertices), size):
            if all(adj[a, b] for a, b in itertools.combinations(combo, 2)):
                simplices.append(list(combo))
    return SimplicialComplex(simplices)


def random_partition(vertices: list[int],
                     rng: np.random.Generator) -> list[list[int]]:
    """Shuffle vertices and cut into classes of random size 1..4."""
    order = [int(v) for v in rng.permutation(vertices)]
    classes = []
    i = 0
    while i < len(order):
        size = int(rng.integers(1, 5))
        classes.append(sorted(order[i:i + size]))
        i += size
    return classes
