"""Quotient complexes: the k-NN multigraph closed under directed triangles.

A triangle is an ordered triple of existing edges
``e1 = (a -> b, o1)``, ``e2 = (b -> c, o2)``, ``e3 = (a -> c, o3)``
with the offset closure ``o3 = o1 + o2``.  The closure is what makes the
triple a genuine triangle of the infinite crystal graph: placing the images
``a`` at offset ``o1 + o2``, ``b`` at ``o2`` and ``c`` at ``0`` realizes all
three edges simultaneously, with pairwise distances equal to the edge
distances.  Vertices a, b, c need not be distinct in the cell (self-loop
chains close into triangles too); the three image points always are, because
every pair of them spans an edge of positive length.

Positional order within a triangle is e1 < e2 < e3, i.e.
(a,b) < (b,c) < (a,c).  Attention messages between edges flow from
lower-positioned to higher-positioned edges of a shared triangle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .periodic import PeriodicGraph


@dataclass(frozen=True)
class Triangle:
    """Edge indices in positional order ((a,b), (b,c), (a,c))."""

    e1: int
    e2: int
    e3: int


@dataclass(frozen=True)
class MessagingPairs:
    """Flat (receiver, sender, coface) index triples for one tier.

    ``sigma`` and ``tau`` index the receiving tier's feature rows; ``coface``
    indexes the tier one dimension up.  Row order is deterministic: the
    canonical order of the underlying edges or triangles.
    """

    sigma: np.ndarray
    tau: np.ndarray
    coface: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.sigma.size)


@dataclass
class QuotientComplex:
    """Vertices and multi-edges of the k-NN graph plus all closed triangles."""

    graph: PeriodicGraph
    triangles: list[Triangle]

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


def build_complex(g: PeriodicGraph) -> QuotientComplex:
    """Close the edge multigraph under directed triangles.

    For every path e1 = (a -> b, o1), e2 = (b -> c, o2) the unique candidate
    closing edge is (a -> c, o1 + o2); the triple is a triangle iff that edge
    exists.  The same edge may serve as both e1 and e2 (self-loop chains).
    Triangles come out sorted by (e1, e2, e3).
    """
    index: dict[tuple[int, int, tuple[int, int, int]], int] = {}
    by_src: dict[int, list[int]] = {}
    for i, e in enumerate(g.edges):
        index[(e.src, e.dst, e.offset)] = i
        by_src.setdefault(e.src, []).append(i)
    triangles: list[Triangle] = []
    for i1, e1 in enumerate(g.edges):
        for i2 in by_src.get(e1.dst, ()):
            e2 = g.edges[i2]
            o3 = (e1.offset[0] + e2.offset[0],
                  e1.offset[1] + e2.offset[1],
                  e1.offset[2] + e2.offset[2])
            i3 = index.get((e1.src, e2.dst, o3))
            if i3 is not None:
                triangles.append(Triangle(i1, i2, i3))
    triangles.sort(key=lambda t: (t.e1, t.e2, t.e3))
    return QuotientComplex(g, triangles)


def triangle_image_points(c: QuotientComplex, t: Triangle,
                          frac: np.ndarray,
                          lattice: np.ndarray) -> np.ndarray:
    """Cartesian coordinates of the three images realizing triangle t.

    Rows are a at offset o1+o2, b at o2, c at offset 0; their pairwise
    distances equal the three edge distances.
    """
    e1, e2, e3 = (c.graph.edges[t.e1], c.graph.edges[t.e2],
                  c.graph.edges[t.e3])
    o1 = np.array(e1.offset, dtype=np.float64)
    o2 = np.array(e2.offset, dtype=np.float64)
    pts = np.stack([frac[e1.src] + o1 + o2,
                    frac[e2.src] + o2,
                    frac[e2.dst]])
    return pts @ lattice


def vertex_pairs(c: QuotientComplex) -> MessagingPairs:
    """One messaging pair per edge: receiver dst, sender src, coface the edge."""
    src, dst, _, _ = c.graph.arrays()
    coface = np.arange(c.n_edges, dtype=np.int64)
    return MessagingPairs(sigma=dst, tau=src, coface=coface)


def edge_pairs(c: QuotientComplex) -> MessagingPairs:
    """Three pairs per triangle, senders positioned lower than receivers.

    For a triangle (e1, e2, e3): e2 hears from e1, e3 hears from e1 and e2.
    """
    sigma, tau, coface = [], [], []
    for ti, t in enumerate(c.triangles):
        sigma += [t.e2, t.e3, t.e3]
        tau += [t.e1, t.e1, t.e2]
        coface += [ti, ti, ti]
    return MessagingPairs(sigma=np.array(sigma, dtype=np.int64),
                          tau=np.array(tau, dtype=np.int64),
                          coface=np.array(coface, dtype=np.int64))


def complex_json(c: QuotientComplex) -> str:
    """Serialize edges and triangles (with their offsets) deterministically."""
    edges = [{"src": e.src, "dst": e.dst, "offset": list(e.offset),
              "dist": e.dist} for e in c.graph.edges]
    triangles = []
    for t in c.triangles:
        offs = [list(c.graph.edges[i].offset) for i in (t.e1, t.e2, t.e3)]
        triangles.append({"e": [t.e1, t.e2, t.e3], "offsets": offs})
    return json.dumps({"edges": edges, "triangles": triangles},
                      sort_keys=True, separators=(",", ":")) + "\n"
