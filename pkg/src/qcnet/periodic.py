"""Periodic k-nearest-neighbor graphs over crystal unit cells.

Every atom of the unit cell is a vertex.  For each vertex v the k nearest
periodic images of cell atoms (excluding v's own untranslated image) become
directed edges image -> v, so every vertex has in-degree exactly k.  An edge
carries the integer lattice offset of the source image, which is what makes
the graph a quotient of the infinite crystal graph rather than a plain
nearest-neighbor list: self-loops (src == dst with nonzero offset) and
parallel edges with different offsets are meaningful and kept.

Correctness of the search depends on a lower bound for images outside an
offset box.  With L the lattice row matrix and c_i the columns of L^-1, any
separation vector y.L satisfies |y_i| <= |y.L| * |c_i|, so an image whose
offset leaves the box |k_i| <= R is farther than R * h_min where
h_min = 1 / max_i |c_i| (the smallest spacing between adjacent lattice
planes).  Shells are expanded until the k-th distance clears that bound.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .structures import CrystalStructure

# Distances closer than this are treated as tied and ordered by the
# deterministic (src, offset) tie-break instead of by floating-point noise.
TIE_TOL = 1e-8

_MAX_SHELL = 64


class RadiusTooSmallError(ValueError):
    """Cutoff or supercell radius cannot certify k neighbors."""


@dataclass(frozen=True)
class PeriodicEdge:
    """Directed edge from a periodic image of ``src`` into ``dst``.

    ``dist`` is ``|cart(src) + offset . L - cart(dst)|`` and is always
    positive; the zero-offset self-image is never a candidate.
    """

    src: int
    dst: int
    offset: tuple[int, int, int]
    dist: float


@dataclass
class PeriodicGraph:
    """k-NN multigraph in canonical edge order.

    Edges are sorted by (dst, distance tie-group, src, offset lexicographic),
    so edges of one target vertex are contiguous and the whole list is a
    deterministic function of the structure.
    """

    n_vertices: int
    k: int
    edges: list[PeriodicEdge]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def in_edges(self, v: int) -> range:
        """Indices of edges whose dst is v (a contiguous range)."""
        return range(v * self.k, (v + 1) * self.k)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, offset, dist) columns as numpy arrays."""
        src = np.array([e.src for e in self.edges], dtype=np.int64)
        dst = np.array([e.dst for e in self.edges], dtype=np.int64)
        off = np.array([e.offset for e in self.edges],
                       dtype=np.int64).reshape(-1, 3)
        dist = np.array([e.dist for e in self.edges], dtype=np.float64)
        return src, dst, off, dist


def plane_spacing_min(lattice: np.ndarray) -> float:
    """Smallest distance between adjacent lattice planes of the three axes."""
    inv = np.linalg.inv(np.asarray(lattice, dtype=np.float64))
    return float(1.0 / np.linalg.norm(inv, axis=0).max())


def _box_offsets(radius: int) -> np.ndarray:
    """All integer offsets with max-norm <= radius, lexicographically sorted."""
    rng = range(-radius, radius + 1)
    return np.array(list(itertools.product(rng, rng, rng)), dtype=np.int64)


def _tie_groups(sorted_dists: np.ndarray, tol: float) -> np.ndarray:
    """Group ranks for ascending distances; a gap > tol starts a new group."""
    groups = np.empty(len(sorted_dists), dtype=np.int64)
    group = -1
    start = -np.inf
    for i, d in enumerate(sorted_dists):
        if d - start > tol:
            group += 1
            start = d
        groups[i] = group
    return groups


def _candidate_table(frac: np.ndarray, lattice: np.ndarray,
                     offsets: np.ndarray):
    """Distances from every (source atom, offset) image to every target atom.

    Returns flat per-target candidate arrays: for target v the candidate c is
    source ``src[c]`` displaced by ``offsets[off_idx[c]]``.  The zero-offset
    self-image and exactly coincident images are masked out by the caller.
    """
    n = frac.shape[0]
    # sep[v, u, o, :] = frac[u] + offsets[o] - frac[v], in lattice coords
    sep = (frac[None, :, None, :] + offsets[None, None, :, :]
           - frac[:, None, None, :])
    cart = sep @ lattice
    dist = np.sqrt(np.einsum("vuoc,vuoc->vuo", cart, cart))
    return dist


def _select_edges_for_target(v: int, dist_row: np.ndarray, n: int,
                             offsets: np.ndarray, k: int,
                             tie_tol: float) -> tuple[list[PeriodicEdge], float]:
    """Pick k candidates for target v by (distance group, src, offset)."""
    flat = dist_row.reshape(-1)
    n_off = offsets.shape[0]
    src_ids = np.repeat(np.arange(n, dtype=np.int64), n_off)
    off_ids = np.tile(np.arange(n_off, dtype=np.int64), n)
    keep = flat > 0.0
    zero_off = int(np.flatnonzero((offsets == 0).all(axis=1))[0])
    keep[v * n_off + zero_off] = False
    flat = flat[keep]
    src_ids = src_ids[keep]
    off_ids = off_ids[keep]
    order = np.argsort(flat, kind="stable")
    flat, src_ids, off_ids = flat[order], src_ids[order], off_ids[order]
    groups = _tie_groups(flat, tie_tol)
    offs = offsets[off_ids]
    final = np.lexsort((offs[:, 2], offs[:, 1], offs[:, 0], src_ids, groups))
    picked = final[:k]
    edges = [PeriodicEdge(int(src_ids[i]), v,
                          (int(offs[i, 0]), int(offs[i, 1]), int(offs[i, 2])),
                          float(flat[i]))
             for i in picked]
    kth = float(flat[final[k - 1]])
    return edges, kth


def neighbor_list(s: CrystalStructure, k: int = 12,
                  radius: float | None = None,
                  tie_tol: float = TIE_TOL) -> PeriodicGraph:
    """Build the periodic k-NN multigraph of a structure.

    With ``radius`` unset, offset shells are expanded until the k-th neighbor
    distance of every vertex clears the plane-spacing bound, which certifies
    that no unseen image could enter the k nearest (or perturb a tie within
    ``tie_tol``).  With ``radius`` set, only images within that distance are
    candidates and RadiusTooSmallError is raised if some vertex has fewer
    than k.

    Coordinates are canonicalized first; offsets refer to the wrapped cell.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = s.canonicalize()
    frac, lattice = s.frac, s.lattice
    n = s.n_atoms
    h_min = plane_spacing_min(lattice)

    if radius is not None:
        if radius <= 0:
            raise ValueError("radius must be positive")
        box = max(1, int(np.ceil((radius + tie_tol) / h_min)))
        offsets = _box_offsets(box)
        dist = _candidate_table(frac, lattice, offsets)
        edges: list[PeriodicEdge] = []
        for v in range(n):
            row = dist[v].copy()
            row[(row > 0.0) & (row > radius + tie_tol)] = 0.0  # drop far images
            if np.count_nonzero(row) < k:
                found = int(np.count_nonzero(row))
                raise RadiusTooSmallError(
                    f"vertex {v}: {found} images within radius {radius}, "
                    f"need k={k}")
            picked, _ = _select_edges_for_target(v, row, n, offsets, k,
                                                 tie_tol)
            edges.extend(picked)
        return PeriodicGraph(n, k, edges)

    shell = 1
    while shell <= _MAX_SHELL:
        offsets = _box_offsets(shell)
        dist = _candidate_table(frac, lattice, offsets)
        bound = shell * h_min
        edges = []
        certified = True
        for v in range(n):
            row = dist[v]
            if np.count_nonzero(row.reshape(-1) > 0.0) < k:
                certified = False  # not enough candidates in this box yet
                break
            picked, kth = _select_edges_for_target(v, row, n, offsets, k,
                                                   tie_tol)
            if kth + tie_tol >= bound:
                certified = False
                break
            edges.extend(picked)
        if certified:
            return PeriodicGraph(n, k, edges)
        shell += 1
    raise RuntimeError("offset shell expansion exceeded the safety cap; "
                       "lattice is pathologically skewed")


def brute_force_neighbors(s: CrystalStructure, k: int = 12,
                          supercell_radius: int = 4,
                          tie_tol: float = TIE_TOL) -> PeriodicGraph:
    """Reference k-NN by plain enumeration of a fixed supercell.

    Independent of neighbor_list: candidates come from the full offset box
    |k_i| <= supercell_radius and selection is pure-python sorting under the
    same declared order (distance tie-group, src, offset lex).  Raises
    RadiusTooSmallError when the box is too small to certify that the true
    k nearest were inside it.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = s.canonicalize()
    frac, lattice = s.frac, s.lattice
    n = s.n_atoms
    bound = supercell_radius * plane_spacing_min(lattice)
    rng = range(-supercell_radius, supercell_radius + 1)
    all_offsets = list(itertools.product(rng, rng, rng))
    edges: list[PeriodicEdge] = []
    for v in range(n):
        cands: list[tuple[float, int, tuple[int, int, int]]] = []
        for u in range(n):
            for off in all_offsets:
                if u == v and off == (0, 0, 0):
                    continue
                sep = (frac[u] + np.array(off, dtype=np.float64)
                       - frac[v]) @ lattice
                d = float(np.sqrt(sep @ sep))
                if d == 0.0:
                    continue
                cands.append((d, u, off))
        cands.sort(key=lambda c: c[0])
        if len(cands) < k:
            raise RadiusTooSmallError(
                f"vertex {v}: only {len(cands)} candidates in supercell")
        group = -1
        start = -np.inf
        grouped = []
        for d, u, off in cands:
            if d - start > tie_tol:
                group += 1
                start = d
            grouped.append((group, u, off, d))
        grouped.sort(key=lambda c: (c[0], c[1], c[2]))
        kth = grouped[k - 1][3]
        if kth + tie_tol >= bound:
            raise RadiusTooSmallError(
                f"vertex {v}: k-th distance {kth:.6f} too close to the "
                f"supercell bound {bound:.6f}")
        edges.extend(PeriodicEdge(u, v, off, d)
                     for _, u, off, d in grouped[:k])
    return PeriodicGraph(n, k, edges)


def min_image_distance(s: CrystalStructure, i: int, j: int) -> float:
    """Distance from atom j to the nearest periodic image of atom i.

    For i == j this is the nearest nonzero image, i.e. the shortest lattice
    translation seen from that atom.
    """
    s = s.canonicalize()
    frac, lattice = s.frac, s.lattice
    if not (0 <= i < s.n_atoms and 0 <= j < s.n_atoms):
        raise IndexError("atom index out of range")
    h_min = plane_spacing_min(lattice)
    shell = 1
    while shell <= _MAX_SHELL:
        offsets = _box_offsets(shell)
        sep = (frac[i] + offsets - frac[j]) @ lattice
        d = np.sqrt(np.einsum("oc,oc->o", sep, sep))
        if i == j:
            d = d[d > 0.0]
        best = float(d.min())
        if best <= shell * h_min:
            return best
        shell += 1
    raise RuntimeError("offset shell expansion exceeded the safety cap")


def graph_jsonl(g: PeriodicGraph) -> str:
    """Edge list as JSONL, one canonical-order edge per line."""
    lines = [json.dumps({"src": e.src, "dst": e.dst,
                         "offset": list(e.offset), "dist": e.dist},
                        sort_keys=True, separators=(",", ":"))
             for e in g.edges]
    return "\n".join(lines) + "\n" if lines else ""
