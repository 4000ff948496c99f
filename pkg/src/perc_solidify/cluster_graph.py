"""Indexed graph view of a single cluster."""
from __future__ import annotations

from collections import deque

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import DomainError
from .lattice import Window, index_point, neighbor_offsets, point_index


class ClusterGraph:
    """A connected vertex set of a window with nearest-neighbour edges.

    Local ids are assigned in increasing window index, so id 0 is the
    lexicographically smallest vertex.  ``nbr[i, k]`` is the local id of
    the neighbour in direction ``k`` (ordering of
    :func:`~perc_solidify.lattice.neighbor_offsets`) or -1.
    """

    def __init__(self, window: Window, sites, nbr):
        self.window = window
        self.sites = np.asarray(sites, dtype=np.int64)
        self.nbr = np.asarray(nbr, dtype=np.int32)
        self.mu = (self.nbr >= 0).sum(axis=1).astype(np.int64)
        self._points = None
        self._local = None
        self._packed = None

    # -- construction -------------------------------------------------

    @classmethod
    def from_mask(cls, cfg, mask, check_connected=True):
        """Cluster graph on the vertices of ``mask`` using the config's edges."""
        w = cfg.window
        mask = np.asarray(mask, dtype=bool)
        sites = np.flatnonzero(mask.ravel())
        if sites.size == 0:
            raise DomainError("empty vertex set")
        local = np.full(w.size, -1, dtype=np.int32)
        local[sites] = np.arange(sites.size, dtype=np.int32)
        coords = np.stack(np.unravel_index(sites, w.shape), axis=1)
        offs = neighbor_offsets(w.dim)
        nbr = np.full((sites.size, 2 * w.dim), -1, dtype=np.int32)
        for j, off in enumerate(offs):
            k = int(np.flatnonzero(off)[0])
            step = int(off[k])
            c = coords[:, k] + step
            ok = (c >= 0) & (c < w.side)
            stride = w.side ** (w.dim - 1 - k)
            tgt = sites + step * stride
            tgt = np.where(ok, tgt, 0)
            cand = np.where(ok, local[tgt], -1)
            if cfg.model == "bond":
                # edge (i, i+e_k) is stored at the lower endpoint
                low = np.where(step > 0, sites, tgt)
                edge_open = np.zeros(sites.size, dtype=bool)
                edge_open[ok] = cfg.occupancy[k].ravel()[low[ok]]
                cand = np.where(edge_open, cand, -1)
            nbr[:, j] = cand
        g = cls(w, sites, nbr)
        g._local = local
        if cfg.model == "bond":
            # bond clusters only contain sites touching an open edge, unless isolated
            if sites.size > 1 and np.any(g.mu == 0):
                raise DomainError("vertex set contains sites with no open edge")
        if check_connected and sites.size > 1:
            n, _ = connected_components(g.adjacency(), directed=False)
            if n != 1:
                raise DomainError("vertex set is not connected")
        return g

    @classmethod
    def full(cls, window: Window):
        """The whole window as a graph (full lattice)."""
        from .percolation import full_config

        cfg = full_config(window.dim, window.side, window.origin)
        return cls.from_mask(cfg, np.ones(window.shape, dtype=bool), check_connected=False)

    # -- basic views --------------------------------------------------

    @property
    def n(self):
        return self.sites.size

    @property
    def dim(self):
        return self.window.dim

    @property
    def points(self):
        if self._points is None:
            self._points = index_point(self.window, self.sites)
        return self._points

    @property
    def local(self):
        """Window-sized lookup from window index to local id (-1 if absent)."""
        if self._local is None:
            self._local = np.full(self.window.size, -1, dtype=np.int32)
            self._local[self.sites] = np.arange(self.n, dtype=np.int32)
        return self._local

    @property
    def packed(self):
        """Neighbour table with the ``mu[i]`` valid ids first in each row."""
        if self._packed is None:
            order = np.argsort(self.nbr < 0, axis=1, kind="stable")
            self._packed = np.take_along_axis(self.nbr, order, axis=1)
        return self._packed

    def mask(self):
        m = np.zeros(self.window.size, dtype=bool)
        m[self.sites] = True
        return m.reshape(self.window.shape)

    def ids_of(self, pts, strict=True):
        """Local ids of points; -1 for points not in the graph unless ``strict``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        if pts.size == 0:
            return np.zeros(0, dtype=np.int64)
        inside = self.window.contains(pts)
        out = np.full(len(pts), -1, dtype=np.int64)
        if inside.any():
            out[inside] = self.local[point_index(self.window, pts[inside])]
        if strict and np.any(out < 0):
            raise DomainError("point is not a vertex of the graph")
        return out

    def id_of(self, pt):
        return int(self.ids_of(pt)[0])

    def ids_from_mask(self, dense_mask):
        """Local ids of the graph vertices where a window-shaped mask is set."""
        return np.flatnonzero(np.asarray(dense_mask, dtype=bool).ravel()[self.sites])

    def vertex_mask(self, ids):
        m = np.zeros(self.n, dtype=bool)
        m[np.asarray(ids, dtype=np.int64)] = True
        return m

    def dense_from_vertices(self, values, fill=0):
        out = np.full(self.window.size, fill, dtype=np.asarray(values).dtype)
        out[self.sites] = values
        return out.reshape(self.window.shape)

    def adjacency(self):
        rows = np.repeat(np.arange(self.n), 2 * self.dim)
        cols = self.nbr.ravel()
        keep = cols >= 0
        data = np.ones(int(keep.sum()), dtype=np.float64)
        return sparse.csr_matrix((data, (rows[keep], cols[keep])), shape=(self.n, self.n))

    def on_window_face(self):
        """Local-id mask of vertices lying on a face of the window."""
        return self.window.face_mask().ravel()[self.sites]

    def write_edge_list(self, path):
        with open(path, "w") as fh:
            fh.write(f"# vertices: {self.n}\n")
            for u in range(self.n):
                for v in self.nbr[u]:
                    if v > u:
                        fh.write(f"{u} {v}\n")


def _as_id_mask(g: ClusterGraph, region):
    """Accept a local-id mask, an id array, or an (n, d) point array."""
    region = np.asarray(region)
    if region.dtype == bool and region.shape == (g.n,):
        return region
    if region.ndim == 2 and region.shape[1] == g.dim:
        ids = g.ids_of(region, strict=False)
        return g.vertex_mask(ids[ids >= 0])
    return g.vertex_mask(region.astype(np.int64).ravel())


def boundary_relative(U0, g: ClusterGraph):
    """Vertices of ``g`` outside ``U0`` with a neighbour in ``U0`` (local-id mask)."""
    U0 = np.asarray(U0)
    if U0.ndim == 2 and U0.shape[1] == g.dim and U0.dtype != bool:
        ids = g.ids_of(U0, strict=False)
        if np.any(ids < 0):
            raise DomainError("U0 is not a subset of the cluster")
        inside = g.vertex_mask(ids)
    else:
        inside = _as_id_mask(g, U0)
    touch = np.zeros(g.n, dtype=bool)
    for k in range(g.nbr.shape[1]):
        nb = g.nbr[:, k]
        ok = nb >= 0
        touch[ok] |= inside[nb[ok]]
    return touch & ~inside


def graph_distance_within(g: ClusterGraph, ball, x, y):
    """Shortest path length using only vertices of ``ball``; ``inf`` if none."""
    allowed = _as_id_mask(g, ball)
    a, b = g.id_of(x), g.id_of(y)
    if not (allowed[a] and allowed[b]):
        raise DomainError("endpoints must lie in ball and graph")
    if a == b:
        return 0
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[a] = 0
    q = deque([a])
    while q:
        u = q.popleft()
        for v in g.nbr[u]:
            if v >= 0 and allowed[v] and dist[v] < 0:
                dist[v] = dist[u] + 1
                if v == b:
                    return int(dist[v])
                q.append(v)
    return float("inf")


def component_within(g: ClusterGraph, region):
    """Components of the subgraph induced on ``region``, as sorted id arrays."""
    keep = _as_id_mask(g, region)
    ids = np.flatnonzero(keep)
    if ids.size == 0:
        return []
    sub = g.adjacency()[ids][:, ids]
    _, lab = connected_components(sub, directed=False)
    # order components by their smallest vertex
    firsts = {}
    for i, c in enumerate(lab):
        firsts.setdefault(c, i)
    order = sorted(firsts, key=firsts.get)
    return [ids[lab == c] for c in order]


def read_edge_list(path):
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith("# vertices:"):
            raise DomainError("missing vertex-count header")
        n = int(head.split(":")[1])
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    return n, edges
