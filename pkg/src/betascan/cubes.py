"""Nested maximal separated nets and the metric dyadic-cube hierarchy.

Each level k carries a maximal (scale * rho^k)-separated net of the cloud;
nets are nested across levels, every level's cubes partition the cloud, and
cubes nest exactly. Side lengths are ell(Q) = 5 * scale * rho^k, so the root
side dominates the cloud diameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError
from .geometry import PointCloud, as_point_array

_EMPTY = np.empty(0, dtype=int)


def maximal_net(points, r, seed_set=None):
    """Greedy-by-index maximal r-separated net; returns point indices.

    Returned indices are pairwise >= r apart and every point lies within < r
    of some returned index. A seed_set (already r-separated) is kept as a
    prefix of the result (net completion).
    """
    pts = points.points if isinstance(points, PointCloud) else as_point_array(points)
    if not (r > 0):
        raise InputError(f"net radius must be positive, got {r}")
    kept = []
    if seed_set is not None:
        seeds = np.asarray(seed_set, dtype=int)
        if len(seeds):
            sp = pts[seeds]
            d2 = ((sp[:, None, :] - sp[None, :, :]) ** 2).sum(axis=2)
            np.fill_diagonal(d2, np.inf)
            if d2.min() < r * r * (1 - 1e-12):
                raise InputError("seed_set is not r-separated")
        kept = list(seeds)
    kept_pts = pts[kept] if kept else np.empty((0, pts.shape[1]))
    seed_ids = set(int(i) for i in kept)
    for i in range(len(pts)):
        if i in seed_ids:
            continue
        if len(kept) == 0:
            kept.append(i)
            kept_pts = pts[[i]]
            continue
        dmin = np.linalg.norm(kept_pts - pts[i], axis=1).min()
        if dmin >= r * (1 - 1e-12):
            kept.append(i)
            kept_pts = np.vstack([kept_pts, pts[i]])
    return np.array(kept, dtype=int)


@dataclass
class Cube:
    """One cube of the hierarchy: materialised as a set of sample indices."""

    id: int
    level: int
    center_idx: int
    side: float
    member_ids: np.ndarray
    parent: int | None = None
    children: list = field(default_factory=list)

    @property
    def n_members(self):
        return len(self.member_ids)


class CubeTree:
    """Hierarchy of cubes over a point cloud built from nested maximal nets."""

    def __init__(self, cloud, rho=0.5, depth=None, scale=None, seed_indices=None):
        if not (0 < rho <= 0.5):
            raise InputError(f"rho must lie in (0, 1/2], got {rho}")
        self.cloud = cloud if isinstance(cloud, PointCloud) else PointCloud(as_point_array(cloud), 1.0)
        self.rho = float(rho)
        pts = self.cloud.points
        diam = self.cloud.diam
        if scale is None:
            scale = float(np.nextafter(diam, np.inf)) if diam > 0 else max(self.cloud.h, 1.0)
        self.scale = float(scale)
        if self.scale < diam:
            raise InputError("tree scale must be at least the cloud diameter")
        # depth: stop once cube sides drop below twice the sampling scale
        k_max = 0
        while 5.0 * self.scale * self.rho ** (k_max + 1) >= 2.0 * self.cloud.h:
            k_max += 1
            if depth is not None and k_max >= depth:
                break
            if k_max > 200:
                break
        self.k_max = k_max
        self.nets = {}
        prev = np.asarray(seed_indices, dtype=int) if seed_indices is not None else None
        for k in range(k_max + 1):
            net = maximal_net(pts, self.scale * self.rho ** k, seed_set=prev)
            self.nets[k] = net
            prev = net
        self._build_cubes()
        self.c0_achieved = self._inner_ball_constant()

    # -- construction -----------------------------------------------------
    def side(self, level):
        return 5.0 * self.scale * self.rho ** level

    def _build_cubes(self):
        pts = self.cloud.points
        k_max = self.k_max
        # nearest-net assignment at the deepest level, ties to smaller index
        assign = _nearest_index(pts, pts[self.nets[k_max]])
        # parent map between consecutive nets
        parent_of = {}
        for k in range(1, k_max + 1):
            up = _nearest_index(pts[self.nets[k]], pts[self.nets[k - 1]])
            parent_of[k] = up
        members_at = {k_max: [list() for _ in self.nets[k_max]]}
        for j, a in enumerate(assign):
            members_at[k_max][a].append(j)
        for k in range(k_max - 1, -1, -1):
            members_at[k] = [list() for _ in self.nets[k]]
            for child_pos, par_pos in enumerate(parent_of[k + 1]):
                members_at[k][par_pos].extend(members_at[k + 1][child_pos])
        self.cubes = []
        self.by_level = {}
        pos_to_id = {}
        for k in range(k_max + 1):
            ids = []
            for pos, net_idx in enumerate(self.nets[k]):
                cid = len(self.cubes)
                mem = np.array(sorted(members_at[k][pos]), dtype=int)
                par = None
                if k > 0:
                    par = pos_to_id[(k - 1, parent_of[k][pos])]
                cube = Cube(cid, k, int(net_idx), self.side(k), mem, parent=par)
                self.cubes.append(cube)
                pos_to_id[(k, pos)] = cid
                ids.append(cid)
                if par is not None:
                    self.cubes[par].children.append(cid)
            self.by_level[k] = ids
        self.root = self.by_level[0][0]
        if len(self.by_level[0]) != 1:
            raise InputError("root level must contain a single cube; increase scale")
        self._verify()

    def _verify(self):
        npts = len(self.cloud.points)
        for k, ids in self.by_level.items():
            counts = np.zeros(npts, dtype=int)
            for cid in ids:
                cube = self.cubes[cid]
                counts[cube.member_ids] += 1
                if cube.n_members:
                    dmax = np.linalg.norm(
                        self.cloud.points[cube.member_ids] - self.center(cube), axis=1
                    ).max()
                    if dmax > cube.side * (1 + 1e-9):
                        raise InputError(
                            f"outer containment violated at cube {cid}: {dmax} > {cube.side}"
                        )
            if not np.all(counts == 1):
                raise InputError(f"level {k} does not partition the cloud")

    def _inner_ball_constant(self):
        pts = self.cloud.points
        best = 1.0
        for k, ids in self.by_level.items():
            if len(ids) <= 1:
                continue
            owner = np.full(len(pts), -1, dtype=int)
            for cid in ids:
                owner[self.cubes[cid].member_ids] = cid
            for cid in ids:
                cube = self.cubes[cid]
                outside = pts[owner != cid]
                if len(outside) == 0:
                    continue
                dmin = np.linalg.norm(outside - self.center(cube), axis=1).min()
                best = min(best, float(dmin) / cube.side)
        return best

    # -- queries ----------------------------------------------------------
    def center(self, cube):
        cube = self.cube(cube)
        return self.cloud.points[cube.center_idx]

    def cube(self, ref):
        return self.cubes[ref] if isinstance(ref, (int, np.integer)) else ref

    def members(self, cube):
        return self.cloud.points[self.cube(cube).member_ids]

    def siblings(self, cube):
        cube = self.cube(cube)
        if cube.parent is None:
            return [cube.id]
        return list(self.cubes[cube.parent].children)

    def descendants(self, cube, k):
        """Des_k(Q): union of the generations 0..k below Q, including Q."""
        cube = self.cube(cube)
        out = [cube.id]
        frontier = [cube.id]
        for _ in range(k):
            nxt = []
            for cid in frontier:
                nxt.extend(self.cubes[cid].children)
            out.extend(nxt)
            frontier = nxt
            if not frontier:
                break
        return out

    def subtree(self, cube):
        cube = self.cube(cube)
        out = []
        stack = [cube.id]
        while stack:
            cid = stack.pop()
            out.append(cid)
            stack.extend(self.cubes[cid].children)
        return out

    def cube_ball(self, cube, factor=1.0):
        from .geometry import Ball

        cube = self.cube(cube)
        return Ball(self.center(cube), factor * cube.side)

    def cube_distance(self, a, b):
        """dist(Q, R): min distance between member samples (exact on the cloud)."""
        a, b = self.cube(a), self.cube(b)
        pa = self.cloud.points[a.member_ids]
        pb = self.cloud.points[b.member_ids]
        tree = cKDTree(pb)
        d, _ = tree.query(pa, k=1)
        return float(np.min(d))

    def to_json_dict(self):
        return {
            "schema": "betascan/1",
            "kind": "cube_tree",
            "rho": self.rho,
            "scale": self.scale,
            "levels": list(range(self.k_max + 1)),
            "c0_achieved": self.c0_achieved,
            "nets": {str(k): [int(i) for i in v] for k, v in self.nets.items()},
            "cubes": [
                {
                    "id": c.id,
                    "level": c.level,
                    "center_idx": c.center_idx,
                    "side": c.side,
                    "parent": c.parent,
                    "members": [int(i) for i in c.member_ids],
                }
                for c in self.cubes
            ],
        }


def _nearest_index(queries, targets):
    """Index of the nearest target for each query point; ties to the smaller index."""
    tree = cKDTree(targets)
    d, idx = tree.query(queries, k=min(2, len(targets)))
    if len(targets) == 1:
        return np.zeros(len(queries), dtype=int)
    d = np.atleast_2d(d)
    idx = np.atleast_2d(idx)
    out = idx[:, 0].copy()
    # cKDTree breaks exact ties arbitrarily; enforce smaller-index ties
    tied = np.isclose(d[:, 0], d[:, 1], rtol=0, atol=1e-12)
    out[tied] = np.minimum(idx[tied, 0], idx[tied, 1])
    return out


def dist_to_family(tree, target, family):
    """d_C: distance of a point or cube to a cube family.

    d_C(x) = inf over R in C of (ell(R) + dist(x, R)); for a cube Q,
    d_C(Q) = inf over x in Q of d_C(x). Empty family returns +inf.
    """
    if not family:
        return np.inf
    if isinstance(target, (int, np.integer)) or hasattr(target, "member_ids"):
        xs = tree.members(target)
    else:
        xs = np.atleast_2d(np.asarray(target, dtype=float))
    best = np.inf
    for ref in family:
        cube = tree.cube(ref)
        mem = tree.cloud.points[cube.member_ids]
        kdt = cKDTree(mem)
        d, _ = kdt.query(xs, k=1)
        best = min(best, cube.side + float(np.min(d)))
    return best


class FamilyDistance:
    """Precomputed d_C(x) over all cloud points for one cube family."""

    def __init__(self, tree, family):
        self.tree = tree
        n = len(tree.cloud.points)
        self.point_values = np.full(n, np.inf)
        for ref in family:
            cube = tree.cube(ref)
            kdt = cKDTree(tree.cloud.points[cube.member_ids])
            d, _ = kdt.query(tree.cloud.points, k=1)
            self.point_values = np.minimum(self.point_values, cube.side + d)

    def of_cube(self, cube):
        cube = self.tree.cube(cube)
        return float(self.point_values[cube.member_ids].min())

    def of_point(self, idx):
        return float(self.point_values[idx])
