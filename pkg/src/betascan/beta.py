"""Flatness statistics: the four beta-number families, Jones-type square
sums over a cube tree, and the bad-approximation cube classifiers.

All content-driven betas share one plane-candidate family per ball and one
cover family per ball, so the cross-family inequalities (checked in the
tests) are candidate-consistent. Level integrals follow the measure
normalisation beta(B, L)^p = (1/r^d) * integral of min(dist/r, 1)^p against
the content, evaluated exactly through the level-set staircase; distances
beyond r_B saturate.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .content import ContentConfig, CoverFamily, dyadic_content, layered_power_integral
from .errors import InputError, StageBudgetError
from .geometry import (AffinePlane, Ball, PointCloud, as_point_array, complete_frame,
                       fit_plane_minimax, fit_plane_pca, points_in_ball)
from .params import p_max

_FLAT_TOL = 1e-13


@dataclass
class BetaValue:
    kind: str
    value: float
    plane: AffinePlane | None
    ball: Ball
    p: float
    d: int

    def __post_init__(self):
        if self.value < 0:
            raise InputError("beta values are nonnegative")
        if self.kind == "inf" and self.value > 2.0 + 1e-9:
            raise InputError(f"beta_inf exceeded the d_B bound: {self.value}")


def candidate_planes(pts, ball, d, subset_limit=12, refine_iters=20):
    """Shared per-ball plane candidates: PCA, minimax (with refinement), and
    planes through (d+1)-point subsets for small inputs. Deterministic order."""
    pts = as_point_array(pts)
    n = pts.shape[1]
    planes = [fit_plane_pca(pts, d)]
    mm_plane, _ = fit_plane_minimax(pts, ball, d, refine_iters=refine_iters)
    if mm_plane is not None:
        planes.append(mm_plane)
    if 2 <= len(pts) <= subset_limit:
        for combo in itertools.combinations(range(len(pts)), min(d + 1, len(pts))):
            diffs = pts[list(combo[1:])] - pts[combo[0]]
            try:
                frame = complete_frame(diffs, d, n)
            except InputError:
                continue
            planes.append(AffinePlane(pts[combo[0]], frame))
    return planes


def _restrict(E, ball):
    pts = E.points if isinstance(E, PointCloud) else as_point_array(E)
    idx = points_in_ball(pts, ball)
    return pts[idx], idx


def beta_inf(E, ball, d):
    """Sup-flatness: minimax tube half-width over r_B. Empty ball gives 0."""
    pts, _ = _restrict(E, ball)
    if len(pts) == 0:
        return BetaValue("inf", 0.0, None, ball, np.inf, d)
    plane, width = fit_plane_minimax(pts, ball, d)
    return BetaValue("inf", width / ball.radius, plane, ball, np.inf, d)


def beta_hat(E, weights, ball, p, d, planes=None):
    """Weighted L^p flatness against a discrete approximation of surface measure."""
    pts_all = E.points if isinstance(E, PointCloud) else as_point_array(E)
    idx = points_in_ball(pts_all, ball)
    pts = pts_all[idx]
    if len(pts) == 0:
        return BetaValue("hat", 0.0, None, ball, p, d)
    w = np.asarray(weights, dtype=float).ravel()
    if len(w) == len(pts_all):
        w = w[idx]
    if len(w) != len(pts):
        raise InputError("weights must match the cloud or the in-ball sample")
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    if w.sum() == 0:
        return BetaValue("hat", 0.0, None, ball, p, d)
    if planes is None:
        planes = candidate_planes(pts, ball, d)
    r = ball.radius
    best, best_plane = np.inf, None
    for plane in planes:
        val = float((w * (plane.dist(pts) / r) ** p).sum() / r ** d) ** (1.0 / p)
        if val < best:
            best, best_plane = val, plane
    return BetaValue("hat", best, best_plane, ball, p, d)


class BallBetaContext:
    """One ball's shared machinery: sample, plane candidates, cover family.

    Built once per ball and reused by beta_check / beta_new so their content
    estimators differ only in the goodness filter.
    """

    def __init__(self, E, ball, d, cfg, planes=None, subset_limit=12):
        self.ball = ball
        self.d = d
        self.cfg = cfg
        self.pts, _ = _restrict(E, ball)
        self.planes = list(planes) if planes is not None else (
            candidate_planes(self.pts, ball, d, subset_limit=subset_limit)
            if len(self.pts) else [])
        self._dists = [p_.dist(self.pts) for p_ in self.planes]
        self._family = None

    @property
    def empty(self):
        return len(self.pts) == 0

    @property
    def flat(self):
        if self.empty:
            return True
        best = min((d_.max() for d_ in self._dists), default=0.0)
        return best <= _FLAT_TOL * self.ball.radius

    def family(self):
        if self._family is None:
            thresholds = np.unique(np.concatenate([d_ for d_ in self._dists]))[:64] \
                if self._dists else ()
            self._family = CoverFamily(self.pts, self.ball, self.cfg,
                                       planes=self.planes, thresholds=thresholds)
        return self._family

    def _layered(self, p, mu_kind):
        fam = self.family()
        mask_pts = fam.ctx
        best, best_plane = np.inf, None
        r = self.ball.radius
        for plane, dist_full in zip(self.planes, self._dists):
            dist = plane.dist(mask_pts) if len(mask_pts) != len(self.pts) else dist_full
            f = dist / r
            if f.max(initial=0.0) <= _FLAT_TOL:
                return 0.0, plane
            mu = fam.restricted_value if mu_kind == "restricted" else fam.unrestricted_value
            integral = layered_power_integral(f, mu, p)
            val = (integral / r ** self.d) ** (1.0 / p)
            if val < best:
                best, best_plane = val, plane
        return best, best_plane


def beta_check(E, ball, p, d, cfg, planes=None, ctx=None):
    """Content-averaged flatness against the unrestricted content estimator."""
    ctx = ctx or BallBetaContext(E, ball, d, cfg, planes=planes)
    if ctx.empty:
        return BetaValue("check", 0.0, None, ball, p, d)
    if ctx.flat:
        return BetaValue("check", 0.0, ctx.planes[0] if ctx.planes else None, ball, p, d)
    val, plane = ctx._layered(p, "unrestricted")
    return BetaValue("check", val, plane, ball, p, d)


def beta_new(E, ball, p, d, cfg, planes=None, ctx=None):
    """Content-averaged flatness against the restricted (good-cover) content."""
    ctx = ctx or BallBetaContext(E, ball, d, cfg, planes=planes)
    if ctx.empty:
        return BetaValue("new", 0.0, None, ball, p, d)
    if ctx.flat:
        return BetaValue("new", 0.0, ctx.planes[0] if ctx.planes else None, ball, p, d)
    val, plane = ctx._layered(p, "restricted")
    return BetaValue("new", val, plane, ball, p, d)


def nn_weights(points, d):
    """Nearest-neighbour based weights (nn distance)^d approximating H^d|_E."""
    pts = as_point_array(points)
    if len(pts) == 1:
        return np.ones(1)
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    return dist[:, 1] ** d


@dataclass
class JonesReport:
    kind: str
    d: int
    p: float
    C0: float
    diam_term: float
    rows: list = field(default_factory=list)
    truncated: bool = False

    @property
    def sum_term(self):
        return float(sum(r["summand"] for r in self.rows))

    @property
    def total(self):
        return self.diam_term + self.sum_term

    def level_sums(self):
        out = {}
        for r in self.rows:
            out[r["level"]] = out.get(r["level"], 0.0) + r["summand"]
        return dict(sorted(out.items()))

    def to_json_dict(self):
        return {
            "schema": "betascan/1",
            "kind": "jones_report",
            "beta_kind": self.kind,
            "d": self.d,
            "p": self.p,
            "C0": self.C0,
            "diam_term": self.diam_term,
            "sum_term": self.sum_term,
            "total": self.total,
            "truncated": self.truncated,
            "level_sums": {str(k): v for k, v in self.level_sums().items()},
            "cubes": self.rows,
        }

    def to_csv_rows(self):
        out = [("level", "sum_beta2_elld")]
        out += [(k, v) for k, v in self.level_sums().items()]
        return out


def jones_sum(tree, beta_kind, params, weights=None, budget_s=None, cfg=None):
    """Per-cube beta values over C0 B_Q and the Jones total
    diam(Q0)^d + sum over Q of beta(C0 B_Q)^2 ell(Q)^d."""
    if beta_kind not in ("inf", "hat", "check", "new"):
        raise InputError(f"unknown beta kind {beta_kind!r}")
    if params.C0 < 1:
        raise InputError("C0 must be >= 1")
    d, p = params.d, params.p
    if not (1 <= p < p_max(d)):
        raise InputError(f"p out of range for d={d}")
    cloud = tree.cloud
    cfg = cfg or ContentConfig.from_params(params, cloud.h)
    if beta_kind == "hat" and weights is None:
        weights = nn_weights(cloud.points, d)
    root_members = tree.members(tree.root)
    from .geometry import diameter

    report = JonesReport(beta_kind, d, p, params.C0, diameter(root_members) ** d)
    start = time.monotonic()
    for cube in tree.cubes:
        if budget_s is not None and time.monotonic() - start > budget_s:
            report.truncated = True
            break
        ball = tree.cube_ball(cube, params.C0)
        bv = _beta_of_ball(cloud, ball, beta_kind, p, d, cfg, weights)
        summand = bv.value ** 2 * cube.side ** d
        report.rows.append({
            "cube": cube.id,
            "level": cube.level,
            "value": bv.value,
            "side": cube.side,
            "summand": summand,
            "plane_base": None if bv.plane is None else [float(v) for v in bv.plane.base],
            "plane_frame": None if bv.plane is None else
                [[float(v) for v in row] for row in bv.plane.frame],
        })
    return report


def _beta_of_ball(cloud, ball, beta_kind, p, d, cfg, weights=None):
    if beta_kind == "inf":
        return beta_inf(cloud, ball, d)
    if beta_kind == "hat":
        return beta_hat(cloud, weights, ball, p, d)
    ctx = BallBetaContext(cloud, ball, d, cfg)
    if beta_kind == "check":
        return beta_check(cloud, ball, p, d, cfg, ctx=ctx)
    return beta_new(cloud, ball, p, d, cfg, ctx=ctx)


class CubeBetaCache:
    """Memoised per-cube beta evaluations beta(fac * B_Q) used by the
    stopping-time rules."""

    def __init__(self, tree, params, kind="new", cfg=None, weights=None):
        self.tree = tree
        self.params = params
        self.kind = kind
        self.cfg = cfg or ContentConfig.from_params(params, tree.cloud.h)
        self.weights = weights
        self._memo = {}

    def value(self, cube_id, factor):
        key = (cube_id, round(float(factor), 12))
        if key not in self._memo:
            ball = self.tree.cube_ball(cube_id, factor)
            bv = _beta_of_ball(self.tree.cloud, ball, self.kind,
                               self.params.p if self.kind != "inf" else np.inf,
                               self.params.d, self.cfg, self.weights)
            self._memo[key] = bv.value
        return self._memo[key]


# -- classifiers ----------------------------------------------------------

def _plane_disk_samples(plane, ball, step_frac=1 / 16):
    """Deterministic samples of plane ∩ ball (grid in plane coordinates)."""
    q = plane.project(ball.center)
    gap = float(np.linalg.norm(q - ball.center))
    if gap > ball.radius:
        return np.empty((0, plane.ambient_dim))
    rho = float(np.sqrt(max(0.0, ball.radius ** 2 - gap ** 2)))
    if rho == 0.0:
        return q[None, :]
    step = max(ball.radius * step_frac, 1e-12)
    ticks = np.arange(-rho, rho + step / 2, step)
    grids = np.meshgrid(*([ticks] * plane.dim), indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    coords = coords[np.linalg.norm(coords, axis=1) <= rho + 1e-12]
    return q + coords @ plane.frame


def bilateral_cloud_plane_distance(pts, ball, planes, step_frac=1 / 16):
    """d_B(E, U) between a sampled cloud and a union of planes.

    Cloud-side sup uses exact plane distances; plane-side sup is over a
    deterministic grid of each plane's disk in the ball (documented
    approximation, resolution step_frac * r_B).
    """
    pts = as_point_array(pts)
    inside = pts[points_in_ball(pts, ball)]
    if len(inside) == 0:
        return None
    dists = np.stack([pl.dist(inside) for pl in planes], axis=0)
    sup_e = float(dists.min(axis=0).max())
    kd = cKDTree(pts)
    sup_u = 0.0
    for pl in planes:
        samples = _plane_disk_samples(pl, ball, step_frac)
        if len(samples) == 0:
            continue
        dd, _ = kd.query(samples, k=1)
        sup_u = max(sup_u, float(dd.max()))
    return max(sup_e, sup_u) / ball.radius


def k_plane_fit(pts, d, k, iters=10):
    """Deterministic k-plane clustering: residual-driven splits followed by
    Lloyd rounds (fit PCA plane per cluster, reassign to nearest plane)."""
    pts = as_point_array(pts)
    clusters = [np.arange(len(pts))]
    while len(clusters) < k:
        # split the cluster with the worst plane fit, at its median residual
        worst, worst_res = None, -1.0
        for ci, idx in enumerate(clusters):
            if len(idx) <= 2 * (d + 1):
                continue
            plane = fit_plane_pca(pts[idx], d)
            res = plane.dist(pts[idx])
            if res.max() > worst_res:
                worst, worst_res, worst_resvals = ci, res.max(), res
        if worst is None:
            break
        idx = clusters[worst]
        med = np.median(worst_resvals)
        lo = idx[worst_resvals <= med]
        hi = idx[worst_resvals > med]
        if len(lo) == 0 or len(hi) == 0:
            break
        clusters[worst] = lo
        clusters.append(hi)
    for _ in range(iters):
        planes = [fit_plane_pca(pts[idx], d) for idx in clusters if len(idx) > 0]
        if not planes:
            break
        dists = np.stack([pl.dist(pts) for pl in planes], axis=0)
        assign = dists.argmin(axis=0)
        new_clusters = [np.nonzero(assign == i)[0] for i in range(len(planes))]
        new_clusters = [c for c in new_clusters if len(c)]
        if all(len(a) == len(b) and np.array_equal(a, b)
               for a, b in zip(new_clusters, clusters)) and len(new_clusters) == len(clusters):
            clusters = new_clusters
            break
        clusters = new_clusters
    return [fit_plane_pca(pts[idx], d) for idx in clusters if len(idx) > 0]


def classify_bwgl(tree, cube, C0, eps, d=None, step_frac=1 / 16):
    """True iff no candidate plane bilaterally approximates E in C0 B_Q to
    within eps. Candidate-limited: may over-report membership, never
    under-reports relative to its family."""
    if eps > 2.0:
        return False
    d = d if d is not None else 1
    cube = tree.cube(cube)
    ball = tree.cube_ball(cube, C0)
    pts = tree.cloud.points
    inside = pts[points_in_ball(pts, ball)]
    if len(inside) == 0:
        return False
    planes = candidate_planes(inside, ball, d)
    for plane in planes:
        val = bilateral_cloud_plane_distance(pts, ball, [plane], step_frac)
        if val is not None and val < eps:
            return False
    return True


def classify_baup(tree, cube, C0, eps, m, d=None, step_frac=1 / 16):
    """True iff every tested union of at most m candidate planes stays
    bilaterally eps-far from E in C0 B_Q."""
    if eps > 2.0:
        return False
    if m < 1:
        raise InputError("plane budget m must be >= 1")
    d = d if d is not None else 1
    cube = tree.cube(cube)
    ball = tree.cube_ball(cube, C0)
    pts = tree.cloud.points
    inside = pts[points_in_ball(pts, ball)]
    if len(inside) == 0:
        return False
    singles = candidate_planes(inside, ball, d)
    unions = [[pl] for pl in singles]
    for k in range(2, m + 1):
        unions.append(k_plane_fit(inside, d, k))
    for union in unions:
        val = bilateral_cloud_plane_distance(pts, ball, union, step_frac)
        if val is not None and val < eps:
            return False
    return True
