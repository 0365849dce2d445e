"""Exact low-level geometry: balls, affine planes, clouds, local Hausdorff
distances, simplex non-degeneracy, and plane fitting.

Points are plain float ndarrays of shape (n,); point collections are (m, n)
arrays. Suprema over clouds are taken over sample points only; continuum
claims inherit the cloud resolution h as stated error.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

ATOL = 1e-12


def as_point_array(points, ambient_dim=None):
    """Validate and return points as a float (m, n) array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2:
        raise InputError(f"points must be a 2-d array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputError("points must be finite")
    if ambient_dim is not None and pts.shape[1] != ambient_dim:
        raise InputError(f"expected ambient dimension {ambient_dim}, got {pts.shape[1]}")
    return pts


def diameter(points):
    """Exact diameter of a finite point set (max pairwise distance)."""
    pts = as_point_array(points)
    if len(pts) == 1:
        return 0.0
    # hull would be faster but exactness on degenerate input matters more here
    best = 0.0
    for i in range(len(pts) - 1):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1).max()
        best = max(best, float(d))
    return best


@dataclass(frozen=True)
class Ball:
    """Closed metric ball B(center, radius)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        object.__setattr__(self, "center", c)
        if not np.all(np.isfinite(c)):
            raise InputError("ball center must be finite")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InputError(f"ball radius must be finite and positive, got {self.radius}")

    def scaled(self, factor):
        """C*B: same centre, radius scaled by factor."""
        return Ball(self.center, self.radius * factor)

    def contains(self, points, slack=ATOL):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius * (1.0 + slack) + slack

    @property
    def diam(self):
        return 2.0 * self.radius


def complete_frame(vectors, dim, ambient_dim):
    """Orthonormal frame of `dim` rows spanning the given vectors, completed
    deterministically by coordinate axes (in index order) when rank-deficient."""
    rows = []
    candidates = list(np.atleast_2d(np.asarray(vectors, dtype=float))) if len(vectors) else []
    candidates += [np.eye(ambient_dim)[i] for i in range(ambient_dim)]
    for v in candidates:
        if len(rows) == dim:
            break
        w = v.astype(float).copy()
        for u in rows:
            w -= np.dot(w, u) * u
        norm = np.linalg.norm(w)
        if norm > 1e-10 * max(1.0, np.linalg.norm(v)) and norm > 1e-300:
            rows.append(w / norm)
    if len(rows) < dim:
        raise InputError(f"cannot build a {dim}-frame in R^{ambient_dim}")
    return np.array(rows)


@dataclass(frozen=True)
class AffinePlane:
    """Affine d-plane: base point plus an orthonormal frame of d directions."""

    base: np.ndarray
    frame: np.ndarray  # (d, n), rows orthonormal

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).ravel()
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)
        d, n = frame.shape
        if not (1 <= d < n):
            raise InputError(f"need 1 <= dim < ambient, got frame shape {frame.shape}")
        if base.shape[0] != n:
            raise InputError("plane base and frame dimensions differ")
        gram = frame @ frame.T
        if not np.allclose(gram, np.eye(d), atol=1e-12):
            raise InputError("plane frame must be orthonormal to 1e-12")

    @property
    def dim(self):
        return self.frame.shape[0]

    @property
    def ambient_dim(self):
        return self.frame.shape[1]

    def project(self, points):
        """Orthogonal projection of one point (n,) or many (m, n) onto the plane."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts2 = np.atleast_2d(pts)
        if pts2.shape[1] != self.ambient_dim:
            raise InputError("dimension mismatch in plane projection")
        rel = pts2 - self.base
        proj = self.base + (rel @ self.frame.T) @ self.frame
        return proj[0] if single else proj

    def dist(self, points):
        """Euclidean distance(s) from point(s) to the plane."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts2 = np.atleast_2d(pts)
        if pts2.shape[1] != self.ambient_dim:
            raise InputError("dimension mismatch in plane distance")
        rel = pts2 - self.base
        resid = rel - (rel @ self.frame.T) @ self.frame
        out = np.linalg.norm(resid, axis=1)
        return float(out[0]) if single else out

    def through(self, point):
        """Translate the plane (same linear part) so it passes through `point`."""
        point = np.asarray(point, dtype=float).ravel()
        rel = point - self.base
        offset = rel - (rel @ self.frame.T) @ self.frame
        return AffinePlane(self.base + offset, self.frame)

    def coords(self, points):
        """In-plane coordinates of the projections (u such that proj = base + u @ frame)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.base) @ self.frame.T


@dataclass(frozen=True)
class PointCloud:
    """Finite sample of a set E, with the sampling scale h it represents."""

    points: np.ndarray
    h: float
    _diam: float = field(init=False, default=0.0)

    def __post_init__(self):
        pts = as_point_array(self.points)
        if len(pts) == 0:
            raise InputError("point cloud must be nonempty")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_diam", diameter(pts))
        if not (np.isfinite(self.h) and self.h > 0):
            raise InputError(f"resolution h must be positive, got {self.h}")
        if len(pts) > 1 and self.h > self._diam * (1 + 1e-9):
            raise InputError(f"resolution h={self.h} exceeds cloud diameter {self._diam}")

    @property
    def ambient_dim(self):
        return self.points.shape[1]

    @property
    def diam(self):
        return self._diam

    def __len__(self):
        return len(self.points)


def dist_point_plane(x, plane):
    """Distance from a point to an affine plane; equals |x - project_plane(x, P)|."""
    return plane.dist(np.asarray(x, dtype=float).ravel())


def project_plane(x, plane):
    """Orthogonal projection of a point onto an affine plane (idempotent)."""
    return plane.project(np.asarray(x, dtype=float).ravel())


def points_in_ball(points, ball):
    """Indices of sample points lying in the (closed) ball."""
    pts = as_point_array(points, ball.center.shape[0])
    return np.nonzero(np.linalg.norm(pts - ball.center, axis=1) <= ball.radius + ATOL)[0]


def local_hausdorff(E, F, ball):
    """Renormalised bilateral Hausdorff distance d_B(E, F) between two clouds.

    Only sample points inside B contribute to the suprema; distances are to
    the full other cloud. Returns None when either restriction is empty
    (the caller decides the convention for the undefined case).
    """
    E_pts = E.points if isinstance(E, PointCloud) else as_point_array(E)
    F_pts = F.points if isinstance(F, PointCloud) else as_point_array(F)
    E_in = E_pts[points_in_ball(E_pts, ball)]
    F_in = F_pts[points_in_ball(F_pts, ball)]
    if len(E_in) == 0 or len(F_in) == 0:
        return None
    sup_e = _sup_min_dist(E_in, F_pts)
    sup_f = _sup_min_dist(F_in, E_pts)
    return (2.0 / ball.diam) * max(sup_e, sup_f)


def _sup_min_dist(A, B):
    """sup over a in A of min over b in B of |a - b| (chunked for memory)."""
    best = 0.0
    step = max(1, 2_000_000 // max(1, len(B)))
    for i in range(0, len(A), step):
        chunk = A[i:i + step]
        d2 = ((chunk[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(np.sqrt(d2.min(axis=1).max())))
    return best


def plane_angle(P, P2):
    """Bilateral unit-ball distance between the translated linear parts.

    Exact: sup over the unit sphere of one linear part of the distance to the
    other is the largest singular value of the complementary projection of
    its frame, i.e. the sine of the largest principal angle.
    """
    if P.dim != P2.dim:
        raise InputError("plane_angle requires equal plane dimensions")
    if P.ambient_dim != P2.ambient_dim:
        raise InputError("plane_angle requires equal ambient dimensions")
    A = P.frame - (P.frame @ P2.frame.T) @ P2.frame
    B = P2.frame - (P2.frame @ P.frame.T) @ P.frame
    sa = np.linalg.svd(A, compute_uv=False)
    sb = np.linalg.svd(B, compute_uv=False)
    return float(max(sa.max(initial=0.0), sb.max(initial=0.0)))


def _max_affine_norm_on_disk(A, b, rho):
    """Exact max of |A u + b| over |u| <= rho (trust-region style).

    The maximum of this convex function sits on the sphere |u| = rho and
    satisfies (lam I - A^T A) u = A^T b for some lam >= lam_max(A^T A).
    Solved by bisection on the secular equation |u(lam)| = rho.
    """
    if rho <= 0:
        return float(np.linalg.norm(b))
    AtA = A.T @ A
    Atb = A.T @ b
    evals, evecs = np.linalg.eigh(AtA)
    lam1 = float(evals[-1])
    c = evecs.T @ Atb
    if np.linalg.norm(Atb) < 1e-300:
        # pure singular-direction case
        u = evecs[:, -1] * rho
        return float(max(np.linalg.norm(A @ u + b), np.linalg.norm(-A @ u + b)))

    def norm_u(lam):
        return float(np.sqrt(np.sum((c / (lam - evals)) ** 2)))

    top = np.abs(c[evals > lam1 - 1e-12 * max(1.0, lam1)]).sum()
    if top < 1e-14 * np.linalg.norm(c):
        # hard case: lam = lam1, fill up with top eigdirections
        mask = evals < lam1 - 1e-12 * max(1.0, lam1)
        u_perp = evecs[:, mask] @ (c[mask] / (lam1 - evals[mask]))
        slack = rho ** 2 - float(np.dot(u_perp, u_perp))
        if slack <= 0:
            u = u_perp * (rho / np.linalg.norm(u_perp))
            return float(np.linalg.norm(A @ u + b))
        v = evecs[:, -1] * np.sqrt(slack)
        best = 0.0
        for s in (1.0, -1.0):
            best = max(best, float(np.linalg.norm(A @ (u_perp + s * v) + b)))
        return best
    lo = lam1 + 1e-300
    hi = lam1 + np.linalg.norm(Atb) / rho + 1.0
    while norm_u(hi) > rho:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lam1:
            mid = np.nextafter(lam1, hi)
        if norm_u(mid) > rho:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    u = evecs @ (c / (hi - evals))
    if np.linalg.norm(u) > 0:
        u *= rho / np.linalg.norm(u)
    return float(np.linalg.norm(A @ u + b))


def plane_ball_distance(P, P2, ball):
    """d_B(P, P2) for affine planes over a ball: exact bilateral sup, /r_B.

    Returns None if either plane misses the ball.
    """
    sups = []
    for first, second in ((P, P2), (P2, P)):
        q = first.project(ball.center)
        gap = np.linalg.norm(q - ball.center)
        if gap > ball.radius:
            return None
        rho = float(np.sqrt(max(0.0, ball.radius ** 2 - gap ** 2)))
        comp = np.eye(first.ambient_dim) - second.frame.T @ second.frame
        bvec = comp @ (q - second.base)
        Amat = comp @ first.frame.T
        sups.append(_max_affine_norm_on_disk(Amat, bvec, rho))
    return max(sups) / ball.radius


def affine_span_distance(x, span_points):
    """Distance from x to the affine span of a point list.

    The span of a single point is the point itself.
    """
    x = np.asarray(x, dtype=float).ravel()
    pts = as_point_array(span_points)
    rel = x - pts[0]
    diffs = pts[1:] - pts[0]
    if len(diffs) == 0:
        return float(np.linalg.norm(rel))
    q, r = np.linalg.qr(diffs.T, mode="reduced")
    keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(np.diag(r)).max())
    basis = q[:, keep]
    resid = rel - basis @ (basis.T @ rel)
    return float(np.linalg.norm(resid))


def eta(X):
    """Simplex non-degeneracy: min_i dist(x_i, affine span of the rest) / diam(X)."""
    pts = as_point_array(X)
    diam = diameter(pts)
    if diam <= 0:
        raise InputError("eta requires diam(X) > 0")
    vals = []
    for i in range(len(pts)):
        rest = np.delete(pts, i, axis=0)
        vals.append(affine_span_distance(pts[i], rest))
    return min(vals) / diam


def fit_plane_pca(points, d, weights=None):
    """Plane through the weighted centroid spanned by the top-d principal
    directions; rank-deficient input completes the frame by coordinate-axis
    order."""
    pts = as_point_array(points)
    n = pts.shape[1]
    if not (1 <= d < n):
        raise InputError(f"need 1 <= d < ambient dim, got d={d}, n={n}")
    if weights is None:
        w = np.ones(len(pts))
    else:
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise InputError("weights must be nonnegative with positive sum")
    w = w / w.sum()
    centroid = w @ pts
    rel = pts - centroid
    cov = (rel * w[:, None]).T @ rel
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    dirs = []
    for idx in order[:d]:
        v = evecs[:, idx]
        if evals[idx] > 1e-24 * max(1.0, evals[order[0]]):
            # deterministic sign: largest-magnitude component positive
            k = int(np.argmax(np.abs(v)))
            dirs.append(v if v[k] >= 0 else -v)
    frame = complete_frame(np.array(dirs) if dirs else [], d, n)
    return AffinePlane(centroid, frame)


def minimal_enclosing_ball(points):
    """(center, radius) of the minimal enclosing ball of a point set.

    Exact by boundary-subset enumeration for small inputs, Badoiu-Clarkson
    iteration otherwise (documented approximation, relative error ~1e-6).
    """
    pts = as_point_array(points)
    m, n = pts.shape
    if m == 1:
        return pts[0].copy(), 0.0
    if m <= 12 and n <= 3:
        return _meb_exact_small(pts)
    center = pts.mean(axis=0)
    for k in range(1, 4000):
        d = np.linalg.norm(pts - center, axis=1)
        i = int(np.argmax(d))
        center = center + (pts[i] - center) / (k + 1.0)
    return center, float(np.linalg.norm(pts - center, axis=1).max())


def _circumcenter(pts):
    """Circumcenter of an affinely independent point tuple, or None."""
    base = pts[0]
    diffs = pts[1:] - base
    if len(diffs) == 0:
        return base.copy()
    gram = diffs @ diffs.T
    rhs = 0.5 * np.einsum("ij,ij->i", diffs, diffs)
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    return base + sol @ diffs


def _meb_exact_small(pts):
    m, n = pts.shape
    best = None
    for size in range(2, min(m, n + 1) + 1):
        for idx in itertools.combinations(range(m), size):
            c = _circumcenter(pts[list(idx)])
            if c is None:
                continue
            r = float(np.linalg.norm(pts[list(idx)[0]] - c))
            if np.all(np.linalg.norm(pts - c, axis=1) <= r * (1 + 1e-12) + 1e-15):
                if best is None or r < best[1]:
                    best = (c, r)
    if best is None:  # all points coincide
        return pts[0].copy(), 0.0
    return best[0], best[1]


def _width_for_frame(pts, frame):
    """Minimax width over bases for a fixed linear part: minimal enclosing
    ball radius of the projections onto the orthogonal complement."""
    n = pts.shape[1]
    d = frame.shape[0]
    comp = complete_frame(np.vstack([frame, np.eye(n)]), n, n)[d:]
    resid = pts @ comp.T
    if comp.shape[0] == 1:
        lo, hi = float(resid.min()), float(resid.max())
        center_c = np.array([(lo + hi) / 2.0])
        width = (hi - lo) / 2.0
    else:
        center_c, width = minimal_enclosing_ball(resid)
    centroid = pts.mean(axis=0)
    base = centroid + (np.asarray(center_c) - centroid @ comp.T) @ comp
    return AffinePlane(base, frame), float(width)


def _refine_frame(pts, frame, iters=40):
    """Coordinate descent on frame angles: rotate each frame row toward each
    complement direction, accepting improvements. Deterministic order."""
    n = pts.shape[1]
    d = frame.shape[0]
    best_plane, best_width = _width_for_frame(pts, frame)
    angles = [0.4, 0.1, 0.02, 0.004]
    for it in range(iters):
        improved = False
        cur = best_plane.frame
        comp = complete_frame(np.vstack([cur, np.eye(n)]), n, n)[d:]
        step = angles[min(it * len(angles) // max(1, iters), len(angles) - 1)]
        for i in range(d):
            for j in range(comp.shape[0]):
                for sign in (1.0, -1.0):
                    phi = sign * step
                    new = cur.copy()
                    new[i] = np.cos(phi) * cur[i] + np.sin(phi) * comp[j]
                    try:
                        cand_frame = complete_frame(new, d, n)
                    except InputError:
                        continue
                    plane, width = _width_for_frame(pts, cand_frame)
                    if width < best_width - 1e-15:
                        best_plane, best_width = plane, width
                        cur = best_plane.frame
                        comp = complete_frame(np.vstack([cur, np.eye(n)]), n, n)[d:]
                        improved = True
        if not improved and step == angles[-1]:
            break
    return best_plane, best_width


def fit_plane_minimax(E, ball, d, refine_iters=40, subset_limit=30):
    """Approximate minimizer of sup_{y in E∩B} dist(y, L) over d-planes.

    Candidates: the PCA plane, planes through (d+1)-point subsets (small
    inputs), then local rotation refinement of the best few. Returns
    (plane, width); width / r_B is the sup-flatness estimate, an upper bound
    within the documented search tolerance.
    """
    pts = E.points if isinstance(E, PointCloud) else as_point_array(E)
    idx = points_in_ball(pts, ball)
    if len(idx) == 0:
        return None, None
    sub = pts[idx]
    n = sub.shape[1]
    candidates = [fit_plane_pca(sub, d).frame]
    if len(sub) <= subset_limit and len(sub) >= 2:
        for combo in itertools.combinations(range(len(sub)), min(d + 1, len(sub))):
            diffs = sub[list(combo[1:])] - sub[combo[0]]
            try:
                candidates.append(complete_frame(diffs, d, n))
            except InputError:
                continue
    scored = []
    for frame in candidates:
        plane, width = _width_for_frame(sub, frame)
        scored.append((width, plane))
    scored.sort(key=lambda t: t[0])
    best_plane, best_width = scored[0][1], scored[0][0]
    for width, plane in scored[:3]:
        rp, rw = _refine_frame(sub, plane.frame, iters=refine_iters)
        if rw < best_width:
            best_plane, best_width = rp, rw
    return best_plane, float(best_width)
