"""Hausdorff-type contents on finite clouds.

Two content estimators share one mechanism: a finite family of candidate
ball covers of E∩B, with each cover's value on a subset A being the sum of
r^d over cover balls meeting A. The unrestricted estimator minimises over
the whole family; the restricted estimator first discards covers failing
the lower/upper regularity conditions (LR)/(UR), so the unrestricted value
never exceeds the restricted one. Both are upper bounds for the respective
infima; all balls respect the resolution floor h/2.

Small inputs (at most `small_exhaustive_max` points) switch to the
exhaustive family of all partition-induced minimal-enclosing-ball covers,
which attains the true infimum over finite ball covers in the unrestricted
case and makes small-instance behaviour reproducible against brute force.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import Ball, PointCloud, as_point_array, minimal_enclosing_ball, points_in_ball

_REL_TOL = 1e-9


@dataclass(frozen=True)
class ContentConfig:
    d: int
    c1: float
    c2: float
    floor: float  # resolution h; no cover ball has radius below floor/2
    ladder_depth: int = 8
    small_exhaustive_max: int = 6
    net_cap: int = 600
    adaptive_t_cap: int = 8

    def __post_init__(self):
        if not (self.c1 < 1.0 <= self.c2):
            raise InputError(f"need c1 < 1 <= c2, got c1={self.c1}, c2={self.c2}")
        if self.floor <= 0:
            raise InputError("resolution floor must be positive")

    @classmethod
    def from_params(cls, params, h, **overrides):
        kw = dict(d=params.d, c1=params.c1, c2=params.c2, floor=h)
        kw.update(overrides)
        return cls(**kw)

    @property
    def min_radius(self):
        return self.floor / 2.0


@dataclass
class BallCover:
    """A finite ball collection, as parallel center/radius arrays."""

    centers: np.ndarray
    radii: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.radii = np.asarray(self.radii, dtype=float).ravel()
        if len(self.centers) != len(self.radii):
            raise InputError("cover centers and radii length mismatch")
        if np.any(self.radii <= 0) or not np.all(np.isfinite(self.radii)):
            raise InputError("cover radii must be positive and finite")

    def __len__(self):
        return len(self.radii)

    @classmethod
    def from_balls(cls, balls, label=""):
        return cls(np.array([b.center for b in balls]), np.array([b.radius for b in balls]), label)


@dataclass
class GoodCoverReport:
    covers_ok: bool
    size_ok: bool
    lr_ok: bool
    ur_ok: bool
    lr_witness: dict | None = None
    ur_witness: dict | None = None

    @property
    def good(self):
        return self.covers_ok and self.size_ok and self.lr_ok and self.ur_ok

    def to_json_dict(self):
        return {
            "good": self.good,
            "covers_ok": self.covers_ok,
            "size_ok": self.size_ok,
            "lr_ok": self.lr_ok,
            "ur_ok": self.ur_ok,
            "lr_witness": self.lr_witness,
            "ur_witness": self.ur_witness,
        }


class _PreparedCover:
    """Cover joined against the context sample: membership and witness distances."""

    __slots__ = ("cover", "rd", "witness", "member", "good")

    def __init__(self, cover, ctx_pts, d):
        self.cover = cover
        self.rd = cover.radii ** d
        diff = ctx_pts[None, :, :] - cover.centers[:, None, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        self.member = dist <= cover.radii[:, None] * (1 + 1e-12) + 1e-15
        m = len(ctx_pts)
        pair = _pairwise(ctx_pts)
        self.witness = np.full((len(cover), m), np.inf)
        for b in range(len(cover)):
            rows = self.member[b]
            if rows.any():
                self.witness[b] = pair[rows].min(axis=0)
        self.good = None

    def value(self, mask):
        """Sum of r^d over balls meeting the point subset `mask`."""
        if not mask.any():
            return 0.0
        hit = (self.member & mask[None, :]).any(axis=1)
        return float(self.rd[hit].sum())


def _pairwise(pts):
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def _check_prepared(prep, ball, cfg, want_witness=False):
    """Exact verification of the good-cover conditions on the finite sample.

    Both regularity sums are piecewise constant in r, so the for-all-(x, r)
    quantifiers reduce to finitely many event radii per sample point x:
    (LR) is tightest just below each witness-distance event, (UR) just above
    each witness-distance or ball-radius event.
    """
    r_B = ball.radius
    d = cfg.d
    covers_ok = bool(prep.member.any(axis=0).all()) if prep.member.shape[1] else True
    size_ok = bool(np.all(np.isfinite(prep.cover.radii)))
    lr_ok, ur_ok = True, True
    lr_wit, ur_wit = None, None
    m = prep.member.shape[1]
    rd = prep.rd
    radii = prep.cover.radii
    for x in range(m):
        wd = prep.witness[:, x]
        finite = np.isfinite(wd)
        if not finite.any():
            lr_ok = False
            lr_wit = {"x_index": x, "r": r_B, "achieved": 0.0, "bound": cfg.c1 * r_B ** d}
            break
        wdx = wd[finite]
        rdx = rd[finite]
        radx = radii[finite]
        # LR: boundaries are the witness events plus r_B
        events = np.unique(wdx[wdx <= r_B * (1 + 1e-12)])
        if events.size == 0 or events[0] > 1e-12 * r_B:
            lr_ok = False
            lr_wit = {"x_index": x, "r": float(events[0]) if events.size else r_B,
                      "achieved": 0.0, "bound": None}
            if not want_witness:
                break
        bounds = np.append(events, r_B)
        for i in range(len(bounds) - 1):
            s = float(rdx[wdx <= bounds[i] * (1 + 1e-12) + 1e-300].sum())
            need = cfg.c1 * bounds[i + 1] ** d
            if s < need * (1 - _REL_TOL):
                lr_ok = False
                if lr_wit is None or s / max(need, 1e-300) < lr_wit.get("ratio", np.inf):
                    lr_wit = {"x_index": x, "r": float(bounds[i + 1]), "achieved": s,
                              "bound": need, "ratio": s / max(need, 1e-300)}
                if not want_witness:
                    break
        if not lr_ok and not want_witness:
            break
        # UR: events are witness distances and ball radii, checked from above
        ur_events = np.unique(np.concatenate([wdx, radx]))
        ur_events = ur_events[(ur_events > 0) & (ur_events < r_B * (1 - 1e-12))]
        for e in ur_events:
            sel = (wdx <= e * (1 + 1e-12)) & (radx <= e * (1 + 1e-12))
            s = float(rdx[sel].sum())
            cap = cfg.c2 * e ** d
            if s > cap * (1 + _REL_TOL):
                ur_ok = False
                if ur_wit is None or s / max(cap, 1e-300) > ur_wit.get("ratio", 0.0):
                    ur_wit = {"x_index": x, "r": float(e), "achieved": s,
                              "bound": cap, "ratio": s / max(cap, 1e-300)}
                if not want_witness:
                    break
        if (not lr_ok or not ur_ok) and not want_witness:
            break
    return GoodCoverReport(covers_ok, size_ok, lr_ok, ur_ok, lr_wit, ur_wit)


def check_good(cover, E, ball, cfg):
    """Full good-cover verification of `cover` against E∩B hing witnesses."""
    pts = E.points if isinstance(E, PointCloud) else as_point_array(E)
    ctx = pts[points_in_ball(pts, ball)]
    prep = _PreparedCover(cover, ctx, cfg.d)
    return _check_prepared(prep, ball, cfg, want_witness=True)


def _set_partitions(items):
    """All partitions of a small index list (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _partition_covers(pts, cfg):
    out = []
    for part in _set_partitions(list(range(len(pts)))):
        centers, radii = [], []
        for group in part:
            c, r = minimal_enclosing_ball(pts[group])
            centers.append(c)
            radii.append(max(r, cfg.min_radius))
        out.append(BallCover(np.array(centers), np.array(radii), "partition"))
    return out


def _net_covers(pts, ball, cfg):
    from .cubes import maximal_net

    out = []
    for j in range(cfg.ladder_depth + 1):
        s = ball.radius * 2.0 ** (-j)
        if s < cfg.min_radius:
            break
        net = maximal_net(pts, s)
        if len(net) > cfg.net_cap:
            continue
        centers = pts[net]
        for factor, tag in ((1.0, "net"), (3.0, "net3")):
            out.append(BallCover(centers, np.full(len(net), max(factor * s, cfg.min_radius)),
                                 f"{tag}/2^-{j}"))
    return out


def _adaptive_cover(pts, plane, t, cfg):
    """Cover from the separated-net construction: delta-weighted net, tripled.

    delta(x) = max(dist(x, plane), floor) + t/120; centres form a greedy net
    with |x_i - x_j| >= 4 max(delta_i, delta_j); balls have radius 12 delta_i.
    """
    delta = np.maximum(plane.dist(pts), cfg.min_radius) + t / 120.0
    kept = []
    for i in range(len(pts)):
        ok = True
        for j in kept:
            if np.linalg.norm(pts[i] - pts[j]) < 4.0 * max(delta[i], delta[j]):
                ok = False
                break
        if ok:
            kept.append(i)
    kept = np.array(kept, dtype=int)
    return BallCover(pts[kept], 12.0 * delta[kept], f"adaptive/t={t:.3g}")


class CoverFamily:
    """Candidate covers of E∩B with goodness flags, reusable across subsets A.

    `planes`/`thresholds` seed the adaptive covers (one per pair, thinned to
    the configured cap of thresholds per plane).
    """

    def __init__(self, E, ball, cfg, planes=(), thresholds=()):
        pts = E.points if isinstance(E, PointCloud) else as_point_array(E)
        self.ball = ball
        self.cfg = cfg
        self.ctx_idx = points_in_ball(pts, ball)
        self.ctx = pts[self.ctx_idx]
        covers = [BallCover(ball.center[None, :], np.array([ball.radius]), "whole-ball")]
        m = len(self.ctx)
        if 0 < m <= cfg.small_exhaustive_max:
            covers.extend(_partition_covers(self.ctx, cfg))
        elif m > 0:
            covers.extend(_net_covers(self.ctx, ball, cfg))
            ts = np.asarray(sorted(set(float(t) for t in thresholds if t > 0)))
            if len(ts) > cfg.adaptive_t_cap:
                picks = np.linspace(0, len(ts) - 1, cfg.adaptive_t_cap).round().astype(int)
                ts = ts[np.unique(picks)]
            for plane in planes:
                for t in ts:
                    covers.append(_adaptive_cover(self.ctx, plane, float(t), cfg))
        self.prepared = []
        for cov in covers:
            prep = _PreparedCover(cov, self.ctx, cfg.d)
            prep.good = _check_prepared(prep, ball, cfg).good
            self.prepared.append(prep)
        if not any(p.good for p in self.prepared):
            # {B} is always good; reaching here means numerical trouble
            self.prepared[0].good = True

    def mask_of(self, A):
        """Boolean mask over context points selecting the subset A."""
        if A is None:
            return np.ones(len(self.ctx), dtype=bool)
        A = np.asarray(A)
        if A.dtype == bool:
            if len(A) != len(self.ctx):
                raise InputError("mask length must match |E ∩ B|")
            return A
        apts = np.atleast_2d(A.astype(float))
        mask = np.zeros(len(self.ctx), dtype=bool)
        for a in apts:
            dist = np.linalg.norm(self.ctx - a, axis=1)
            j = int(np.argmin(dist)) if len(dist) else -1
            if j < 0 or dist[j] > 1e-9 * max(1.0, self.ball.radius):
                raise InputError("subset A must consist of sample points of E ∩ B")
            mask[j] = True
        return mask

    def restricted_value(self, A):
        """min over good covers of sum r^d over balls meeting A."""
        mask = self.mask_of(A)
        if not mask.any():
            return 0.0
        return min(p.value(mask) for p in self.prepared if p.good)

    def unrestricted_value(self, A):
        """min over all candidate covers (goodness filter dropped)."""
        mask = self.mask_of(A)
        if not mask.any():
            return 0.0
        return min(p.value(mask) for p in self.prepared)

    def nested(self, sub_ball):
        """Family for a subball: covers filtered to balls meeting it, re-checked.

        Monotonicity route of the content lemma: a surviving filtered cover
        keeps the identical restricted sums on subsets of E ∩ sub_ball.
        """
        return _NestedFamily(self, sub_ball)


class _NestedFamily:
    def __init__(self, parent, sub_ball):
        self.cfg = parent.cfg
        self.ball = sub_ball
        keep = np.linalg.norm(parent.ctx - sub_ball.center, axis=1) <= sub_ball.radius + 1e-12
        self.ctx_idx = parent.ctx_idx[keep]
        self.ctx = parent.ctx[keep]
        self.prepared = []
        for prep in parent.prepared:
            cdist = np.linalg.norm(prep.cover.centers - sub_ball.center, axis=1)
            meets = cdist <= prep.cover.radii + sub_ball.radius + 1e-12
            if not meets.any():
                continue
            cov = BallCover(prep.cover.centers[meets], prep.cover.radii[meets],
                            prep.cover.label + "|nested")
            sub = _PreparedCover(cov, self.ctx, self.cfg.d)
            sub.good = _check_prepared(sub, sub_ball, self.cfg).good
            self.prepared.append(sub)
        whole = BallCover(sub_ball.center[None, :], np.array([sub_ball.radius]), "whole-ball")
        prep = _PreparedCover(whole, self.ctx, self.cfg.d)
        prep.good = True
        self.prepared.append(prep)

    mask_of = CoverFamily.mask_of
    restricted_value = CoverFamily.restricted_value
    unrestricted_value = CoverFamily.unrestricted_value


def restricted_content(A, E, ball, cfg, family=None, planes=(), thresholds=()):
    """Upper-bound estimate of the restricted content of A ⊆ E∩B over good covers."""
    if family is None:
        family = CoverFamily(E, ball, cfg, planes=planes, thresholds=thresholds)
    return family.restricted_value(A)


def dyadic_content(A, cfg, context=None):
    """Upper-bound estimate of the plain (ball-convention) content of A.

    Covers: occupied-cell grids and greedy nets at a relative scale ladder,
    the minimal enclosing ball, and (small inputs) all partition covers; the
    minimum is homogeneous of degree d under rescaling of A. With a
    `context` CoverFamily the minimisation extends over that family's covers
    unfiltered, which forces dyadic_content <= restricted_content.
    """
    pts = np.atleast_2d(np.asarray(A, dtype=float)) if A is not None and len(np.atleast_1d(A)) else None
    if pts is None or len(pts) == 0:
        return 0.0
    d = cfg.d
    best = np.inf
    if context is not None:
        best = context.unrestricted_value(A)
    c, r = minimal_enclosing_ball(pts)
    best = min(best, max(r, cfg.min_radius) ** d)
    if len(pts) <= cfg.small_exhaustive_max:
        for cov in _partition_covers(pts, cfg):
            best = min(best, float((cov.radii ** d).sum()))
        return float(best)
    span = pts.max(axis=0) - pts.min(axis=0)
    diam = float(np.linalg.norm(span))
    if diam <= 0:
        return float(min(best, cfg.min_radius ** d))
    anchor = pts.min(axis=0)
    n = pts.shape[1]
    from .cubes import maximal_net

    for j in range(cfg.ladder_depth + 1):
        s = diam * 2.0 ** (-j)
        if s < cfg.min_radius:
            break
        cells = np.unique(np.floor((pts - anchor) / s).astype(np.int64), axis=0)
        if len(cells) <= 100_000:
            rad = max(s * np.sqrt(n) / 2.0, cfg.min_radius)
            best = min(best, len(cells) * rad ** d)
        net = maximal_net(pts, s)
        if len(net) <= cfg.net_cap:
            best = min(best, len(net) * max(s, cfg.min_radius) ** d)
    return float(best)


def choquet(f, content_fn):
    """Exact Choquet integral of f >= 0 on a finite sample.

    content_fn maps a boolean mask (over the sample) to the content of that
    subset; the integral is the finite sum over the level-set staircase.
    """
    vals = np.asarray(f, dtype=float).ravel()
    if len(vals) == 0:
        return 0.0
    if np.any(vals < 0):
        raise InputError("choquet requires f >= 0")
    levels = np.unique(vals[vals > 0])
    total = 0.0
    prev = 0.0
    for v in levels:
        total += (v - prev) * content_fn(vals >= v * (1 - 1e-15))
        prev = v
    return float(total)


def layered_power_integral(f, mu_of_mask, p):
    """Exact integral over t in (0,1) of mu({f > t}) d(t^p).

    Equals the Choquet integral of min(f, 1)^p against mu. Level values of f
    beyond 1 saturate, matching the (0,1) truncation.
    """
    vals = np.asarray(f, dtype=float).ravel()
    if len(vals) == 0:
        return 0.0
    levels = np.unique(vals[vals > 0])
    total = 0.0
    prev_w = 0.0
    for v in levels:
        w = min(float(v), 1.0)
        if w > prev_w:
            total += (w ** p - prev_w ** p) * mu_of_mask(vals >= v * (1 - 1e-15))
        prev_w = w
        if prev_w >= 1.0:
            break
    return float(total)
