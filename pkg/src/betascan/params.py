"""Global parameter bundle and derived constants.

All multiscale machinery shares one parameter set: intrinsic dimension d,
content exponent p, net ratio rho, ball inflations C0 and M, stopping
thresholds eps/alpha, smoothing parameter tau, and the content regularity
constants c1/c2 derived from the packing constant kappa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError

# Empirical packing constants kappa(d): largest observed value of
# sum(r_i^d)/R^d over random admissible packings (disjoint balls inside
# B(0, R), centres within r_i/2 of a d-plane), times a 1.5 safety factor.
# Regenerated by estimate_packing_constant(); see tests for the regression
# check that fresh packings never exceed these.
KAPPA_DEFAULT = {1: 4.5, 2: 9.0, 3: 18.0}


def unit_ball_volume(d):
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def p_max(d):
    """Supremum of admissible exponents p for dimension d (2d/(d-2), inf for d <= 2)."""
    if d <= 2:
        return math.inf
    return 2.0 * d / (d - 2.0)


def estimate_packing_constant(d, n=None, trials=10_000, balls_per_trial=40, seed=0):
    """Empirical estimate of the packing constant kappa(d).

    Each trial greedily builds a random family of pairwise disjoint balls
    B(x_i, r_i) inside B(0, 1) with r_i <= 1 and dist(x_i, V) < r_i / 2 for a
    fixed d-plane V, then records sum(r_i^d). Returns the max over trials.
    The shipped default is 1.5x this value.
    """
    if n is None:
        n = d + 1
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        centers = np.empty((0, n))
        radii = np.empty(0)
        total = 0.0
        for _ in range(balls_per_trial):
            r = float(np.exp(rng.uniform(np.log(0.01), 0.0)))
            x = np.zeros(n)
            x[:d] = rng.uniform(-1.0, 1.0, size=d)
            x[d:] = rng.uniform(-0.5, 0.5, size=n - d) * r
            if np.linalg.norm(x) + r > 1.0:
                continue
            if len(radii) and np.any(np.linalg.norm(centers - x, axis=1) < radii + r):
                continue
            centers = np.vstack([centers, x])
            radii = np.append(radii, r)
            total += r ** d
        best = max(best, total)
    return best


@dataclass(frozen=True)
class GlobalParams:
    """Shared configuration for cubes, contents, betas, regions and surfaces.

    Fields left as None are filled with the derived defaults documented in
    resolve(). Instances are immutable; use replace_with to derive variants.
    """

    d: int = 1
    p: float = 1.0
    rho: float = 0.5
    C0: float = 2.0
    M: float | None = None
    eps: float = 1e-2
    alpha: float = 0.1
    tau: float | None = None
    kappa: float | None = None
    c1: float | None = None
    c2: float | None = None
    c0_target: float = 1.0 / 500.0
    lam: float = 0.1
    depth: int | None = None
    seed: int = 0
    # David-Toro desk-scale knobs: per-level scale ratio and the radius
    # factor of the plane-comparison balls (the reference construction uses
    # base 10 and factor 1e4, which is infeasible jointly at desk scale).
    dt_base: float = 2.0
    radius_factor: float = 100.0
    eps0_gate: float = 0.03
    omega_d: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.d < 1:
            raise InputError(f"d must be >= 1, got {self.d}")
        if not (0.0 < self.rho <= 0.5):
            raise InputError(f"rho must lie in (0, 1/2], got {self.rho}")
        if not (1.0 <= self.p < p_max(self.d)):
            raise InputError(f"p must lie in [1, p(d)) = [1, {p_max(self.d)}), got {self.p}")
        if not (0.0 < self.alpha < 1.0):
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.C0 < 1.0:
            raise InputError(f"C0 must be >= 1, got {self.C0}")
        object.__setattr__(self, "omega_d", unit_ball_volume(self.d))
        if self.kappa is None:
            object.__setattr__(self, "kappa", KAPPA_DEFAULT.get(self.d, 4.5 * 2.0 ** self.d))
        if self.M is None:
            object.__setattr__(self, "M", max(2.0 * self.C0, 4.0 / self.rho))
        if self.tau is None:
            object.__setattr__(self, "tau", 0.5 * self.tau0)
        if not (0.0 < self.tau < self.tau0):
            raise InputError(f"tau must lie in (0, {self.tau0}), got {self.tau}")
        if self.c1 is None:
            object.__setattr__(
                self, "c1", self.omega_d * self.rho ** self.d / (2.0 ** (self.d + 1) * 3.0 ** self.d)
            )
        if self.c2 is None:
            object.__setattr__(self, "c2", 18.0 ** self.d * self.kappa)
        if not (self.c1 < 1.0 <= self.c2):
            raise InputError(f"need c1 < 1 <= c2, got c1={self.c1}, c2={self.c2}")

    @property
    def tau0(self):
        return 1.0 / (2.0 * (1.0 + self.rho))

    def replace_with(self, **kwargs):
        """Return a copy with the given fields overridden and defaults re-derived."""
        base = {
            "d": self.d, "p": self.p, "rho": self.rho, "C0": self.C0, "M": self.M,
            "eps": self.eps, "alpha": self.alpha, "tau": self.tau, "kappa": self.kappa,
            "c1": self.c1, "c2": self.c2, "c0_target": self.c0_target, "lam": self.lam,
            "depth": self.depth, "seed": self.seed, "dt_base": self.dt_base,
            "radius_factor": self.radius_factor, "eps0_gate": self.eps0_gate,
        }
        derived = {"M", "tau", "kappa", "c1", "c2"}
        for key in kwargs:
            if key not in base:
                raise InputError(f"unknown parameter {key!r}")
        # re-derive downstream defaults when their inputs change
        if any(k in kwargs for k in ("d", "rho", "C0", "kappa")):
            for dk in derived:
                if dk not in kwargs:
                    base[dk] = None
        base.update(kwargs)
        return GlobalParams(**base)

    def to_dict(self):
        return {
            "d": self.d, "p": self.p, "rho": self.rho, "C0": self.C0, "M": self.M,
            "eps": self.eps, "alpha": self.alpha, "tau": self.tau, "kappa": self.kappa,
            "c1": self.c1, "c2": self.c2, "lam": self.lam, "depth": self.depth,
            "seed": self.seed, "dt_base": self.dt_base, "radius_factor": self.radius_factor,
            "eps0_gate": self.eps0_gate, "omega_d": self.omega_d,
        }
