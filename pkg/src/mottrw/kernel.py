"""Jump rates, conductances, and truncated jump laws.

The walker at point ``x_i`` jumps to ``x_j`` at rate

    r(i -> j) = exp( -|x_j - x_i| + bias * (x_j - x_i) + u(E_i, E_j) ),

with ``bias`` in [0, 1) and a bounded symmetric mark interaction ``u``.  The
associated conductances ``c(i, j) = exp(2 * bias * x_i) * r(i -> j)`` are
symmetric, and the discrete-time walk truncated at range ``rho`` moves with

    P(i -> j) = c(i, j) / site_weight(i, inf)     for 0 < |i - j| <= rho,

holding the leftover mass as a self-loop (the walk is lazy for finite ``rho``).
For ``rho = inf`` jumps are truncated at the analytic cutoff
:func:`range_cutoff`, beyond which the discarded probability per site is below
``tail_tol * site_weight(i, 1)``, and the law is renormalised (no self-loop).

Everything here is reference (numpy) code; the compiled step kernels in
:mod:`mottrw.walk` are tested against these functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .environments import Environment, EnvironmentSpec


# ---------------------------------------------------------------------------
# mark interaction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    """Symmetric bounded mark interaction ``u(a, b)``.

    ``kind="zero"``:   u = 0.
    ``kind="mott"``:   u(a, b) = -beta * (|a| + |b| + |a - b|)  (beta >= 0).
    ``kind="table"``:  piecewise-constant over mark bins: ``edges`` are the
                       bin edges (increasing, covering the mark support) and
                       ``values[i][j]`` the symmetric table entries.
    """

    kind: str = "zero"
    beta: float = 0.0
    edges: tuple[float, ...] = ()
    values: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("zero", "mott", "table"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        object.__setattr__(
            self, "values", tuple(tuple(float(v) for v in row) for row in self.values)
        )
        if self.kind == "mott" and not self.beta >= 0:
            raise ValueError("mott potential needs beta >= 0")
        if self.kind == "table":
            e = self.edges
            if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])):
                raise ValueError("table potential needs increasing edges")
            nbin = len(e) - 1
            v = self.values
            if len(v) != nbin or any(len(row) != nbin for row in v):
                raise ValueError("table values must be (nbins x nbins)")
            for i in range(nbin):
                for j in range(nbin):
                    if v[i][j] != v[j][i]:
                        raise ValueError("table values must be symmetric")

    def evaluate(self, a, b):
        """u(a, b); arrays broadcast.  Table lookups outside the edges fail."""
        if self.kind == "zero":
            return np.zeros(np.broadcast(a, b).shape) if np.ndim(a) or np.ndim(b) else 0.0
        if self.kind == "mott":
            return -self.beta * (np.abs(a) + np.abs(b) + np.abs(np.subtract(a, b)))
        e = np.asarray(self.edges)
        ia = self._bin(e, a)
        ib = self._bin(e, b)
        table = np.asarray(self.values)
        out = table[ia, ib]
        return out if np.ndim(out) else float(out)

    @staticmethod
    def _bin(edges: np.ndarray, x) -> np.ndarray:
        idx = np.searchsorted(edges, x, side="right") - 1
        idx = np.where(np.equal(x, edges[-1]), len(edges) - 2, idx)
        if np.any(idx < 0) or np.any(idx > len(edges) - 2):
            raise ValueError("mark outside the table's declared range")
        return idx

    def bounds(self, mark_lo: float, mark_hi: float) -> tuple[float, float]:
        """(u_min, u_max) over marks in [mark_lo, mark_hi]."""
        if self.kind == "zero":
            return (0.0, 0.0)
        if self.kind == "mott":
            amp = max(abs(mark_lo), abs(mark_hi))
            # |a| + |b| + |a-b| ranges over [0, 4*amp] on the square
            return (-4.0 * self.beta * amp, 0.0)
        if not (self.edges[0] <= mark_lo and mark_hi <= self.edges[-1]):
            raise ValueError("mark support outside the table's declared range")
        flat = [v for row in self.values for v in row]
        return (min(flat), max(flat))

    def to_json(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "mott":
            return {"kind": "mott", "beta": self.beta}
        return {"kind": "table", "edges": list(self.edges),
                "values": [list(r) for r in self.values]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "PotentialSpec":
        kind = obj.get("kind", "zero")
        if kind == "zero":
            return cls()
        if kind == "mott":
            return cls(kind="mott", beta=obj["beta"])
        return cls(kind="table", edges=tuple(obj["edges"]),
                   values=tuple(tuple(r) for r in obj["values"]))


# ---------------------------------------------------------------------------
# walk configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WalkConfig:
    """Dynamics parameters: bias, truncation range, potential, tail tolerance.

    ``rho`` is a positive integer or ``math.inf``.  ``lazy`` selects the
    self-loop dynamics for finite ``rho`` (the default); ``lazy=False`` instead
    renormalises the truncated law, which for ``rho = 1`` is the classical
    nearest-neighbour birth-death chain.
    """

    bias: float
    rho: float = math.inf
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    tail_tol: float = 1e-8
    lazy: bool = True

    def __post_init__(self):
        if not 0.0 <= self.bias < 1.0:
            raise ValueError("bias must lie in [0, 1)")
        if self.rho != math.inf:
            if not (float(self.rho).is_integer() and self.rho >= 1):
                raise ValueError("rho must be a positive integer or inf")
            object.__setattr__(self, "rho", int(self.rho))
        if not 0 < self.tail_tol <= 1e-6:
            raise ValueError("tail_tol must lie in (0, 1e-6]")

    def to_json(self) -> dict:
        return {
            "bias": self.bias,
            "rho": "inf" if self.rho == math.inf else self.rho,
            "potential": self.potential.to_json(),
            "tail_tol": self.tail_tol,
            "lazy": self.lazy,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "WalkConfig":
        rho = obj.get("rho", "inf")
        return cls(
            bias=obj["bias"],
            rho=math.inf if rho in ("inf", None) else rho,
            potential=PotentialSpec.from_json(obj.get("potential", {"kind": "zero"})),
            tail_tol=obj.get("tail_tol", 1e-8),
            lazy=obj.get("lazy", True),
        )


def potential_bounds(cfg: WalkConfig, spec: EnvironmentSpec) -> tuple[float, float]:
    """(u_min, u_max) of the interaction over the mark support of ``spec``."""
    lo, hi = spec.marks.support
    return cfg.potential.bounds(lo, hi)


def weight_ratio_bound(cfg: WalkConfig, spec: EnvironmentSpec) -> float:
    """Uniform bound K with site_weight(i, inf) <= K * site_weight(i, 1).

    K = exp(u_max - u_min) / (1 - exp(-d (1 - bias))), from comparing each jump
    of length >= s*d against the nearest-neighbour jump.
    """
    u_min, u_max = potential_bounds(cfg, spec)
    d = spec.distance_floor
    return math.exp(u_max - u_min) / (1.0 - math.exp(-d * (1.0 - cfg.bias)))


def range_cutoff(cfg: WalkConfig, spec: EnvironmentSpec) -> int:
    """Smallest jump range s* beyond which per-site discarded rate mass is
    below ``tail_tol * site_weight(i, 1)`` uniformly over environments."""
    d = spec.distance_floor
    k = weight_ratio_bound(cfg, spec)
    s = math.ceil((math.log(k) - math.log(cfg.tail_tol)) / (d * (1.0 - cfg.bias)))
    return max(int(s), 1)


def effective_range(cfg: WalkConfig, spec: EnvironmentSpec) -> int:
    """Number of neighbour indices per side actually materialised."""
    s = range_cutoff(cfg, spec)
    return s if cfg.rho == math.inf else min(int(cfg.rho), s)


# ---------------------------------------------------------------------------
# rates / conductances / jump laws (reference implementations)
# ---------------------------------------------------------------------------


def jump_rate(env: Environment, cfg: WalkConfig, i: int, j: int) -> float:
    """r(i -> j) = exp(-|x_j - x_i| + bias (x_j - x_i) + u(E_i, E_j))."""
    if i == j:
        return 0.0
    dx = env.position(j) - env.position(i)
    u = cfg.potential.evaluate(env.mark(i), env.mark(j))
    return math.exp(-abs(dx) + cfg.bias * dx + float(u))


def conductance(env: Environment, cfg: WalkConfig, i: int, j: int) -> float:
    """c(i, j) = exp(2 bias x_i) r(i -> j); symmetric, zero on the diagonal."""
    if i == j:
        return 0.0
    return math.exp(2.0 * cfg.bias * env.position(i)) * jump_rate(env, cfg, i, j)


def _rate_row(env: Environment, cfg: WalkConfig, i: int, span: int) -> np.ndarray:
    """r(i -> i+o) for offsets o in [-span, span]; entry at o=0 is 0."""
    s = env.slot(i)
    if s - span < 0 or s + span >= env.n_sites:
        raise IndexError(
            f"site {i} needs neighbours up to distance {span}; window too small"
        )
    dx = env.positions[s - span : s + span + 1] - env.positions[s]
    u = cfg.potential.evaluate(env.marks[s], env.marks[s - span : s + span + 1])
    row = np.exp(-np.abs(dx) + cfg.bias * dx + np.asarray(u, dtype=float))
    row[span] = 0.0
    return row


def rate_mass(env: Environment, cfg: WalkConfig, i: int, rho: float | None = None) -> float:
    """Total jump rate out of ``i`` within range ``rho`` (default: the config's).

    Equal to ``site_weight(env, cfg, i, rho) * exp(-2 bias x_i)``; this gauge
    stays finite far from the origin where the raw weight would overflow.
    """
    rho = cfg.rho if rho is None else rho
    s_star = range_cutoff(cfg, spec=env.spec)
    span = s_star if rho == math.inf else min(int(rho), s_star)
    row = _rate_row(env, cfg, i, span)
    return float(row.sum())


def site_weight(env: Environment, cfg: WalkConfig, i: int, rho: float | None = None) -> float:
    """Total conductance attached to site ``i`` within range ``rho``.

    This is the reversible weight of the truncated walk.  Note it carries the
    factor exp(2 bias x_i), so it overflows for sites deep to the right; use
    :func:`rate_mass` for gauge-invariant work.
    """
    return math.exp(2.0 * cfg.bias * env.position(i)) * rate_mass(env, cfg, i, rho)


@dataclass(frozen=True)
class JumpLaw:
    """One-step law at a site: offsets, probabilities, and self-loop mass."""

    site: int
    offsets: np.ndarray
    probabilities: np.ndarray
    self_mass: float
    cutoff: int

    def mean_offset(self) -> float:
        return float(np.dot(self.offsets, self.probabilities))

    def mean_displacement(self, env: Environment) -> float:
        s = env.slot(self.site)
        dx = env.positions[s + self.offsets] - env.positions[s]
        return float(np.dot(dx, self.probabilities))


def jump_distribution(env: Environment, cfg: WalkConfig, i: int) -> JumpLaw:
    """The one-step law of the truncated walk at site ``i``.

    Finite ``rho`` (lazy): P(i -> i+o) = r(i->i+o) / rate_mass(i, inf) for
    0 < |o| <= rho, the rest as a self-loop.  ``rho = inf``: truncation at the
    cutoff s*, renormalised.  ``lazy=False``: renormalised at any ``rho``.
    """
    s_star = range_cutoff(cfg, env.spec)
    full = _rate_row(env, cfg, i, s_star)
    total = full.sum()
    span = s_star if cfg.rho == math.inf else min(int(cfg.rho), s_star)
    window = full[s_star - span : s_star + span + 1].copy()
    offsets = np.arange(-span, span + 1)
    if cfg.lazy and cfg.rho != math.inf:
        probs = window / total
        self_mass = float(1.0 - probs.sum())
    else:
        probs = window / window.sum()
        self_mass = 0.0
    keep = offsets != 0
    return JumpLaw(
        site=i,
        offsets=offsets[keep],
        probabilities=probs[keep],
        self_mass=self_mass,
        cutoff=s_star,
    )


def holding_rate(env: Environment, cfg: WalkConfig, i: int) -> float:
    """Continuous-time rate out of site ``i``: the full jump-rate mass."""
    return rate_mass(env, cfg, i, math.inf)
