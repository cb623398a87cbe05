"""Random marked point processes on the line.

An environment is a two-sided sequence of points ``x_k`` with marks ``E_k``,
where the gaps ``Z_k = x_{k+1} - x_k`` come from one of four stationary ergodic
families and the marks are i.i.d., independent of the gaps.  Environments are
immutable windows onto an infinite object: the gap/mark fields are pure functions
of ``(seed, index)``, so extending a window regenerates — bit for bit — exactly
what a larger initial window would have produced.

Families
--------
``constant_lattice``      Z_k = d              (params: ``d``)
``renewal_iid``           Z_k = d + Exp(rate)  (params: ``d``, ``rate``)
``markov_velocino``       Z_k = gamma_mc * S_k for a birth-death chain S on
                          {1,2,...} with up-probability ``p`` (params: ``p``,
                          ``gamma_mc``)
``heavy_tail_sorpresa``   density ∝ exp(-(gamma_tail-1) z) z^{-2} on [1, ∞)
                          (params: ``gamma_tail``)

All gaps are bounded below by a deterministic floor ``d > 0`` (equal to 1 for the
velocino and heavy-tail families), which the long-range jump kernel relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numba import njit
from scipy import special

from ._rng import BLOCK, TAG_CHAIN, TAG_GAP, TAG_MARK, block_values, mix64, substream

FAMILIES = ("constant_lattice", "renewal_iid", "markov_velocino", "heavy_tail_sorpresa")

_REQUIRED_PARAMS = {
    "constant_lattice": ("d",),
    "renewal_iid": ("d", "rate"),
    "markov_velocino": ("p", "gamma_mc"),
    "heavy_tail_sorpresa": ("gamma_tail",),
}


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkLaw:
    """Law of the i.i.d. site marks.

    ``kind="zero"`` pins every mark to 0; ``kind="uniform"`` draws marks
    uniformly from ``[-amplitude, amplitude]``.
    """

    kind: str = "zero"
    amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "uniform"):
            raise ValueError(f"unknown mark law {self.kind!r}")
        if self.kind == "uniform" and not self.amplitude > 0:
            raise ValueError("uniform marks need amplitude > 0")
        if self.kind == "zero" and self.amplitude != 0.0:
            raise ValueError("zero marks cannot carry an amplitude")

    @property
    def support(self) -> tuple[float, float]:
        a = float(self.amplitude)
        return (-a, a)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(n)
        return rng.uniform(-self.amplitude, self.amplitude, n)

    def to_json(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        return {"kind": "uniform", "amplitude": self.amplitude}

    @classmethod
    def from_json(cls, obj: Mapping) -> "MarkLaw":
        return cls(kind=obj.get("kind", "zero"), amplitude=obj.get("amplitude", 0.0))


@dataclass(frozen=True)
class EnvironmentSpec:
    """Family + parameters + mark law; everything but the seed."""

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    marks: MarkLaw = field(default_factory=MarkLaw)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "params", dict(self.params))
        missing = [k for k in _REQUIRED_PARAMS[self.family] if k not in self.params]
        if missing:
            raise ValueError(f"{self.family} missing params {missing}")
        extra = set(self.params) - set(_REQUIRED_PARAMS[self.family])
        if extra:
            raise ValueError(f"{self.family} got unexpected params {sorted(extra)}")
        p = self.params
        if self.family == "constant_lattice":
            if not p["d"] > 0:
                raise ValueError("constant_lattice needs d > 0")
        elif self.family == "renewal_iid":
            if not (p["d"] > 0 and p["rate"] > 0):
                raise ValueError("renewal_iid needs d > 0 and rate > 0")
        elif self.family == "markov_velocino":
            if not (0 < p["p"] < 0.5):
                raise ValueError("markov_velocino needs 0 < p < 1/2")
            if not p["gamma_mc"] >= 1:
                raise ValueError("markov_velocino needs gamma_mc >= 1")
        elif self.family == "heavy_tail_sorpresa":
            if not (1 < p["gamma_tail"] < 2):
                raise ValueError("heavy_tail_sorpresa needs 1 < gamma_tail < 2")

    @property
    def distance_floor(self) -> float:
        """Deterministic lower bound d > 0 for every gap."""
        if self.family in ("constant_lattice", "renewal_iid"):
            return float(self.params["d"])
        if self.family == "markov_velocino":
            return float(self.params["gamma_mc"])
        return 1.0

    def to_json(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "marks": self.marks.to_json()}

    @classmethod
    def from_json(cls, obj: Mapping) -> "EnvironmentSpec":
        return cls(
            family=obj["family"],
            params=obj.get("params", {}),
            marks=MarkLaw.from_json(obj.get("marks", {"kind": "zero"})),
        )


# ---------------------------------------------------------------------------
# analytic gap moments
# ---------------------------------------------------------------------------


def gap_exp_moment(spec: EnvironmentSpec, theta: float) -> float:
    """E[exp(theta * Z_0)] under the stationary gap law; ``inf`` when divergent."""
    p = spec.params
    if spec.family == "constant_lattice":
        return math.exp(theta * p["d"])
    if spec.family == "renewal_iid":
        mu = p["rate"]
        if theta >= mu:
            return math.inf
        return math.exp(theta * p["d"]) * mu / (mu - theta)
    if spec.family == "markov_velocino":
        r = p["p"] / (1 - p["p"])
        g = p["gamma_mc"]
        x = r * math.exp(theta * g)
        if x >= 1:
            return math.inf
        return (1 - r) * math.exp(theta * g) / (1 - x)
    # heavy tail: ∫_1^∞ c e^{θz} e^{-(γ-1)z} z^{-2} dz, c the normaliser
    gt = p["gamma_tail"]
    a = (gt - 1.0) - theta
    if a < 0:
        return math.inf
    return _truncated_pareto_integral(a) / _truncated_pareto_integral(gt - 1.0)


def _truncated_pareto_integral(a: float) -> float:
    """∫_1^∞ z^{-2} e^{-a z} dz = e^{-a} - a * E1(a)  (a >= 0)."""
    if a == 0.0:
        return 1.0
    return math.exp(-a) - a * float(special.exp1(a))


def mean_gap(spec: EnvironmentSpec) -> float:
    """E[Z_0] under the stationary gap law."""
    p = spec.params
    if spec.family == "constant_lattice":
        return float(p["d"])
    if spec.family == "renewal_iid":
        return p["d"] + 1.0 / p["rate"]
    if spec.family == "markov_velocino":
        r = p["p"] / (1 - p["p"])
        return p["gamma_mc"] / (1 - r)
    gt = p["gamma_tail"]
    b = gt - 1.0
    # E[Z] = c ∫ z^{-1} e^{-b z} dz = c * E1(b)
    return float(special.exp1(b)) / _truncated_pareto_integral(b)


# ---------------------------------------------------------------------------
# gap-field generation
# ---------------------------------------------------------------------------


def sample_heavy_tail_gap(
    gamma_tail: float, rng: np.random.Generator, size: int | None = None
):
    """Draw from the density ∝ exp(-(gamma_tail-1) z) z^{-2} on [1, ∞).

    Rejection from the proposal 1 + Exp(gamma_tail - 1), acceptance 1/z²; the
    exponential factors match, so accepted draws follow the target exactly.
    """
    if not 1 < gamma_tail < 2:
        raise ValueError("need 1 < gamma_tail < 2")
    n = 1 if size is None else int(size)
    out = np.empty(n)
    need = np.arange(n)
    scale = 1.0 / (gamma_tail - 1.0)
    while need.size:
        z = 1.0 + rng.exponential(scale, need.size)
        accept = rng.random(need.size) * z * z <= 1.0
        out[need[accept]] = z[accept]
        need = need[~accept]
    return float(out[0]) if size is None else out


@njit(cache=True)
def _velocino_states(u: np.ndarray, idx0: int, p: float) -> np.ndarray:
    """Run the gap chain over uniforms ``u`` (absolute index idx0 at slot idx0).

    Slot ``idx0`` seeds the chain from its stationary law; slots above evolve
    forward, slots below evolve backward with the same (reversible) kernel.
    """
    n = u.shape[0]
    s = np.empty(n, dtype=np.int64)
    r = p / (1.0 - p)
    # stationary: P(S = k) = (1-r) r^{k-1}
    s[idx0] = int(math.floor(math.log(1.0 - u[idx0]) / math.log(r))) + 1
    for k in range(idx0 + 1, n):
        prev = s[k - 1]
        if u[k] < p:
            s[k] = prev + 1
        elif prev > 1:
            s[k] = prev - 1
        else:
            s[k] = 1
    for k in range(idx0 - 1, -1, -1):
        nxt = s[k + 1]
        if u[k] < p:
            s[k] = nxt + 1
        elif nxt > 1:
            s[k] = nxt - 1
        else:
            s[k] = 1
    return s


def _gap_field(spec: EnvironmentSpec, seed: int, lo: int, hi: int) -> np.ndarray:
    """Gaps Z_k for absolute indices ``lo <= k < hi`` (pure in (spec, seed, k))."""
    if hi <= lo:
        return np.empty(0)
    p = spec.params
    if spec.family == "constant_lattice":
        return np.full(hi - lo, float(p["d"]))
    if spec.family == "renewal_iid":
        d, rate = p["d"], p["rate"]
        return block_values(
            seed, TAG_GAP, lo, hi, lambda rng, n: d + rng.exponential(1.0 / rate, n)
        )
    if spec.family == "heavy_tail_sorpresa":
        gt = p["gamma_tail"]
        return block_values(
            seed, TAG_GAP, lo, hi, lambda rng, n: sample_heavy_tail_gap(gt, rng, n)
        )
    # markov_velocino: the chain couples neighbouring gaps, so materialise the
    # per-index uniforms from index 0 outward and walk the kernel.  Values for
    # index k then depend only on (seed, uniforms[min(k,0)..max(k,0)]), which is
    # window independent.
    a, b = min(lo, 0), max(hi, 1)
    b0, b1 = a // BLOCK, (b - 1) // BLOCK
    u = np.concatenate(
        [substream(seed, TAG_GAP, blk).random(BLOCK) for blk in range(b0, b1 + 1)]
    )
    states = _velocino_states(u, -b0 * BLOCK, p["p"])
    out = states[lo - b0 * BLOCK : hi - b0 * BLOCK].astype(float) * p["gamma_mc"]
    return out


def _mark_field(spec: EnvironmentSpec, seed: int, lo: int, hi: int) -> np.ndarray:
    return block_values(seed, TAG_MARK, lo, hi, lambda rng, n: spec.marks.sample(rng, n))


# ---------------------------------------------------------------------------
# environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    """A window ``[kmin, kmax]`` (site indices) onto one realisation.

    ``positions[k - kmin]`` is x_k with x_0 = 0, ``marks[k - kmin]`` is E_k, and
    ``gaps[k - kmin]`` is Z_k = x_{k+1} - x_k for k < kmax.  Gaps are the
    primitive random field (exact under window extension and shifts); positions
    are accumulated from them outward from site 0.  ``origin`` is the absolute
    index of local site 0 in the underlying realisation; it is 0 for freshly
    built environments and moves under :func:`shift_environment`.
    """

    spec: EnvironmentSpec
    seed: int
    kmin: int
    kmax: int
    positions: np.ndarray
    marks: np.ndarray
    gaps: np.ndarray
    origin: int = 0

    @property
    def n_sites(self) -> int:
        return self.kmax - self.kmin + 1

    def slot(self, k: int) -> int:
        """Array index of site ``k``."""
        if not self.kmin <= k <= self.kmax:
            raise IndexError(f"site {k} outside window [{self.kmin}, {self.kmax}]")
        return k - self.kmin

    def position(self, k: int) -> float:
        return float(self.positions[self.slot(k)])

    def mark(self, k: int) -> float:
        return float(self.marks[self.slot(k)])


def _positions_from_gaps(gaps: np.ndarray, kmin: int) -> np.ndarray:
    """Positions anchored at x_0 = 0, accumulated outward from site 0.

    Summation always runs away from the anchor on each side, so the floating
    point values at a given site do not depend on the window size.
    """
    i0 = -kmin
    right = np.cumsum(gaps[i0:])
    left = -np.cumsum(gaps[:i0][::-1])[::-1]
    return np.concatenate([left, [0.0], right])


def build_environment(
    spec: EnvironmentSpec, seed: int, window: tuple[int, int] = (-256, 256)
) -> Environment:
    """Materialise sites ``window[0] .. window[1]`` (must straddle 0)."""
    kmin, kmax = int(window[0]), int(window[1])
    if not (kmin <= 0 <= kmax and kmin < kmax):
        raise ValueError(f"window {window} must contain site 0 and be nonempty")
    return _materialise(spec, int(seed), kmin, kmax, origin=0)


def _materialise(
    spec: EnvironmentSpec, seed: int, kmin: int, kmax: int, origin: int
) -> Environment:
    a, b = origin + kmin, origin + kmax
    gaps = _gap_field(spec, seed, a, b)  # Z for absolute indices [a, b)
    marks = _mark_field(spec, seed, a, b + 1)
    positions = _positions_from_gaps(gaps, kmin)
    positions.setflags(write=False)
    marks.setflags(write=False)
    gaps.setflags(write=False)
    return Environment(
        spec=spec, seed=seed, kmin=kmin, kmax=kmax,
        positions=positions, marks=marks, gaps=gaps, origin=origin,
    )


def extend_window(env: Environment, window: tuple[int, int]) -> Environment:
    """Return the same realisation on a superset window.

    Values previously exposed are reproduced exactly; shrinking is rejected.
    """
    kmin, kmax = int(window[0]), int(window[1])
    if kmin > env.kmin or kmax < env.kmax:
        raise ValueError(
            f"window {window} does not contain current [{env.kmin}, {env.kmax}]"
        )
    if (kmin, kmax) == (env.kmin, env.kmax):
        return env
    return _materialise(env.spec, env.seed, kmin, kmax, env.origin)


def shift_environment(env: Environment, ell: int) -> Environment:
    """Re-centre the environment at site ``ell``: Z'_k = Z_{k+ell}.

    The new window covers the same absolute sites, re-indexed and re-anchored so
    that the new site 0 (old site ``ell``) sits at position 0; it is widened if
    needed so that 0 stays inside.  Shifts compose: shifting by ``a`` then ``b``
    equals shifting by ``a + b``.
    """
    ell = int(ell)
    new_kmin = min(env.kmin - ell, 0)
    new_kmax = max(env.kmax - ell, 0)
    return _materialise(env.spec, env.seed, new_kmin, new_kmax, env.origin + ell)


def fresh_seed(master_seed: int, *key: int) -> int:
    """Derive an independent environment seed from a master seed and a key."""
    return mix64(master_seed, 0x656E7673, *key)
