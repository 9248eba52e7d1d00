"""Robot description, configuration space, metric, limits, and sampling."""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Default metric weights: 1 per newton, 1 per radian, 1 per 10 mm of
# retraction (mirrors the per-subspace discretization threshold ratio).
DEFAULT_WEIGHTS = (1.0, 1.0, 0.1)

# Default backbone material (soft elastomer-like rod).  Chosen so the
# shipped preset bends strongly but stably over its full tension range.
DEFAULT_YOUNGS_MODULUS = 5.0e6   # Pa
DEFAULT_POISSON_RATIO = 0.45


@dataclass(frozen=True)
class _StraightOffset:
    x: float
    y: float
    order: int  # 0 = offset, 1/2 = derivatives (identically zero)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (3,))
        if self.order == 0:
            out[..., 0] = self.x
            out[..., 1] = self.y
        return out


@dataclass(frozen=True)
class _HelicalOffset:
    d: float
    k: float
    phi: float
    order: int

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        ang = self.k * s + self.phi
        out = np.zeros(s.shape + (3,))
        scale = self.d * self.k ** self.order
        if self.order == 0:
            out[..., 0] = scale * np.cos(ang)
            out[..., 1] = scale * np.sin(ang)
        elif self.order == 1:
            out[..., 0] = -scale * np.sin(ang)
            out[..., 1] = scale * np.cos(ang)
        else:
            out[..., 0] = -scale * np.cos(ang)
            out[..., 1] = -scale * np.sin(ang)
        return out


@dataclass(frozen=True)
class TendonRouting:
    """Analytic tendon routing r(s) = [x(s), y(s), 0] in mm, with derivatives.

    The callables accept scalar or array arc lengths and return arrays with a
    trailing axis of size 3 (z component always zero).
    """

    offset_fn: object
    offset_deriv_fn: object
    offset_second_deriv_fn: object
    kind: str = "generic"
    params: tuple = ()

    @classmethod
    def straight(cls, x: float, y: float) -> "TendonRouting":
        return cls(
            _StraightOffset(x, y, 0),
            _StraightOffset(x, y, 1),
            _StraightOffset(x, y, 2),
            kind="straight",
            params=(float(x), float(y)),
        )

    @classmethod
    def helical(cls, d: float, pitch: float, phase: float) -> "TendonRouting":
        """Helix of radius d (mm), pitch in rad/mm, and base phase (rad)."""
        return cls(
            _HelicalOffset(d, pitch, phase, 0),
            _HelicalOffset(d, pitch, phase, 1),
            _HelicalOffset(d, pitch, phase, 2),
            kind="helical",
            params=(float(d), float(pitch), float(phase)),
        )

    def offset(self, s):
        return self.offset_fn(s)

    def offset_deriv(self, s):
        return self.offset_deriv_fn(s)

    def offset_second_deriv(self, s):
        return self.offset_second_deriv_fn(s)


def _check_spd(m: np.ndarray, name: str) -> None:
    if m.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3")
    if not np.allclose(m, m.T, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(m) <= 0):
        raise ValueError(f"{name} must be positive definite")


@dataclass(frozen=True)
class RobotSpec:
    """Physical description of one tendon-driven robot design.

    Geometry in mm, tensions in N, bend/twist stiffness in N*mm^2.
    """

    length: float
    radius: float
    tendons: tuple
    stiffness_shear_ext: np.ndarray
    stiffness_bend_twist: np.ndarray
    tension_limits: tuple
    length_limits: tuple
    integration_step: float

    def __post_init__(self):
        if self.length <= 0 or self.radius <= 0:
            raise ValueError("length and radius must be positive")
        if len(self.tendons) < 1:
            raise ValueError("need at least one tendon")
        if not (0 < self.integration_step <= self.length):
            raise ValueError("integration_step must be in (0, length]")
        object.__setattr__(self, "tendons", tuple(self.tendons))
        kse = np.array(self.stiffness_shear_ext, dtype=float)
        kbt = np.array(self.stiffness_bend_twist, dtype=float)
        kse.setflags(write=False)
        kbt.setflags(write=False)
        object.__setattr__(self, "stiffness_shear_ext", kse)
        object.__setattr__(self, "stiffness_bend_twist", kbt)
        _check_spd(kse, "stiffness_shear_ext")
        _check_spd(kbt, "stiffness_bend_twist")
        tl = tuple((float(lo), float(hi)) for lo, hi in self.tension_limits)
        ll = tuple((float(lo), float(hi)) for lo, hi in self.length_limits)
        object.__setattr__(self, "tension_limits", tl)
        object.__setattr__(self, "length_limits", ll)
        if len(tl) != len(self.tendons) or len(ll) != len(self.tendons):
            raise ValueError("per-tendon limit count mismatch")
        for lo, hi in tl:
            if lo < 0 or hi < lo:
                raise ValueError("tension limits must satisfy 0 <= min <= max")
        for lo, hi in ll:
            if not (lo < 0 < hi):
                raise ValueError("length limits must satisfy min < 0 < max")
        # tendons must be routed inside the body
        ss = np.linspace(0.0, self.length, 257)
        for t in self.tendons:
            r = np.atleast_2d(t.offset(ss))
            if np.any(np.hypot(r[..., 0], r[..., 1]) >= self.radius):
                raise ValueError("tendon routed outside the backbone radius")

    @property
    def num_tendons(self) -> int:
        return len(self.tendons)

    @property
    def config_dim(self) -> int:
        return self.num_tendons + 2

    @classmethod
    def from_material(
        cls,
        length: float,
        radius: float,
        tendons,
        tension_limits,
        length_limits,
        integration_step: float,
        youngs_modulus: float = DEFAULT_YOUNGS_MODULUS,
        poisson_ratio: float = DEFAULT_POISSON_RATIO,
    ) -> "RobotSpec":
        """Assemble diagonal stiffness from E (Pa) and the cross section.

        K_se = diag(GA, GA, EA) in N, K_bt = diag(EI, EI, GJ) in N*mm^2.
        """
        e_mm = youngs_modulus * 1e-6  # Pa -> N/mm^2
        g_mm = e_mm / (2.0 * (1.0 + poisson_ratio))
        area = math.pi * radius ** 2
        inertia = math.pi * radius ** 4 / 4.0
        kse = np.diag([g_mm * area, g_mm * area, e_mm * area])
        kbt = np.diag([e_mm * inertia, e_mm * inertia, g_mm * 2.0 * inertia])
        return cls(
            length=length,
            radius=radius,
            tendons=tuple(tendons),
            stiffness_shear_ext=kse,
            stiffness_bend_twist=kbt,
            tension_limits=tension_limits,
            length_limits=length_limits,
            integration_step=integration_step,
        )

    # -- serialization (human-readable key/value + per-tendon blocks) --

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write("format: tendonplan-robot-v1\n")
        buf.write(f"length_mm: {self.length!r}\n")
        buf.write(f"radius_mm: {self.radius!r}\n")
        buf.write(f"integration_step_mm: {self.integration_step!r}\n")
        kse = " ".join(repr(float(x)) for x in self.stiffness_shear_ext.ravel())
        kbt = " ".join(repr(float(x)) for x in self.stiffness_bend_twist.ravel())
        buf.write(f"stiffness_shear_ext: {kse}\n")
        buf.write(f"stiffness_bend_twist: {kbt}\n")
        for t, tlim, llim in zip(self.tendons, self.tension_limits, self.length_limits):
            if t.kind not in ("straight", "helical"):
                raise ValueError("only straight/helical routings serialize")
            buf.write("[tendon]\n")
            buf.write(f"kind: {t.kind}\n")
            buf.write("params: " + " ".join(repr(x) for x in t.params) + "\n")
            buf.write(f"tension_limit_n: {tlim[0]!r} {tlim[1]!r}\n")
            buf.write(f"length_limit_mm: {llim[0]!r} {llim[1]!r}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "RobotSpec":
        fields: dict = {}
        tendons: list = []
        cur = fields
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[tendon]":
                cur = {}
                tendons.append(cur)
                continue
            key, _, val = line.partition(":")
            cur[key.strip()] = val.strip()
        if fields.get("format") != "tendonplan-robot-v1":
            raise ValueError("unrecognized robot file format")
        routings = []
        tlims = []
        llims = []
        for t in tendons:
            params = tuple(float(x) for x in t["params"].split())
            if t["kind"] == "straight":
                routings.append(TendonRouting.straight(*params))
            elif t["kind"] == "helical":
                routings.append(TendonRouting.helical(*params))
            else:
                raise ValueError(f"unknown tendon kind {t['kind']!r}")
            tlims.append(tuple(float(x) for x in t["tension_limit_n"].split()))
            llims.append(tuple(float(x) for x in t["length_limit_mm"].split()))
        kse = np.array([float(x) for x in fields["stiffness_shear_ext"].split()]).reshape(3, 3)
        kbt = np.array([float(x) for x in fields["stiffness_bend_twist"].split()]).reshape(3, 3)
        return cls(
            length=float(fields["length_mm"]),
            radius=float(fields["radius_mm"]),
            tendons=tuple(routings),
            stiffness_shear_ext=kse,
            stiffness_bend_twist=kbt,
            tension_limits=tuple(tlims),
            length_limits=tuple(llims),
            integration_step=float(fields["integration_step_mm"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "RobotSpec":
        with open(path) as f:
            return cls.loads(f.read())

    def content_hash(self) -> int:
        digest = hashlib.sha256(self.dumps().encode()).digest()
        return int.from_bytes(digest[:8], "little")

    def analytic_routing(self):
        """(kinds, params) arrays when every routing is straight/helical,
        else None.  Enables the JIT forward-kinematics fast path."""
        cached = getattr(self, "_analytic_routing", False)
        if cached is not False:
            return cached
        kinds = np.empty(self.num_tendons, dtype=np.int64)
        params = np.zeros((self.num_tendons, 3))
        result = (kinds, params)
        for i, t in enumerate(self.tendons):
            if t.kind == "straight":
                kinds[i] = 0
                params[i, :2] = t.params
            elif t.kind == "helical":
                kinds[i] = 1
                params[i, :] = t.params
            else:
                result = None
                break
        object.__setattr__(self, "_analytic_routing", result)
        return result


def evaluation_preset(
    youngs_modulus: float = DEFAULT_YOUNGS_MODULUS,
    poisson_ratio: float = DEFAULT_POISSON_RATIO,
) -> RobotSpec:
    """The 120 mm three-tendon robot used throughout the benchmarks.

    One straight tendon plus two oppositely-wrapped helical tendons, all at
    2.5 mm from the backbone center; helix pitch 0.05 rad/mm; helices 180
    degrees apart at the base with the straight tendon midway between them
    (on the side away from the helices' first crossing).
    """
    d = 2.5
    pitch = 0.05
    tendons = (
        TendonRouting.helical(d, pitch, 0.0),
        TendonRouting.helical(d, -pitch, math.pi),
        TendonRouting.straight(0.0, -d),
    )
    return RobotSpec.from_material(
        length=120.0,
        radius=3.0,
        tendons=tendons,
        tension_limits=((0.0, 3.5),) * 3,
        length_limits=((-27.0, 46.0), (-27.0, 46.0), (-29.0, 48.0)),
        integration_step=0.59,
        youngs_modulus=youngs_modulus,
        poisson_ratio=poisson_ratio,
    )


@dataclass(frozen=True)
class Configuration:
    """One point in Q: tendon tensions (N), base rotation (rad), retraction (mm)."""

    tensions: tuple
    rotation: float
    retraction: float

    def __post_init__(self):
        object.__setattr__(self, "tensions", tuple(float(t) for t in self.tensions))
        object.__setattr__(self, "rotation", float(self.rotation) % TWO_PI)
        object.__setattr__(self, "retraction", float(self.retraction))
        if self.retraction < 0:
            raise ValueError("retraction must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array(self.tensions + (self.rotation, self.retraction))

    @classmethod
    def from_array(cls, arr) -> "Configuration":
        arr = np.asarray(arr, dtype=float)
        return cls(tuple(arr[:-2]), arr[-2], arr[-1])

    def key(self) -> tuple:
        return self.tensions + (self.rotation, self.retraction)


def wrap_angle_diff(a: float, b: float) -> float:
    """Shortest-arc difference a-b, in [-pi, pi]."""
    d = (a - b) % TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


def config_distance(a: Configuration, b: Configuration, weights=DEFAULT_WEIGHTS) -> float:
    """Weighted Euclidean metric over (tensions, wrapped rotation, retraction)."""
    if len(a.tensions) != len(b.tensions):
        raise ValueError("configuration dimension mismatch")
    w_t, w_rot, w_ret = weights
    dt = np.subtract(a.tensions, b.tensions)
    drot = wrap_angle_diff(a.rotation, b.rotation)
    dret = a.retraction - b.retraction
    return math.sqrt(
        float(np.dot(dt, dt)) * w_t ** 2
        + (w_rot * drot) ** 2
        + (w_ret * dret) ** 2
    )


def interpolate_config(a: Configuration, b: Configuration, t: float) -> Configuration:
    """Linear interpolation with shortest-arc rotation blending."""
    ta = np.asarray(a.tensions)
    tb = np.asarray(b.tensions)
    rot = a.rotation + t * wrap_angle_diff(b.rotation, a.rotation)
    return Configuration(
        tuple(ta + t * (tb - ta)),
        rot,
        a.retraction + t * (b.retraction - a.retraction),
    )


def sample_config(rng: np.random.Generator, spec: RobotSpec) -> Configuration:
    """Uniform tensions/rotation; inserted length drawn as ell * u^(1/3).

    The cube-root transform makes the inserted-length CDF match that of the
    radius of a uniform sample in a ball, spreading samples away from the
    insertion point.
    """
    tensions = tuple(
        rng.uniform(lo, hi) for lo, hi in spec.tension_limits
    )
    rotation = rng.uniform(0.0, TWO_PI)
    inserted = spec.length * rng.uniform(0.0, 1.0) ** (1.0 / 3.0)
    return Configuration(tensions, rotation, spec.length - inserted)


def tensions_within_limits(q: Configuration, spec: RobotSpec) -> bool:
    for tau, (lo, hi) in zip(q.tensions, spec.tension_limits):
        if not (lo <= tau <= hi):
            return False
    return 0.0 <= q.retraction <= spec.length


def node_arclengths(spec: RobotSpec, retraction: float) -> np.ndarray:
    """Integration node arc lengths from the insertion point to the tip.

    Fixed step, with the final step shortened so the last node lands
    exactly at s = length.
    """
    span = spec.length - retraction
    if span <= 0:
        return np.array([spec.length])
    n_steps = max(1, math.ceil(span / spec.integration_step - 1e-12))
    sv = retraction + spec.integration_step * np.arange(n_steps + 1)
    sv[-1] = spec.length
    return sv


def zero_tension_tendon_lengths(spec: RobotSpec, retraction: float) -> np.ndarray:
    """Tendon path lengths along the straight (zero-tension) shape.

    Accumulated over the same node grid the FK solver uses, so the two are
    directly comparable.
    """
    sv = node_arclengths(spec, retraction)
    routing = spec.analytic_routing()
    if routing is not None:
        from .kinematics import _rod_core
        return _rod_core.straight_tendon_lengths(sv, routing[0], routing[1])
    out = np.empty(spec.num_tendons)
    for i, t in enumerate(spec.tendons):
        pts = t.offset(sv)
        pts = pts + np.stack([np.zeros_like(sv), np.zeros_like(sv), sv], axis=-1)
        out[i] = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    return out


def within_limits(q: Configuration, shape, spec: RobotSpec) -> bool:
    """Tension limits plus per-tendon length-change limits.

    Length change is the routed path length of the computed shape minus the
    zero-tension path length at the same retraction.
    """
    if not tensions_within_limits(q, spec):
        return False
    ref = zero_tension_tendon_lengths(spec, q.retraction)
    delta = np.asarray(shape.tendon_lengths) - ref
    for d, (lo, hi) in zip(delta, spec.length_limits):
        if not (lo <= d <= hi):
            return False
    return True
