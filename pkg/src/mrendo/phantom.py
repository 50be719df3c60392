"""Ventricular phantom geometry, collision queries, reachable workspace.

The world is a single imaging slice: a 2D plane (coordinates in mm)
embedded in the scanner frame.  Wall polygons bound the CSF spaces, the
entry pose fixes where the endoscope enters and at what angle to B0, and a
tumor disc marks the navigation target.  Map files use the versioned
"phantom/1" JSON schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import MultiPoint, Point, Polygon

from .coils import CoilSpec, MagneticEnvironment
from .config import ConfigError
from .control import solve_tip_load
from .rod import FramePose, InvalidParameterError, RodParams

PHANTOM_SCHEMA = "phantom/1"


@dataclass(frozen=True, eq=False)
class SliceFrame:
    """Embedding of the slice plane (mm coordinates) into the inertial frame (m)."""

    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    v_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        for name in ("origin", "u_axis", "v_axis"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if abs(np.dot(self.u_axis, self.v_axis)) > 1e-9:
            raise ConfigError("slice_frame axes must be orthogonal")

    def to_world(self, uv_mm) -> np.ndarray:
        uv = np.asarray(uv_mm, dtype=float)
        offset = uv[..., 0:1] * self.u_axis + uv[..., 1:2] * self.v_axis \
            if uv.ndim > 1 else uv[0] * self.u_axis + uv[1] * self.v_axis
        return self.origin + 1e-3 * offset

    def to_slice(self, p_world) -> np.ndarray:
        p = np.asarray(p_world, dtype=float) - self.origin
        return 1e3 * np.stack([p @ self.u_axis, p @ self.v_axis], axis=-1)

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.v_axis, self.u_axis)


@dataclass(frozen=True, eq=False)
class PhantomMap:
    """Immutable slice-plane world; queries are pure and thread-safe."""

    wall_polygons: list[np.ndarray]       # each (K, 2) closed implicitly, mm
    entry_position: np.ndarray            # (2,) mm
    entry_heading: float                  # rad relative to B0
    tumor_center: np.ndarray              # (2,) mm
    tumor_radius: float                   # mm
    slice_frame: SliceFrame = field(default_factory=SliceFrame)
    name: str = "phantom"

    def __post_init__(self):
        object.__setattr__(self, "wall_polygons",
                           [np.asarray(p, dtype=float).reshape(-1, 2) for p in self.wall_polygons])
        object.__setattr__(self, "entry_position", np.asarray(self.entry_position, dtype=float).reshape(2))
        object.__setattr__(self, "tumor_center", np.asarray(self.tumor_center, dtype=float).reshape(2))
        if self.tumor_radius <= 0.0:
            raise ConfigError("tumor radius must be > 0")
        for i, poly in enumerate(self.wall_polygons):
            if len(poly) < 3:
                raise ConfigError(f"wall_polygons[{i}]: needs at least 3 vertices")
            if not Polygon(poly).is_simple:
                raise ConfigError(f"wall_polygons[{i}]: polygon is self-intersecting")
        if not any(Polygon(p).contains(Point(self.tumor_center)) for p in self.wall_polygons):
            raise ConfigError("tumor center must lie inside a ventricle polygon")

    def entry_frame(self) -> FramePose:
        """3D control frame at the entry pose.

        Local +z is the entry tangent, local +y the slice normal, so
        azimuth-0 bends stay in the imaging plane.
        """
        sf = self.slice_frame
        tangent = np.sin(self.entry_heading) * sf.u_axis + np.cos(self.entry_heading) * sf.v_axis
        y_local = sf.normal
        x_local = np.cross(y_local, tangent)
        R = np.column_stack([x_local, y_local, tangent])
        return FramePose(origin=sf.to_world(self.entry_position), rotation=R, label="control")

    def edges(self):
        for poly in self.wall_polygons:
            for k in range(len(poly)):
                yield poly[k], poly[(k + 1) % len(poly)]


@dataclass(frozen=True)
class InsertionState:
    inserted_length: float    # m
    max_insertion: float      # m

    def __post_init__(self):
        if not 0.0 <= self.inserted_length <= self.max_insertion:
            raise InvalidParameterError("insertion length outside [0, max_insertion]")


@dataclass(frozen=True, eq=False)
class CollisionReport:
    collided: bool
    rod_segment: int | None = None
    point: np.ndarray | None = None
    segment_fraction: float = 0.0


def _segment_edge_intersection(p0, p1, q0, q1):
    """Parametric fraction t along p0->p1 of the earliest crossing, or None.

    Endpoint contact counts as a hit.  Collinear overlap reports the
    smallest overlapping fraction.
    """
    r = (p1[0] - p0[0], p1[1] - p0[1])
    s = (q1[0] - q0[0], q1[1] - q0[1])
    denom = r[0] * s[1] - r[1] * s[0]
    qp = (q0[0] - p0[0], q0[1] - p0[1])
    if denom == 0.0:
        if qp[0] * r[1] - qp[1] * r[0] != 0.0:
            return None
        rr = r[0] * r[0] + r[1] * r[1]
        if rr == 0.0:
            return None
        t0 = (qp[0] * r[0] + qp[1] * r[1]) / rr
        t1 = t0 + (s[0] * r[0] + s[1] * r[1]) / rr
        lo, hi = min(t0, t1), max(t0, t1)
        if hi < 0.0 or lo > 1.0:
            return None
        return max(lo, 0.0)
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
        return t
    return None


def collide(rod_polyline_mm, phantom: PhantomMap) -> CollisionReport:
    """Earliest contact (by arc order) of the rod polyline with any wall edge.

    Zero-length rod segments are skipped.  Vectorized over wall edges; the
    math matches the all-pairs scalar test exactly.
    """
    pts = np.asarray(rod_polyline_mm, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise InvalidParameterError("rod polyline needs at least 2 points")
    edges = [(q0, q1) for q0, q1 in phantom.edges()]
    q0s = np.array([e[0] for e in edges])
    q1s = np.array([e[1] for e in edges])
    s_vec = q1s - q0s
    for i in range(len(pts) - 1):
        p0, p1 = pts[i], pts[i + 1]
        r = p1 - p0
        if r[0] == 0.0 and r[1] == 0.0:
            continue
        qp = q0s - p0
        denom = r[0] * s_vec[:, 1] - r[1] * s_vec[:, 0]
        best_t = None
        nonpar = denom != 0.0
        if nonpar.any():
            t = (qp[nonpar, 0] * s_vec[nonpar, 1] - qp[nonpar, 1] * s_vec[nonpar, 0]) / denom[nonpar]
            u = (qp[nonpar, 0] * r[1] - qp[nonpar, 1] * r[0]) / denom[nonpar]
            hits = (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
            if hits.any():
                best_t = float(t[hits].min())
        for j in np.nonzero(~nonpar)[0]:
            t_par = _segment_edge_intersection(p0, p1, q0s[j], q1s[j])
            if t_par is not None and (best_t is None or t_par < best_t):
                best_t = t_par
        if best_t is not None:
            return CollisionReport(collided=True, rod_segment=i,
                                   point=p0 + best_t * r, segment_fraction=best_t)
    return CollisionReport(collided=False)


def tumor_reached(tip_mm, heading: float, phantom: PhantomMap,
                  capture_distance: float) -> bool:
    """True iff the tip is within tumor radius + capture distance (inclusive)."""
    if capture_distance <= 0.0:
        raise InvalidParameterError("capture_distance must be > 0")
    del heading  # reach is a pure proximity test; pose is reported elsewhere
    d = float(np.linalg.norm(np.asarray(tip_mm, dtype=float) - phantom.tumor_center))
    return d <= phantom.tumor_radius + capture_distance


@dataclass(frozen=True, eq=False)
class WorkspaceResult:
    coil_names: tuple[str, str]
    currents: np.ndarray        # (M, 2) A
    tip_points: np.ndarray      # (M, 2) slice mm
    bend_angles: np.ndarray     # (M,) rad
    powers: np.ndarray          # (M,) W
    boundary: np.ndarray        # (K, 2) hull polygon, slice mm
    max_bend: float
    diagnostic: str = ""

    @property
    def empty(self) -> bool:
        return len(self.tip_points) == 0


def compute_workspace(rod: RodParams, coils: list[CoilSpec],
                      env: MagneticEnvironment, insertion: InsertionState,
                      current_cap: float, power_cap: float, grid: int,
                      phantom: PhantomMap, grid_span: float | None = None) -> WorkspaceResult:
    """Reachable tip region over a current grid at one insertion depth.

    Sweeps the axial coil against the most bend-effective saddle over a
    symmetric grid, keeps samples inside the per-coil and power caps, and
    integrates the forward model per sample.  With `grid_span` fixed, a
    larger cap strictly enlarges the admitted sample set, so the region is
    monotone under cap growth.
    """
    if grid < 8:
        raise InvalidParameterError("grid must be >= 8")
    if current_cap < 0.0 or power_cap <= 0.0:
        raise InvalidParameterError("caps must be positive")
    entry = phantom.entry_frame()
    base = FramePose(entry.origin + insertion.inserted_length * entry.tangent,
                     entry.rotation, label="control")
    rest = entry.rotation
    axial = [c for c in coils if c.kind == "axial"]
    saddles = [c for c in coils if c.kind == "saddle"]
    if not axial or not saddles:
        raise InvalidParameterError("workspace sweep needs an axial and a saddle coil")

    def rest_torque_per_amp(coil):
        return np.cross(rest @ (coil.moment_per_amp * coil.moment_axis), env.b0)

    saddle = max(saddles, key=lambda c: np.linalg.norm(rest_torque_per_amp(c)))
    pair = (axial[0], saddle)
    span = current_cap if grid_span is None else grid_span
    axes = [np.linspace(-min(span, c.current_limit), min(span, c.current_limit), grid)
            for c in pair]
    t_cols = [rest_torque_per_amp(c) for c in pair]
    resistances = [c.resistance for c in pair]

    currents, tips, bends, powers = [], [], [], []
    for ia in axes[0]:
        for isad in axes[1]:
            if abs(ia) > current_cap or abs(isad) > current_cap:
                continue
            power = ia * ia * resistances[0] + isad * isad * resistances[1]
            if power > power_cap:
                continue
            torque = ia * t_cols[0] + isad * t_cols[1]
            state = solve_tip_load(rod, base, np.zeros(3), torque)
            currents.append((ia, isad))
            tips.append(phantom.slice_frame.to_slice(state.positions[-1]))
            bends.append(state.bend_angle(base))
            powers.append(power)
    if not currents:
        return WorkspaceResult(
            coil_names=(pair[0].name, pair[1].name),
            currents=np.zeros((0, 2)), tip_points=np.zeros((0, 2)),
            bend_angles=np.zeros(0), powers=np.zeros(0),
            boundary=np.zeros((0, 2)), max_bend=0.0,
            diagnostic="no feasible grid sample within the given caps")
    tips = np.asarray(tips)
    unique = np.unique(np.round(tips, 9), axis=0)
    if len(unique) >= 3:
        hull = shapely.concave_hull(MultiPoint(unique.tolist()), ratio=0.4)
        if hull.geom_type != "Polygon":
            hull = MultiPoint(unique.tolist()).convex_hull
        boundary = (np.asarray(hull.exterior.coords)
                    if hull.geom_type == "Polygon" else unique)
    else:
        boundary = unique
    return WorkspaceResult(
        coil_names=(pair[0].name, pair[1].name),
        currents=np.asarray(currents),
        tip_points=tips,
        bend_angles=np.asarray(bends),
        powers=np.asarray(powers),
        boundary=boundary,
        max_bend=float(np.max(bends)),
    )


def parse_phantom(doc: dict, name: str = "phantom") -> PhantomMap:
    if not isinstance(doc, dict):
        raise ConfigError("phantom document must be a JSON object")
    if doc.get("schema") != PHANTOM_SCHEMA:
        raise ConfigError(
            f"unsupported phantom schema {doc.get('schema')!r}, expected {PHANTOM_SCHEMA!r}")
    for key in ("wall_polygons", "entry", "tumor"):
        if key not in doc:
            raise ConfigError(f"phantom: missing required field {key!r}")
    entry = doc["entry"]
    tumor = doc["tumor"]
    sf_doc = doc.get("slice_frame", {})
    sf = SliceFrame(
        origin=np.asarray(sf_doc.get("origin", [0.0, 0.0, 0.0]), dtype=float),
        u_axis=np.asarray(sf_doc.get("u_axis", [1.0, 0.0, 0.0]), dtype=float),
        v_axis=np.asarray(sf_doc.get("v_axis", [0.0, 0.0, 1.0]), dtype=float),
    )
    try:
        return PhantomMap(
            wall_polygons=[np.asarray(p, dtype=float) for p in doc["wall_polygons"]],
            entry_position=np.asarray(entry.get("position_mm", [0.0, 0.0]), dtype=float),
            entry_heading=np.deg2rad(float(entry.get("heading_deg", 90.0))),
            tumor_center=np.asarray(tumor["center_mm"], dtype=float),
            tumor_radius=float(tumor["radius_mm"]),
            slice_frame=sf,
            name=doc.get("name", name),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"phantom: malformed field ({exc})") from exc


def load_phantom(path: str | Path | None = None) -> PhantomMap:
    """Load a phantom map; None loads the bundled synthetic two-ventricle slice."""
    if path is None:
        from .config import bundled_data_path
        path = bundled_data_path("phantom_two_ventricle.json")
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"phantom file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    return parse_phantom(doc, name=p.stem)
