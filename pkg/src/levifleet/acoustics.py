"""Phased-array pressure fields: focusing, scans, standing-wave traps.

The field of one transducer at distance r is modeled as the point-source
phasor (A / r) * exp(j(phi - k r)); the instantaneous pressure is the real
part of P(x) * exp(j omega t).  With every r absorbed into per-transducer
amplitude and phase this reduces to the plain per-element sine sum, but the
explicit 1/r decay and propagation phase are what give the field its
spatial structure (focal spots, nodes) and are adopted here as the standard
extension.  No directivity, no scattering, no nonlinear terms.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

EPSILON_DISTANCE = 1e-6  # degeneracy guard near a source


class DegeneratePoint(ValueError):
    """Field requested closer than the guard distance to a transducer."""


class AlignmentError(ValueError):
    """Dual-array operation attempted on arrays that are not face-to-face."""


@dataclass(frozen=True)
class Transducer:
    position: tuple[float, float, float]
    amplitude: float = 1.0  # source strength, Pa*m
    phase: float = 0.0      # radians in [0, 2*pi)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        object.__setattr__(self, "phase", self.phase % (2.0 * math.pi))


def _orthonormal_grid_axes(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    reference = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(normal, reference))) > 0.9:
        reference = np.array([1.0, 0.0, 0.0])
    u = np.cross(reference, normal)
    u = u / np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


@dataclass(frozen=True)
class PhasedArray:
    """An 8x8 transducer grid with a pose and a drive frequency.

    ``center`` is the grid center, ``normal`` the emission direction; grid
    rows and columns span the plane orthogonal to ``normal``.
    """

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    pitch: float = 0.010
    frequency: float = 40_000.0
    speed_of_sound: float = 343.0
    amplitude: float = 1.0
    grid_shape: tuple[int, int] = (8, 8)
    phases: tuple[float, ...] = ()

    def __post_init__(self):
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")
        object.__setattr__(self, "grid_shape", tuple(self.grid_shape))
        if self.grid_shape != (8, 8):
            raise ValueError("arrays are 8x8 grids (64 transducers)")
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("normal must be non-zero")
        object.__setattr__(self, "normal", tuple(n / norm))
        count = self.grid_shape[0] * self.grid_shape[1]
        if not self.phases:
            object.__setattr__(self, "phases", (0.0,) * count)
        elif len(self.phases) != count:
            raise ValueError(f"need {count} phases, got {len(self.phases)}")
        object.__setattr__(
            self, "phases", tuple(p % (2.0 * math.pi) for p in self.phases)
        )

    @property
    def count(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def wavenumber(self) -> float:
        return self.omega / self.speed_of_sound

    @property
    def wavelength(self) -> float:
        return self.speed_of_sound / self.frequency

    def element_positions(self) -> np.ndarray:
        """(N, 3) transducer coordinates in the arena frame."""
        rows, cols = self.grid_shape
        normal = np.asarray(self.normal)
        u, v = _orthonormal_grid_axes(normal)
        i = (np.arange(rows) - (rows - 1) / 2.0) * self.pitch
        j = (np.arange(cols) - (cols - 1) / 2.0) * self.pitch
        ii, jj = np.meshgrid(i, j, indexing="ij")
        offsets = ii.reshape(-1, 1) * u + jj.reshape(-1, 1) * v
        return np.asarray(self.center) + offsets

    def transducers(self) -> list[Transducer]:
        positions = self.element_positions()
        return [
            Transducer(position=tuple(p), amplitude=self.amplitude, phase=phi)
            for p, phi in zip(positions, self.phases)
        ]

    def with_phases(self, phases: Iterable[float]) -> "PhasedArray":
        return replace(self, phases=tuple(phases))

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": list(self.center),
            "normal": list(self.normal),
            "pitch": self.pitch,
            "frequency": self.frequency,
            "speed_of_sound": self.speed_of_sound,
            "amplitude": self.amplitude,
            "grid_shape": list(self.grid_shape),
            "phases": list(self.phases),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PhasedArray":
        return cls(
            center=tuple(doc.get("center", (0.0, 0.0, 0.0))),
            normal=tuple(doc.get("normal", (0.0, 0.0, 1.0))),
            pitch=float(doc.get("pitch", 0.010)),
            frequency=float(doc.get("frequency", 40_000.0)),
            speed_of_sound=float(doc.get("speed_of_sound", 343.0)),
            amplitude=float(doc.get("amplitude", 1.0)),
            grid_shape=tuple(doc.get("grid_shape", (8, 8))),
            phases=tuple(doc.get("phases", ())),
        )

    @classmethod
    def from_file(cls, path: str) -> "PhasedArray":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FieldSample:
    point: tuple[float, float, float]
    pressure: complex

    @property
    def magnitude(self) -> float:
        return abs(self.pressure)

    @property
    def phase(self) -> float:
        return math.atan2(self.pressure.imag, self.pressure.real)


def _gather(arrays: Sequence[PhasedArray]) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    if not arrays:
        raise ValueError("need at least one array")
    k = arrays[0].wavenumber
    for a in arrays[1:]:
        if not math.isclose(a.wavenumber, k, rel_tol=1e-12):
            raise ValueError("all arrays must share one frequency for phasor superposition")
    positions = np.vstack([a.element_positions() for a in arrays])
    amplitudes = np.concatenate([np.full(a.count, a.amplitude) for a in arrays])
    phases = np.concatenate([np.asarray(a.phases) for a in arrays])
    return positions, amplitudes, phases, k


def _pressure_points(points: np.ndarray, positions, amplitudes, phases, k) -> np.ndarray:
    """Complex pressure at (M, 3) points; raises on degenerate geometry."""
    diff = points[:, None, :] - positions[None, :, :]
    r = np.sqrt(np.einsum("mnc,mnc->mn", diff, diff))
    if np.any(r < EPSILON_DISTANCE):
        raise DegeneratePoint("field point coincides with a transducer")
    return np.sum((amplitudes / r) * np.exp(1j * (phases - k * r)), axis=1)


def pressure_at(arrays: PhasedArray | Sequence[PhasedArray], point) -> FieldSample:
    """Complex pressure phasor from the superposition of every transducer."""
    if isinstance(arrays, PhasedArray):
        arrays = [arrays]
    positions, amplitudes, phases, k = _gather(arrays)
    p = np.asarray(point, dtype=float).reshape(1, 3)
    value = _pressure_points(p, positions, amplitudes, phases, k)[0]
    return FieldSample(point=tuple(p[0]), pressure=complex(value))


def pressure_of_transducers(
    transducers: Sequence[Transducer], wavenumber: float, point
) -> FieldSample:
    """Superposition over an explicit element list (no array geometry)."""
    positions = np.asarray([t.position for t in transducers], dtype=float)
    amplitudes = np.asarray([t.amplitude for t in transducers])
    phases = np.asarray([t.phase for t in transducers])
    p = np.asarray(point, dtype=float).reshape(1, 3)
    value = _pressure_points(p, positions, amplitudes, phases, wavenumber)[0]
    return FieldSample(point=tuple(p[0]), pressure=complex(value))


def focus_phases(array: PhasedArray, focal_point) -> PhasedArray:
    """Phase assignment making every element arrive in phase at the focus.

    phi_i = (k * r_i) mod 2*pi, so the focal pressure magnitude equals the
    plain sum of per-element amplitudes over distance.
    """
    focal = np.asarray(focal_point, dtype=float)
    r = np.linalg.norm(array.element_positions() - focal, axis=1)
    if np.any(r < EPSILON_DISTANCE):
        raise DegeneratePoint("focal point coincides with a transducer")
    phases = np.mod(array.wavenumber * r, 2.0 * math.pi)
    return array.with_phases(phases)


def line_scan(
    arrays: PhasedArray | Sequence[PhasedArray],
    start,
    end,
    n_samples: int,
) -> list[FieldSample]:
    """Field samples at n equally spaced points from start to end inclusive."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if isinstance(arrays, PhasedArray):
        arrays = [arrays]
    positions, amplitudes, phases, k = _gather(arrays)
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    fractions = np.linspace(0.0, 1.0, n_samples)
    points = a[None, :] + fractions[:, None] * (b - a)[None, :]
    values = _pressure_points(points, positions, amplitudes, phases, k)
    return [FieldSample(point=tuple(p), pressure=complex(v)) for p, v in zip(points, values)]


def scan_to_csv(samples: Sequence[FieldSample]) -> str:
    """CSV with columns (s_meters, x, y, z, magnitude_pa, phase_rad)."""
    out = io.StringIO()
    out.write("s_meters,x,y,z,magnitude_pa,phase_rad\n")
    origin = np.asarray(samples[0].point)
    for sample in samples:
        p = np.asarray(sample.point)
        s = float(np.linalg.norm(p - origin))
        out.write(
            f"{s:.9f},{p[0]:.9f},{p[1]:.9f},{p[2]:.9f},"
            f"{sample.magnitude:.9e},{sample.phase:.9f}\n"
        )
    return out.getvalue()


def _uniform_phases(array: PhasedArray) -> bool:
    return len(set(array.phases)) == 1


def standing_wave_nodes(
    array_a: PhasedArray,
    array_b: PhasedArray,
    segment_start,
    segment_end,
    samples_per_wavelength: int = 200,
) -> np.ndarray:
    """(N, 3) positions of pressure minima between two face-to-face,
    uniformly driven arrays, ordered along the segment.

    A dense magnitude scan brackets each interior local minimum and a
    bounded scalar minimization refines it; consecutive nodes sit half a
    wavelength apart.
    """
    na = np.asarray(array_a.normal)
    nb = np.asarray(array_b.normal)
    anti = math.acos(float(np.clip(-np.dot(na, nb), -1.0, 1.0)))
    if anti > 0.01:
        raise AlignmentError(f"arrays misaligned by {anti:.4f} rad")
    if not (_uniform_phases(array_a) and _uniform_phases(array_b)):
        raise ValueError("standing-wave node search expects uniform phases")

    arrays = [array_a, array_b]
    positions, amplitudes, phases, k = _gather(arrays)
    a = np.asarray(segment_start, dtype=float)
    b = np.asarray(segment_end, dtype=float)
    length = float(np.linalg.norm(b - a))
    direction = (b - a) / length
    wavelength = array_a.wavelength
    n = max(int(length / wavelength * samples_per_wavelength), 16)
    s_grid = np.linspace(0.0, length, n)
    points = a[None, :] + s_grid[:, None] * direction[None, :]
    mag = np.abs(_pressure_points(points, positions, amplitudes, phases, k))

    def magnitude_at(s: float) -> float:
        p = (a + s * direction).reshape(1, 3)
        return float(np.abs(_pressure_points(p, positions, amplitudes, phases, k))[0])

    nodes: list[float] = []
    for i in range(1, n - 1):
        if mag[i] < mag[i - 1] and mag[i] < mag[i + 1]:
            result = minimize_scalar(
                magnitude_at,
                bounds=(s_grid[i - 1], s_grid[i + 1]),
                method="bounded",
                options={"xatol": 1e-12},
            )
            nodes.append(float(result.x))
    if not nodes:
        return np.empty((0, 3))
    return a[None, :] + np.asarray(nodes)[:, None] * direction[None, :]


@dataclass(frozen=True)
class StabilityReport:
    trap_point: tuple[float, float, float]
    probe_radius: float
    axial_ratios: tuple[float, float, float]
    threshold: float
    stable: bool


def trap_stability(
    arrays: PhasedArray | Sequence[PhasedArray],
    trap_point,
    probe_radius: float,
    threshold: float = 2.0,
) -> StabilityReport:
    """Restoring-pressure ratios around a candidate trap.

    For each axis the ratio is the mean magnitude at +/- probe_radius over
    the magnitude at the trap point; a pressure node confined on all three
    axes scores well above one on each.
    """
    if isinstance(arrays, PhasedArray):
        arrays = [arrays]
    positions, amplitudes, phases, k = _gather(arrays)
    p0 = np.asarray(trap_point, dtype=float)
    probes = []
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = probe_radius
        probes.extend([p0 + offset, p0 - offset])
    points = np.vstack([p0[None, :], np.asarray(probes)])
    mags = np.abs(_pressure_points(points, positions, amplitudes, phases, k))
    center = mags[0]
    ratios = []
    for axis in range(3):
        pair = mags[1 + 2 * axis : 3 + 2 * axis]
        mean = float(np.mean(pair))
        ratios.append(math.inf if center == 0.0 else mean / center)
    return StabilityReport(
        trap_point=tuple(p0),
        probe_radius=probe_radius,
        axial_ratios=tuple(ratios),
        threshold=threshold,
        stable=all(r >= threshold for r in ratios),
    )


def face_to_face_pair(
    separation: float,
    frequency: float = 40_000.0,
    speed_of_sound: float = 343.0,
    pitch: float = 0.010,
    axis: str = "z",
) -> tuple[PhasedArray, PhasedArray]:
    """Two opposed arrays ``separation`` apart along a coordinate axis,
    both centered on the axis and uniformly driven."""
    idx = {"x": 0, "y": 1, "z": 2}[axis]
    center_a = [0.0, 0.0, 0.0]
    center_b = [0.0, 0.0, 0.0]
    center_b[idx] = separation
    normal_a = [0.0, 0.0, 0.0]
    normal_b = [0.0, 0.0, 0.0]
    normal_a[idx] = 1.0
    normal_b[idx] = -1.0
    common = dict(pitch=pitch, frequency=frequency, speed_of_sound=speed_of_sound)
    return (
        PhasedArray(center=tuple(center_a), normal=tuple(normal_a), **common),
        PhasedArray(center=tuple(center_b), normal=tuple(normal_b), **common),
    )
