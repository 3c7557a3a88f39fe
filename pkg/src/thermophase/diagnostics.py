"""Conserved and dissipated quantities, level sets and geometric observables."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .fem import NONLINEAR_DEGREE, FeSpace, Field, quadrature

JOIN_TOL = 1e-12


class UndefinedCentroid(ValueError):
    """The heavy phase is absent, so its centroid is undefined."""


@dataclass
class DiagnosticsRecord:
    step: int
    time: float
    mass: float
    energy: float
    c_min: float
    c_max: float
    c_variance: float
    theta_min: float
    theta_max: float
    velocity_l2: float
    divergence: float
    heavy_centroid: float
    newton_iterations: int
    newton_residual: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


def _integrate(space: FeSpace, values_q: np.ndarray, rule) -> float:
    return float(np.sum(space.geometry.weights(rule) * values_q))


def total_mass(c: Field) -> float:
    """``int c`` as ``1^T M c``."""
    return float(np.sum(c.space.mass_matrix @ c.coeffs))


def mean_value(c: Field) -> float:
    return total_mass(c) / c.space.mesh.area


def l2_variance(c: Field) -> float:
    """Mass-weighted spatial variance ``|Omega|^-1 int (c - mean)^2``."""
    d = c.coeffs - mean_value(c)
    return float(d @ (c.space.mass_matrix @ d)) / c.space.mesh.area


def discrete_energy(c: Field, beta_bar: float, Ch: float) -> float:
    """``int 2c^4 - (1 - beta) c^2 + Ch^2/2 |grad c|^2`` by the degree-6 rule."""
    rule = quadrature(NONLINEAR_DEGREE)
    cq = c.at_quadrature(rule)
    gq = c.gradient_at_quadrature(rule)
    dens = 2.0 * cq**4 - (1.0 - beta_bar) * cq**2 + 0.5 * Ch**2 * np.sum(gq**2, axis=-1)
    return _integrate(c.space, dens, rule)


def velocity_l2(u: Field) -> float:
    rule = quadrature(4)
    uq = u.at_quadrature(rule)
    return math.sqrt(_integrate(u.space, np.sum(uq**2, axis=-1), rule))


def heavy_phase_centroid_height(c: Field) -> float:
    """Height of the centroid of the dense phase, weighted by ``max(0, -c)``."""
    rule = quadrature(NONLINEAR_DEGREE)
    w = np.maximum(0.0, -c.at_quadrature(rule))
    jw = c.space.geometry.weights(rule) * w
    total = float(np.sum(jw))
    if total <= 0.0:
        raise UndefinedCentroid("no heavy phase (c < 0) present")
    y = c.space.geometry.points(rule)[..., 1]
    return float(np.sum(jw * y) / total)


def strip_mean_abs(c: Field, xmin: float, xmax: float) -> float:
    """Mass-weighted mean of ``|c|`` over elements whose centroid has ``xmin < x < xmax``."""
    rule = quadrature(NONLINEAR_DEGREE)
    mesh = c.space.mesh
    cx = mesh.vertices[mesh.triangles][:, :, 0].mean(axis=1)
    sel = (cx > xmin) & (cx < xmax)
    jw = c.space.geometry.weights(rule)[sel]
    vals = np.abs(c.at_quadrature(rule))[sel]
    return float(np.sum(jw * vals) / np.sum(jw))


def extract_interface(c: Field, level: float = 0.0) -> list[np.ndarray]:
    """Polylines of the level set ``c = level`` by linear interpolation per triangle.

    Nodes with ``c >= level`` count as above the level. Segment endpoints closer
    than ``1e-12`` are merged before chaining.
    """
    mesh = c.space.mesh
    vals = c.vertex_values()
    tris = mesh.triangles
    above = vals[tris] >= level
    n_above = above.sum(axis=1)
    cut = np.flatnonzero((n_above > 0) & (n_above < 3))
    segments = []
    for t in cut.tolist():
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if above[t, a] != above[t, b]:
                ia, ib = tris[t, a], tris[t, b]
                fa, fb = vals[ia], vals[ib]
                s = (level - fa) / (fb - fa)
                pts.append(mesh.vertices[ia] + s * (mesh.vertices[ib] - mesh.vertices[ia]))
        p, q = pts
        if np.linalg.norm(p - q) > JOIN_TOL:
            segments.append((p, q))
    if not segments:
        return []
    return _chain(segments)


def _chain(segments):
    ends = np.array([pt for seg in segments for pt in seg])
    # union endpoints lying within JOIN_TOL of each other
    parent = np.arange(len(ends))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(cKDTree(ends).query_pairs(JOIN_TOL)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    ids = np.array([find(i) for i in range(len(ends))]).reshape(-1, 2)
    adjacency: dict[int, list[int]] = {}
    for k, (a, b) in enumerate(ids.tolist()):
        adjacency.setdefault(a, []).append(k)
        adjacency.setdefault(b, []).append(k)
    point = {int(i): ends[2 * k + s] for k, pair in enumerate(ids) for s, i in enumerate(pair)}
    used = np.zeros(len(ids), dtype=bool)
    lines = []
    # open chains start at nodes of odd degree, then whatever closed loops remain
    starts = [n for n in sorted(adjacency) if len(adjacency[n]) % 2 == 1] + sorted(adjacency)
    for start in starts:
        while any(not used[k] for k in adjacency[start]):
            node = start
            chain = [point[node]]
            while True:
                nxt = [k for k in adjacency[node] if not used[k]]
                if not nxt:
                    break
                k = nxt[0]
                used[k] = True
                a, b = ids[k]
                node = b if a == node else a
                chain.append(point[node])
            lines.append(np.array(chain))
    return lines


def polyline_length(lines) -> float:
    return float(sum(np.sum(np.linalg.norm(np.diff(l, axis=0), axis=1)) for l in lines))


def record(step: int, time: float, c: Field, theta: Field, u: Field | None, Ch: float,
           divergence: float = 0.0, newton=None) -> DiagnosticsRecord:
    """Snapshot of all monitored quantities; the energy uses the mean temperature."""
    beta_bar = mean_value(theta)
    try:
        centroid = heavy_phase_centroid_height(c)
    except UndefinedCentroid:
        centroid = float("nan")
    return DiagnosticsRecord(
        step=step,
        time=time,
        mass=total_mass(c),
        energy=discrete_energy(c, beta_bar, Ch),
        c_min=float(c.coeffs.min()),
        c_max=float(c.coeffs.max()),
        c_variance=l2_variance(c),
        theta_min=float(theta.coeffs.min()),
        theta_max=float(theta.coeffs.max()),
        velocity_l2=0.0 if u is None else velocity_l2(u),
        divergence=float(divergence),
        heavy_centroid=centroid,
        newton_iterations=0 if newton is None else int(newton.iterations),
        newton_residual=float("nan") if newton is None else float(newton.residual),
    )
