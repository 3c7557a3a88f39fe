"""Structured triangulations of axis-aligned rectangles with tagged sides."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

EDGE_TOL = 1e-12


class Segment(enum.IntEnum):
    """Boundary sides, numbered counter-clockwise starting at the bottom."""

    GAMMA1 = 1  # bottom
    GAMMA2 = 2  # right
    GAMMA3 = 3  # top
    GAMMA4 = 4  # left

    @classmethod
    def parse(cls, name: str | int | "Segment") -> "Segment":
        if isinstance(name, Segment):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).strip().lower().replace("_", "")
        for seg in cls:
            if key in (seg.name.lower(), f"g{seg.value}", seg.label.lower()):
                return seg
        raise ValueError(f"unknown boundary segment {name!r}")

    @property
    def label(self) -> str:
        return f"Gamma{self.value}"


ALL_SEGMENTS = frozenset(Segment)


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh of a rectangle.

    ``triangles`` are counter-clockwise vertex triples. ``boundary_edges`` is an
    ``(nb, 2)`` array of vertex pairs and ``boundary_tags`` holds the matching
    :class:`Segment` values.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    rect: tuple[float, float, float, float]
    boundary_edges: np.ndarray = field(default=None)
    boundary_tags: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.rect
        return (x1 - x0) * (y1 - y0)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def _edge_data(self):
        local = np.array([[0, 1], [1, 2], [2, 0]])
        all_edges = self.triangles[:, local].reshape(-1, 2)
        sorted_edges = np.sort(all_edges, axis=1)
        edges, inverse, counts = np.unique(
            sorted_edges, axis=0, return_inverse=True, return_counts=True
        )
        tri_edges = inverse.reshape(-1, 3)
        return edges, tri_edges, counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge index of local edges (0-1, 1-2, 2-0) of every triangle."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def topological_boundary(self) -> np.ndarray:
        """Indices (into ``edges``) of edges owned by exactly one triangle."""
        return np.flatnonzero(self._edge_data[2] == 1)

    def segment_edges(self, tags) -> np.ndarray:
        """Edge indices (into ``edges``) of boundary edges carrying any of ``tags``."""
        tags = {Segment.parse(t) for t in tags}
        mask = np.isin(self.boundary_tags, [int(t) for t in tags])
        lookup = {tuple(e): i for i, e in enumerate(self.edges[self.topological_boundary])}
        idx = [lookup[tuple(sorted(e))] for e in self.boundary_edges[mask]]
        return self.topological_boundary[np.asarray(idx, dtype=int)]


def tag_segments(mesh: Mesh) -> Mesh:
    """Return ``mesh`` with every boundary edge tagged by the rectangle side it lies on.

    Re-tagging is idempotent.
    """
    x0, y0, x1, y1 = mesh.rect
    bedges = mesh.edges[mesh.topological_boundary]
    p = mesh.vertices[bedges]  # (nb, 2, 2)
    scale = max(x1 - x0, y1 - y0)
    tol = EDGE_TOL * max(1.0, scale)
    tags = np.zeros(len(bedges), dtype=int)
    sides = [
        (Segment.GAMMA1, 1, y0),
        (Segment.GAMMA2, 0, x1),
        (Segment.GAMMA3, 1, y1),
        (Segment.GAMMA4, 0, x0),
    ]
    for seg, axis, value in sides:
        on_side = np.all(np.abs(p[:, :, axis] - value) <= tol, axis=1)
        tags[on_side & (tags == 0)] = int(seg)
    if np.any(tags == 0):
        bad = bedges[tags == 0][0]
        raise MeshError(
            f"boundary edge {tuple(bad)} does not lie on any side of rectangle {mesh.rect}"
        )
    # orient each boundary edge counter-clockwise (as it appears in its triangle)
    tri_local = mesh.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
    flat_edge = mesh.triangle_edges.reshape(-1)
    owner = {}
    for k in np.flatnonzero(np.isin(flat_edge, mesh.topological_boundary)):
        owner[flat_edge[k]] = tri_local[k]
    oriented = np.array([owner[e] for e in mesh.topological_boundary], dtype=int)
    return Mesh(
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        rect=mesh.rect,
        boundary_edges=oriented,
        boundary_tags=tags,
    )


def build_structured_mesh(nx: int, ny: int, rect=(0.0, 0.0, 1.0, 1.0)) -> Mesh:
    """Split an ``nx`` by ``ny`` grid of cells into ``2*nx*ny`` triangles.

    Every cell is cut along its bottom-left to top-right diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"subdivision counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    x0, y0, x1, y1 = (float(v) for v in rect)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {rect}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j holds y = ys[j]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=int)
    triangles[0::2] = lower
    triangles[1::2] = upper
    mesh = Mesh(vertices=vertices, triangles=triangles, rect=(x0, y0, x1, y1))
    return tag_segments(mesh)


def boundary_vertices(mesh: Mesh, tags) -> set[int]:
    """Vertices incident to a boundary edge tagged with any of ``tags``.

    Corner vertices are returned for both adjacent sides.
    """
    tags = [int(Segment.parse(t)) for t in tags]
    mask = np.isin(mesh.boundary_tags, tags)
    return set(np.unique(mesh.boundary_edges[mask]).tolist())


@dataclass(frozen=True)
class LidSpec:
    """Tangential quartic velocity profile prescribed on one side."""

    segment: Segment = Segment.GAMMA3
    gamma: float = 16.0
    length: float = 1.0


@dataclass(frozen=True)
class BoundarySpec:
    """Velocity and temperature boundary partitions.

    ``temperature_dirichlet`` maps each Dirichlet side to its constant value; the
    remaining sides are insulated.
    """

    velocity_dirichlet: frozenset = ALL_SEGMENTS
    velocity_traction_free: frozenset = frozenset()
    temperature_dirichlet: dict = field(default_factory=dict)
    lid: LidSpec | None = None

    def __post_init__(self):
        vd = frozenset(Segment.parse(s) for s in self.velocity_dirichlet)
        vn = frozenset(Segment.parse(s) for s in self.velocity_traction_free)
        td = {Segment.parse(k): float(v) for k, v in dict(self.temperature_dirichlet).items()}
        object.__setattr__(self, "velocity_dirichlet", vd)
        object.__setattr__(self, "velocity_traction_free", vn)
        object.__setattr__(self, "temperature_dirichlet", td)
        lid_set = frozenset() if self.lid is None else frozenset({self.lid.segment})
        if (vd & vn) or (vd & lid_set) or (vn & lid_set) or (vd | vn | lid_set) != ALL_SEGMENTS:
            raise ValueError(
                "velocity boundary sets must partition Gamma1..Gamma4 "
                f"(no-slip={sorted(s.label for s in vd)}, "
                f"traction-free={sorted(s.label for s in vn)}, lid={sorted(s.label for s in lid_set)})"
            )
        if self.lid is not None and vn:
            raise ValueError("a driven lid cannot be combined with traction-free sides")

    @property
    def temperature_insulated(self) -> frozenset:
        return ALL_SEGMENTS - frozenset(self.temperature_dirichlet)

    @property
    def has_velocity_constraint(self) -> bool:
        return bool(self.velocity_dirichlet) or self.lid is not None
