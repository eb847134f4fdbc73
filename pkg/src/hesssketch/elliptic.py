"""Sensitivity data for an interior-measurement elliptic inverse problem.

Solves ``div(sigma grad u) = S`` on ``[0, 1]^2`` with ``u = 0`` on the
boundary, using a 5-point finite-volume stencil on a uniform node grid.
Node ``(iy, ix)`` sits at ``(x, y) = (ix h, iy h)`` and has flat index
``iy * n + ix``.  For a measurement pair ``(j1, j2)`` the factor column is
``grad u_j1(x) . grad u_j2(x)`` at every grid node, where ``u_j`` solves the
equation with a Gaussian bump source centred at node ``j``.  The operator is
self-adjoint, so forward and adjoint solves coincide and are cached per node.
"""
from dataclasses import dataclass, field
import math
import threading

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hesssketch.errors import ContractError, SolverError
from hesssketch.numkit import GramFactor

SIGMA_FLOOR = 0.1
SOURCE_WIDTH = 0.1
RESIDUAL_TOL = 1e-10

# (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees) on [-1, 1]^2
SHEPP_LOGAN_MODIFIED = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)
SHEPP_LOGAN_ORIGINAL = tuple(
    (v,) + e[1:] for v, e in zip((2.0, -0.98, -0.02, -0.02) + (0.01,) * 6, SHEPP_LOGAN_MODIFIED)
)
PHANTOMS = {"modified": SHEPP_LOGAN_MODIFIED, "original": SHEPP_LOGAN_ORIGINAL}


@dataclass(frozen=True)
class Grid2D:
    nodes_per_side: int = 65

    def __post_init__(self):
        if self.nodes_per_side < 3:
            raise ContractError("nodes_per_side must be >= 3")

    @property
    def h(self):
        return 1.0 / (self.nodes_per_side - 1)

    @property
    def n_nodes(self):
        return self.nodes_per_side**2

    @property
    def shape(self):
        return (self.nodes_per_side, self.nodes_per_side)

    def coords(self):
        """``(X, Y)`` node coordinate arrays indexed ``[iy, ix]``."""
        t = np.arange(self.nodes_per_side) * self.h
        return np.meshgrid(t, t)

    def node(self, iy, ix):
        n = self.nodes_per_side
        if not (0 <= iy < n and 0 <= ix < n):
            raise ContractError(f"node ({iy}, {ix}) outside a {n}x{n} grid")
        return iy * n + ix

    def unravel(self, k):
        return divmod(int(k), self.nodes_per_side)


@dataclass(frozen=True, eq=False)
class MediaField:
    sigma: np.ndarray

    def __post_init__(self):
        if self.sigma.min() < SIGMA_FLOOR - 1e-15:
            raise ContractError(f"sigma must be >= {SIGMA_FLOOR}")


def phantom_values(x, y, ellipses=SHEPP_LOGAN_MODIFIED):
    """Sum of ellipse intensities covering each point of ``[-1, 1]^2``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    for value, a, b, x0, y0, deg in ellipses:
        t = math.radians(deg)
        dx, dy = x - x0, y - y0
        u = dx * math.cos(t) + dy * math.sin(t)
        v = -dx * math.sin(t) + dy * math.cos(t)
        out += np.where((u / a) ** 2 + (v / b) ** 2 <= 1.0, value, 0.0)
    return out


def shepp_logan_media(grid, variant="modified", floor=SIGMA_FLOOR):
    """``sigma = max(1 + phantom, floor)`` with the phantom mapped onto the unit square."""
    if variant not in PHANTOMS:
        raise ContractError(f"variant must be one of {sorted(PHANTOMS)}")
    x, y = grid.coords()
    sigma = np.maximum(1.0 + phantom_values(2.0 * x - 1.0, 2.0 * y - 1.0, PHANTOMS[variant]), floor)
    return MediaField(sigma)


def gaussian_source(grid, center, width=SOURCE_WIDTH):
    """``exp(-width d^2)`` with ``d`` the distance to ``center`` in grid-index units.

    ``center`` is a flat node index or an ``(iy, ix)`` pair.
    """
    n = grid.nodes_per_side
    if isinstance(center, (tuple, list)):
        cy, cx = center
    else:
        if not 0 <= center < grid.n_nodes:
            raise ContractError(f"center node {center} outside the grid")
        cy, cx = grid.unravel(center)
    if not (0 <= cy < n and 0 <= cx < n):
        raise ContractError(f"center ({cy}, {cx}) outside the grid")
    iy, ix = np.mgrid[0:n, 0:n]
    return np.exp(-width * ((iy - cy) ** 2 + (ix - cx) ** 2))


def _face(a, b, averaging):
    if averaging == "arithmetic":
        return 0.5 * (a + b)
    return 2.0 * a * b / (a + b)


@dataclass(eq=False)
class EllipticSystem:
    """Grid, media and the assembled interior operator for ``div(sigma grad u)``.

    ``operator`` acts on the ``(n-2)^2`` interior unknowns (row-major) and is
    symmetric negative definite.  Solutions are cached per source node;
    ``solve_count`` counts right-hand sides actually solved.
    """

    grid: Grid2D
    media: MediaField
    operator: sp.csc_matrix
    averaging: str = "arithmetic"
    source_width: float = SOURCE_WIDTH
    solve_count: int = 0
    _lu: object = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def factorization(self):
        if self._lu is None:
            self._lu = spla.splu(self.operator)
        return self._lu

    def solve_interior(self, rhs):
        """Solve for interior values; ``rhs`` has shape ``(k,)`` or ``(k, nrhs)``."""
        u = self.factorization().solve(rhs)
        res = self.operator @ u - rhs
        scale = np.linalg.norm(rhs, axis=0)
        rel = np.linalg.norm(res, axis=0) / np.where(scale > 0, scale, 1.0)
        worst = float(np.max(rel)) if np.size(rel) else 0.0
        if worst > RESIDUAL_TOL:
            raise SolverError(f"relative residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}", residual=worst)
        self.solve_count += 1 if rhs.ndim == 1 else rhs.shape[1]
        return u

    def node_solutions(self, nodes):
        """Full-grid solutions for Gaussian sources at ``nodes`` (cached)."""
        nodes = [int(k) for k in nodes]
        with self._lock:
            missing = sorted({k for k in nodes if k not in self._cache})
            if missing:
                n = self.grid.nodes_per_side
                rhs = np.stack(
                    [gaussian_source(self.grid, k, self.source_width)[1:-1, 1:-1].ravel() for k in missing], axis=1
                )
                u = self.solve_interior(rhs)
                for col, k in enumerate(missing):
                    full = np.zeros((n, n))
                    full[1:-1, 1:-1] = u[:, col].reshape(n - 2, n - 2)
                    self._cache[k] = full
            return [self._cache[k] for k in nodes]


def assemble_operator(grid, media, averaging="arithmetic", source_width=SOURCE_WIDTH):
    """5-point stencil for ``div(sigma grad u)`` with Dirichlet rows eliminated.

    Face coefficients average the two adjacent node values (arithmetic by
    default, harmonic on request).  Constant ``sigma = 1`` gives the
    standard ``(-4, 1, 1, 1, 1) / h^2`` Laplacian.
    """
    if averaging not in ("arithmetic", "harmonic"):
        raise ContractError("averaging must be 'arithmetic' or 'harmonic'")
    sigma = np.asarray(media.sigma, dtype=np.float64)
    n = grid.nodes_per_side
    if sigma.shape != grid.shape:
        raise ContractError(f"media shape {sigma.shape} does not match grid {grid.shape}")
    if sigma.min() <= 0.0:
        raise ContractError("media must be positive")
    k = n - 2
    inv_h2 = 1.0 / grid.h**2
    idx = np.arange(k * k).reshape(k, k)
    centre = sigma[1:-1, 1:-1]
    diag = np.zeros((k, k))
    rows, cols, vals = [], [], []
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb = sigma[1 + dy:n - 1 + dy, 1 + dx:n - 1 + dx]
        c = _face(centre, nb, averaging) * inv_h2
        diag -= c
        iy, ix = np.mgrid[0:k, 0:k]
        jy, jx = iy + dy, ix + dx
        inside = (jy >= 0) & (jy < k) & (jx >= 0) & (jx < k)
        rows.append(idx[inside])
        cols.append(idx[jy[inside], jx[inside]])
        vals.append(c[inside])
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    op = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(k * k, k * k)
    )
    return EllipticSystem(grid=grid, media=media, operator=op, averaging=averaging, source_width=source_width)


def solve_dirichlet(system, source):
    """Full-grid solution for a full-grid source array; boundary values are 0."""
    n = system.grid.nodes_per_side
    source = np.asarray(source, dtype=np.float64).reshape(n, n)
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = system.solve_interior(source[1:-1, 1:-1].ravel()).reshape(n - 2, n - 2)
    return u


def node_gradients(u, h):
    """``(du/dx, du/dy)`` at every node.

    Central differences inside, one-sided differences on the edges.  At
    the four corners both one-sided differences run along the boundary and
    vanish under zero Dirichlet data, so a corner takes the gradient of its
    single adjacent cell instead.
    """
    gy, gx = np.gradient(u, h, edge_order=1)
    n = u.shape[0]
    for cy, oy in ((0, 1), (n - 1, -1)):
        for cx, ox in ((0, 1), (u.shape[1] - 1, -1)):
            gx[cy, cx] = ox * ((u[cy, cx + ox] - u[cy, cx]) + (u[cy + oy, cx + ox] - u[cy + oy, cx])) / (2 * h)
            gy[cy, cx] = oy * ((u[cy + oy, cx] - u[cy, cx]) + (u[cy + oy, cx + ox] - u[cy, cx + ox])) / (2 * h)
    return gx, gy


DOMAINS = {
    "D1": (((1 / 8, 7 / 8),), None),
    "D2": (((1 / 32, 31 / 32),), (3 / 16, 13 / 16)),
}


def _in_box(t, lo, hi, half_open):
    eps = 1e-12
    upper = t < hi - eps if half_open else t <= hi + eps
    return (t >= lo - eps) & upper


def domain_mask(grid, domain, half_open=False):
    """Boolean ``[iy, ix]`` mask of a named subdomain (or pass-through of a mask)."""
    if not isinstance(domain, str):
        mask = np.asarray(domain, dtype=bool)
        if mask.shape != grid.shape:
            raise ContractError("custom domain mask must match the grid shape")
        return mask
    if domain not in DOMAINS:
        raise ContractError(f"unknown domain {domain!r}")
    (outer,), hole = DOMAINS[domain]
    x, y = grid.coords()
    mask = _in_box(x, *outer, half_open) & _in_box(y, *outer, half_open)
    if hole is not None:
        mask &= ~(_in_box(x, *hole, half_open) & _in_box(y, *hole, half_open))
    return mask


@dataclass(frozen=True)
class MeasurementLayout:
    domain: str
    source_nodes: tuple
    pairs: tuple
    params: dict = field(default_factory=dict, compare=False)

    @property
    def r(self):
        return len(self.pairs)

    def nodes(self):
        """Distinct nodes appearing in any pair, ascending."""
        return sorted({k for pair in self.pairs for k in pair})


def build_layout(
    grid,
    domain="D1",
    source_fraction=1 / 6,
    detector_radius=5,
    seed=0,
    detectors_per_source=None,
    half_open=False,
):
    """Random sources in a subdomain with detectors in a box around each.

    ``ceil(source_fraction * |D|)`` sources are drawn uniformly without
    replacement (PCG64 stream from ``seed``).  A source's candidate
    detectors are the domain nodes within Chebyshev distance
    ``detector_radius`` (in grid units).  All candidates are paired with the
    source unless ``detectors_per_source`` caps them, in which case that many
    are drawn at random.
    """
    mask = domain_mask(grid, domain, half_open)
    nodes = np.flatnonzero(mask.ravel())
    if nodes.size == 0:
        raise ContractError("domain contains no grid nodes")
    if not 0.0 < source_fraction <= 1.0:
        raise ContractError("source_fraction must lie in (0, 1]")
    if detector_radius < 0:
        raise ContractError("detector_radius must be >= 0")
    rng = np.random.default_rng(seed)
    n_src = math.ceil(source_fraction * nodes.size - 1e-9)
    sources = np.sort(rng.choice(nodes, size=n_src, replace=False))
    n = grid.nodes_per_side
    pairs = []
    for s in sources:
        sy, sx = divmod(int(s), n)
        y0, y1 = max(sy - detector_radius, 0), min(sy + detector_radius, n - 1)
        x0, x1 = max(sx - detector_radius, 0), min(sx + detector_radius, n - 1)
        box = np.zeros_like(mask)
        box[y0:y1 + 1, x0:x1 + 1] = True
        cand = np.flatnonzero((box & mask).ravel())
        if detectors_per_source is not None and cand.size > detectors_per_source:
            cand = np.sort(rng.choice(cand, size=detectors_per_source, replace=False))
        pairs.extend((int(s), int(d)) for d in cand)
    params = {
        "nodes_per_side": n,
        "source_fraction": source_fraction,
        "detector_radius": detector_radius,
        "seed": seed,
        "detectors_per_source": detectors_per_source,
        "half_open": half_open,
        "domain_nodes": int(nodes.size),
    }
    name = domain if isinstance(domain, str) else "custom"
    return MeasurementLayout(name, tuple(int(s) for s in sources), tuple(pairs), params)


def assemble_sensitivity_factor(system, layout):
    """``phi[x, p] = grad u_{j1}(x) . grad u_{j2}(x)`` for each pair ``p = (j1, j2)``.

    One solve per distinct node in the layout; rows cover all grid nodes.
    """
    if not layout.pairs:
        raise ContractError("layout has no measurement pairs")
    nodes = layout.nodes()
    h = system.grid.h
    grads = {k: node_gradients(u, h) for k, u in zip(nodes, system.node_solutions(nodes))}
    phi = np.empty((system.grid.n_nodes, layout.r))
    for col, (a, b) in enumerate(layout.pairs):
        (ax, ay), (bx, by) = grads[a], grads[b]
        phi[:, col] = (ax * bx + ay * by).ravel()
    meta = {"domain": layout.domain, "layout": dict(layout.params), "distinct_nodes": len(nodes)}
    return GramFactor(phi, meta)


PRESETS = {
    "paper-D1": {
        "nodes_per_side": 65,
        "domain": "D1",
        "half_open": True,
        "source_fraction": 1 / 6,
        "detector_radius": 5,
        "detectors_per_source": 1,
        "seed": 0,
        "phantom": "modified",
        "averaging": "arithmetic",
    },
    "paper-D2": {
        "nodes_per_side": 65,
        "domain": "D2",
        "half_open": True,
        "source_fraction": 1 / 6,
        "detector_radius": 5,
        "detectors_per_source": 1,
        "seed": 0,
        "phantom": "modified",
        "averaging": "arithmetic",
    },
}


def build_from_params(params):
    """``(system, layout, factor)`` for a preset-style parameter dict."""
    grid = Grid2D(params.get("nodes_per_side", 65))
    media = shepp_logan_media(grid, params.get("phantom", "modified"))
    system = assemble_operator(grid, media, params.get("averaging", "arithmetic"))
    layout = build_layout(
        grid,
        domain=params.get("domain", "D1"),
        source_fraction=params.get("source_fraction", 1 / 6),
        detector_radius=params.get("detector_radius", 5),
        seed=params.get("seed", 0),
        detectors_per_source=params.get("detectors_per_source"),
        half_open=params.get("half_open", False),
    )
    return system, layout, assemble_sensitivity_factor(system, layout)


def build_preset(name, **overrides):
    if name not in PRESETS:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return build_from_params({**PRESETS[name], **overrides})
