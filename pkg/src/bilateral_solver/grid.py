"""Simplified bilateral grid: construction, splat / slice / blur, bistochastization.

Pixels are hard-assigned to the grid cell containing their (x, y, l[, u, v])
coordinate, so the splat matrix ``S`` has a single nonzero per column and
``S S^T`` is diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalError, ParameterError, ShapeError
from .imaging import rgb_to_yuv, yuv_to_rgb


@dataclass(frozen=True)
class GridParams:
    sigma_xy: float = 8.0
    sigma_l: float = 4.0
    sigma_uv: float = 4.0

    def __post_init__(self):
        for name in ("sigma_xy", "sigma_l", "sigma_uv"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class ReferenceImage:
    """Reference image in the luma/chroma space the grid is built over.

    All channels are float rasters on the 0-255 scale. Grayscale references
    leave ``chroma_u`` and ``chroma_v`` unset and yield a 3-D (x, y, l) grid.
    """

    luma: np.ndarray
    chroma_u: np.ndarray | None = None
    chroma_v: np.ndarray | None = None

    def __post_init__(self):
        luma = np.asarray(self.luma, dtype=np.float64)
        if luma.ndim != 2 or luma.size == 0:
            raise ShapeError(f"luma must be a nonempty 2-D raster, got shape {luma.shape}")
        object.__setattr__(self, "luma", luma)
        if (self.chroma_u is None) != (self.chroma_v is None):
            raise ShapeError("chroma_u and chroma_v must be given together")
        chans = [luma]
        if self.chroma_u is not None:
            for name in ("chroma_u", "chroma_v"):
                ch = np.asarray(getattr(self, name), dtype=np.float64)
                if ch.shape != luma.shape:
                    raise ShapeError(f"{name} shape {ch.shape} != luma shape {luma.shape}")
                object.__setattr__(self, name, ch)
                chans.append(ch)
        if not all(np.isfinite(c).all() for c in chans):
            raise ParameterError("reference image contains non-finite values")

    @classmethod
    def from_rgb(cls, rgb) -> ReferenceImage:
        yuv = rgb_to_yuv(rgb)
        return cls(yuv[..., 0], yuv[..., 1], yuv[..., 2])

    @classmethod
    def from_gray(cls, gray) -> ReferenceImage:
        return cls(np.asarray(gray, dtype=np.float64))

    @classmethod
    def from_array(cls, image) -> ReferenceImage:
        """Gray for 2-D or single-channel input, RGB for three channels."""
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            return cls.from_gray(image)
        if image.ndim == 3 and image.shape[2] == 1:
            return cls.from_gray(image[..., 0])
        if image.ndim == 3 and image.shape[2] in (3, 4):
            return cls.from_rgb(image[..., :3])
        raise ShapeError(f"cannot interpret array of shape {image.shape} as an image")

    @property
    def is_color(self) -> bool:
        return self.chroma_u is not None

    @property
    def shape(self) -> tuple[int, int]:
        return self.luma.shape

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def npixels(self) -> int:
        return self.luma.size

    def guide(self) -> np.ndarray:
        """RGB (or gray) raster for edge-aware post-filters."""
        if not self.is_color:
            return self.luma
        return yuv_to_rgb(np.stack([self.luma, self.chroma_u, self.chroma_v], axis=-1))


@dataclass(frozen=True, eq=False)
class BilateralGrid:
    """Hard-assignment bilateral grid.

    ``neighbors[v, d, 0]`` / ``neighbors[v, d, 1]`` hold the vertex one cell
    below / above ``v`` along dimension ``d``, or -1 when that cell is empty.
    """

    shape: tuple[int, int]
    pixel_to_vertex: np.ndarray
    vertex_coords: np.ndarray
    neighbors: np.ndarray
    splat_counts: np.ndarray
    _gather: np.ndarray = field(repr=False)

    @property
    def nverts(self) -> int:
        return self.vertex_coords.shape[0]

    @property
    def npixels(self) -> int:
        return self.pixel_to_vertex.shape[0]

    @property
    def dim(self) -> int:
        return self.vertex_coords.shape[1]

    @property
    def blur_diag(self) -> float:
        return 2.0 * self.dim

    @property
    def m(self) -> np.ndarray:
        return self.splat_counts.astype(np.float64)

    def splat(self, pixel_values) -> np.ndarray:
        """``S @ values``: scatter-add pixel values into their vertices."""
        values = np.asarray(pixel_values, dtype=np.float64)
        if values.ndim == 0 or values.shape[0] != self.npixels:
            raise ShapeError(f"expected {self.npixels} pixel values, got shape {values.shape}")
        return scatter_add(self.pixel_to_vertex, values, self.nverts)

    def slice(self, vertex_values) -> np.ndarray:
        """``S^T @ values``: each pixel reads its vertex's value."""
        values = np.asarray(vertex_values, dtype=np.float64)
        if values.shape[0] != self.nverts:
            raise ShapeError(f"expected {self.nverts} vertex values, got shape {values.shape}")
        return values[self.pixel_to_vertex]

    def blur(self, vertex_values) -> np.ndarray:
        """Sum of [1, 2, 1] kernels along every grid dimension."""
        values = np.asarray(vertex_values, dtype=np.float64)
        if values.shape[0] != self.nverts:
            raise ShapeError(f"expected {self.nverts} vertex values, got shape {values.shape}")
        padded = np.concatenate([values, np.zeros((1,) + values.shape[1:])])
        out = self.blur_diag * values
        for j in range(self._gather.shape[1]):
            out += padded[self._gather[:, j]]
        return out


def scatter_add(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    """Sum rows of ``values`` into ``size`` buckets given by ``index``."""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=size)
    flat = values.reshape(values.shape[0], -1)
    out = np.empty((size, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.bincount(index, weights=flat[:, j], minlength=size)
    return out.reshape((size,) + values.shape[1:])


def build_grid(reference: ReferenceImage, params: GridParams) -> BilateralGrid:
    h, w = reference.shape
    rows, cols = np.divmod(np.arange(h * w, dtype=np.int64), w)
    coords = [
        np.floor(cols / params.sigma_xy).astype(np.int64),
        np.floor(rows / params.sigma_xy).astype(np.int64),
        np.floor(reference.luma.ravel() / params.sigma_l).astype(np.int64),
    ]
    if reference.is_color:
        coords.append(np.floor(reference.chroma_u.ravel() / params.sigma_uv).astype(np.int64))
        coords.append(np.floor(reference.chroma_v.ravel() / params.sigma_uv).astype(np.int64))
    coords = np.stack(coords, axis=1)
    pixel_to_vertex, vertex_coords = _coalesce(coords)
    return _make_grid((h, w), pixel_to_vertex, vertex_coords)


def _encode(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Offset by one cell and pad the radix so that +-1 neighbor keys never alias.
    shifted = coords - coords.min(axis=0) + 1
    radix = shifted.max(axis=0) + 2
    if np.prod(radix.astype(np.float64)) >= 2.0 ** 62:
        raise ParameterError("grid is too large to index; increase the sigmas")
    strides = np.ones(coords.shape[1], dtype=np.int64)
    for d in range(coords.shape[1] - 2, -1, -1):
        strides[d] = strides[d + 1] * radix[d + 1]
    return shifted @ strides, strides


def _coalesce(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map rows of ``coords`` to unique ids numbered in first-visit order."""
    keys, _ = _encode(coords)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse.ravel()], coords[first[order]]


def _make_grid(shape, pixel_to_vertex, vertex_coords) -> BilateralGrid:
    nverts, dim = vertex_coords.shape
    keys, strides = _encode(vertex_coords)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    neighbors = np.full((nverts, dim, 2), -1, dtype=np.int64)
    for d in range(dim):
        for side, step in enumerate((-1, 1)):
            target = keys + step * strides[d]
            pos = np.minimum(np.searchsorted(sorted_keys, target), nverts - 1)
            hit = sorted_keys[pos] == target
            neighbors[hit, d, side] = order[pos[hit]]
    gather = neighbors.reshape(nverts, 2 * dim).copy()
    gather[gather < 0] = nverts
    counts = np.bincount(pixel_to_vertex, minlength=nverts).astype(np.int64)
    return BilateralGrid(
        shape=tuple(shape),
        pixel_to_vertex=pixel_to_vertex,
        vertex_coords=vertex_coords,
        neighbors=neighbors,
        splat_counts=counts,
        _gather=gather,
    )


@dataclass(frozen=True)
class Bistochastization:
    n: np.ndarray
    residual: float
    iterations_used: int


def bistochastize(grid: BilateralGrid, max_iters: int = 64, tol: float = 1e-9) -> Bistochastization:
    """Find ``n`` with ``n * blur(n) == m`` by the square-root fixed-point iteration."""
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    m = grid.m
    scale = m.max()
    n = np.ones(grid.nverts)
    bn = grid.blur(n)
    residual = np.abs(n * bn - m).max() / scale
    iters = 0
    while residual > tol and iters < max_iters:
        if not (bn > 0).all():
            raise InternalError("blur of positive weights produced a non-positive entry")
        n = np.sqrt(n * m / bn)
        bn = grid.blur(n)
        residual = np.abs(n * bn - m).max() / scale
        iters += 1
    return Bistochastization(n=n, residual=float(residual), iterations_used=iters)


def dense_splat_matrix(grid: BilateralGrid) -> np.ndarray:
    s = np.zeros((grid.nverts, grid.npixels))
    s[grid.pixel_to_vertex, np.arange(grid.npixels)] = 1.0
    return s


def dense_blur_matrix(grid: BilateralGrid) -> np.ndarray:
    b = np.eye(grid.nverts) * grid.blur_diag
    rows = np.repeat(np.arange(grid.nverts), 2 * grid.dim)
    cols = grid.neighbors.reshape(-1)
    keep = cols >= 0
    np.add.at(b, (rows[keep], cols[keep]), 1.0)
    return b


def dense_what(grid: BilateralGrid, bistoch: Bistochastization, cap: int = 4096) -> np.ndarray:
    """Materialize the bistochastized pixel affinity (test oracle only)."""
    if grid.npixels > cap:
        raise ParameterError(f"dense affinity limited to {cap} pixels, grid has {grid.npixels}")
    s = dense_splat_matrix(grid)
    scale = bistoch.n / grid.m
    inner = scale[:, None] * dense_blur_matrix(grid) * scale[None, :]
    return s.T @ inner @ s
