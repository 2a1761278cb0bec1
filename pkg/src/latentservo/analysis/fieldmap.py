"""Task-space field maps and their control-relevant geometry metrics.

A field map samples the whole 2D task space on a uniform grid and stores
the time-varying factor values at every cell: the learned analogue of the
position -> feature mapping a servo controller relies on. Smoothness is
probed by rank correlation along grid lines; injectivity by counting
far-apart cells that collide in factor space.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np
from scipy import stats

from ..representations import ModelWeights, encode_batch
from ..toyenv import TaskSpec, WorldState, grid_positions, render
from .factors import FactorSet, project

BatchEncoder = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class LatentFieldMap:
    grid_n: int
    positions: np.ndarray    # (grid_n^2, 2), row-major in y
    values: np.ndarray       # (grid_n^2, k) factor values per cell
    factors: FactorSet

    def __post_init__(self):
        n2 = self.grid_n * self.grid_n
        if self.positions.shape != (n2, 2):
            raise ValueError(f"positions must be ({n2}, 2)")
        if self.values.shape[0] != n2:
            raise ValueError("one value row per grid cell required")

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def spacing(self) -> float:
        return 1.0 / (self.grid_n - 1)

    def grid_view(self) -> np.ndarray:
        """Values as (grid_n, grid_n, k) indexed [iy, ix]."""
        return self.values.reshape(self.grid_n, self.grid_n, self.k)


def _worker_count(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("LATENTSERVO_THREADS")
    return max(1, int(env)) if env else 1


def build_field_map(encoder: Union[ModelWeights, BatchEncoder], factors: FactorSet,
                    grid_n: int, spec: TaskSpec,
                    workers: Optional[int] = None) -> LatentFieldMap:
    """Render + encode + project every grid cell.

    ``encoder`` is either trained weights or a batch callable
    (positions, frames) -> latents; the callable form admits the
    ground-truth oracle that reads positions directly.
    """
    if len(factors) == 0:
        raise ValueError("field map needs a non-empty factor set")
    positions = grid_positions(grid_n)

    if isinstance(encoder, ModelWeights):
        def encode_fn(pos, frames):
            return encode_batch(encoder, frames)[0]
    else:
        encode_fn = encoder

    def run_chunk(chunk: np.ndarray) -> np.ndarray:
        frames = np.stack([render(WorldState(position=p), spec) for p in chunk])
        return project(encode_fn(chunk, frames), factors)

    n_workers = _worker_count(workers)
    chunks = np.array_split(positions, max(1, min(len(positions), n_workers * 4)))
    if n_workers == 1:
        parts = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run_chunk, chunks))  # merged in chunk order
    values = np.concatenate(parts, axis=0)
    return LatentFieldMap(grid_n=grid_n, positions=positions, values=values,
                          factors=factors)


def _line_rho(coord: np.ndarray, vals: np.ndarray) -> float:
    if np.ptp(vals) == 0.0:
        return 0.0
    rho = stats.spearmanr(coord, vals).statistic
    return 0.0 if math.isnan(rho) else float(rho)


@dataclass
class MonotonicityReport:
    per_factor_x: np.ndarray  # mean signed rho along x lines, per factor
    per_factor_y: np.ndarray
    x: float                  # best-aligned factor's |rho| for the x axis
    y: float

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "per_factor_x": [float(v) for v in self.per_factor_x],
            "per_factor_y": [float(v) for v in self.per_factor_y],
        }


def monotonicity_metric(field: LatentFieldMap) -> MonotonicityReport:
    """Rank correlation of each factor with each workspace axis along grid lines."""
    if field.grid_n < 4:
        raise ValueError("monotonicity needs grid_n >= 4")
    g = field.grid_view().astype(np.float64)
    n = field.grid_n
    idx = np.arange(n, dtype=np.float64)
    per_x = np.empty(field.k)
    per_y = np.empty(field.k)
    for f in range(field.k):
        per_x[f] = np.mean([_line_rho(idx, g[iy, :, f]) for iy in range(n)])
        per_y[f] = np.mean([_line_rho(idx, g[:, ix, f]) for ix in range(n)])
    return MonotonicityReport(per_factor_x=per_x, per_factor_y=per_y,
                              x=float(np.abs(per_x).max()),
                              y=float(np.abs(per_y).max()))


def injectivity_metric(field: LatentFieldMap, eps: float) -> float:
    """Fraction of cell pairs that collide in factor space yet sit far apart.

    A collision is z-distance < eps with task-space distance beyond four
    grid spacings. Candidate pairs come from spatial hashing of the first
    (up to) two factor dims with cell size eps, never an all-pairs scan.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    z = field.values.astype(np.float64)
    pos = field.positions
    n = z.shape[0]
    total_pairs = n * (n - 1) // 2
    far = 4.0 * field.spacing

    hash_dims = min(2, z.shape[1])
    keys = np.floor(z[:, :hash_dims] / eps).astype(np.int64)
    cells: Dict[tuple, list] = {}
    for i, key in enumerate(map(tuple, keys)):
        cells.setdefault(key, []).append(i)

    if hash_dims == 1:
        half_neighborhood = [(0,), (1,)]
    else:
        half_neighborhood = [(0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]

    def count_batch(ii: np.ndarray, jj: np.ndarray) -> int:
        zd = np.linalg.norm(z[ii] - z[jj], axis=1)
        pd = np.linalg.norm(pos[ii] - pos[jj], axis=1)
        return int(np.count_nonzero((zd < eps) & (pd > far)))

    collisions = 0
    chunk = 1 << 20
    for key, members in cells.items():
        a = np.asarray(members)
        for off in half_neighborhood:
            if all(o == 0 for o in off):
                if len(a) > 1:
                    iu, ju = np.triu_indices(len(a), k=1)
                    for s in range(0, iu.size, chunk):
                        collisions += count_batch(a[iu[s:s + chunk]], a[ju[s:s + chunk]])
                continue
            other = cells.get(tuple(k + o for k, o in zip(key, off)))
            if not other:
                continue
            b = np.asarray(other)
            ii = np.repeat(a, len(b))
            jj = np.tile(b, len(a))
            for s in range(0, ii.size, chunk):
                collisions += count_batch(ii[s:s + chunk], jj[s:s + chunk])
    return collisions / total_pairs


def suggest_collision_eps(field: LatentFieldMap, fraction: float = 0.02) -> float:
    """Collision radius as a fraction of the factor-value bounding-box diagonal."""
    ranges = np.ptp(field.values.astype(np.float64), axis=0)
    diag = float(np.linalg.norm(ranges))
    if diag == 0.0:
        return 1e-6  # degenerate map: any positive radius collides everything
    return fraction * diag


def field_map_csv(field: LatentFieldMap) -> str:
    buf = io.StringIO()
    cols = ",".join(f"f{idx}" for idx in field.factors.indices)
    buf.write(f"x,y,{cols}\n")
    for p, v in zip(field.positions, field.values):
        buf.write(f"{p[0]:.6g},{p[1]:.6g}," + ",".join(f"{x:.6g}" for x in v) + "\n")
    return buf.getvalue()
