"""The Boltzmann measure P_n on multiplicity functions and its conditioning Q_nk.

Under P_n the multiplicities ``omega(x)`` of the primitive vectors of the cone
are independent geometric variables with ``P(omega(x) = j) = q^j (1 - q)``,
``q = exp(-beta_n a.x)``. The infinite product is truncated at ``a.x <= 40/beta_n``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rng as _rng
from .cones import _ConeLike, solve_tilt_vector, zeta
from .primitives import TAIL_FACTOR, PrimitiveSet, enumerate_primitives

_CHUNK_ELEMENTS = 1 << 21


def beta_n(d: int, n: float) -> float:
    """``(zeta(d+1) / (zeta(d) n))^{1/(d+1)}``."""
    return (zeta(d + 1) / (zeta(d) * n)) ** (1.0 / (d + 1))


def rescale_exponent(d: int) -> float:
    """Fluctuations of tangent points live on the scale ``n^{(d+2)/(2(d+1))}``."""
    return (d + 2) / (2 * (d + 1))


class ConditioningError(RuntimeError):
    def __init__(self, trials: int, accepted: int):
        rate = accepted / trials if trials else 0.0
        super().__init__(f"rejection budget exhausted after {trials} trials "
                         f"({accepted} accepted, empirical acceptance {rate:.3e})")
        self.trials = trials
        self.accepted = accepted
        self.acceptance = rate


class SupportError(ValueError):
    """A multiplicity function uses a vector outside the enumerated set."""


@dataclass(frozen=True, eq=False)
class ModelParams:
    cone: _ConeLike
    k: tuple
    n: float
    beta: float
    a: np.ndarray
    cutoff: float

    @property
    def d(self) -> int:
        return self.cone.d

    @property
    def theta(self) -> np.ndarray:
        """Natural parameter ``beta a``."""
        return self.beta * self.a

    @cached_property
    def primitives(self) -> PrimitiveSet:
        return enumerate_primitives(self.cone, self.a, self.cutoff)

    @cached_property
    def _subsets(self) -> dict:
        return {}

    def primitives_for(self, sub: _ConeLike | None = None) -> PrimitiveSet:
        if sub is None:
            return self.primitives
        key = sub.dumps()
        if key not in self._subsets:
            self._subsets[key] = self.primitives.restrict(sub)
        return self._subsets[key]

    @cached_property
    def q(self) -> np.ndarray:
        """``exp(-beta a.x)`` aligned with :attr:`primitives`."""
        return np.exp(-self.beta * self.primitives.weights)

    def target(self) -> np.ndarray:
        return np.asarray(self.k, dtype=np.int64) * int(round(self.n))

    def to_json(self) -> dict:
        return {"d": self.d, "cone": self.cone.to_json(), "k": list(self.k), "n": self.n,
                "beta": self.beta, "a": [float(c) for c in self.a], "cutoff": self.cutoff}


def make_params(cone: _ConeLike, k, n, tail_factor: float = TAIL_FACTOR, a=None,
                beta: float | None = None) -> ModelParams:
    """Model at scale ``n``; ``beta`` overrides the canonical ``beta_n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = tuple(int(c) if float(c).is_integer() else float(c) for c in k)
    if beta is None:
        beta = beta_n(cone.d, n)
    if a is None:
        a = solve_tilt_vector(cone, k)
    return ModelParams(cone, k, n, beta, np.asarray(a, dtype=float), tail_factor / beta)


# ---------------------------------------------------------------------------
# multiplicities


@dataclass
class Multiplicities:
    """Finitely supported map primitive vector -> positive count."""

    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = {tuple(int(c) for c in x): int(m) for x, m in self.entries.items() if m}

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, Multiplicities) and self.entries == other.entries

    def items(self):
        return sorted(self.entries.items())

    def arrays(self, d: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        if not self.entries:
            return np.zeros((0, d or 0), dtype=np.int64), np.zeros(0, dtype=np.int64)
        keys, counts = zip(*self.items())
        return np.asarray(keys, dtype=np.int64), np.asarray(counts, dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = len(next(iter(self.entries))) if self.entries else 0
            w.writerow([f"x{i + 1}" for i in range(d)] + ["count"])
            for x, m in self.items():
                w.writerow(list(x) + [m])

    @classmethod
    def from_csv(cls, path) -> "Multiplicities":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls({tuple(int(c) for c in r[:-1]): int(r[-1]) for r in rows})


def endpoint(omega: Multiplicities, d: int | None = None) -> np.ndarray:
    """``sum_x omega(x) x`` in integer arithmetic."""
    if not omega.entries:
        return np.zeros(d or 0, dtype=np.int64)
    x, m = omega.arrays()
    return m @ x


# ---------------------------------------------------------------------------
# sampling core


def geometric_counts(u: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """Inverse CDF of the geometric law: ``floor(log U / log q)``."""
    return np.floor(np.log(u) / log_q).astype(np.int64)


class _Streams:
    """Per-vector stream keys and acceptance thresholds for one vector set."""

    def __init__(self, vectors: np.ndarray, q: np.ndarray, seed: int):
        self.vectors = vectors
        self.keys = _rng.stream_keys(seed, _rng.hash_vectors(vectors))
        self.log_q = np.log(q)
        # omega >= 1 iff U <= q; U = (bits + 1/2) 2^-53, bits = raw >> 11
        thr = np.floor(np.minimum(q, 1.0) * 2.0 ** 53)
        self.threshold = thr.astype(np.uint64) + np.uint64(1)

    def hits(self, counters: np.ndarray):
        """Rows (into ``counters``), columns and counts of nonzero multiplicities."""
        counters = np.asarray(counters, dtype=np.uint64).reshape(-1, 1)
        with np.errstate(over="ignore"):
            z = (counters + np.uint64(1)) * _rng.GOLDEN
            z = z + self.keys[None, :]
            z ^= z >> _rng._S30
            z *= _rng._M1
            z ^= z >> _rng._S27
            z *= _rng._M2
            z ^= z >> _rng._S31
        z >>= _rng._S11
        rows, cols = np.nonzero(z < self.threshold[None, :])
        u = (z[rows, cols].astype(np.float64) + 0.5) * _rng._TWO53
        counts = geometric_counts(u, self.log_q[cols])
        keep = counts > 0
        return rows[keep], cols[keep], counts[keep]


def _chunks(counters: np.ndarray, width: int):
    step = max(1, _CHUNK_ELEMENTS // max(width, 1))
    for i in range(0, len(counters), step):
        yield i, counters[i:i + step]


def _labels_for(params: ModelParams, cells) -> tuple[np.ndarray, int]:
    """Cell index for each vector of the full set (-1 = not in any cell)."""
    vecs = params.primitives.vectors
    if cells is None:
        return np.zeros(len(vecs), dtype=np.int64), 1
    if isinstance(cells, np.ndarray):
        return cells.astype(np.int64), int(cells.max()) + 1 if cells.size else 1
    labels = np.full(len(vecs), -1, dtype=np.int64)
    for i, sub in enumerate(cells):
        m = sub.contains(vecs) if len(vecs) else np.zeros(0, bool)
        if np.any(labels[m] >= 0):
            raise ValueError("cells overlap")
        labels[m] = i
    return labels, len(cells)


def sample_cell_endpoints(params: ModelParams, seed: int, counters, cells=None,
                          threads: int = 1) -> np.ndarray:
    """Endpoints restricted to each cell for many samples at once.

    ``cells`` is a sequence of disjoint subcones, or an integer label per
    primitive vector. Returns an int64 array ``(len(counters), n_cells, d)``;
    sample ``i`` uses counter ``counters[i]`` and agrees with
    :func:`sample_omega` at the same seed and counter.
    """
    counters = np.asarray(counters, dtype=np.uint64)
    labels, ncells = _labels_for(params, cells)
    keep = labels >= 0
    vecs = params.primitives.vectors[keep]
    labels = labels[keep]
    streams = _Streams(vecs, params.q[keep], seed)
    d = params.d
    out = np.zeros((len(counters), ncells, d), dtype=np.int64)

    def work(item):
        i0, ctr = item
        rows, cols, counts = streams.hits(ctr)
        flat = (rows * ncells + labels[cols])
        block = np.zeros((len(ctr) * ncells, d), dtype=np.int64)
        np.add.at(block, flat, counts[:, None] * vecs[cols])
        out[i0:i0 + len(ctr)] = block.reshape(len(ctr), ncells, d)

    items = list(_chunks(counters, len(vecs)))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, items))
    else:
        for it in items:
            work(it)
    return out


def sample_omegas(params: ModelParams, seed: int, counters,
                  sub: _ConeLike | None = None) -> list[Multiplicities]:
    """Draws of ``omega`` under P_n restricted to ``sub``, one per counter.

    A draw is a pure function of ``(seed, counter)``; restricting to a subcone
    yields exactly the restriction of the full-cone draw.
    """
    pset = params.primitives
    mask = pset.mask(sub)
    vecs = pset.vectors[mask]
    streams = _Streams(vecs, params.q[mask], seed)
    counters = np.asarray(counters, dtype=np.uint64).ravel()
    out = []
    for i0, ctr in _chunks(counters, len(vecs)):
        rows, cols, counts = streams.hits(ctr)
        # hits come out in row-major order
        bounds = np.searchsorted(rows, np.arange(len(ctr) + 1))
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            out.append(Multiplicities({tuple(vecs[c]): m for c, m in zip(cols[lo:hi], counts[lo:hi])}))
    return out


def sample_omega(params: ModelParams, sub: _ConeLike | None = None, seed: int = 0,
                 counter: int = 0) -> Multiplicities:
    """One draw of ``omega`` under P_n restricted to ``sub``."""
    return sample_omegas(params, seed, [counter], sub)[0]


# ---------------------------------------------------------------------------
# likelihood


def log_partition(params: ModelParams, sub: _ConeLike | None = None, theta=None) -> float:
    """``log Z = sum_x -log(1 - exp(-theta.x))`` over the truncated set (default ``theta = beta a``)."""
    pset = params.primitives_for(sub)
    theta = params.theta if theta is None else np.asarray(theta, dtype=float)
    e = pset.vectors @ theta
    return float(-np.log1p(-np.exp(-e)).sum())


def log_prob(params: ModelParams, omega: Multiplicities) -> float:
    index = params.primitives.index
    for x in omega.entries:
        if x not in index:
            raise SupportError(f"{x} is not in the enumerated primitive set")
    ep = endpoint(omega, params.d)
    return float(-params.theta @ ep) - log_partition(params)


# ---------------------------------------------------------------------------
# conditioning on the endpoint


@dataclass
class ConditionedBatch:
    """Accepted trials of the rejection sampler for Q_nk."""

    counters: np.ndarray
    cells: np.ndarray
    trials: int

    @property
    def acceptance(self) -> float:
        return len(self.counters) / self.trials if self.trials else 0.0


def _split_for_target(params: ModelParams, target: np.ndarray):
    """Vectors that may appear in an omega ending at ``target`` versus the rest.

    If ``omega`` ends at ``target``, every generator ``x`` leaves ``target - x``
    in the cone, so vectors failing this can only cause rejection.
    """
    vecs = params.primitives.vectors
    return params.cone.contains(target[None, :] - vecs)


def sample_conditioned_batch(params: ModelParams, seed: int, n_accept: int, max_trials: int,
                             cells=None, start: int = 0, threads: int = 1) -> ConditionedBatch:
    """Rejection sampling of Q_nk: trials ``start, start+1, ...`` until ``n_accept`` are kept.

    A trial is accepted iff ``endpoint = n k``. Vectors that cannot occur in an
    accepted omega are only drawn for trials that already hit the target with
    the others; since each vector has its own counter-indexed stream this is
    the same decision as drawing everything.
    """
    target = params.target()
    labels, ncells = _labels_for(params, cells)
    inner = _split_for_target(params, target)
    vecs = params.primitives.vectors
    s_in = _Streams(vecs[inner], params.q[inner], seed)
    s_out = _Streams(vecs[~inner], params.q[~inner], seed)
    lab_in = labels[inner]
    d = params.d

    accepted_ctr, accepted_cells = [], []
    trials = 0
    step = max(1, _CHUNK_ELEMENTS // max(len(s_in.keys), 1))
    pos = start
    while len(accepted_ctr) < n_accept and trials < max_trials:
        size = min(step, max_trials - trials)
        ctr = np.arange(pos, pos + size, dtype=np.uint64)
        rows, cols, counts = s_in.hits(ctr)
        contrib = counts[:, None] * s_in.vectors[cols]
        ends = np.zeros((size, d), dtype=np.int64)
        np.add.at(ends, rows, contrib)
        cand = np.nonzero(np.all(ends == target, axis=1))[0]
        if len(cand) and len(s_out.keys):
            orow, _, _ = s_out.hits(ctr[cand])
            cand = np.delete(cand, np.unique(orow))
        if len(cand):
            cand_set = np.zeros(size, dtype=bool)
            cand_set[cand] = True
            sel = cand_set[rows]
            block = np.zeros((size, ncells, d), dtype=np.int64)
            np.add.at(block, (rows[sel], lab_in[cols[sel]]), contrib[sel])
            room = n_accept - len(accepted_ctr)
            cand = cand[:room]
            if len(cand) == room:
                # stop counting trials at the last accepted one
                size = int(cand[-1]) + 1
            accepted_ctr.extend(ctr[cand].tolist())
            accepted_cells.append(block[cand])
        trials += size
        pos += size
    cells_arr = (np.concatenate(accepted_cells) if accepted_cells
                 else np.zeros((0, ncells, d), dtype=np.int64))
    return ConditionedBatch(np.asarray(accepted_ctr, dtype=np.uint64), cells_arr, trials)


def sample_conditioned(params: ModelParams, seed: int = 0, max_trials: int = 1_000_000,
                       start: int = 0) -> tuple[Multiplicities, int]:
    """One draw from Q_nk by rejection; returns ``(omega, trials_used)``."""
    batch = sample_conditioned_batch(params, seed, 1, max_trials, start=start)
    if len(batch.counters) == 0:
        raise ConditioningError(batch.trials, 0)
    omega = sample_omega(params, seed=seed, counter=int(batch.counters[0]))
    return omega, batch.trials
