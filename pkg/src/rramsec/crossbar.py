"""Passive crossbar electrical model.

Every cell sits between a row-wire node and a column-wire node. Row wires
are chained left to right and column wires top to bottom by ``r_wire``
segments. A driven row is fed at its left end through one segment; a
grounded column is sunk at its bottom end through one segment. With
``r_wire == 0`` each wire collapses to a single line node.

Reads never change device state; only the ``pulse_*`` methods do.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .device import DEFAULT_MODEL, DeviceParams
from .errors import ConfigurationError, DomainError
from .variation import VariationSpec, c2c_step, sample_d2d


@dataclass(frozen=True)
class DriveVector:
    """Boundary conditions for one read.

    ``row_voltages`` holds a voltage per row, NaN meaning floating.
    ``col_grounded`` is True where a column sits at virtual ground.
    """

    row_voltages: np.ndarray
    col_grounded: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_voltages", np.asarray(self.row_voltages, dtype=float))
        object.__setattr__(self, "col_grounded", np.asarray(self.col_grounded, dtype=bool))

    @classmethod
    def rows(cls, voltages, m, grounded=None):
        """Drive rows with ``voltages`` (None for floating); ground ``grounded`` columns (all by default)."""
        v = np.array([np.nan if x is None else x for x in voltages], dtype=float)
        g = np.ones(m, dtype=bool) if grounded is None else np.isin(np.arange(m), list(grounded))
        return cls(v, g)

    @property
    def row_driven(self):
        return ~np.isnan(self.row_voltages)


@dataclass(frozen=True)
class ReadResult:
    """Solved currents (A) and node voltages (V).

    ``row_currents`` is the current each driven row injects (negative when a
    row sinks current); ``column_currents`` the current leaving at each
    column's virtual ground. Floating lines report zero. Node-voltage arrays
    are ``(n, m)``: one row-wire and one column-wire node per cell.
    """

    column_currents: np.ndarray
    row_currents: np.ndarray
    row_node_voltages: np.ndarray
    col_node_voltages: np.ndarray

    @property
    def node_voltages(self):
        return np.concatenate([self.row_node_voltages.ravel(), self.col_node_voltages.ravel()])


class Crossbar:
    """An ``n x m`` selector-less RRAM array.

    ``state`` is a boolean matrix (True = LRS) and ``params`` a
    :class:`DeviceParams` of ``(n, m)`` arrays. The crossbar owns its random
    generator; every stochastic pulse draws from it.
    """

    def __init__(self, params, state=None, r_wire=2.5, rng=None, model=DEFAULT_MODEL, variation=None):
        n, m = params.shape
        if n < 1 or m < 1:
            raise ConfigurationError("crossbar needs at least one row and one column")
        if r_wire < 0:
            raise ConfigurationError("wire resistance must be non-negative")
        self.n, self.m = n, m
        self.params = DeviceParams.from_array(params.as_array().copy())
        self.state = np.zeros((n, m), dtype=bool) if state is None else np.array(state, dtype=bool)
        if self.state.shape != (n, m):
            raise ConfigurationError(f"state shape {self.state.shape} does not match ({n}, {m})")
        self.r_wire = float(r_wire)
        self.rng = np.random.default_rng() if rng is None else rng
        self.model = model
        self.variation = VariationSpec() if variation is None else variation
        self._version = 0
        self._transfer = None

    @classmethod
    def sample(cls, n, m, rng, variation=None, r_wire=2.5, model=DEFAULT_MODEL):
        """Fresh all-HRS crossbar with independent D2D parameters."""
        variation = VariationSpec() if variation is None else variation
        params = sample_d2d(variation, rng, size=(n, m))
        return cls(params, r_wire=r_wire, rng=rng, model=model, variation=variation)

    def __repr__(self):
        return f"Crossbar({self.n}x{self.m}, r_wire={self.r_wire}, lrs={int(self.state.sum())})"

    @property
    def shape(self):
        return (self.n, self.m)

    def resistances(self):
        return self.model.resistance(self.params, self.state)

    def conductances(self):
        return 1.0 / self.resistances()

    def _touch(self):
        self._version += 1
        self._transfer = None

    # -- programming ----------------------------------------------------------

    def pulse_cells(self, mask, pulse):
        """Apply ``pulse`` to every cell where ``mask`` is True."""
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), self.shape)
        if not mask.any() or abs(pulse.amplitude) <= self.model.read_amplitude_max:
            return self
        sub = self.params[mask]
        self.state[mask] = self.model.apply_pulse(self.state[mask], sub, pulse, self.rng)
        walked = c2c_step(sub, self.variation, self.rng).as_array()
        values = self.params.as_array()
        values[mask] = walked
        self.params = DeviceParams.from_array(values)
        self._touch()
        return self

    def pulse_rows(self, rows, pulse):
        mask = np.zeros(self.shape, dtype=bool)
        rows = np.atleast_1d(np.asarray(rows, dtype=int))
        if np.any((rows < 0) | (rows >= self.n)):
            raise DomainError(f"row index outside 0..{self.n - 1}")
        mask[rows, :] = True
        return self.pulse_cells(mask, pulse)

    def pulse_all(self, pulse):
        return self.pulse_cells(np.ones(self.shape, dtype=bool), pulse)

    def read_states(self):
        """Bit matrix from thresholding each cell's resistance (1 = LRS)."""
        return (self.resistances() < self.model.decision_boundary).astype(np.uint8)

    def apply_schedule(self, schedule, time):
        """Adopt the latest schedule record at or before ``time`` for each cell."""
        due = schedule.timestamps <= time
        values = self.params.as_array()
        for i, j, v in zip(schedule.rows[due], schedule.cols[due], schedule.values[due]):
            values[i, j] = v
        self.params = DeviceParams.from_array(values)
        self._touch()
        return self

    # -- reading ------------------------------------------------------------------

    def solve(self, drive):
        return solve(self, drive)

    def transfer_matrix(self):
        """``T`` with ``column_currents = row_voltages @ T`` when every line is driven.

        Cached until the next state or parameter change.
        """
        if self._transfer is None:
            self._transfer = _transfer_matrix(self)
        return self._transfer

    def column_currents(self, row_voltages):
        """Column currents for fully driven rows and grounded columns; batches allowed."""
        return np.asarray(row_voltages, dtype=float) @ self.transfer_matrix()


def _check_drive(xbar, drive):
    if drive.row_voltages.shape != (xbar.n,) or drive.col_grounded.shape != (xbar.m,):
        raise ConfigurationError("drive vector does not match crossbar dimensions")
    if not drive.row_driven.any() or not drive.col_grounded.any():
        raise ConfigurationError("a read needs at least one driven row and one grounded column")


def _grid_system(xbar, g_dev, row_driven, col_grounded):
    n, m = xbar.shape
    g_w = 1.0 / xbar.r_wire
    row_id = np.arange(n * m).reshape(n, m)
    col_id = row_id + n * m
    a, b, g = [row_id.ravel()], [col_id.ravel()], [g_dev.ravel()]
    if m > 1:
        a.append(row_id[:, :-1].ravel())
        b.append(row_id[:, 1:].ravel())
        g.append(np.full(n * (m - 1), g_w))
    if n > 1:
        a.append(col_id[:-1, :].ravel())
        b.append(col_id[1:, :].ravel())
        g.append(np.full((n - 1) * m, g_w))
    a, b, g = np.concatenate(a), np.concatenate(b), np.concatenate(g)
    size = 2 * n * m
    diag = np.bincount(a, g, size) + np.bincount(b, g, size)
    diag[row_id[row_driven, 0]] += g_w
    diag[col_id[n - 1, col_grounded]] += g_w
    rows = np.concatenate([a, b, np.arange(size)])
    cols = np.concatenate([b, a, np.arange(size)])
    vals = np.concatenate([-g, -g, diag])
    return sp.csc_matrix((vals, (rows, cols)), shape=(size, size)), row_id, col_id, g_w


def solve(xbar, drive):
    """Node voltages and terminal currents for one set of boundary conditions."""
    _check_drive(xbar, drive)
    n, m = xbar.shape
    g_dev = xbar.conductances()
    driven = drive.row_driven
    v_drive = np.where(driven, drive.row_voltages, 0.0)
    grounded = drive.col_grounded
    if xbar.r_wire == 0:
        return _solve_ideal(g_dev, driven, v_drive, grounded)
    matrix, row_id, col_id, g_w = _grid_system(xbar, g_dev, driven, grounded)
    rhs = np.zeros(2 * n * m)
    rhs[row_id[driven, 0]] = g_w * v_drive[driven]
    v = splu(matrix).solve(rhs)
    v_row = v[: n * m].reshape(n, m)
    v_col = v[n * m :].reshape(n, m)
    col_i = np.where(grounded, v_col[n - 1, :] * g_w, 0.0)
    row_i = np.where(driven, (v_drive - v_row[:, 0]) * g_w, 0.0)
    return ReadResult(col_i, row_i, v_row, v_col)


def _solve_ideal(g, driven, v_drive, grounded):
    n, m = g.shape
    # line nodes: rows 0..n-1 then columns n..n+m-1
    lap = np.zeros((n + m, n + m))
    lap[:n, n:] = -g
    lap[n:, :n] = -g.T
    lap[np.arange(n), np.arange(n)] = g.sum(axis=1)
    lap[np.arange(n, n + m), np.arange(n, n + m)] = g.sum(axis=0)
    known = np.concatenate([driven, grounded])
    v = np.concatenate([v_drive, np.zeros(m)])
    free = ~known
    if free.any():
        v[free] = np.linalg.solve(lap[np.ix_(free, free)], -lap[np.ix_(free, known)] @ v[known])
    v_r, v_c = v[:n], v[n:]
    drop = v_r[:, None] - v_c[None, :]
    col_i = np.where(grounded, (g * drop).sum(axis=0), 0.0)
    row_i = np.where(driven, (g * drop).sum(axis=1), 0.0)
    return ReadResult(col_i, row_i, np.repeat(v_r[:, None], m, axis=1), np.repeat(v_c[None, :], n, axis=0))


def _transfer_matrix(xbar):
    n, m = xbar.shape
    g_dev = xbar.conductances()
    if xbar.r_wire == 0:
        return g_dev.copy()
    everything = np.ones(n, dtype=bool)
    matrix, row_id, col_id, g_w = _grid_system(xbar, g_dev, everything, np.ones(m, dtype=bool))
    rhs = np.zeros((2 * n * m, n))
    rhs[row_id[:, 0], np.arange(n)] = g_w
    v = splu(matrix).solve(rhs)
    return (v[col_id[n - 1, :], :] * g_w).T


def save_bitmap(matrix, path):
    """One line per row of '0'/'1' characters."""
    matrix = np.asarray(matrix, dtype=np.uint8)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in matrix:
            fh.write("".join("1" if b else "0" for b in row) + "\n")


def load_bitmap(path):
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    return np.array([[1 if ch == "1" else 0 for ch in line] for line in lines], dtype=np.uint8)
