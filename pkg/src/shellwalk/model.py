"""Binary pairwise models, shell-constrained states, and per-bit bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoherenceError, ModelFormatError

# Flips between from-scratch energy refreshes of a ShellState's cached energy.
# Keeps additive drift from long flip/unflip sequences below audit tolerance.
ENERGY_REFRESH_INTERVAL = 1 << 14

COHERENCE_RTOL = 1e-9


class IsingModel:
    """Sparse pairwise binary model: couplings on edges plus per-variable fields.

    Energies are evaluated in the +/-1 spin convention,
    ``E(s) = -sum_(i,j) J_ij*s_i*s_j - sum_i h_i*s_i`` with ``s_i = 2*x_i - 1``,
    while configurations are stored as {0,1} bits throughout the library.

    Instances are immutable after construction and safe to share across
    concurrently running chains.
    """

    __slots__ = (
        "num_vars",
        "edges",
        "fields",
        "adjacency",
        "meta",
        "_nbr_idx",
        "_nbr_coup",
        "_fields_arr",
    )

    def __init__(self, num_vars, edges, fields=None, meta=None):
        if num_vars < 0:
            raise ValueError(f"num_vars must be nonnegative, got {num_vars}")
        self.num_vars = int(num_vars)

        if fields is None:
            fields = [0.0] * self.num_vars
        fields = [float(h) for h in fields]
        if len(fields) != self.num_vars:
            raise ValueError(
                f"fields has length {len(fields)}, expected {self.num_vars}"
            )
        for i, h in enumerate(fields):
            if not math.isfinite(h):
                raise ValueError(f"field {i} is not finite: {h}")
        self.fields = fields

        normalized = []
        for row, (i, j, coupling) in enumerate(edges):
            i, j, coupling = int(i), int(j), float(coupling)
            if i == j:
                raise ValueError(f"edge {row} is a self-loop: ({i}, {j})")
            if i > j:
                i, j = j, i
            if not (0 <= i < self.num_vars and 0 <= j < self.num_vars):
                raise ValueError(
                    f"edge {row} ({i}, {j}) out of range [0, {self.num_vars})"
                )
            if not math.isfinite(coupling):
                raise ValueError(f"edge {row} has non-finite coupling {coupling}")
            normalized.append((i, j, coupling))
        normalized.sort(key=lambda e: (e[0], e[1]))
        for a, b in zip(normalized, normalized[1:]):
            if a[0] == b[0] and a[1] == b[1]:
                raise ValueError(f"duplicate edge ({a[0]}, {a[1]})")
        self.edges = tuple(normalized)

        adj = [[] for _ in range(self.num_vars)]
        for i, j, coupling in self.edges:
            adj[i].append((j, coupling))
            adj[j].append((i, coupling))
        self.adjacency = tuple(tuple(row) for row in adj)

        self.meta = dict(meta) if meta else {}
        self._nbr_idx = None
        self._nbr_coup = None
        self._fields_arr = None

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def average_degree(self):
        if self.num_vars == 0:
            return 0.0
        return 2.0 * len(self.edges) / self.num_vars

    def max_flip_delta(self):
        """Upper bound on |delta E| over all single-bit flips and states."""
        best = 0.0
        for i in range(self.num_vars):
            scale = 2.0 * (sum(abs(c) for _, c in self.adjacency[i]) + abs(self.fields[i]))
            if scale > best:
                best = scale
        return best

    def energy(self, bits):
        """Full energy of a {0,1} configuration.

        Edges are summed in sorted index order so repeated evaluations within
        one build give bit-identical results regardless of input edge order.
        """
        if len(bits) != self.num_vars:
            raise ValueError(
                f"state has length {len(bits)}, expected {self.num_vars}"
            )
        spins = [2.0 * b - 1.0 for b in bits]
        total = 0.0
        for i, j, coupling in self.edges:
            total -= coupling * spins[i] * spins[j]
        for i, h in enumerate(self.fields):
            total -= h * spins[i]
        return total

    def delta_energy(self, bits, i):
        """Energy change from flipping bit ``i`` of ``bits``; O(degree(i))."""
        if not 0 <= i < self.num_vars:
            raise IndexError(f"index {i} out of range [0, {self.num_vars})")
        s_i = 2.0 * bits[i] - 1.0
        acc = self.fields[i]
        for j, coupling in self.adjacency[i]:
            acc += coupling * (2.0 * bits[j] - 1.0)
        return 2.0 * s_i * acc

    # numpy views used by the dense-model candidate scanner

    def neighbor_arrays(self):
        if self._nbr_idx is None:
            self._nbr_idx = [
                np.array([j for j, _ in row], dtype=np.intp)
                for row in self.adjacency
            ]
            self._nbr_coup = [
                np.array([c for _, c in row], dtype=np.float64)
                for row in self.adjacency
            ]
        return self._nbr_idx, self._nbr_coup

    def fields_array(self):
        if self._fields_arr is None:
            self._fields_arr = np.array(self.fields, dtype=np.float64)
        return self._fields_arr

    def to_dict(self):
        out = {
            "num_vars": self.num_vars,
            "edges": [[i, j, c] for i, j, c in self.edges],
            "fields": list(self.fields),
        }
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_dict(cls, data):
        """Build a model from the JSON object form, rejecting malformed input."""
        if not isinstance(data, dict):
            raise ModelFormatError("model document must be a JSON object")
        for key in ("num_vars", "edges", "fields"):
            if key not in data:
                raise ModelFormatError(f"missing required key {key!r}")
        num_vars = data["num_vars"]
        if not isinstance(num_vars, int) or num_vars < 0:
            raise ModelFormatError(f"num_vars must be a nonnegative integer, got {num_vars!r}")
        edges = data["edges"]
        if not isinstance(edges, list):
            raise ModelFormatError("edges must be an array")
        seen = set()
        for row, entry in enumerate(edges):
            if not (isinstance(entry, list) and len(entry) == 3):
                raise ModelFormatError(f"edges[{row}] must be [i, j, J]")
            i, j, coupling = entry
            if not isinstance(i, int) or not isinstance(j, int):
                raise ModelFormatError(f"edges[{row}] endpoints must be integers")
            if i == j:
                raise ModelFormatError(f"edges[{row}] is a self-loop: ({i}, {j})")
            if not i < j:
                raise ModelFormatError(f"edges[{row}] must have i < j, got ({i}, {j})")
            if not (0 <= i and j < num_vars):
                raise ModelFormatError(
                    f"edges[{row}] ({i}, {j}) out of range [0, {num_vars})"
                )
            if (i, j) in seen:
                raise ModelFormatError(f"edges[{row}] duplicates edge ({i}, {j})")
            seen.add((i, j))
            if not isinstance(coupling, (int, float)) or not math.isfinite(coupling):
                raise ModelFormatError(f"edges[{row}] coupling must be a finite number")
        fields = data["fields"]
        if not isinstance(fields, list) or len(fields) != num_vars:
            raise ModelFormatError(f"fields must be an array of {num_vars} numbers")
        for i, h in enumerate(fields):
            if not isinstance(h, (int, float)) or not math.isfinite(h):
                raise ModelFormatError(f"fields[{i}] must be a finite number")
        meta = data.get("meta")
        if meta is not None and not isinstance(meta, dict):
            raise ModelFormatError("meta must be an object when present")
        return cls(num_vars, [tuple(e) for e in edges], fields, meta)


def partition_sets(bits, reference):
    """Split indices into (agree, disagree) relative to the reference state."""
    if len(bits) != len(reference):
        raise ValueError(
            f"state length {len(bits)} != reference length {len(reference)}"
        )
    agree, disagree = [], []
    for i, (b, r) in enumerate(zip(bits, reference)):
        if b == r:
            agree.append(i)
        else:
            disagree.append(i)
    return agree, disagree


@dataclass(frozen=True)
class ShellConstraint:
    """The shell of states at Hamming distance ``distance`` from ``reference``."""

    reference: tuple
    distance: int

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(int(b) for b in self.reference))
        if any(b not in (0, 1) for b in self.reference):
            raise ValueError("reference must be a {0,1} vector")
        if not 0 <= self.distance <= len(self.reference):
            raise ValueError(
                f"distance {self.distance} out of range [0, {len(self.reference)}]"
            )

    @property
    def num_vars(self):
        return len(self.reference)


class ShellState:
    """A {0,1} configuration with cached energy, Hamming distance to a
    reference state, and the agree/disagree index partition.

    The partition is kept as a permutation of all indices with the disagreeing
    ones in the first ``distance`` slots, which gives O(1) membership tests and
    O(1) transfers between the two sets on every flip. The cached energy is
    refreshed from scratch every ``ENERGY_REFRESH_INTERVAL`` flips; with
    ``audit=True`` the refresh also asserts coherence of the cache.

    Each instance is exclusively owned by one chain; the referenced model is
    immutable and may be shared.
    """

    __slots__ = (
        "model",
        "bits",
        "spins",
        "reference",
        "distance",
        "energy",
        "_members",
        "_pos",
        "_flips",
        "audit",
    )

    def __init__(self, model: IsingModel, bits, reference, audit=False):
        m = model.num_vars
        if len(bits) != m:
            raise ValueError(f"bits has length {len(bits)}, expected {m}")
        if len(reference) != m:
            raise ValueError(f"reference has length {len(reference)}, expected {m}")
        self.model = model
        self.bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be a {0,1} vector")
        self.spins = [2.0 * b - 1.0 for b in self.bits]
        self.reference = tuple(int(r) for r in reference)
        disagree = [i for i in range(m) if self.bits[i] != self.reference[i]]
        agree = [i for i in range(m) if self.bits[i] == self.reference[i]]
        self._members = disagree + agree
        self._pos = [0] * m
        for pos, i in enumerate(self._members):
            self._pos[i] = pos
        self.distance = len(disagree)
        self.energy = model.energy(self.bits)
        self._flips = 0
        self.audit = audit

    @classmethod
    def from_constraint_bits(cls, model, bits, constraint: ShellConstraint, audit=False):
        state = cls(model, bits, constraint.reference, audit=audit)
        if state.distance != constraint.distance:
            raise ValueError(
                f"state is at distance {state.distance}, constraint wants "
                f"{constraint.distance}"
            )
        return state

    def copy(self):
        new = object.__new__(ShellState)
        new.model = self.model
        new.bits = list(self.bits)
        new.spins = list(self.spins)
        new.reference = self.reference
        new.distance = self.distance
        new.energy = self.energy
        new._members = list(self._members)
        new._pos = list(self._pos)
        new._flips = self._flips
        new.audit = self.audit
        return new

    @property
    def num_vars(self):
        return len(self.bits)

    def delta_energy(self, i):
        """Energy change if bit ``i`` were flipped; O(degree(i))."""
        if not 0 <= i < len(self.bits):
            raise IndexError(f"index {i} out of range [0, {len(self.bits)})")
        spins = self.spins
        acc = self.model.fields[i]
        for j, coupling in self.model.adjacency[i]:
            acc += coupling * spins[j]
        return 2.0 * spins[i] * acc

    def flip(self, i):
        """Invert bit ``i`` in place, updating all caches incrementally.

        Returns the energy change that was applied.
        """
        delta = self.delta_energy(i)
        self.energy += delta
        self.bits[i] ^= 1
        self.spins[i] = -self.spins[i]
        pos = self._pos[i]
        d = self.distance
        members = self._members
        if pos < d:
            # disagreeing -> agreeing: swap into the boundary slot d-1
            last = d - 1
            other = members[last]
            members[pos], members[last] = other, i
            self._pos[other], self._pos[i] = pos, last
            self.distance = last
        else:
            other = members[d]
            members[pos], members[d] = other, i
            self._pos[other], self._pos[i] = pos, d
            self.distance = d + 1
        self._flips += 1
        if self._flips % ENERGY_REFRESH_INTERVAL == 0:
            self._refresh_energy()
        return delta

    def _refresh_energy(self):
        scratch = self.model.energy(self.bits)
        if self.audit:
            tol = COHERENCE_RTOL * (1.0 + abs(scratch))
            if abs(self.energy - scratch) > tol:
                raise CoherenceError(
                    f"cached energy {self.energy!r} drifted from recomputed "
                    f"{scratch!r} after {self._flips} flips"
                )
        self.energy = scratch

    def in_disagree(self, i):
        return self._pos[i] < self.distance

    def disagree_at(self, position):
        """The ``position``-th disagreeing index (arbitrary but stable order)."""
        if not 0 <= position < self.distance:
            raise IndexError(f"no disagreeing slot {position}")
        return self._members[position]

    def agree_at(self, position):
        if not 0 <= position < len(self.bits) - self.distance:
            raise IndexError(f"no agreeing slot {position}")
        return self._members[self.distance + position]

    def disagree_indices(self):
        """Indices where the state differs from the reference (unsorted)."""
        return self._members[: self.distance]

    def agree_indices(self):
        return self._members[self.distance :]

    def partition(self):
        """From-scratch (agree, disagree) partition; used for cache checks."""
        return partition_sets(self.bits, self.reference)
