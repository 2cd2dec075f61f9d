"""Truncated Fock space of two two-level atoms and four cavity modes.

The system holds at most two excitations in total (the initial state has
exactly two and every process conserves or lowers the count), so the state
space splits into three sectors of fixed excitation number with dimensions
1, 6 and 19.  Basis states are written |x1 n1 n2, x2 n3 n4> with x the
atomic state (g/e), n1/n2 the left-cavity mode occupations and n3/n4 the
right-cavity ones.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidSectorError, InvalidStateError, SectorMismatchError

SECTOR_DIMS = {0: 1, 1: 6, 2: 19}

# canonical ordering of the two-excitation sector; the single-photon pair
# states are grouped atoms-first, then double occupations, then 1+1 splits
_SECTOR2_OCCUPATIONS = (
    (1, 0, 0, 1, 0, 0),
    (1, 1, 0, 0, 0, 0),
    (1, 0, 1, 0, 0, 0),
    (1, 0, 0, 0, 1, 0),
    (1, 0, 0, 0, 0, 1),
    (0, 1, 0, 1, 0, 0),
    (0, 0, 1, 1, 0, 0),
    (0, 0, 0, 1, 1, 0),
    (0, 0, 0, 1, 0, 1),
    (0, 2, 0, 0, 0, 0),
    (0, 0, 2, 0, 0, 0),
    (0, 0, 0, 0, 2, 0),
    (0, 0, 0, 0, 0, 2),
    (0, 1, 1, 0, 0, 0),
    (0, 1, 0, 0, 1, 0),
    (0, 1, 0, 0, 0, 1),
    (0, 0, 1, 0, 1, 0),
    (0, 0, 1, 0, 0, 1),
    (0, 0, 0, 0, 1, 1),
)

# one-excitation sector in left-to-right reading order of the ket slots
_SECTOR1_OCCUPATIONS = (
    (1, 0, 0, 0, 0, 0),
    (0, 1, 0, 0, 0, 0),
    (0, 0, 1, 0, 0, 0),
    (0, 0, 0, 1, 0, 0),
    (0, 0, 0, 0, 1, 0),
    (0, 0, 0, 0, 0, 1),
)

_SECTOR0_OCCUPATIONS = ((0, 0, 0, 0, 0, 0),)

_OCCUPATIONS = {0: _SECTOR0_OCCUPATIONS, 1: _SECTOR1_OCCUPATIONS, 2: _SECTOR2_OCCUPATIONS}


@dataclass(frozen=True)
class BasisState:
    """Occupation configuration (atom_L, n1, n2, atom_R, n3, n4)."""

    atom_l: int
    n1: int
    n2: int
    atom_r: int
    n3: int
    n4: int

    def __post_init__(self):
        if self.atom_l not in (0, 1) or self.atom_r not in (0, 1):
            raise InvalidStateError(f"atomic occupations must be 0 or 1, got {self}")
        for n in (self.n1, self.n2, self.n3, self.n4):
            if n not in (0, 1, 2):
                raise InvalidStateError(f"mode occupations must be 0..2, got {self}")
        if self.excitations > 2:
            raise InvalidStateError(f"total excitation exceeds 2: {self}")

    @property
    def excitations(self) -> int:
        return self.atom_l + self.atom_r + self.n1 + self.n2 + self.n3 + self.n4

    @property
    def occupations(self) -> tuple:
        return (self.atom_l, self.n1, self.n2, self.atom_r, self.n3, self.n4)

    def mirrored(self) -> "BasisState":
        """Swap the left and right systems (atoms swap, modes 1<->4, 2<->3)."""
        return BasisState(self.atom_r, self.n4, self.n3, self.atom_l, self.n2, self.n1)

    def label(self) -> str:
        al = "e" if self.atom_l else "g"
        ar = "e" if self.atom_r else "g"
        return f"|{al}{self.n1}{self.n2},{ar}{self.n3}{self.n4}>"


@dataclass(frozen=True)
class SectorBasis:
    """All basis states of one excitation sector, in canonical order."""

    k: int
    states: tuple

    def __len__(self) -> int:
        return len(self.states)

    def index(self, state: BasisState) -> int:
        if state.excitations != self.k:
            raise SectorMismatchError(
                f"state {state.label()} has {state.excitations} excitations, sector is {self.k}"
            )
        return _index_map(self.k)[state.occupations]


@lru_cache(maxsize=None)
def enumerate_sector(k: int) -> SectorBasis:
    """Return the complete, canonically ordered basis of sector k."""
    if k not in _OCCUPATIONS:
        raise InvalidSectorError(f"sector must be 0, 1 or 2, got {k}")
    return SectorBasis(k, tuple(BasisState(*occ) for occ in _OCCUPATIONS[k]))


@lru_cache(maxsize=None)
def _index_map(k: int) -> dict:
    return {occ: i for i, occ in enumerate(_OCCUPATIONS[k])}


def index_of(state: BasisState) -> int:
    """Ordinal of a basis state within its own sector."""
    return enumerate_sector(state.excitations).index(state)


@dataclass
class StateVector:
    """Complex amplitudes over one excitation sector (may be sub-normalized)."""

    sector: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.sector not in SECTOR_DIMS:
            raise InvalidSectorError(f"sector must be 0, 1 or 2, got {self.sector}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (SECTOR_DIMS[self.sector],):
            raise SectorMismatchError(
                f"sector {self.sector} needs {SECTOR_DIMS[self.sector]} amplitudes, "
                f"got shape {amps.shape}"
            )
        self.amplitudes = amps

    def copy(self) -> "StateVector":
        return StateVector(self.sector, self.amplitudes.copy())


def norm_squared(v: StateVector) -> float:
    """Sum of squared amplitude magnitudes."""
    a = v.amplitudes
    return float(np.real(np.vdot(a, a)))


def basis_vector(state: BasisState) -> StateVector:
    """Unit state vector along one basis state."""
    k = state.excitations
    amps = np.zeros(SECTOR_DIMS[k], dtype=np.complex128)
    amps[index_of(state)] = 1.0
    return StateVector(k, amps)


def initial_state() -> StateVector:
    """Both atoms excited, all cavity modes empty."""
    return basis_vector(BasisState(1, 0, 0, 1, 0, 0))


@lru_cache(maxsize=None)
def mirror_permutation(k: int) -> np.ndarray:
    """Index permutation implementing the left/right mirror map on sector k.

    perm[i] is the index of the mirror image of basis state i; applying it
    twice is the identity.
    """
    basis = enumerate_sector(k)
    return np.array([basis.index(s.mirrored()) for s in basis.states], dtype=np.intp)


def mirror_state(v: StateVector) -> StateVector:
    """Apply the mirror map to a state vector."""
    perm = mirror_permutation(v.sector)
    out = np.empty_like(v.amplitudes)
    out[perm] = v.amplitudes
    return StateVector(v.sector, out)


def basis_table_csv(file=None) -> str:
    """Write the full basis listing as CSV; returns the text.

    Columns: sector,index,atom_L,n1,n2,atom_R,n3,n4.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sector", "index", "atom_L", "n1", "n2", "atom_R", "n3", "n4"])
    for k in (0, 1, 2):
        for i, s in enumerate(enumerate_sector(k).states):
            writer.writerow([k, i, *s.occupations])
    text = buf.getvalue()
    if file is not None:
        file.write(text)
    return text
