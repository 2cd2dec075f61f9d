"""Sector operators: Hamiltonians, cascade coupling and jump operators.

All operators are dense complex matrices acting between excitation
sectors.  The full Hamiltonian generating the no-jump evolution is

    H_NH = H_sys + H_casc - (i/2) (Ja^dag Ja + Jb^dag Jb)

with Ja = sqrt(kappa) (a1 + a3) and Jb = sqrt(kappa) (a2 + a4) the
collective output-field (jump) operators, and H_casc the Hermitian
correction that makes photon transport between the cavities one-way per
fiber direction (a1 feeds a3, a4 feeds a2):

    H_casc = (i kappa / 2) [(a1^dag a3 - a3^dag a1) + (a4^dag a2 - a2^dag a4)]

In the rotating frame at the cavity frequency the remaining energy scale
is the atom-cavity detuning delta; the lab frame keeps the bare
frequencies and differs only by a constant within each sector.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import EmptySectorError, InvalidSectorError, SectorMismatchError
from .hilbert import SECTOR_DIMS, StateVector, enumerate_sector, mirror_permutation

# ket slot index per mode operator; atoms sit in slots 0 and 3
_MODE_SLOT = {1: 1, 2: 2, 3: 4, 4: 5}
_ATOM_SLOT = {"L": 0, "R": 3}

# offsets of the sectors inside the stacked 26-dimensional space
SECTOR_OFFSETS = {0: 0, 1: 1, 2: 7}
FULL_DIM = 26


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, all rates in units of the cavity leakage kappa.

    delta is the atom-cavity detuning omega_eg - omega_c.  The default
    rotating frame removes the optical frequencies; the lab frame needs an
    explicit omega_c and is retained only for frame-invariance checks.
    """

    g_l: complex
    g_r: complex
    kappa: float = 1.0
    delta: float = 0.5
    frame: str = "rotating"
    omega_c: float | None = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.frame not in ("rotating", "lab"):
            raise ValueError(f"frame must be 'rotating' or 'lab', got {self.frame!r}")
        if self.frame == "lab" and self.omega_c is None:
            raise ValueError("lab frame requires an explicit omega_c")

    @classmethod
    def symmetric(cls, g_over_kappa: float, delta_over_kappa: float = 0.5,
                  kappa: float = 1.0, **kw) -> "SystemParams":
        """Mirror-symmetric configuration with real equal couplings."""
        g = g_over_kappa * kappa
        return cls(g_l=g, g_r=g, kappa=kappa, delta=delta_over_kappa * kappa, **kw)

    @property
    def is_mirror_symmetric(self) -> bool:
        return abs(abs(self.g_l) - abs(self.g_r)) < 1e-14

    @property
    def omega_eg(self) -> float:
        if self.omega_c is None:
            raise ValueError("omega_eg is only defined with an explicit omega_c")
        return self.omega_c + self.delta


@dataclass(frozen=True)
class SectorOperator:
    """Complex matrix mapping one excitation sector to another."""

    source_sector: int
    target_sector: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        expect = (SECTOR_DIMS[self.target_sector], SECTOR_DIMS[self.source_sector])
        if self.entries.shape != expect:
            raise SectorMismatchError(
                f"operator {self.source_sector}->{self.target_sector} needs shape "
                f"{expect}, got {self.entries.shape}"
            )

    def dag(self) -> "SectorOperator":
        return SectorOperator(self.target_sector, self.source_sector,
                              self.entries.conj().T.copy())

    def __matmul__(self, other: "SectorOperator") -> "SectorOperator":
        if other.target_sector != self.source_sector:
            raise SectorMismatchError(
                f"cannot compose {other.source_sector}->{other.target_sector} "
                f"into {self.source_sector}->{self.target_sector}"
            )
        return SectorOperator(other.source_sector, self.target_sector,
                              self.entries @ other.entries)

    def apply(self, v: StateVector) -> StateVector:
        if v.sector != self.source_sector:
            raise SectorMismatchError(
                f"operator acts on sector {self.source_sector}, state is in {v.sector}"
            )
        return StateVector(self.target_sector, self.entries @ v.amplitudes)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        if self.source_sector != self.target_sector:
            return False
        a = self.entries
        scale = max(1.0, float(np.abs(a).max()))
        return float(np.abs(a - a.conj().T).max()) < tol * scale

    def to_csv(self, file=None) -> str:
        """Dump entries as (row, col, re, im) triplet rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "re", "im"])
        for (r, c), val in np.ndenumerate(self.entries):
            if val != 0:
                w.writerow([r, c, repr(float(val.real)), repr(float(val.imag))])
        text = buf.getvalue()
        if file is not None:
            file.write(text)
        return text


def _check_lowering_sector(k: int):
    if k == 0:
        raise EmptySectorError("sector 0 holds only the vacuum; nothing to lower")
    if k not in (1, 2):
        raise InvalidSectorError(f"sector must be 1 or 2, got {k}")


def annihilation(mode: int, k: int) -> SectorOperator:
    """Bosonic lowering operator for one cavity mode, sector k -> k-1."""
    if mode not in _MODE_SLOT:
        raise ValueError(f"mode must be 1..4, got {mode}")
    _check_lowering_sector(k)
    src = enumerate_sector(k)
    tgt = enumerate_sector(k - 1)
    slot = _MODE_SLOT[mode]
    m = np.zeros((len(tgt), len(src)), dtype=np.complex128)
    for j, s in enumerate(src.states):
        n = s.occupations[slot]
        if n > 0:
            occ = list(s.occupations)
            occ[slot] = n - 1
            m[_row_index(tgt, occ), j] = np.sqrt(n)
    return SectorOperator(k, k - 1, m)


def sigma_minus(atom: str, k: int) -> SectorOperator:
    """Atomic lowering operator |g><e| for the named atom, sector k -> k-1."""
    if atom not in _ATOM_SLOT:
        raise ValueError(f"atom must be 'L' or 'R', got {atom!r}")
    _check_lowering_sector(k)
    src = enumerate_sector(k)
    tgt = enumerate_sector(k - 1)
    slot = _ATOM_SLOT[atom]
    m = np.zeros((len(tgt), len(src)), dtype=np.complex128)
    for j, s in enumerate(src.states):
        if s.occupations[slot] == 1:
            occ = list(s.occupations)
            occ[slot] = 0
            m[_row_index(tgt, occ), j] = 1.0
    return SectorOperator(k, k - 1, m)


def _row_index(basis, occ) -> int:
    from .hilbert import _index_map

    return _index_map(basis.k)[tuple(occ)]


def _within_sector(lowering_a: SectorOperator, lowering_b: SectorOperator) -> np.ndarray:
    """a^dag b restricted to the lowering operators' source sector."""
    return lowering_a.entries.conj().T @ lowering_b.entries


def system_hamiltonian(p: SystemParams, k: int) -> SectorOperator:
    """Discrete atom-cavity Hamiltonian on sector k (Hermitian).

    Couplings: g_l pairs the left atom with mode 1 and its conjugate with
    mode 2; g_r does the same for the right atom with modes 3 and 4.
    """
    if k not in SECTOR_DIMS:
        raise InvalidSectorError(f"sector must be 0, 1 or 2, got {k}")
    basis = enumerate_sector(k)
    dim = len(basis)
    h = np.zeros((dim, dim), dtype=np.complex128)
    for j, s in enumerate(basis.states):
        n_exc = s.atom_l + s.atom_r
        n_phot = s.n1 + s.n2 + s.n3 + s.n4
        if p.frame == "rotating":
            h[j, j] = p.delta * n_exc
        else:
            # ground atomic levels carry -omega_eg so the initial state has
            # zero energy
            h[j, j] = -p.omega_eg * (2 - n_exc) + p.omega_c * n_phot
    for mode, atom, coeff in ((1, "L", p.g_l), (2, "L", np.conj(p.g_l)),
                              (3, "R", p.g_r), (4, "R", np.conj(p.g_r))):
        slot = _MODE_SLOT[mode]
        aslot = _ATOM_SLOT[atom]
        for j, s in enumerate(basis.states):
            if s.occupations[aslot] == 1 and s.occupations[slot] < 2:
                occ = list(s.occupations)
                occ[aslot] = 0
                occ[slot] += 1
                i = _row_index(basis, occ)
                amp = coeff * np.sqrt(occ[slot])
                h[i, j] += amp
                h[j, i] += np.conj(amp)
    return SectorOperator(k, k, h)


def cascade_hamiltonian(p: SystemParams, k: int) -> SectorOperator:
    """Hermitian inter-cavity coupling that directs photon transport.

    Together with the -(i/2) J^dag J terms this yields purely one-way
    driving: mode 1 feeds mode 3 and mode 4 feeds mode 2, reproducing the
    quantum Langevin drift of the cavity operators.
    """
    if k not in SECTOR_DIMS:
        raise InvalidSectorError(f"sector must be 0, 1 or 2, got {k}")
    dim = SECTOR_DIMS[k]
    if k == 0:
        return SectorOperator(0, 0, np.zeros((1, 1), dtype=np.complex128))
    a = {m: annihilation(m, k) for m in (1, 2, 3, 4)}
    h = 0.5j * p.kappa * (
        (_within_sector(a[1], a[3]) - _within_sector(a[3], a[1]))
        + (_within_sector(a[4], a[2]) - _within_sector(a[2], a[4]))
    )
    assert h.shape == (dim, dim)
    return SectorOperator(k, k, h)


def jump_operator(p: SystemParams, detector: str, k: int) -> SectorOperator:
    """Collective output-field operator seen by one detector, k -> k-1."""
    _check_lowering_sector(k)
    root_kappa = np.sqrt(p.kappa)
    if detector == "a":
        m = root_kappa * (annihilation(1, k).entries + annihilation(3, k).entries)
    elif detector == "b":
        m = root_kappa * (annihilation(2, k).entries + annihilation(4, k).entries)
    else:
        raise ValueError(f"detector must be 'a' or 'b', got {detector!r}")
    return SectorOperator(k, k - 1, m)


def non_hermitian_hamiltonian(p: SystemParams, k: int,
                              include_cascade: bool = True) -> SectorOperator:
    """No-jump generator H_sys + H_casc - (i/2) sum_j J_j^dag J_j."""
    h = system_hamiltonian(p, k).entries.copy()
    if include_cascade:
        h += cascade_hamiltonian(p, k).entries
    if k > 0:
        for det in ("a", "b"):
            j = jump_operator(p, det, k).entries
            h -= 0.5j * (j.conj().T @ j)
    return SectorOperator(k, k, h)


def mirror_matrix(k: int) -> np.ndarray:
    """Permutation matrix of the left/right mirror map on sector k."""
    perm = mirror_permutation(k)
    dim = SECTOR_DIMS[k]
    m = np.zeros((dim, dim))
    m[perm, np.arange(dim)] = 1.0
    return m


@dataclass(frozen=True)
class OperatorSet:
    """Prebuilt raw matrices used by the propagation and sampling paths."""

    params: SystemParams
    include_cascade: bool
    h_nh: dict          # sector -> (dim, dim) ndarray
    jump: dict          # (detector, sector) -> ndarray mapping k -> k-1

    def jump_product(self, first: str, second: str) -> np.ndarray:
        """Row vector of J_second J_first on the two-excitation sector."""
        return self.jump[(second, 1)] @ self.jump[(first, 2)]


def build_operator_set(p: SystemParams, include_cascade: bool = True) -> OperatorSet:
    h_nh = {k: non_hermitian_hamiltonian(p, k, include_cascade).entries for k in (1, 2)}
    jump = {(d, k): jump_operator(p, d, k).entries for d in ("a", "b") for k in (1, 2)}
    return OperatorSet(params=p, include_cascade=include_cascade, h_nh=h_nh, jump=jump)


def embed_full(op: SectorOperator) -> np.ndarray:
    """Embed a sector operator into the stacked 26-dimensional space."""
    m = np.zeros((FULL_DIM, FULL_DIM), dtype=np.complex128)
    r0 = SECTOR_OFFSETS[op.target_sector]
    c0 = SECTOR_OFFSETS[op.source_sector]
    rows, cols = op.entries.shape
    m[r0:r0 + rows, c0:c0 + cols] = op.entries
    return m


def full_hamiltonian(p: SystemParams, include_cascade: bool = True) -> np.ndarray:
    """Hermitian part (system + cascade) over all three sectors stacked."""
    m = np.zeros((FULL_DIM, FULL_DIM), dtype=np.complex128)
    for k in (0, 1, 2):
        h = system_hamiltonian(p, k).entries.copy()
        if include_cascade:
            h += cascade_hamiltonian(p, k).entries
        o = SECTOR_OFFSETS[k]
        d = SECTOR_DIMS[k]
        m[o:o + d, o:o + d] = h
    return m


def full_jump(p: SystemParams, detector: str) -> np.ndarray:
    """Jump operator over the stacked space (lowers the sector by one)."""
    m = np.zeros((FULL_DIM, FULL_DIM), dtype=np.complex128)
    for k in (1, 2):
        m += embed_full(jump_operator(p, detector, k))
    return m
