import itertools
import io

import numpy as np
import pytest

from homsim import (BasisState, InvalidSectorError, InvalidStateError,
                    SectorMismatchError, StateVector, basis_table_csv,
                    basis_vector, enumerate_sector, index_of, initial_state,
                    mirror_permutation, mirror_state, norm_squared)


def brute_force_sector(k):
    """Independent enumeration of all legal occupation tuples with sum k."""
    out = set()
    for occ in itertools.product((0, 1), (0, 1, 2), (0, 1, 2), (0, 1), (0, 1, 2), (0, 1, 2)):
        if sum(occ) == k:
            out.add(occ)
    return out


@pytest.mark.parametrize("k,count", [(0, 1), (1, 6), (2, 19)])
def test_sector_complete_and_duplicate_free(k, count):
    basis = enumerate_sector(k)
    occs = [s.occupations for s in basis.states]
    assert len(occs) == count
    assert len(set(occs)) == count
    assert set(occs) == brute_force_sector(k)


def test_two_excitation_canonical_order_endpoints():
    basis = enumerate_sector(2)
    assert basis.states[0] == BasisState(1, 0, 0, 1, 0, 0)   # both atoms excited
    assert basis.states[-1] == BasisState(0, 0, 0, 0, 1, 1)  # photons in modes 3 and 4


def test_one_excitation_reading_order():
    occs = [s.occupations for s in enumerate_sector(1).states]
    assert occs == [
        (1, 0, 0, 0, 0, 0),
        (0, 1, 0, 0, 0, 0),
        (0, 0, 1, 0, 0, 0),
        (0, 0, 0, 1, 0, 0),
        (0, 0, 0, 0, 1, 0),
        (0, 0, 0, 0, 0, 1),
    ]


def test_index_examples():
    assert index_of(BasisState(1, 0, 0, 1, 0, 0)) == 0    # first two-excitation state
    assert index_of(BasisState(0, 1, 0, 0, 1, 0)) == 14   # one photon in each inner mode
    assert index_of(BasisState(0, 0, 0, 0, 0, 0)) == 0    # vacuum


def test_index_round_trip_all_sectors():
    for k in (0, 1, 2):
        basis = enumerate_sector(k)
        for i, s in enumerate(basis.states):
            assert index_of(s) == i


@pytest.mark.parametrize("k", [-1, 3, 7])
def test_invalid_sector_rejected(k):
    with pytest.raises(InvalidSectorError):
        enumerate_sector(k)


@pytest.mark.parametrize("occ", [
    (2, 0, 0, 0, 0, 0),   # atomic occupation above 1
    (0, 3, 0, 0, 0, 0),   # mode occupation above 2
    (1, 1, 1, 0, 0, 0),   # three excitations
    (0, 2, 0, 0, 2, 0),   # four excitations
])
def test_invalid_occupation_rejected(occ):
    with pytest.raises(InvalidStateError):
        BasisState(*occ)


def test_norm_squared_examples():
    amps = np.zeros(19, dtype=complex)
    amps[0] = 1.0
    assert norm_squared(StateVector(2, amps)) == pytest.approx(1.0)
    assert norm_squared(StateVector(2, np.zeros(19))) == 0.0
    amps = np.zeros(19, dtype=complex)
    amps[0] = 1 / np.sqrt(2)
    amps[1] = 1j / np.sqrt(2)
    assert norm_squared(StateVector(2, amps)) == pytest.approx(1.0, abs=1e-15)


def test_subnormalized_states_are_legal():
    v = StateVector(1, 0.3 * np.ones(6))
    assert norm_squared(v) < 1.0


def test_state_vector_shape_mismatch():
    with pytest.raises(SectorMismatchError):
        StateVector(2, np.zeros(6))


def test_initial_state_is_both_atoms_excited():
    v = initial_state()
    assert v.sector == 2
    assert v.amplitudes[0] == 1.0
    assert norm_squared(v) == 1.0


def test_mirror_is_involutive_permutation():
    for k in (0, 1, 2):
        perm = mirror_permutation(k)
        assert sorted(perm) == list(range(len(perm)))
        assert np.array_equal(perm[perm], np.arange(len(perm)))


def test_mirror_spot_checks():
    # excited left atom with a photon heading right <-> excited right atom
    # with a photon heading left
    s = BasisState(1, 1, 0, 0, 0, 0)
    assert s.mirrored() == BasisState(0, 0, 0, 1, 0, 1)
    v = basis_vector(s)
    mv = mirror_state(v)
    assert mv.amplitudes[index_of(s.mirrored())] == 1.0


def test_basis_csv_round_trip():
    text = basis_table_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "sector,index,atom_L,n1,n2,atom_R,n3,n4"
    assert len(lines) == 1 + 1 + 6 + 19
    for line in lines[1:]:
        k, i, *occ = map(int, line.split(","))
        assert enumerate_sector(k).states[i].occupations == tuple(occ)
    buf = io.StringIO()
    basis_table_csv(buf)
    assert buf.getvalue() == text
