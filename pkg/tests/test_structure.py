import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chain_oracle as oracle
from smiles_screen.smiles_core import Atom, Bond, Molecule, parse_smiles
from smiles_screen.structure import (
    MAX_CARBONS,
    StructureError,
    chain_result,
    diameter,
    diameter_report,
    longest_carbon_chain,
    longest_carbon_paths,
)
from smiles_screen.synth import random_carbon_molecule


def test_examples():
    assert diameter(parse_smiles("CCCC")) == 0
    assert longest_carbon_chain(parse_smiles("CCCC")) == [0, 1, 2, 3]
    assert diameter(parse_smiles("CC(C)C")) == 1
    assert len(longest_carbon_chain(parse_smiles("CC(C)C"))) == 3


def test_chain_is_simple_carbon_path():
    m = parse_smiles("CC(CO)C1CCC(N)C1")
    chain = longest_carbon_chain(m)
    assert len(set(chain)) == len(chain)
    assert all(m.atoms[i].element == "C" for i in chain)
    assert all(m.has_bond(a, b) for a, b in zip(chain, chain[1:]))


def test_ties_prefer_smaller_diameter():
    # three 5-carbon chains; the one avoiding the N-N arm's carbon leaves it 4 hops out
    m = parse_smiles("NNCCC(CC)CC")
    assert len(longest_carbon_paths(m)) == 3
    res = chain_result(m)
    assert res.length == 5 and res.diameter == 2
    assert res.chain == (2, 3, 4, 5, 6)  # lexicographic among the diameter-2 ties


def test_aromatic_carbons_count():
    assert len(longest_carbon_chain(parse_smiles("c1ccccc1"))) == 6


def test_carbon_free():
    m = parse_smiles("NO")
    assert longest_carbon_chain(m) == []
    with pytest.raises(StructureError):
        diameter(m)


def test_carbon_cap():
    n = MAX_CARBONS + 1
    m = Molecule(tuple(Atom("C") for _ in range(n)), tuple(Bond(i, i + 1) for i in range(n - 1)))
    with pytest.raises(StructureError):
        diameter(m)


@given(st.integers(0, 2**32 - 1))
def test_matches_brute_force(seed):
    m = random_carbon_molecule(np.random.default_rng(seed), max_carbons=14)
    res = chain_result(m)
    assert (res.length, res.diameter) == oracle(m)


@given(st.integers(0, 2**32 - 1))
def test_diameter_invariant_under_relabeling(seed):
    rng = np.random.default_rng(seed)
    m = random_carbon_molecule(rng, max_carbons=16)
    perm = list(rng.permutation(len(m.atoms)))
    assert diameter(m.relabel(perm)) == diameter(m)


@given(st.integers(0, 2**32 - 1))
def test_zero_diameter_iff_all_atoms_on_chain(seed):
    m = random_carbon_molecule(np.random.default_rng(seed), max_carbons=12)
    res = chain_result(m)
    assert (res.diameter == 0) == (res.length == len(m.atoms))


def test_report():
    rep = diameter_report(["CCCC", "CC(C)C"])
    assert rep.mean == 0.5 and rep.minimum == 0 and rep.maximum == 1
    assert rep.to_csv() == "smiles,chain_len,diameter\nCCCC,4,0\nCC(C)C,3,1\n"
    assert "mean: 0.500" in rep.summary()


def test_report_alkanes_and_bad_lines():
    rep = diameter_report(["C", "CC", "CCCCC", "", "C(C", "NN"])
    assert rep.minimum == rep.maximum == rep.mean == 0
    assert len(rep.rows) == 3 and len(rep.skipped) == 2
    assert rep.histogram() == {0: 3}
