import numpy as np
import pytest
from builders import cif_text, fm3m_operators, random_structure
from hypothesis import given
from hypothesis import strategies as st
from oracles import assert_round_trip, brute_force_expand, periodic_set_equal

from philately.cif import (
    BadNumber,
    CifError,
    MissingTag,
    OccupancyError,
    UnknownElement,
    emit_cif,
    emit_cif_blocks,
    extract_structure,
    parse_document,
    parse_symop,
    read_structures,
)
from philately.crystal import Lattice, Structure

CUBIC4 = (4.0, 4.0, 4.0, 90, 90, 90)


def _one(text, **kw):
    return extract_structure(parse_document(text).blocks[0], **kw)


def test_identity_expansion():
    s = _one(cif_text(CUBIC4, [("Na1", "Na", 0, 0, 0)], ["x,y,z"]))
    assert len(s) == 1
    assert s.volume == pytest.approx(64.0)
    assert s.sites[0].occupancy == 1.0


def test_missing_symops_means_p1():
    s = _one(cif_text(CUBIC4, [("Na1", "Na", 0.25, 0, 0)]))
    assert len(s) == 1


def test_one_centring_translation():
    s = _one(cif_text(CUBIC4, [("C1", "C", 0, 0, 0)], ["x,y,z", "x+1/2,y+1/2,z"]))
    np.testing.assert_allclose(s.frac_coords, [[0, 0, 0], [0.5, 0.5, 0]])


def test_rocksalt_from_fm3m():
    ops = fm3m_operators()
    text = cif_text((5.64, 5.64, 5.64, 90, 90, 90), [("Na1", "Na", 0, 0, 0), ("Cl1", "Cl", 0.5, 0, 0)], ops,
                    extra="_symmetry_space_group_name_H-M 'F m -3 m'\n_symmetry_Int_Tables_number 225")
    s = _one(text)
    assert len(s) == 8
    assert s.species.count("Na") == 4 and s.species.count("Cl") == 4
    assert s.symmetry.space_group_symbol == "F m -3 m"
    assert s.symmetry.space_group_number == 225

    parsed = [parse_symop(o) for o in ops]
    ref_f, ref_s = brute_force_expand(np.array([[0, 0, 0], [0.5, 0, 0]]), ["Na", "Cl"], parsed, s.lattice, 1e-3)
    for sp in ("Na", "Cl"):
        mine = s.frac_coords[[x == sp for x in s.species]]
        ref = ref_f[[x == sp for x in ref_s]]
        assert periodic_set_equal(s.lattice, mine, ref, 1e-6)

    # closure: every operator maps the expanded set onto itself
    for op in parsed:
        for sp in ("Na", "Cl"):
            mine = s.frac_coords[[x == sp for x in s.species]]
            assert periodic_set_equal(s.lattice, op.apply(mine) % 1.0, mine, 1e-3)


def test_general_position_in_fm3m_gives_192():
    ops = fm3m_operators()
    s = _one(cif_text((5.0, 5.0, 5.0, 90, 90, 90), [("Ar1", "Ar", 0.0123, 0.0457, 0.0791)], ops))
    assert len(s) == 192


def test_site_merge_tolerance():
    # two images 0.5e-3 A apart merge; at 2e-3 they stay distinct
    near = cif_text((10, 10, 10, 90, 90, 90), [("C1", "C", 0, 0, 0), ("C2", "C", 0.00005, 0, 0)])
    assert len(_one(near)) == 1
    far = cif_text((10, 10, 10, 90, 90, 90), [("C1", "C", 0, 0, 0), ("C2", "C", 0.0002, 0, 0)])
    assert len(_one(far)) == 2
    assert len(_one(far, site_merge_tol=0.01)) == 1


def test_different_species_never_merge():
    s = _one(cif_text(CUBIC4, [("A", "Na", 0, 0, 0), ("B", "K", 0, 0, 0)]))
    assert len(s) == 2


def test_oxidation_states_and_labels():
    s = _one(cif_text(CUBIC4, [("Fe1", "Fe3+", 0, 0, 0), ("O1", "O2-", 0.5, 0.5, 0.5)]))
    assert s.species == ["Fe", "O"]
    text = (
        "data_l\n_cell_length_a 4\n_cell_length_b 4\n_cell_length_c 4\n"
        "_cell_angle_alpha 90\n_cell_angle_beta 90\n_cell_angle_gamma 90\n"
        "loop_\n_atom_site_label\n_atom_site_fract_x\n_atom_site_fract_y\n_atom_site_fract_z\n"
        "Cl12 0 0 0\nCa2 0.5 0.5 0.5\n"
    )
    assert _one(text).species == ["Cl", "Ca"]


def test_uncertainties_and_wyckoff():
    text = (
        "data_w\n_cell_length_a 4.01(2)\n_cell_length_b 4.01(2)\n_cell_length_c 4.01(2)\n"
        "_cell_angle_alpha 90\n_cell_angle_beta 90\n_cell_angle_gamma 90\n"
        "loop_\n_symmetry_equiv_pos_as_xyz\nx,y,z\n-x,-y,-z\n"
        "loop_\n_atom_site_label\n_atom_site_type_symbol\n_atom_site_wyckoff_symbol\n"
        "_atom_site_fract_x\n_atom_site_fract_y\n_atom_site_fract_z\n"
        "Na1 Na a 0 0 0\nCl1 Cl i 0.1(1) 0.2 0.3\n"
    )
    s = _one(text)
    assert s.lattice.lengths[0] == pytest.approx(4.01)
    assert len(s) == 3
    assert s.symmetry.wyckoff == ("a", "i", "i")


def test_space_group_symop_tag():
    text = cif_text(CUBIC4, [("C1", "C", 0, 0, 0)]).replace("data_t\n", "data_t\nloop_\n_space_group_symop_operation_xyz\n'x,y,z'\n'x+1/2,y,z'\n")
    assert len(_one(text)) == 2


@pytest.mark.parametrize("tag", ["_cell_length_b", "_cell_angle_gamma"])
def test_missing_cell_tag(tag):
    lines = [ln for ln in cif_text(CUBIC4, [("C1", "C", 0, 0, 0)]).splitlines() if not ln.startswith(tag)]
    with pytest.raises(MissingTag) as err:
        _one("\n".join(lines) + "\n")
    assert err.value.tag == tag


def test_missing_atom_loop():
    with pytest.raises(MissingTag):
        _one("data_x\n_cell_length_a 4\n_cell_length_b 4\n_cell_length_c 4\n"
             "_cell_angle_alpha 90\n_cell_angle_beta 90\n_cell_angle_gamma 90\n")


def test_bad_number():
    with pytest.raises(BadNumber):
        _one(cif_text(("4.0x", 4, 4, 90, 90, 90), [("C1", "C", 0, 0, 0)]))
    with pytest.raises(BadNumber):
        _one(cif_text(CUBIC4, [("C1", "C", "zero", 0, 0)]))


@pytest.mark.parametrize("occ", [0.0, 1.5, -0.2])
def test_bad_occupancy(occ):
    with pytest.raises(OccupancyError):
        _one(cif_text(CUBIC4, [("C1", "C", 0, 0, 0, occ)]))


def test_unknown_element():
    with pytest.raises(UnknownElement):
        _one(cif_text(CUBIC4, [("Qq1", "Qq", 0, 0, 0)]))


def test_degenerate_cell_is_a_cif_error():
    with pytest.raises(CifError):
        _one(cif_text((4, 4, 4, 90, 90, 180), [("C1", "C", 0, 0, 0)]))


def test_emit_format_contract():
    s = Structure.from_arrays(Lattice.cubic(4.0), ["Na"], [[0, 0, 0]])
    text = emit_cif(s, "one")
    assert "_cell_length_a" in text
    atom_rows = [ln for ln in text.splitlines() if ln.startswith("Na1 ")]
    assert len(atom_rows) == 1
    assert emit_cif(s, "one") == text


def test_emit_preserves_occupancy():
    s = Structure.from_arrays(Lattice.cubic(4.0), ["Na", "Cl"], [[0, 0, 0], [0.5, 0.5, 0.5]], [0.5, 1.0])
    text = emit_cif(s)
    assert "_atom_site_occupancy" in text
    back = read_structures(text)[0]
    np.testing.assert_allclose(back.occupancies, [0.5, 1.0])


def test_multi_block_emit():
    s = Structure.from_arrays(Lattice.cubic(4.0), ["Na"], [[0, 0, 0]])
    blocks = read_structures(emit_cif_blocks([s, s.translated([0.1, 0, 0])], "traj"))
    assert len(blocks) == 2
    assert blocks[1].frac_coords[0][0] == pytest.approx(0.1)


def test_triclinic_five_site_round_trip(rng):
    for _ in range(20):
        assert_round_trip(random_structure(rng, 5, elements=("Na", "Cl", "O", "Fe")))


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_round_trip_property(seed, n):
    assert_round_trip(random_structure(np.random.default_rng(seed), n, elements=("H", "Li", "U", "Og")))
