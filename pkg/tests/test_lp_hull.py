import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_force_e_hull, random_system, vertex_enumeration

from philately.crystal import parse_formula
from philately.hull import (
    ElementMismatch,
    HullEntry,
    HullError,
    HullIndex,
    HullSystem,
    Infeasible,
    MissingReference,
    Unbounded,
    e_above_hull,
    formation_energy_per_atom,
    hull_energy,
    lp_minimize,
    read_entries,
    recompute_system,
    update_system,
    write_entries,
)

# --- LP ---------------------------------------------------------------------


def test_lp_corner():
    res = lp_minimize([1, 0], [[1, 1]], [1])
    np.testing.assert_allclose(res.x, [0, 1])
    assert res.objective == 0.0


def test_lp_with_slack_matches_enumeration():
    # min -x1 - x2 st x1 + 2 x2 + s1 = 2, x1 + s2 = 1.5
    c = [-1, -1, 0, 0]
    a = [[1, 2, 1, 0], [1, 0, 0, 1]]
    b = [2, 1.5]
    res = lp_minimize(c, a, b)
    assert res.objective == pytest.approx(vertex_enumeration(c, a, b), abs=1e-10)
    assert res.objective == pytest.approx(-1.75)


def test_lp_infeasible_and_unbounded():
    with pytest.raises(Infeasible):
        lp_minimize([1], [[1]], [-1])
    with pytest.raises(Unbounded):
        lp_minimize([-1, 0], [[1, -1]], [0])


def test_lp_negative_rhs_rows():
    res = lp_minimize([1, 2], [[-1, -1]], [-3])
    assert res.objective == pytest.approx(3.0)


def test_lp_random_against_enumeration(rng):
    checked = 0
    for _ in range(300):
        m, n = int(rng.integers(1, 4)), int(rng.integers(2, 7))
        a = rng.integers(-3, 4, (m, n)).astype(float)
        b = rng.integers(0, 5, m).astype(float)
        # a positive sum row keeps the region bounded
        a = np.vstack([a, rng.integers(1, 3, n)])
        b = np.append(b, 4.0)
        c = rng.normal(size=n)
        ref = vertex_enumeration(c, a, b)
        if ref is None:
            with pytest.raises(Infeasible):
                lp_minimize(c, a, b)
            continue
        res = lp_minimize(c, a, b)
        assert res.objective == pytest.approx(ref, abs=1e-9)
        assert res.x.min() >= -1e-12
        np.testing.assert_allclose(a @ res.x, b, atol=1e-9)
        checked += 1
    assert checked > 50


def test_lp_degenerate_does_not_cycle():
    # Beale's classic cycling example, in equality form with slacks
    c = [-0.75, 150, -0.02, 6, 0, 0, 0]
    a = [[0.25, -60, -0.04, 9, 1, 0, 0], [0.5, -90, -0.02, 3, 0, 1, 0], [0, 0, 1, 0, 0, 0, 1]]
    b = [0, 0, 1]
    assert lp_minimize(c, a, b).objective == pytest.approx(-0.05, abs=1e-12)


# --- formation energy and hull ---------------------------------------------


def test_formation_energy_examples():
    assert formation_energy_per_atom(HullEntry("Na", {"Na": 1.0}, -1.3), {"Na": -1.3}) == 0.0
    ab = HullEntry("ab", {"A": 0.5, "B": 0.5}, -1.0)
    assert formation_energy_per_atom(ab, {"A": 0.0, "B": 0.0}) == -1.0
    assert formation_energy_per_atom(ab, {"A": -0.5, "B": -0.3}) == pytest.approx(-0.6)
    with pytest.raises(MissingReference) as err:
        formation_energy_per_atom(ab, {"A": 0.0})
    assert err.value.element == "B"


def test_worked_binary_example():
    refs = {"A": 0.0, "B": 0.0}
    ab = HullEntry("AB", {"A": 0.5, "B": 0.5}, -1.0)
    q = HullEntry("A3B", {"A": 0.75, "B": 0.25}, -0.3)
    e, dec = e_above_hull(q, [ab], refs)
    assert e == pytest.approx(0.2, abs=1e-9)
    assert dec.as_dict() == pytest.approx({"A": 0.5, "AB": 0.5}, abs=1e-9)
    assert e == pytest.approx(brute_force_e_hull(q, [ab], refs), abs=1e-12)


def test_only_elements_compete():
    q = HullEntry("q", {"A": 0.5, "B": 0.5}, 0.4)
    e, dec = e_above_hull(q, [], {"A": 0.0, "B": 0.0})
    assert e == pytest.approx(0.4)
    assert dec.as_dict() == pytest.approx({"A": 0.5, "B": 0.5})


def test_on_hull_self_supports():
    ab = HullEntry("AB", {"A": 0.5, "B": 0.5}, -1.0)
    e, dec = e_above_hull(ab, [], {"A": 0.0, "B": 0.0})
    assert e == 0.0 and dec.as_dict() == {"AB": 1.0}


def test_elemental_entry_above_reference():
    ar = HullEntry("ar-fcc", {"Ar": 1.0}, -0.05)
    assert e_above_hull(ar, [], {"Ar": -0.08})[0] == pytest.approx(0.03)


def test_hull_entry_validation():
    with pytest.raises(HullError):
        HullEntry("x", {"A": 0.5, "B": 0.6}, 0.0)
    with pytest.raises(HullError):
        HullEntry("x", {}, 0.0)
    with pytest.raises(HullError):
        HullEntry("x", {"A": 1.0}, float("nan"))
    assert HullEntry("x", {"A": 1.0, "B": 0.0}, 0.0).elements == {"A"}


def test_random_systems_match_brute_force(rng):
    for _ in range(150):
        refs, entries = random_system(rng)
        for en in entries:
            e, _ = e_above_hull(en, entries, refs)
            assert e == pytest.approx(brute_force_e_hull(en, entries, refs), abs=1e-9)
            assert e >= 0.0
        for el, ref in refs.items():
            assert e_above_hull(HullEntry(el, {el: 1.0}, ref), entries, refs)[0] == 0.0


@given(st.integers(0, 2**32 - 1))
def test_decomposition_reproduces_composition(seed):
    rng = np.random.default_rng(seed)
    refs, entries = random_system(rng)
    by_id = {en.id: en for en in entries} | {el: HullEntry(el, {el: 1.0}, v) for el, v in refs.items()}
    for en in entries:
        e, dec = e_above_hull(en, entries, refs)
        weights = dec.as_dict()
        assert sum(weights.values()) == pytest.approx(1.0, abs=1e-9)
        mixed = {el: sum(w * by_id[i].fractions.get(el, 0.0) for i, w in weights.items()) for el in en.fractions}
        assert mixed == pytest.approx(dict(en.fractions), abs=1e-9)
        energy = sum(w * formation_energy_per_atom(by_id[i], refs) for i, w in weights.items())
        assert energy == pytest.approx(formation_energy_per_atom(en, refs) - e, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_more_competitors_never_raise_the_hull(seed):
    rng = np.random.default_rng(seed)
    refs, entries = random_system(rng, n_entries=8)
    probe = entries[0]
    prev = math.inf
    for k in range(1, len(entries) + 1):
        pool = [probe] + [c for c in entries[1:k] if c.elements <= probe.elements]
        pool += [HullEntry(el, {el: 1.0}, refs[el]) for el in probe.elements]
        h, _ = hull_energy(probe.fractions, pool, refs)
        assert h <= prev + 1e-10
        prev = h


def test_competitors_outside_the_system_are_ignored():
    refs = {"Na": 0.0, "Cl": 0.0, "O": 0.0}
    q = HullEntry("q", {"Na": 0.5, "Cl": 0.5}, -0.5)
    ternary = HullEntry("t", {"Na": 0.2, "Cl": 0.2, "O": 0.6}, -5.0)
    assert e_above_hull(q, [ternary], refs)[0] == 0.0


# --- incremental systems ----------------------------------------------------


def test_update_examples():
    refs = {"A": 0.0, "B": 0.0}
    sys0 = HullSystem({"A", "B"}, refs)
    sys1 = update_system(sys0, HullEntry("AB", {"A": 0.5, "B": 0.5}, -1.0))
    assert sys1.stable == (True,)
    sys2 = update_system(sys1, HullEntry("A3B", {"A": 0.75, "B": 0.25}, -0.3))
    assert sys2.stable == (True, False)
    # 0.1 below the hull at x_B = 0.25 knocks nothing out but becomes stable
    sys3 = update_system(sys2, HullEntry("A3B'", {"A": 0.75, "B": 0.25}, -0.6))
    assert sys3.stable == (True, False, True)
    # a deeper AB pushes both the old AB and A3B' off the hull
    sys4 = update_system(sys3, HullEntry("AB'", {"A": 0.5, "B": 0.5}, -1.5))
    assert sys4.stable_ids() == {"AB'"}
    tie = update_system(sys1, HullEntry("AB2", {"A": 0.5, "B": 0.5}, -1.0 + 1e-8))
    assert tie.stable == (True, True)
    with pytest.raises(ElementMismatch):
        update_system(sys1, HullEntry("C", {"C": 1.0}, 0.0))
    with pytest.raises(MissingReference):
        HullSystem({"A", "C"}, refs)


def test_update_matches_recompute(rng):
    for _ in range(100):
        refs, entries = random_system(rng)
        system = HullSystem(frozenset(refs), refs)
        for en in entries:
            system = update_system(system, en)
            full = recompute_system(system)
            assert system.stable == full.stable
            np.testing.assert_allclose(system.e_hull, full.e_hull, atol=1e-10)


def test_hull_index_members_and_probes(rng):
    for _ in range(30):
        refs, entries = random_system(rng)
        idx = HullIndex(refs)
        for en in entries:
            idx.add(en)
        for en in entries:
            assert idx.current[en.id] == pytest.approx(brute_force_e_hull(en, entries, refs), abs=1e-9)
        probe = HullEntry("probe", entries[0].fractions, entries[0].energy_per_atom - 5.0)
        idx.add(probe, member=False)
        assert idx.current["probe"] == 0.0
        # probes never reshape the hull for members
        for en in entries:
            assert idx.current[en.id] == pytest.approx(brute_force_e_hull(en, entries, refs), abs=1e-9)
        assert "probe" not in idx.stable_ids()
        with pytest.raises(HullError):
            idx.add(entries[0])


def test_entries_file_round_trip(tmp_path):
    entries = [
        HullEntry.from_composition("a", parse_formula("NaCl"), -3.2, "seed"),
        HullEntry.from_composition("b", parse_formula("Na2O"), -2.1),
    ]
    path = tmp_path / "entries.jsonl"
    write_entries(path, entries)
    back = read_entries(path)
    assert [(e.id, dict(e.fractions), e.energy_per_atom, e.source) for e in back] == [
        (e.id, dict(e.fractions), e.energy_per_atom, e.source) for e in entries
    ]
    path.write_text('{"id": "x", "formula": "Qq2", "energy_per_atom": 1}\n')
    with pytest.raises(HullError, match=":1:"):
        read_entries(path)
