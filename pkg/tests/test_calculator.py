import io
import sys

import numpy as np
import pytest
from builders import fcc, random_structure
from hypothesis import given
from hypothesis import strategies as st
from oracles import clear_of_cutoff, direct_sum_energy, numeric_forces

from philately.calculator import (
    CalcResult,
    CalculatorError,
    LennardJones,
    LjParams,
    Overlap,
    SubprocessCalculator,
    UnknownElement,
    decode_response,
    encode_request,
    lj_evaluate,
)
from philately.calculator.external import decode_request, encode_response, serve
from philately.crystal import Lattice, Structure, make_supercell

AR = LjParams({"Ar": (0.0104, 3.40)}, cutoff=8.5)


def test_isolated_atom():
    s = Structure.from_arrays(Lattice.cubic(50.0), ["Ar"], [[0, 0, 0]])
    r = LennardJones(AR).evaluate(s)
    assert r.energy == 0.0
    np.testing.assert_array_equal(r.forces, 0.0)


def test_dimer_minimum():
    sigma, eps = 2.0, 1.0
    params = LjParams({"Ar": (eps, sigma)}, cutoff=10 * sigma)
    r0 = 2 ** (1 / 6) * sigma
    s = Structure.from_arrays(Lattice.cubic(100.0), ["Ar", "Ar"], [[0, 0, 0], [r0 / 100.0, 0, 0]])
    res = lj_evaluate(s, params)
    assert res.energy == pytest.approx(-eps, abs=1e-5 * eps)
    assert np.abs(res.forces).max() < 1e-10
    assert res.energy_per_atom == pytest.approx(res.energy / 2)


def test_fcc_argon_matches_direct_sum():
    s = fcc("Ar", 5.26)
    e = lj_evaluate(s, AR).energy
    assert e == pytest.approx(direct_sum_energy(s, AR), abs=1e-8)


def test_random_cells_match_direct_sum(rng):
    params = LjParams({"Ar": (0.0104, 3.40), "Kr": (0.0140, 3.65)}, cutoff=7.5)
    for _ in range(5):
        s = random_structure(rng, 4, elements=("Ar", "Kr"), min_dist=3.0, vpa=60.0)
        assert lj_evaluate(s, params).energy == pytest.approx(direct_sum_energy(s, params, reach=3), abs=1e-8)


def test_lorentz_berthelot():
    p = LjParams({"Ar": (0.01, 3.0), "Kr": (0.04, 4.0)})
    eps, sig = p.pair("Ar", "Kr")
    assert eps == pytest.approx(0.02)
    assert sig == pytest.approx(3.5)


def test_params_validation():
    with pytest.raises(ValueError):
        LjParams({"Ar": (0.01, 3.4)}, cutoff=6.0)
    with pytest.raises(ValueError):
        LjParams({"Ar": (-0.01, 3.4)})
    with pytest.raises(ValueError):
        LjParams({})


def test_unknown_element_and_overlap():
    calc = LennardJones(AR)
    with pytest.raises(UnknownElement):
        calc.evaluate(Structure.from_arrays(Lattice.cubic(10.0), ["Na"], [[0, 0, 0]]))
    with pytest.raises(Overlap):
        calc.evaluate(Structure.from_arrays(Lattice.cubic(10.0), ["Ar", "Ar"], [[0, 0, 0], [1e-8, 0, 0]]))
    assert calc.unsupported(["Ar", "Na"]) == ["Na"]
    assert calc.supports(["Ar"])


def test_forces_match_finite_differences(rng):
    calc = LennardJones(LjParams(cutoff=10.0))
    done = 0
    while done < 8:
        s = random_structure(rng, 10, elements=("Ar", "Kr", "Xe"), min_dist=3.2, vpa=45.0)
        if not clear_of_cutoff(s, 10.0):
            continue
        done += 1
        analytic = calc.evaluate(s).forces
        fd = numeric_forces(calc, s)
        assert np.abs(fd - analytic).max() / np.abs(analytic).max() < 1e-5
        assert np.abs(analytic.sum(axis=0)).max() < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_translation_and_newton(seed):
    r = np.random.default_rng(seed)
    s = random_structure(r, int(r.integers(2, 7)), min_dist=3.0, vpa=50.0)
    params = LjParams(cutoff=9.0)
    res = lj_evaluate(s, params)
    moved = lj_evaluate(s.translated(r.random(3)), params)
    assert moved.energy == pytest.approx(res.energy, abs=1e-9)
    assert np.abs(res.forces.sum(axis=0)).max() < 1e-9


def test_supercell_extensive(rng):
    s = random_structure(rng, 3, elements=("Ar",), min_dist=3.2, vpa=45.0)
    e1 = lj_evaluate(s, AR).energy
    e2 = lj_evaluate(make_supercell(s, (2, 1, 1)), AR).energy
    assert e2 == pytest.approx(2 * e1, abs=1e-8)


def test_deterministic(rng):
    s = random_structure(rng, 6, elements=("Ar",), min_dist=3.0)
    a, b = lj_evaluate(s, AR), lj_evaluate(s, AR)
    assert a.energy == b.energy
    np.testing.assert_array_equal(a.forces, b.forces)


# --- external protocol ------------------------------------------------------


def test_request_round_trip(rng):
    s = random_structure(rng, 4)
    back = decode_request(encode_request(s))
    np.testing.assert_array_equal(back.lattice.matrix, s.lattice.matrix)
    np.testing.assert_array_equal(back.frac_coords, s.frac_coords)
    assert back.species == s.species
    assert "\n" not in encode_request(s)


def test_response_round_trip():
    res = CalcResult(-1.5, np.arange(6, dtype=float).reshape(2, 3) / 7)
    back = decode_response(encode_response(res), 2)
    assert back.energy == res.energy
    np.testing.assert_array_equal(back.forces, res.forces)


@pytest.mark.parametrize("line", ["", "ERROR boom", "1.0 2.0", "1.0 a b c d e f", "nan 0 0 0 0 0 0"])
def test_bad_responses(line):
    with pytest.raises(CalculatorError):
        decode_response(line, 2)


def test_serve_loop():
    calc = LennardJones(AR)
    s = fcc("Ar", 5.3)
    stdin = io.StringIO(encode_request(s) + "\n\n" + "garbage\n" + encode_request(fcc("Ne", 4.0)) + "\n")
    stdout = io.StringIO()
    serve(calc, stdin, stdout)
    lines = stdout.getvalue().splitlines()
    assert len(lines) == 3
    assert decode_response(lines[0], 4).energy == calc.evaluate(s).energy
    assert lines[1].startswith("ERROR") and lines[2].startswith("ERROR")


def test_subprocess_worker_matches_in_process():
    calc = SubprocessCalculator([sys.executable, "-m", "philately.calculator.worker"], ["Ar", "Kr"])
    try:
        assert not calc.thread_safe
        s = fcc("Ar", 5.3).with_frac_coords(fcc("Ar", 5.3).frac_coords + 0.01 * np.eye(4, 3))
        remote = calc.evaluate(s)
        local = LennardJones().evaluate(s)
        assert remote.energy == local.energy
        np.testing.assert_array_equal(remote.forces, local.forces)
        with pytest.raises(UnknownElement):
            calc.evaluate(Structure.from_arrays(Lattice.cubic(5.0), ["Na"], [[0, 0, 0]]))
    finally:
        calc.close()


def test_subprocess_error_reply():
    script = "import sys\nfor line in sys.stdin:\n    print('ERROR not today', flush=True)\n"
    calc = SubprocessCalculator([sys.executable, "-c", script], ["Ar"])
    try:
        with pytest.raises(CalculatorError, match="not today"):
            calc.evaluate(fcc("Ar", 5.3))
    finally:
        calc.close()
