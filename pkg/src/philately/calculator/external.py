"""Line-delimited request/response protocol for calculators running in a child process.

Request (one line): 9 lattice floats (rows a1, a2, a3) followed by
``species x y z`` for every site, all whitespace-separated, fractional coordinates.
Response (one line): total energy (eV) then 3N force components (eV/A), or
``ERROR <message>``. See docs/calculator_protocol.md.
"""

from __future__ import annotations

import shlex
import subprocess
import sys
import threading
from collections.abc import Sequence
from typing import TextIO

import numpy as np

from philately.calculator.base import CalcResult, Calculator, CalculatorError, check_result
from philately.crystal.lattice import Lattice
from philately.crystal.structure import Structure


def encode_request(structure: Structure) -> str:
    parts = [repr(float(x)) for x in structure.lattice.matrix.ravel()]
    for site in structure.sites:
        parts.append(site.species)
        parts.extend(repr(float(x)) for x in site.frac)
    return " ".join(parts)


def decode_request(line: str) -> Structure:
    tokens = line.split()
    if len(tokens) < 13 or (len(tokens) - 9) % 4:
        raise CalculatorError("malformed request line")
    lattice = Lattice(np.array([float(t) for t in tokens[:9]]).reshape(3, 3))
    rest = tokens[9:]
    species = rest[0::4]
    frac = np.array([[float(x) for x in rest[k + 1:k + 4]] for k in range(0, len(rest), 4)])
    return Structure.from_arrays(lattice, species, frac)


def encode_response(result: CalcResult) -> str:
    return " ".join([repr(float(result.energy))] + [repr(float(x)) for x in np.asarray(result.forces).ravel()])


def decode_response(line: str, n_sites: int) -> CalcResult:
    line = line.strip()
    if not line:
        raise CalculatorError("external calculator closed its output")
    if line.startswith("ERROR"):
        raise CalculatorError(f"external calculator: {line[5:].strip()}")
    try:
        values = [float(x) for x in line.split()]
    except ValueError:
        raise CalculatorError("malformed response line") from None
    if len(values) != 1 + 3 * n_sites:
        raise CalculatorError(f"expected {1 + 3 * n_sites} numbers, got {len(values)}")
    result = CalcResult(values[0], np.array(values[1:]).reshape(n_sites, 3))
    if not np.isfinite(result.energy) or not np.all(np.isfinite(result.forces)):
        raise CalculatorError("external calculator returned non-finite values")
    return result


def serve(calc: Calculator, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> None:
    """Worker loop: answer one request line per response line until EOF."""
    for line in stdin:
        if not line.strip():
            continue
        try:
            reply = encode_response(calc.evaluate(decode_request(line)))
        except Exception as exc:  # every failure must become a protocol reply
            reply = "ERROR " + " ".join(str(exc).split())
        stdout.write(reply + "\n")
        stdout.flush()


class SubprocessCalculator(Calculator):
    """Talks to a long-lived child process; calls are serialized."""

    thread_safe = False

    def __init__(self, command: str | Sequence[str], elements: Sequence[str], name: str = "external") -> None:
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = name
        self._elements = frozenset(elements)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    @property
    def supported_elements(self) -> frozenset[str]:
        return self._elements

    def _process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
            )
        return self._proc

    def evaluate(self, structure: Structure) -> CalcResult:
        self.check_elements(structure)
        with self._lock:
            proc = self._process()
            try:
                proc.stdin.write(encode_request(structure) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except OSError as exc:
                raise CalculatorError(f"external calculator I/O failed: {exc}") from exc
        return check_result(decode_response(line, len(structure)), len(structure))

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass
