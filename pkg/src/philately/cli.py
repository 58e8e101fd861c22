"""Command-line interface.

Local commands (``parse``, ``validate``, ``relax``, ``hull``) work directly on
files. Database commands (``submit``, ``evaluate``, ``query``, ``stats``,
``leaderboard``) are thin HTTP clients: they talk to ``--server`` when given,
otherwise to an in-process instance of the service over the configured store.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from collections.abc import Sequence
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import httpx

from philately.calculator import CalculatorError
from philately.cif import CifError, emit_cif_blocks, read_structures
from philately.config import Config, ConfigError, load_config
from philately.crystal import CrystalError, parse_formula, validate_structure
from philately.hull import HullEntry, HullError, HullIndex, formation_energy_per_atom
from philately.relax import relax_fire

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
TERMINAL = ("evaluated", "gate_failed", "rejected")


class DomainError(Exception):
    pass


def _out(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _read_cif(path: str, config: Config):
    try:
        text = Path(path).read_bytes()
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror}") from None
    return read_structures(text, config.cif.site_merge_tol, source=Path(path).name)


def _summary(s) -> dict:
    a, b, c, al, be, ga = s.lattice.parameters
    d = {
        "formula": s.composition().reduced_formula(),
        "sites": len(s.sites),
        "cell": [round(x, 6) for x in (a, b, c, al, be, ga)],
        "volume": round(s.volume, 6),
        "partial_occupancy": any(o < 1.0 for o in s.occupancies),
    }
    if s.symmetry is not None:
        d["space_group"] = [s.symmetry.space_group_symbol, s.symmetry.space_group_number]
    return d


def cmd_parse(args, config: Config) -> int:
    _out([_summary(s) for s in _read_cif(args.file, config)])
    return EXIT_OK


def cmd_validate(args, config: Config) -> int:
    reports = [validate_structure(s, config.validity) for s in _read_cif(args.file, config)]
    _out([r.to_dict() for r in reports])
    return EXIT_OK if all(r.passed for r in reports) else EXIT_DOMAIN


def cmd_relax(args, config: Config) -> int:
    settings = config.relax
    if args.fmax is not None or args.max_steps is not None:
        settings = replace(settings, fmax=args.fmax or settings.fmax,
                           max_steps=settings.max_steps if args.max_steps is None else args.max_steps)
    calc = config.build_calculator()
    results = [relax_fire(s, calc, settings) for s in _read_cif(args.file, config)]
    _out([{"converged": r.converged, "steps": r.steps, "energy_initial": r.energy_initial,
           "energy_final": r.energy_final, "max_force": r.max_force_final} for r in results])
    if args.output:
        Path(args.output).write_text(emit_cif_blocks([r.final for r in results], "relaxed"), encoding="utf-8")
    return EXIT_OK if all(r.converged for r in results) else EXIT_DOMAIN


def _read_entries(path: str) -> list[HullEntry]:
    entries = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror}") from None
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            comp = parse_formula(d["formula"])
            entries.append(HullEntry.from_composition(str(d.get("id", f"entry{n}")), comp,
                                                      float(d["energy_per_atom"]), d.get("source", "")))
        except (ValueError, KeyError, TypeError) as exc:
            raise DomainError(f"{path}:{n}: bad entry ({exc})") from None
    return entries


def cmd_hull(args, config: Config) -> int:
    entries = _read_entries(args.entries)
    refs = dict(config.hull.references)
    for spec in args.ref or ():
        el, _, value = spec.partition("=")
        try:
            refs[el.strip()] = float(value)
        except ValueError:
            raise DomainError(f"bad --ref {spec!r}; expected El=energy") from None
    # elements without a given reference take their lowest elemental entry
    given = set(refs)
    for e in entries:
        (el, *rest) = e.fractions
        if not rest and el not in given:
            refs[el] = min(e.energy_per_atom, refs.get(el, e.energy_per_atom))
    index = HullIndex(refs, config.hull.eps_hull)
    for e in entries:
        index.add(e)
    rows = []
    for e in entries:
        _, decomp = index.evaluate(e)
        rows.append({"id": e.id, "formula": e.formula, "formation_energy": formation_energy_per_atom(e, refs),
                     "e_above_hull": index.current[e.id], "stable": index.current[e.id] <= config.hull.eps_hull,
                     "decomposition": decomp.as_dict()})
    _out(rows)
    return EXIT_OK


# --- service-backed commands ----------------------------------------------


@contextmanager
def _client(args, config: Config):
    if args.server:
        with httpx.Client(base_url=args.server, timeout=args.timeout) as client:
            yield client
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from philately.service import create_app
    from philately.store import Store

    c = config
    store = Store(args.store or c.store.path, eps_hull=c.hull.eps_hull, snapshot_every=c.store.snapshot_every,
                  match_tolerances=(c.dedup.ltol, c.dedup.stol, c.dedup.atol))
    with TestClient(create_app(store, c.build_calculator(), c)) as client:
        yield client


def _check(resp: httpx.Response):
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        raise DomainError(f"server: {resp.status_code} {detail}")
    return resp


def cmd_submit(args, config: Config) -> int:
    files = []
    for p in args.files:
        try:
            files.append(("files", (Path(p).name, Path(p).read_bytes())))
        except OSError as exc:
            raise DomainError(f"cannot read {p}: {exc.strerror}") from None
    with _client(args, config) as client:
        created = _check(client.post("/submissions", data={"participant": args.participant,
                                                           "process": str(not args.no_process).lower()},
                                     files=files)).json()
        if args.no_process:
            _out(created)
            return EXIT_OK
        deadline = time.monotonic() + args.timeout
        while True:
            status = _check(client.get(f"/submissions/{created['id']}")).json()
            if status["status"] in TERMINAL or time.monotonic() > deadline:
                break
            time.sleep(0.5)
        _out(status)
    return EXIT_OK


def cmd_evaluate(args, config: Config) -> int:
    with _client(args, config) as client:
        _out(_check(client.post(f"/submissions/{args.submission}/evaluate")).json())
    return EXIT_OK


def cmd_query(args, config: Config) -> int:
    params = {k: v for k, v in {
        "elements": args.elements, "formula": args.formula, "spacegroup": args.spacegroup,
        "source": args.source, "wyckoff": args.wyckoff, "max_ehull": args.max_ehull,
        "offset": args.offset, "limit": args.limit,
        "include_duplicates": "true" if args.include_duplicates else None,
    }.items() if v is not None}
    with _client(args, config) as client:
        if args.cif:
            body = _check(client.get("/structures", params=params)).json()
            for rec in body["records"]:
                sys.stdout.write(_check(client.get(f"/structures/{rec['id']}.cif")).text)
        else:
            body = _check(client.get("/structures", params=params)).json()
            if not args.full:
                for rec in body["records"]:
                    rec.pop("structure", None)
            _out(body)
    return EXIT_OK


def cmd_stats(args, config: Config) -> int:
    with _client(args, config) as client:
        body = _check(client.get("/stats", params={"bin_width": args.bin_width})).json()
    if args.output:
        Path(args.output).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _out(body)
    return EXIT_OK


def cmd_leaderboard(args, config: Config) -> int:
    params = {k: v for k, v in {"from": args.start, "to": args.end}.items() if v}
    with _client(args, config) as client:
        _out(_check(client.get("/leaderboard", params=params)).json())
    return EXIT_OK


def cmd_serve(args, config: Config) -> int:
    import uvicorn

    from philately.service import app_from_config

    if args.store:
        config = replace(config, store=replace(config.store, path=args.store))
    app = app_from_config(config)
    uvicorn.run(app, host=args.host or config.server.host, port=args.port or config.server.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="philately", description="Crystal structure submission and database tools")
    p.add_argument("--config", help="YAML configuration file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", help="parse a CIF file and summarize its structures")
    s.add_argument("file")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("validate", help="run the structure validity checks")
    s.add_argument("file")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("relax", help="relax positions with FIRE using the configured calculator")
    s.add_argument("file")
    s.add_argument("-o", "--output", help="write relaxed structures as CIF")
    s.add_argument("--fmax", type=float)
    s.add_argument("--max-steps", type=int)
    s.set_defaults(func=cmd_relax)

    s = sub.add_parser("hull", help="energy above hull for entries in a JSON-lines file")
    s.add_argument("entries", help="lines of {id, formula, energy_per_atom}")
    s.add_argument("--ref", action="append", help="elemental reference energy, El=eV/atom")
    s.set_defaults(func=cmd_hull)

    def remote(sp):
        sp.add_argument("--server", help="service base URL; default runs the service in-process")
        sp.add_argument("--store", help="store directory for the in-process service")
        sp.add_argument("--timeout", type=float, default=600.0)

    s = sub.add_parser("submit", help="upload CIF files as one submission")
    s.add_argument("files", nargs="+")
    s.add_argument("--participant", required=True)
    s.add_argument("--no-process", action="store_true", help="only register; run phases later with evaluate")
    remote(s)
    s.set_defaults(func=cmd_submit)

    s = sub.add_parser("evaluate", help="run the remaining phases of a submission")
    s.add_argument("submission")
    remote(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("query", help="search stored structures")
    s.add_argument("--elements", help="comma-separated; records must contain all")
    s.add_argument("--formula")
    s.add_argument("--spacegroup", type=int)
    s.add_argument("--source")
    s.add_argument("--wyckoff", help="comma-separated letters")
    s.add_argument("--max-ehull", type=float)
    s.add_argument("--offset", type=int, default=0)
    s.add_argument("--limit", type=int, default=100)
    s.add_argument("--include-duplicates", action="store_true")
    s.add_argument("--full", action="store_true", help="include structures in the output")
    s.add_argument("--cif", action="store_true", help="print matching structures as CIF")
    remote(s)
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("stats", help="corpus statistics over canonical records")
    s.add_argument("--bin-width", type=float, default=0.1)
    s.add_argument("-o", "--output", help="write the report to a JSON file")
    remote(s)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("leaderboard", help="participant totals")
    s.add_argument("--from", dest="start")
    s.add_argument("--to", dest="end")
    remote(s)
    s.set_defaults(func=cmd_leaderboard)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--store")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, config)
    except (DomainError, CifError, CrystalError, CalculatorError, HullError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except httpx.HTTPError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
