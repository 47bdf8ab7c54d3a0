"""Command-line entry point: relations, blowup, track, verify and matroid reports."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .blowup_engine import POLICIES, DEFAULT_MAX_ROUNDS, RoundCapExceeded, run_pipeline
from .exact_arith import ExactMatrix, check_characteristic
from .matroid_gamma import (
    AmbiguousRank, ChartBasisMissing, Matroid3, RankDeficient, check_matroid, gamma_from_matroid,
    gamma_scheme_equations, make_matroid, matroid_from_matrix, polytope_dim, uniform_matroid,
)
from .pluecker_model import NTooSmall, relations_document, upsilon
from .poly_core import fmt_triple, parse_triple, pi_var
from .smoothness_checker import HEADER, track_samples, verify_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ROUND_CAP = 3
EXIT_VERDICT = 4
EXIT_AMBIGUOUS = 5

SPECIAL_EVERY = 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 5
    gamma: list[tuple[int, int, int]] = field(default_factory=list)
    matroid: Matroid3 | None = None
    gamma_source: str = "none"
    primes: list[int] = field(default_factory=lambda: [0])
    samples: int = 100
    seed: int = 0
    center_filter: str = "certificate"
    max_rounds: int = DEFAULT_MAX_ROUNDS
    jobs: int = 1
    out: str | None = None
    fmt: str = "json"

    def validate(self) -> None:
        if self.n < 4:
            raise ConfigError(f"n = {self.n}; need n >= 4")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.max_rounds < 0:
            raise ConfigError("max-rounds must be >= 0")
        for p in self.primes:
            if p:
                try:
                    check_characteristic(p)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        for u in self.gamma:
            if len(set(u)) != 3 or not all(1 <= i <= self.n for i in u):
                raise ConfigError(f"gamma entry {u} is not a 3-subset of 1..{self.n}")
            if tuple(sorted(u)) == (1, 2, 3):
                raise ConfigError("gamma must not contain 123 (the chart is p_123 != 0)")


# ---------------------------------------------------------------- config parsing


def _parse_primes(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad prime list {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise ConfigError(f"bad prime list {text!r}")
    return list(dict.fromkeys(vals))


def _parse_gamma(text: str) -> list[tuple[int, int, int]]:
    try:
        return sorted({tuple(sorted(parse_triple(t.strip()))) for t in text.split(",") if t.strip()})
    except ValueError:
        raise ConfigError(f"bad gamma list {text!r}") from None


def _field_char(text: str) -> int:
    if text == "Q":
        return 0
    if text.startswith("Fp:"):
        return int(text[3:])
    raise ConfigError(f"bad field {text!r}; use Q or Fp:<p>")


def _load_json(path: str) -> object:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _matroid_from_doc(doc: object) -> Matroid3:
    if isinstance(doc, list):
        doc = {"matrix": doc, "field": "Q"}
    if not isinstance(doc, dict):
        raise ConfigError("matroid input must be a JSON object or a list of rows")
    if "matrix" in doc:
        p = _field_char(doc.get("field", "Q"))
        try:
            return matroid_from_matrix(ExactMatrix.from_rows(doc["matrix"], p))
        except (RankDeficient, ValueError) as exc:
            raise ConfigError(f"matrix input: {exc}") from None
    if "bases" in doc:
        bases = [tuple(sorted(b)) for b in doc["bases"]]
        n = doc.get("n") or max(max(b) for b in bases)
        ok, witness = check_matroid(bases, n)
        if not ok:
            raise ConfigError(f"bases violate the matroid axioms: {witness}")
        return make_matroid(n, bases)
    raise ConfigError("matroid input needs 'bases' or 'matrix'")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(
        n=args.n, primes=_parse_primes(args.primes), samples=args.samples, seed=args.seed,
        center_filter=args.center_filter, max_rounds=args.max_rounds,
        jobs=args.jobs if args.jobs else (os.cpu_count() or 1), out=args.out, fmt=args.format,
    )
    if args.gamma:
        cfg.gamma = _parse_gamma(args.gamma)
        cfg.gamma_source = "triples"
    for path, kind in ((args.matroid_file, "matroid-file"), (args.matrix_file, "matrix-file")):
        if not path:
            continue
        if cfg.matroid is not None:
            raise ConfigError("give at most one of --matroid-file and --matrix-file")
        cfg.matroid = _matroid_from_doc(_load_json(path))
        if cfg.matroid.n != cfg.n:
            raise ConfigError(f"{kind} has n = {cfg.matroid.n} but --n is {cfg.n}")
        try:
            derived = sorted(gamma_from_matroid(cfg.matroid))
        except ChartBasisMissing as exc:
            raise ConfigError(str(exc)) from None
        if cfg.gamma_source == "triples" and derived != cfg.gamma:
            diff = {"only_in_gamma": [fmt_triple(u) for u in cfg.gamma if u not in derived],
                    "only_in_matroid": [fmt_triple(u) for u in derived if u not in cfg.gamma]}
            raise ConfigError(f"gamma does not match the matroid non-bases: {json.dumps(diff, sort_keys=True)}")
        cfg.gamma = derived
        cfg.gamma_source = kind
    cfg.validate()
    return cfg


def gamma_matroid(cfg: RunConfig) -> Matroid3:
    """The matroid whose non-bases are Gamma; triples alone must already form one."""
    if cfg.matroid is not None:
        return cfg.matroid
    bases = [u for u in uniform_matroid(cfg.n).bases if u not in set(cfg.gamma)]
    ok, witness = check_matroid(bases, cfg.n)
    if not ok:
        raise ConfigError(f"gamma is not the non-basis set of a matroid: {witness}")
    return make_matroid(cfg.n, bases)


# ---------------------------------------------------------------- commands


def _atlas(cfg: RunConfig):
    return run_pipeline(cfg.n, policy=cfg.center_filter, max_rounds=cfg.max_rounds, check_invariants=False)


def cmd_relations(cfg: RunConfig) -> tuple[dict, int]:
    try:
        return relations_document(cfg.n), EXIT_OK
    except NTooSmall as exc:
        raise ConfigError(str(exc)) from None


def cmd_blowup(cfg: RunConfig) -> tuple[dict, int]:
    atlas = run_pipeline(cfg.n, policy=cfg.center_filter, max_rounds=cfg.max_rounds, check_invariants=True)
    doc = atlas.report()
    if cfg.out:
        doc = dict(doc, charts=atlas.chart_dump())
    return doc, EXIT_OK


def cmd_track(cfg: RunConfig) -> tuple[dict, int]:
    m = gamma_matroid(cfg) if cfg.gamma else None
    atlas = _atlas(cfg)
    points, excluded = track_samples(atlas, cfg.gamma, m, cfg.primes, cfg.samples, cfg.seed,
                                     SPECIAL_EVERY if cfg.gamma else 0, cfg.jobs)
    out = []
    for pid, (job, pt) in enumerate(points):
        rec = pt.to_json()
        out.append({"id": pid, "special": job[2], **rec})
    return {"n": cfg.n, "gamma": [pi_var(u) for u in cfg.gamma], "points": out, "excluded": excluded}, EXIT_OK


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    m = gamma_matroid(cfg) if cfg.gamma else None
    atlas = _atlas(cfg)
    tdim = 3 * (cfg.n - 3)
    gate, _, _ = verify_run(atlas, (), None, cfg.primes, cfg.samples, cfg.seed, 0, cfg.jobs, tdim)
    gate_doc = gate.to_json()
    doc: dict
    if not cfg.gamma or not gate.ok:
        doc = dict(gate_doc)
        if cfg.gamma:
            doc["gamma"] = [pi_var(u) for u in cfg.gamma]
            doc["gate"] = {"verdict": gate_doc["verdict"], "points": len(gate_doc["points"])}
            doc["note"] = "the empty-gamma gate failed; gamma run skipped"
        return doc, EXIT_OK if gate.ok else EXIT_VERDICT
    summary, _, extra = verify_run(atlas, cfg.gamma, m, cfg.primes, cfg.samples, cfg.seed, SPECIAL_EVERY, cfg.jobs)
    doc = summary.to_json()
    doc["gate"] = {"verdict": gate_doc["verdict"], "points": len(gate_doc["points"])}
    doc["gamma_sets"] = extra["gamma_sets"]
    doc["special_points"] = extra["special"]
    return doc, EXIT_OK if summary.ok else EXIT_VERDICT


def cmd_matroid(cfg: RunConfig) -> tuple[dict, int]:
    m = gamma_matroid(cfg) if (cfg.gamma or cfg.matroid) else uniform_matroid(cfg.n)
    doc = m.to_json()
    doc["non_bases"] = [list(u) for u in m.non_bases]
    doc["polytope_dim"] = polytope_dim(m)
    doc["connected"] = doc["polytope_dim"] == m.n - 1
    try:
        gamma = sorted(gamma_from_matroid(m))
        doc["gamma"] = [pi_var(u) for u in gamma]
        doc["gamma_scheme"] = gamma_scheme_equations(gamma, m.n).to_json()
    except ChartBasisMissing as exc:
        doc["gamma"] = None
        doc["note"] = str(exc)
    doc["upsilon"] = upsilon(m.n)
    return doc, EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], tuple[dict, int]]] = {
    "relations": cmd_relations,
    "blowup": cmd_blowup,
    "track": cmd_track,
    "verify": cmd_verify,
    "matroid": cmd_matroid,
}


# ---------------------------------------------------------------- output


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    lines: list[str] = []
    _text(doc, 0, lines)
    return "\n".join(lines) + "\n"


def _text(obj, depth: int, lines: list[str]) -> None:
    pad = "  " * depth
    for key in sorted(obj):
        val = obj[key]
        if isinstance(val, dict) and depth < 2:
            lines.append(f"{pad}{key}:")
            _text(val, depth + 1, lines)
        elif isinstance(val, list):
            lines.append(f"{pad}{key}: [{len(val)} entries]")
        elif isinstance(val, dict):
            lines.append(f"{pad}{key}: {{{len(val)} keys}}")
        else:
            lines.append(f"{pad}{key}: {val}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=5)
    common.add_argument("--gamma", help="comma list of triples, e.g. 145,245")
    common.add_argument("--matroid-file", help="JSON {n, bases} or {matrix, field}")
    common.add_argument("--matrix-file", help="JSON {matrix, field} or a bare list of rows over Q")
    common.add_argument("--primes", default="0", help="comma list of characteristics; 0 means Q")
    common.add_argument("--samples", type=int, default=100)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--center-filter", choices=POLICIES, default="certificate")
    common.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)
    common.add_argument("--jobs", type=int, default=0, help="worker processes (default: logical cores)")
    common.add_argument("--out", help="write the document here instead of stdout")
    common.add_argument("--format", choices=("json", "text"), default="json")
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        doc, code = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RoundCapExceeded as exc:
        print(f"error: round cap exceeded: {exc}", file=sys.stderr)
        return EXIT_ROUND_CAP
    except AmbiguousRank as exc:
        print(f"error: ambiguous generic rank: {exc}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    text = render(doc, cfg.fmt)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.command == "verify":
        print(f"{HEADER}; verdict: {doc.get('verdict')}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
