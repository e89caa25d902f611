"""Command-line front end.

    vemfacet study <config> [--out DIR] [--threads N] [--seed S] [--oracle-level L] [--no-plots]
    vemfacet mesh gen <family> --h H [--jitter J] [--seed S] [-o FILE]
    vemfacet mesh check <file>
    vemfacet reconstruct <mesh> <cell> <space> <dofs.json> [--oracle-level L] [-o FILE]

Flags fall back to ``VEMFACET_OUT``, ``VEMFACET_THREADS``, ``VEMFACET_SEED``
and ``VEMFACET_ORACLE_LEVEL``. Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import shutil
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .mesh import FamilySpec, MeshError, generate_family, geometry, load_mesh, regularity_report, save_mesh
from .oracle import OracleError, reconstruct
from .studies import StudyConfig, StudyError, run_study
from .studies.fields import FieldError
from .studies.report import dumps, write_json, write_plot, write_table
from .vem import DofVector, SpaceTag, n_dofs, pi0

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
ARTIFACTS = ("report.json", "tables", "plots", "manifest.json")
STUDY_KEYS = {"kind", "spaces", "level", "seed", "samples", "family", "hs", "jitter", "mesh_seed", "gamma_min", "fields"}


class ConfigError(ValueError):
    """Malformed study configuration."""


class NumericalError(RuntimeError):
    """A solver or oracle failure."""


# ---------------------------------------------------------------------------
# configuration


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None


def _study_config(name: str, keys: dict[str, str]) -> StudyConfig:
    unknown = set(keys) - STUDY_KEYS
    if unknown:
        raise ConfigError(f"study {name!r}: unknown key(s) {', '.join(sorted(unknown))}")
    for k in ("kind", "spaces", "family", "hs"):
        if k not in keys:
            raise ConfigError(f"study {name!r}: missing key {k!r}")
    family = FamilySpec(
        keys["family"].strip(),
        tuple(_number(h) for h in _list(keys["hs"])),
        jitter=_number(keys.get("jitter", "0")),
        seed=_int(keys.get("mesh_seed", "0"), "mesh_seed"),
        gamma_min=_number(keys.get("gamma_min", "0.2")),
    )
    level = keys.get("level", "").strip()
    return StudyConfig(
        keys["kind"].strip(),
        tuple(_list(keys["spaces"])),
        family,
        fields=tuple(_list(keys.get("fields", "trig"))),
        level=_int(level, "level") if level else None,
        seed=_int(keys.get("seed", "0"), "seed"),
        samples=_int(keys.get("samples", "64"), "samples"),
    )


def parse_config(text: str) -> dict[str, StudyConfig]:
    """Parse the INI-style study file into named study configs.

    ``[mesh]`` (family, hs, jitter, seed) and ``[field]`` (names) give
    defaults; each ``[study]`` or ``[study <name>]`` section defines one study
    and may override any of them (the mesh seed as ``mesh_seed``).
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    base: dict[str, str] = {}
    if cp.has_section("mesh"):
        m = dict(cp["mesh"])
        if "seed" in m:
            m["mesh_seed"] = m.pop("seed")
        base.update(m)
    if cp.has_section("field"):
        f = dict(cp["field"])
        if "names" in f:
            base["fields"] = f.pop("names")
        if f:
            raise ConfigError(f"[field]: unknown key(s) {', '.join(sorted(f))}")
    studies = {}
    for sec in cp.sections():
        if sec in ("mesh", "field"):
            continue
        head, _, rest = sec.partition(" ")
        if head != "study":
            raise ConfigError(f"unknown section [{sec}]")
        keys = dict(base, **cp[sec])
        name = rest.strip() or keys.get("kind", "study").strip()
        if name in studies:
            raise ConfigError(f"duplicate study name {name!r}")
        studies[name] = _study_config(name, keys)
    if not studies:
        raise ConfigError("no [study] section")
    return studies


def config_from_echo(echo: dict) -> StudyConfig:
    f = echo["family"]
    return StudyConfig(
        echo["kind"],
        tuple(echo["spaces"]),
        FamilySpec(f["name"], tuple(f["hs"]), jitter=f["jitter"], seed=f["seed"]),
        fields=tuple(echo["fields"]),
        level=echo["level"],
        seed=echo["seed"],
        samples=echo["samples"],
    )


def load_config(path: str | Path) -> dict[str, StudyConfig]:
    """A study file, or a previous report.json whose config echo is replayed."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
            if "config" in data and "studies" not in data:  # a single study's report
                return {path.stem: config_from_echo(data["config"])}
            return {name: config_from_echo(r["config"]) for name, r in data["studies"].items()}
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path} is not a vemfacet report: {exc}") from None
    return parse_config(text)


def with_overrides(cfg: StudyConfig, seed: int | None, level: int | None, threads: int) -> StudyConfig:
    return StudyConfig(
        cfg.kind,
        cfg.spaces,
        cfg.family,
        fields=cfg.fields,
        level=cfg.level if level is None else level,
        seed=cfg.seed if seed is None else seed,
        samples=cfg.samples,
        threads=threads,
    )


# ---------------------------------------------------------------------------
# commands


def _env(name: str, value, cast):
    if value is not None:
        return value
    raw = os.environ.get(f"VEMFACET_{name}")
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"VEMFACET_{name}={raw!r} is not valid") from None


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def cmd_study(args) -> int:
    out = Path(_env("OUT", args.out, str) or "out")
    threads = _env("THREADS", args.threads, int)
    if threads is None:
        threads = os.cpu_count() or 1
    seed = _env("SEED", args.seed, int)
    level = _env("ORACLE_LEVEL", args.oracle_level, int)
    if threads < 1:
        raise ConfigError("threads must be positive")
    studies = {n: with_overrides(c, seed, level, threads) for n, c in load_config(args.config).items()}

    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".vemfacet-", dir=out.parent))
    try:
        (stage / "tables").mkdir()
        if not args.no_plots:
            (stage / "plots").mkdir()
        reports, entries = {}, []
        for name, cfg in studies.items():
            t0 = time.perf_counter()
            rep = run_study(cfg)
            files = [str(write_table(rep, stage / "tables" / f"{_slug(name)}.csv").relative_to(stage))]
            if not args.no_plots:
                p = write_plot(rep, stage / "plots" / f"{_slug(name)}.svg", title=name)
                if p is not None:
                    files.append(str(p.relative_to(stage)))
            reports[name] = rep.to_dict()
            entries.append(
                {"name": name, "kind": cfg.kind, "passed": rep.passed, "artifacts": files,
                 "wall_clock_s": round(time.perf_counter() - t0, 3)}
            )
        write_json({"tool": "vemfacet", "version": __version__, "studies": reports}, stage / "report.json")
        _publish(stage, out)
        manifest = {
            "config": str(args.config),
            "out": str(out),
            "version": __version__,
            "threads": threads,
            "studies": entries,
            "artifacts": ["report.json"] + [f for e in entries for f in e["artifacts"]] + ["manifest.json"],
        }
        write_json(manifest, out / "manifest.json")
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    for e in entries:
        print(f"{e['name']}: {'pass' if e['passed'] else 'FAIL'} ({e['wall_clock_s']:.1f} s)")
    print(f"wrote {out}")
    return EXIT_OK


def _publish(stage: Path, out: Path) -> None:
    """Replace earlier artifacts in ``out`` with the staged ones (manifest written afterwards)."""
    out.mkdir(parents=True, exist_ok=True)
    for name in ARTIFACTS:
        p = out / name
        if p.is_dir():
            shutil.rmtree(p)
        elif p.exists():
            p.unlink()
    for p in sorted(stage.iterdir()):
        shutil.move(str(p), str(out / p.name))


def cmd_mesh_gen(args) -> int:
    spec = FamilySpec(args.family, (args.h,), jitter=args.jitter, seed=args.seed)
    mesh = generate_family(spec)[0]
    if args.output:
        save_mesh(mesh, args.output)
        print(f"wrote {args.output}: {mesh.n_cells} cells")
    else:
        from .mesh import format_mesh

        sys.stdout.write(format_mesh(mesh))
    return EXIT_OK


def cmd_mesh_check(args) -> int:
    mesh = load_mesh(args.file)
    rep = regularity_report(mesh)
    print(dumps({"file": str(args.file), "dimension": mesh.dimension, "cells": mesh.n_cells, **rep.summary()}), end="")
    return EXIT_OK


def _read_dofs(path: str) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read DOFs from {path}: {exc}") from None
    if isinstance(data, dict):
        data = data.get("dofs", data.get("values"))
    if isinstance(data, list) and data and all(isinstance(e, dict) for e in data):
        data = [e.get("value") for e in data]  # the DofVector JSON form
    try:
        return np.asarray(data, dtype=float).ravel()
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: DOFs must be a list of numbers") from None


def cmd_reconstruct(args) -> int:
    mesh = load_mesh(args.mesh)
    if not 0 <= args.cell < mesh.n_cells:
        raise ConfigError(f"cell {args.cell} out of range (mesh has {mesh.n_cells} cells)")
    space = SpaceTag.parse(args.space)
    geom = geometry(mesh, args.cell)
    values = _read_dofs(args.dofs)
    if len(values) != n_dofs(space, geom):
        raise ConfigError(f"{space.value} on cell {args.cell} has {n_dofs(space, geom)} DOFs, got {len(values)}")
    level = _env("ORACLE_LEVEL", args.oracle_level, int)
    if level is None:
        level = 3 if space.dimension == 2 else 2
    d = DofVector(space, values, geom)
    f = reconstruct(d, level)
    dump = {
        "space": space.value,
        "cell": args.cell,
        "level": level,
        "dofs": values,
        "pi0": pi0(d),
        "accuracy_estimate": f.accuracy_estimate,
        "redofs": f.reextract().values,
        "points": f.complex.points,
        "simplices": f.complex.simplices,
        "a": f.a,
        "M": f.M,
        "deriv": f.deriv,
    }
    text = dumps(dump)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vemfacet", description="Lowest-order virtual face and edge element studies.")
    p.add_argument("--version", action="version", version=f"vemfacet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("study", help="run the studies of a config file (or replay a report.json)")
    s.add_argument("config")
    s.add_argument("--out", default=None, help="output directory (default ./out)")
    s.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    s.add_argument("--seed", type=int, default=None, help="override the study seed")
    s.add_argument("--oracle-level", type=int, default=None, help="override the oracle refinement level")
    s.add_argument("--no-plots", action="store_true", help="skip the SVG plots")
    s.set_defaults(func=cmd_study)

    m = sub.add_parser("mesh", help="generate or check meshes")
    msub = m.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="write one member of a mesh family")
    g.add_argument("family")
    g.add_argument("--h", type=_number, required=True)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", default=None)
    g.set_defaults(func=cmd_mesh_gen)
    c = msub.add_parser("check", help="validate a mesh file and print its regularity summary")
    c.add_argument("file")
    c.set_defaults(func=cmd_mesh_check)

    r = sub.add_parser("reconstruct", help="dump the oracle reconstruction of one DOF vector")
    r.add_argument("mesh")
    r.add_argument("cell", type=int)
    r.add_argument("space")
    r.add_argument("dofs")
    r.add_argument("--oracle-level", type=int, default=None)
    r.add_argument("-o", "--output", default=None)
    r.set_defaults(func=cmd_reconstruct)
    return p


def _diagnose(kind: str, exc: BaseException) -> None:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"vemfacet: error[{kind}]: {msg}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StudyError, FieldError, MeshError, ValueError) as exc:
        _diagnose("invalid", exc)
        return EXIT_INVALID
    except (OracleError, NumericalError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        _diagnose("numerical", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
