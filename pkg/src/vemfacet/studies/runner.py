"""Study drivers: interpolation convergence, stability brackets, exactness identities,
a-priori constants and inverse-estimate ratios over a mesh family."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy
import scipy.linalg as sla

from .. import __version__
from ..calculus import simplex_quadrature
from ..mesh import FamilySpec, PolytopalMesh, generate_family, geometry, regularity_report, submesh_for
from ..oracle import l2_distance, reconstruct, workspace
from ..vem import (
    DofVector,
    SpaceTag,
    constant_dofs,
    curl_image,
    div_constant,
    extract_dofs,
    inner_matrix,
    n_dofs,
    rot_constant,
    rotate,
    stabilization_matrix,
)
from .fields import POLYNOMIAL, builtin_field, in_space, resolve_name

KINDS = ("convergence", "stability", "exactness", "apriori", "inverse-probe")
ORACLE_KINDS = frozenset({"convergence", "stability", "apriori", "inverse-probe"})
DEFAULT_LEVEL = {2: 3, 3: 2}
GATE = 0.1  # admissible when the oracle accuracy estimate is at most this fraction of the value
ROUNDOFF_FLOOR = 1e-12  # values below this are exact zeros for slope purposes
UNIFORM_FAMILIES = frozenset({"squares", "cubes"})
SLOPE_WINDOW = (0.85, 1.15)
DERIV_NAME = {SpaceTag.FACE2D: "div", SpaceTag.FACE3D: "div", SpaceTag.EDGE2D: "rot", SpaceTag.EDGE3D: "curl"}


class StudyError(ValueError):
    """Invalid study configuration."""


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    spaces: tuple
    family: FamilySpec
    fields: tuple[str, ...] = ("trig",)
    level: int | None = None
    seed: int = 0
    samples: int = 64
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StudyError(f"unknown study kind {self.kind!r}; choose one of {', '.join(KINDS)}")
        try:
            spaces = tuple(SpaceTag.parse(s) for s in self.spaces)
            dim = self.family.dimension
        except ValueError as exc:
            raise StudyError(str(exc)) from None
        if not spaces:
            raise StudyError("no spaces given")
        object.__setattr__(self, "spaces", spaces)
        object.__setattr__(self, "fields", tuple(self.fields))
        for s in spaces:
            if s.dimension != dim:
                raise StudyError(f"space {s.value} needs a {s.dimension}D family, {self.family.name} is {dim}D")
        hs = tuple(float(h) for h in self.family.hs)
        if not hs or any(not b < a for a, b in zip(hs, hs[1:])):
            raise StudyError(f"h list must be non-empty and strictly decreasing, got {list(hs)}")
        if self.kind in ORACLE_KINDS and self.oracle_level < 1:
            raise StudyError(f"oracle level must be at least 1 for {self.kind} studies")
        if self.samples < 0 or self.threads < 1:
            raise StudyError("samples must be non-negative and threads positive")
        if self.kind != "stability" and not self.fields and self.kind in ("convergence", "exactness"):
            raise StudyError("no test fields given")
        for name in self.fields:
            for s in spaces:
                try:
                    resolve_name(name, s)
                except ValueError as exc:
                    raise StudyError(str(exc)) from None

    @property
    def dimension(self) -> int:
        return self.family.dimension

    @property
    def oracle_level(self) -> int:
        return DEFAULT_LEVEL[self.dimension] if self.level is None else int(self.level)

    def echo(self) -> dict:
        """The settings that determine the report (thread count excluded)."""
        f = self.family
        return {
            "kind": self.kind,
            "spaces": [s.value for s in self.spaces],
            "family": {"name": f.name, "hs": [float(h) for h in f.hs], "jitter": float(f.jitter), "seed": int(f.seed)},
            "fields": list(self.fields),
            "level": self.oracle_level,
            "seed": int(self.seed),
            "samples": int(self.samples),
        }


@dataclass
class StudyReport:
    kind: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    slopes: list[dict] = field(default_factory=list)
    verdicts: list[dict] = field(default_factory=list)
    meshes: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, h: float, quantity: str, value: float, accuracy: float | None = None) -> None:
        self.rows.append(
            {
                "h": float(h),
                "quantity": quantity,
                "value": float(value),
                "accuracy_estimate": None if accuracy is None else float(accuracy),
            }
        )

    def series(self, quantity: str) -> tuple[np.ndarray, np.ndarray, list]:
        rows = [r for r in self.rows if r["quantity"] == quantity]
        return (
            np.array([r["h"] for r in rows]),
            np.array([r["value"] for r in rows]),
            [r["accuracy_estimate"] for r in rows],
        )

    def quantities(self) -> list[str]:
        return list(dict.fromkeys(r["quantity"] for r in self.rows))

    def slope(self, quantity: str) -> dict:
        for s in self.slopes:
            if s["quantity"] == quantity:
                return s
        raise KeyError(quantity)

    def verdict(self, quantity: str) -> dict:
        for v in self.verdicts:
            if v["quantity"] == quantity:
                return v
        raise KeyError(quantity)

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "metadata": self.metadata,
            "rows": self.rows,
            "slopes": self.slopes,
            "verdicts": self.verdicts,
            "meshes": self.meshes,
        }


# ---------------------------------------------------------------------------
# helpers


def admissible(value: float, accuracy: float | None) -> bool:
    if not np.isfinite(value) or value <= ROUNDOFF_FLOOR:
        return False
    return accuracy is None or (np.isfinite(accuracy) and accuracy <= GATE * value)


def fit_slope(quantity: str, hs, values, accuracies) -> dict:
    """Least-squares slope of log(value) against log(h) over the admissible points."""
    keep = [i for i, (v, a) in enumerate(zip(values, accuracies)) if admissible(v, a)]
    out = {
        "quantity": quantity,
        "h": [float(hs[i]) for i in keep],
        "excluded_h": [float(h) for i, h in enumerate(hs) if i not in keep],
        "points": len(keep),
        "slope": None,
        "residual": None,
        "inconclusive": len(keep) < 3,
    }
    if len(keep) >= 3:
        x = np.log(np.asarray(hs, float)[keep])
        y = np.log(np.asarray(values, float)[keep])
        A = np.column_stack([x, np.ones_like(x)])
        coef = np.linalg.lstsq(A, y, rcond=None)[0]
        out["slope"] = float(coef[0])
        out["residual"] = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return out


def _map(cfg: StudyConfig, fn: Callable, items) -> list:
    items = list(items)
    if cfg.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def element_rng(seed: int, element: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(element)]))


def unit_directions(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """``count`` uniformly distributed unit vectors in R^n."""
    X = rng.standard_normal((count, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _quad_distance(points, simplices, func: Callable, c: float, degree: int = 6) -> float:
    """L2 norm over a simplex mesh of ``func - c`` for a scalar callback."""
    x, w = simplex_quadrature(points, simplices, degree)
    v = np.asarray(func(x.reshape(-1, x.shape[-1])), float).reshape(w.shape) - c
    return float(np.sqrt((w * v**2).sum()))


def element_mean(geom, func: Callable, degree: int = 10) -> np.ndarray:
    """Mean of a callback over an element (composite Gauss rule on the level-1 submesh)."""
    sub = submesh_for(geom, 1)
    x, w = simplex_quadrature(sub.points, sub.simplices, degree)
    v = np.asarray(func(x.reshape(-1, x.shape[-1])), float)
    v = v.reshape(w.shape + v.shape[1:])
    return np.tensordot(w, v, axes=([0, 1], [0, 1])) / geom.measure


def _metadata(cfg: StudyConfig) -> dict:
    return {
        "tool": "vemfacet",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": int(cfg.seed),
        "oracle_level": cfg.oracle_level if cfg.kind in ORACLE_KINDS else None,
        "gate": GATE,
    }


def _mesh_info(h: float, mesh: PolytopalMesh) -> dict:
    reg = regularity_report(mesh)
    return {"h": float(h), "n_elements": int(mesh.n_cells), "gamma_min": float(reg.gamma_min)}


def _new_report(cfg: StudyConfig, meshes: list[PolytopalMesh]) -> StudyReport:
    return StudyReport(
        cfg.kind,
        cfg.echo(),
        meshes=[_mesh_info(h, m) for h, m in zip(cfg.family.hs, meshes)],
        metadata=_metadata(cfg),
    )


def _variation(values) -> float:
    v = np.abs(np.asarray(values, float))
    if not (v > 0).all():
        return float("inf")
    return float(v.max() / v.min())


# ---------------------------------------------------------------------------
# convergence


def _convergence_element(space: SpaceTag, fld, geom, level: int):
    d = extract_dofs(space, fld, geom)
    f = reconstruct(d, level)
    err, acc = l2_distance(f, fld), f.accuracy_estimate
    cx = f.complex
    if space.is_face:
        derr, dacc = _quad_distance(cx.points, cx.simplices, fld.div, div_constant(d)), None
    elif space == SpaceTag.EDGE2D:
        derr, dacc = _quad_distance(cx.points, cx.simplices, fld.rot, rot_constant(d)), None
    else:
        g = reconstruct(curl_image(d), level)
        derr, dacc = l2_distance(g, fld.derived("curl")), g.accuracy_estimate
    return err, acc, derr, dacc


def _rss(values) -> float:
    return float(np.sqrt(np.sum(np.square(values))))


def run_convergence(cfg: StudyConfig) -> StudyReport:
    meshes = generate_family(cfg.family)
    rep = _new_report(cfg, meshes)
    L = cfg.oracle_level
    for space in cfg.spaces:
        for name in cfg.fields:
            fld = builtin_field(name, space)
            label = f"{space.value}/{resolve_name(name, space)}"
            l2, deriv = f"{label}/l2_error", f"{label}/{DERIV_NAME[space]}_error"
            for h, mesh in zip(cfg.family.hs, meshes):
                per = _map(cfg, lambda c, m=mesh: _convergence_element(space, fld, geometry(m, c), L), range(mesh.n_cells))
                err = _rss([p[0] for p in per])
                acc = _rss([p[1] for p in per])
                derr = _rss([p[2] for p in per])
                dacc = None if per[0][3] is None else _rss([p[3] for p in per])
                rep.add(h, l2, err, acc)
                rep.add(h, deriv, derr, dacc)
            for q in (l2, deriv):
                hs, vals, accs = rep.series(q)
                s = fit_slope(q, hs, vals, accs)
                rep.slopes.append(s)
                if in_space(name, space):
                    ok = bool(np.nanmax(vals) <= 1e-10)
                    rep.verdicts.append({"quantity": q, "check": "in-space field reproduced", "max": float(np.nanmax(vals)), "pass": ok})
                else:
                    lo, hi = SLOPE_WINDOW
                    ok = s["slope"] is not None and lo <= s["slope"] <= hi
                    rep.verdicts.append(
                        {"quantity": q, "check": f"slope in [{lo}, {hi}]", "slope": s["slope"], "pass": bool(ok)}
                    )
    return rep


# ---------------------------------------------------------------------------
# eigenvalue brackets


def _generalized(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return sla.eigh(A, B, eigvals_only=True)


def _stability_element(space: SpaceTag, geom, level: int, seed: int, samples: int):
    ws = workspace(space, geom, level)
    S = stabilization_matrix(space, geom)
    I = inner_matrix(space, geom)
    X = unit_directions(element_rng(seed, geom.element), n_dofs(space, geom), samples)
    out = {}
    for key, A in (("stab", S), ("inner", I)):
        lam = _generalized(A, ws.gram)
        lam_c = _generalized(A, ws.coarse_gram)
        r = np.einsum("si,ij,sj->s", X, A, X) / np.einsum("si,ij,sj->s", X, ws.gram, X) if samples else np.array([])
        out[key] = (lam[0], lam[-1], lam_c[0], lam_c[-1], r)
    return out


def run_stability(cfg: StudyConfig) -> StudyReport:
    meshes = generate_family(cfg.family)
    rep = _new_report(cfg, meshes)
    L = cfg.oracle_level
    limit = 1.01 if cfg.family.name in UNIFORM_FAMILIES else 2.0
    for space in cfg.spaces:
        for h, mesh, info in zip(cfg.family.hs, meshes, rep.meshes):
            per = _map(
                cfg, lambda c, m=mesh: _stability_element(space, geometry(m, c), L, cfg.seed, cfg.samples), range(mesh.n_cells)
            )
            checks = True
            for key in ("stab", "inner"):
                lo = np.array([p[key][0] for p in per])
                hi = np.array([p[key][1] for p in per])
                lo_c = np.array([p[key][2] for p in per])
                hi_c = np.array([p[key][3] for p in per])
                rep.add(h, f"{space.value}/{key}_lambda_min", lo.min(), np.abs(lo - lo_c).max())
                rep.add(h, f"{space.value}/{key}_lambda_max", hi.max(), np.abs(hi - hi_c).max())
                for p in per:
                    r = p[key][4]
                    if len(r) and (r.min() < p[key][0] * (1 - 1e-8) or r.max() > p[key][1] * (1 + 1e-8)):
                        checks = False
                info.setdefault("per_element", {})[f"{space.value}/{key}_lambda_min"] = [float(v) for v in lo]
                info["per_element"][f"{space.value}/{key}_lambda_max"] = [float(v) for v in hi]
            info.setdefault("sample_check", {})[space.value] = checks
        for key in ("stab", "inner"):
            for end in ("lambda_min", "lambda_max"):
                q = f"{space.value}/{key}_{end}"
                _, vals, _ = rep.series(q)
                var = _variation(vals)
                ok = bool((vals > 0).all() and var <= limit if limit < 2 else (vals > 0).all() and var < limit)
                rep.verdicts.append({"quantity": q, "check": f"positive, variation within {limit}", "variation": var, "pass": ok})
    return rep


def _apriori_element(space: SpaceTag, geom, level: int, seed: int, samples: int):
    ws = workspace(space, geom, level)
    S = stabilization_matrix(space, geom)
    c_eig = np.sqrt(_generalized(ws.gram, S)[-1])
    c_eig_c = np.sqrt(_generalized(ws.coarse_gram, S)[-1])
    best = c_eig
    if samples:
        X = unit_directions(element_rng(seed, geom.element), n_dofs(space, geom), samples)
        r = np.einsum("si,ij,sj->s", X, ws.gram, X) / np.einsum("si,ij,sj->s", X, S, X)
        best = max(best, float(np.sqrt(r.max())))
    for e in np.eye(space.dimension):
        d = constant_dofs(space, e, geom).values
        best = max(best, float(np.sqrt(geom.measure / (d @ S @ d))))  # exact norm of a constant field
    return best, c_eig, c_eig_c


def run_apriori(cfg: StudyConfig) -> StudyReport:
    meshes = generate_family(cfg.family)
    rep = _new_report(cfg, meshes)
    L = cfg.oracle_level
    for space in cfg.spaces:
        q = f"{space.value}/apriori_constant"
        for h, mesh, info in zip(cfg.family.hs, meshes, rep.meshes):
            per = _map(
                cfg, lambda c, m=mesh: _apriori_element(space, geometry(m, c), L, cfg.seed, cfg.samples), range(mesh.n_cells)
            )
            C = np.array([p[0] for p in per])
            acc = max(abs(p[1] - p[2]) for p in per)
            rep.add(h, q, C.max(), acc)
            info.setdefault("per_element", {})[q] = [float(v) for v in C]
        _, vals, _ = rep.series(q)
        var = _variation(vals)
        rep.verdicts.append({"quantity": q, "check": "bounded, variation below 2", "variation": var, "pass": bool(var < 2)})
    return rep


def _inverse_element(space: SpaceTag, geom, level: int, seed: int, samples: int):
    ws = workspace(space, geom, level)
    h = geom.diameter
    r_eig = h * np.sqrt(max(_generalized(ws.deriv_gram, ws.gram)[-1], 0.0))
    r_eig_c = h * np.sqrt(max(_generalized(ws.coarse_deriv_gram, ws.coarse_gram)[-1], 0.0))
    best = r_eig
    if samples:
        X = unit_directions(element_rng(seed, geom.element), n_dofs(space, geom), samples)
        r = np.einsum("si,ij,sj->s", X, ws.deriv_gram, X) / np.einsum("si,ij,sj->s", X, ws.gram, X)
        best = max(best, h * float(np.sqrt(max(r.max(), 0.0))))
    return best, r_eig, r_eig_c


def run_inverse_probe(cfg: StudyConfig) -> StudyReport:
    meshes = generate_family(cfg.family)
    rep = _new_report(cfg, meshes)
    L = cfg.oracle_level
    for space in cfg.spaces:
        q = f"{space.value}/inverse_{DERIV_NAME[space]}_ratio"
        for h, mesh, info in zip(cfg.family.hs, meshes, rep.meshes):
            per = _map(
                cfg, lambda c, m=mesh: _inverse_element(space, geometry(m, c), L, cfg.seed, cfg.samples), range(mesh.n_cells)
            )
            R = np.array([p[0] for p in per])
            acc = max(abs(p[1] - p[2]) for p in per)
            rep.add(h, q, R.max(), acc)
            info.setdefault("per_element", {})[q] = [float(v) for v in R]
        _, vals, _ = rep.series(q)
        var = _variation(vals)
        rep.verdicts.append({"quantity": q, "check": "variation below 2", "variation": var, "pass": bool(var < 2)})
    return rep


# ---------------------------------------------------------------------------
# exactness


def _div_curl_residual(d: DofVector) -> float:
    """|div curl v| relative to the size of the face flux terms that cancel in it."""
    c = curl_image(d)
    g = d.geometry
    areas = np.array([f.area for f in g.faces])
    scale = np.abs(c.values) @ areas / g.measure
    return abs(div_constant(c)) / scale if scale > 0 else 0.0


def _exactness_element(dim: int, names: tuple[str, ...], geom, seed: int, samples: int) -> dict:
    out = {}
    if dim == 3:
        edge, face = SpaceTag.EDGE3D, SpaceTag.FACE3D
        for name in names:
            v = builtin_field(name, edge)
            lhs = curl_image(extract_dofs(edge, v, geom)).values
            rhs = extract_dofs(face, v.derived("curl"), geom).values
            out[f"{v.name}/commuting"] = float(np.abs(lhs - rhs).max())
            mean_div = float(element_mean(geom, v.div))
            out[f"{v.name}/div_commuting"] = abs(div_constant(extract_dofs(face, v, geom)) - mean_div)
        X = element_rng(seed, geom.element).standard_normal((samples, geom.n_edges))
        out["div_curl"] = max((_div_curl_residual(DofVector(edge, x, geom)) for x in X), default=0.0)
    else:
        edge, face = SpaceTag.EDGE2D, SpaceTag.FACE2D
        for name in names:
            v = builtin_field(name, edge)
            mean_rot = float(element_mean(geom, v.rot))
            out[f"{v.name}/commuting"] = abs(rot_constant(extract_dofs(edge, v, geom)) - mean_rot)
            mean_div = float(element_mean(geom, v.div))
            out[f"{v.name}/div_commuting"] = abs(div_constant(extract_dofs(face, v, geom)) - mean_div)
        X = element_rng(seed, geom.element).standard_normal((samples, geom.n_edges))
        # rotation duality: rot of an Edge2D function is div of its quarter turn
        res = [abs(rot_constant(DofVector(edge, x, geom)) - div_constant(rotate(DofVector(edge, x, geom)))) for x in X]
        out["rotation_duality"] = max(res, default=0.0)
    return out


def exactness_tolerance(quantity: str) -> float:
    name = quantity.split("/")[0]
    if quantity in ("div_curl", "rotation_duality") or name in POLYNOMIAL:
        return 1e-13
    return 1e-10


def run_exactness(cfg: StudyConfig) -> StudyReport:
    meshes = generate_family(cfg.family)
    rep = _new_report(cfg, meshes)
    dim = cfg.dimension
    names = tuple(resolve_name(n, cfg.spaces[0]) for n in cfg.fields)
    for h, mesh in zip(cfg.family.hs, meshes):
        per = _map(cfg, lambda c, m=mesh: _exactness_element(dim, names, geometry(m, c), cfg.seed, cfg.samples), range(mesh.n_cells))
        for q in per[0]:
            rep.add(h, q, max(p[q] for p in per))
    for q in rep.quantities():
        _, vals, _ = rep.series(q)
        tol = exactness_tolerance(q)
        rep.verdicts.append({"quantity": q, "check": f"max residual <= {tol:g}", "max": float(vals.max()), "pass": bool(vals.max() <= tol)})
    return rep


RUNNERS = {
    "convergence": run_convergence,
    "stability": run_stability,
    "exactness": run_exactness,
    "apriori": run_apriori,
    "inverse-probe": run_inverse_probe,
}


def run_study(cfg: StudyConfig) -> StudyReport:
    return RUNNERS[cfg.kind](cfg)
