"""Built-in test fields with analytic derivatives.

Coordinates are global; the shipped families live in the unit square/cube.
``poly`` resolves to the in-space polynomial field of a space and ``trig``
to a generic smooth field (s = 1) whose Jacobian has no special structure.
"""

from __future__ import annotations

import numpy as np

from ..calculus import AnalyticField
from ..vem import SpaceTag

PI = np.pi


class FieldError(ValueError):
    """Unknown or incompatible built-in field."""


def _cols(*c) -> np.ndarray:
    return np.stack(c, axis=1)


def _const(x, v):
    return np.broadcast_to(np.asarray(v, float), (len(x), len(v))).copy()


def _constant2() -> AnalyticField:
    return AnalyticField(
        2, lambda x: _const(x, (1.0, 0.5)), (2,), div=lambda x: np.zeros(len(x)), rot=lambda x: np.zeros(len(x)),
        name="constant",
    )


def _position2() -> AnalyticField:
    return AnalyticField(
        2, lambda x: x - 0.5, (2,), div=lambda x: np.full(len(x), 2.0), rot=lambda x: np.zeros(len(x)), name="position"
    )


def _perp() -> AnalyticField:
    return AnalyticField(
        2,
        lambda x: _cols(0.5 - x[:, 1], x[:, 0] - 0.5),
        (2,),
        div=lambda x: np.zeros(len(x)),
        rot=lambda x: np.full(len(x), 2.0),
        name="perp",
    )


def _trig2() -> AnalyticField:
    def value(x):
        X, Y = PI * x[:, 0], PI * x[:, 1]
        return _cols(np.sin(X) * np.cos(Y), np.sin(X + 0.5) * np.sin(Y))

    def div(x):
        X, Y = PI * x[:, 0], PI * x[:, 1]
        return PI * np.cos(X) * np.cos(Y) + PI * np.sin(X + 0.5) * np.cos(Y)

    def rot(x):
        X, Y = PI * x[:, 0], PI * x[:, 1]
        return PI * np.cos(X + 0.5) * np.sin(Y) + PI * np.sin(X) * np.sin(Y)

    return AnalyticField(2, value, (2,), div=div, rot=rot, name="trig")


def _swirl() -> AnalyticField:
    return AnalyticField(
        2,
        lambda x: _cols(np.sin(PI * x[:, 1]), np.sin(PI * x[:, 0])),
        (2,),
        div=lambda x: np.zeros(len(x)),
        rot=lambda x: PI * np.cos(PI * x[:, 0]) - PI * np.cos(PI * x[:, 1]),
        name="swirl",
    )


def _constant3() -> AnalyticField:
    return AnalyticField(
        3, lambda x: _const(x, (1.0, 0.5, 0.25)), (3,), div=lambda x: np.zeros(len(x)),
        curl=lambda x: np.zeros((len(x), 3)), name="constant",
    )


def _position3() -> AnalyticField:
    return AnalyticField(
        3, lambda x: x - 0.5, (3,), div=lambda x: np.full(len(x), 3.0), curl=lambda x: np.zeros((len(x), 3)),
        name="position",
    )


def _rotation() -> AnalyticField:
    return AnalyticField(
        3,
        lambda x: _cols(0.5 - x[:, 1], x[:, 0] - 0.5, np.zeros(len(x))),
        (3,),
        div=lambda x: np.zeros(len(x)),
        curl=lambda x: _const(x, (0.0, 0.0, 2.0)),
        name="rotation",
    )


def _trig3() -> AnalyticField:
    def parts(x):
        X, Y, Z = PI * x[:, 0], PI * x[:, 1], PI * x[:, 2]
        a1, a2, a3 = 0.5 * (Y + Z), 0.5 * (Z + X), 0.5 * (X + Y) + 0.3
        return X, Y, Z, a1, a2, a3

    def value(x):
        X, Y, Z, a1, a2, a3 = parts(x)
        return _cols(np.sin(X) * np.cos(a1), np.sin(Y + 0.5) * np.cos(a2), np.sin(Z) * np.cos(a3))

    def jac(x):
        # diagonal entries and the common off-diagonal entry of each row
        X, Y, Z, a1, a2, a3 = parts(x)
        d = (PI * np.cos(X) * np.cos(a1), PI * np.cos(Y + 0.5) * np.cos(a2), PI * np.cos(Z) * np.cos(a3))
        o = (-0.5 * PI * np.sin(X) * np.sin(a1), -0.5 * PI * np.sin(Y + 0.5) * np.sin(a2), -0.5 * PI * np.sin(Z) * np.sin(a3))
        return d, o

    def div(x):
        d, _ = jac(x)
        return d[0] + d[1] + d[2]

    def curl(x):
        _, o = jac(x)
        return _cols(o[2] - o[1], o[0] - o[2], o[1] - o[0])

    return AnalyticField(3, value, (3,), div=div, curl=curl, name="trig")


def _shear() -> AnalyticField:
    return AnalyticField(
        3,
        lambda x: _cols(np.sin(PI * x[:, 1]) * np.sin(PI * x[:, 2]), np.zeros(len(x)), np.zeros(len(x))),
        (3,),
        div=lambda x: np.zeros(len(x)),
        curl=lambda x: _cols(
            np.zeros(len(x)),
            PI * np.sin(PI * x[:, 1]) * np.cos(PI * x[:, 2]),
            -PI * np.cos(PI * x[:, 1]) * np.sin(PI * x[:, 2]),
        ),
        name="shear",
    )


def _cyclic() -> AnalyticField:
    return AnalyticField(
        3,
        lambda x: _cols(np.sin(x[:, 2]), np.sin(x[:, 0]), np.sin(x[:, 1])),
        (3,),
        div=lambda x: np.zeros(len(x)),
        curl=lambda x: _cols(np.cos(x[:, 1]), np.cos(x[:, 2]), np.cos(x[:, 0])),
        name="cyclic",
    )


_BUILTINS = {
    2: {"constant": _constant2, "position": _position2, "perp": _perp, "trig": _trig2, "swirl": _swirl},
    3: {
        "constant": _constant3,
        "position": _position3,
        "rotation": _rotation,
        "trig": _trig3,
        "shear": _shear,
        "cyclic": _cyclic,
    },
}

# polynomial fields (quadrature of their DOFs is exact)
POLYNOMIAL = frozenset({"constant", "position", "perp", "rotation"})

# the in-space polynomial family of each space
_IN_SPACE = {
    SpaceTag.FACE2D: "position",
    SpaceTag.EDGE2D: "perp",
    SpaceTag.FACE3D: "position",
    SpaceTag.EDGE3D: "rotation",
}


def field_names(dim: int) -> tuple[str, ...]:
    return tuple(sorted(_BUILTINS[dim]))


def resolve_name(name: str, space) -> str:
    """Map the aliases ``poly`` to the concrete built-in name for ``space``."""
    space = SpaceTag.parse(space)
    if name == "poly":
        return _IN_SPACE[space]
    if name not in _BUILTINS[space.dimension]:
        raise FieldError(f"unknown {space.dimension}D field {name!r} (known: {', '.join(field_names(space.dimension))}, poly)")
    return name


def builtin_field(name: str, space) -> AnalyticField:
    space = SpaceTag.parse(space)
    return _BUILTINS[space.dimension][resolve_name(name, space)]()


def in_space(name: str, space) -> bool:
    """True when the field lies in the space on every element (constants and the embedded linears)."""
    space = SpaceTag.parse(space)
    name = resolve_name(name, space)
    return name == "constant" or name == _IN_SPACE[space]
