"""Reference table values used as an independent test fixture.

These are transcribed verbatim, errors included.  The generated
basis in :mod:`mcmtomo.fomgi` is never built from them; they exist so that
agreement and disagreement can be checked mechanically.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

from .error_generators import EegIndex, canonical_index
from .pauli_algebra import ValidationError, pauli_matrix

__all__ = [
    "REFERENCE_ROWS",
    "REFERENCE_UNIT_ACTIONS",
    "REFERENCE_FIT_STATISTICS",
    "KNOWN_DISCREPANCIES",
    "parse_combination",
]

REFERENCE_ROWS: dict[str, str] = {
    "s_meas": "s_xx + s_yx + s_xy + s_yy - c_xxyy + c_xyyx",
    "s_prep": "s_xi + s_yi + s_xz + s_yz + a_xiyz + a_xzyi",
    "s_read": "s_ix + s_iy + s_zx + s_zy + a_ixzy - a_iyzx",
    "a_meas": "a_xxyx + a_xxxy + a_xyyy + a_yxyy",
    "a_prep": "a_xiyi + a_xzyz + c_xixz + c_yiyz",
    "a_read": "a_ixiy + a_zxzy + c_ixzx + c_iyzy",
    "r_x_meas": "h_xx - h_yy - a_xxzz + a_yyzz + c_izxy + c_izyx + c_xyzi + c_yxzi",
    "r_y_meas": "h_yx + h_xy - a_xyzz - a_yxzz - c_izxx + c_izyy - c_xxzi + c_yyzi",
    "r_x_ind_prep": "h_xi + a_ixyy - a_iyyx + a_izxz - 2a_xizz - 2a_xzzi + c_xxzy - c_xyzx - c_yizi - c_yzzz",
    "r_x_dep_prep": "h_xz + a_izxi - 2a_xizi - a_xxzx - a_xyzy - 2a_xzzz + c_ixyx + c_iyyy - c_yizz - c_yzzi",
    "r_y_ind_prep": "h_yi - a_ixxy + a_iyxx + a_izyz - 2a_yizz - 2a_yzzi + c_xizi + c_xzzz + c_yxzy - c_yyzx",
    "r_y_dep_prep": "h_yz + a_izyi - 2a_yizi - a_yxzx - a_yyzy - 2a_yzzz - c_ixxx - c_iyxy + c_xizz + c_xzzi",
    "rt_x_meas": "a_ixxi - a_iyyi + a_xzzx - a_yzzy - c_ixyz - c_iyxz + c_xizy + c_yizx",
    "rt_y_meas": "a_ixyi + a_iyxi + a_xzzy + a_yzzx + c_ixxz - c_iyyz - c_xizx + c_yizy",
    "rt_xz_meas": "a_ixxz - a_iyyz + a_xizx - a_yizy - c_ixyi - c_iyxi + c_xzzy + c_yzzx",
    "rt_yz_meas": "a_ixyz + a_iyxz + a_xizy + a_yizx + c_ixxi - c_iyyi - c_xzzx + c_yzzy",
    "rt_x_ind_prep": "a_ixxx - a_ixyy + a_iyxy + a_iyyx + c_xxzy - c_xyzx - c_yxzx - c_yyzy",
    "rt_x_dep_prep": "a_xxzx + a_xyzy + a_yxzy - a_yyzx + c_ixxy + c_ixyx - c_iyxx + c_iyyy",
    "rt_y_ind_prep": "a_xxzy - a_xyzx - a_yxzx - a_yyzy + c_ixxx - c_ixyy + c_iyxy + c_iyyx",
    "rt_y_dep_prep": "a_ixxy - a_ixyx - a_iyxx + a_iyyy + c_xxzx - c_xyzy - c_yxzy - c_yyzx",
    "w0": "h_zy + a_iyzi - a_xyxz - a_yyyz - 2a_zyzz + c_ixzz - c_izzx - c_xixx - c_yiyx - 2c_zizx",
    "w1": "h_iy - 2a_iyzz - a_xiyx - a_xxyi - a_zizy - c_ixiz - 2c_ixzi + c_xyyz - c_xzyy + c_zxzz",
    "w2": "h_zx + a_ixzi - a_xxxz - a_yxyz - 2a_zxzz - c_iyzz + c_izzy + c_xixy + c_yiyy + 2c_zizy",
    "w3": "h_ix - 2a_ixzz + a_xiyy + a_xyyi - a_zizx + c_iyiz + 2c_iyzi + c_xxyz - c_xzyx - c_zyzz",
    "wt0": "-a_xxxz + a_xyyz - a_xzyy + a_yxyz + c_xixy + c_xiyx + c_xxyi - c_yiyy",
    "wt1": "-a_xxyz - a_xyxz + a_xzyx + a_yyyz - c_xixx + c_xiyy + c_xyyi + c_yiyx",
    "wt2": "-a_xixx + a_xiyy - a_xyyi + a_yiyx - c_xxyz - c_xyxz - c_xzyx + c_yyyz",
    "wt3": "-a_xixy - a_xiyx + a_xxyi + a_yiyy + c_xxxz - c_xyyz - c_xzyy - c_yxyz",
}

_P0 = np.diag([1.0, 0.0]).astype(complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)
_X, _Y, _Z = (pauli_matrix(p) for p in "XYZ")


def _u(fn) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    def action(rho):
        rho = np.asarray(rho, dtype=complex)
        sx = rho[0, 1] + rho[1, 0]
        sy = 1j * (rho[0, 1] - rho[1, 0])
        return fn(rho[0, 0], rho[1, 1], sx, sy)

    return action


# a, b = rho_00, rho_11; x, y = Tr(X rho), Tr(Y rho)
REFERENCE_UNIT_ACTIONS: dict[str, Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = {
    "s_meas": _u(lambda a, b, x, y: (-(a - b) * _P0, (a - b) * _P1)),
    "s_prep": _u(lambda a, b, x, y: (-a * _Z, b * _Z)),
    "s_read": _u(lambda a, b, x, y: (-a * _P0 + b * _P1, a * _P0 - b * _P1)),
    "a_meas": _u(lambda a, b, x, y: (-2 * (a + b) * _P0, 2 * (a + b) * _P1)),
    "a_prep": _u(lambda a, b, x, y: (2 * a * _Z, -2 * b * _Z)),
    "a_read": _u(lambda a, b, x, y: (-2 * (a * _P0 + b * _P1), 2 * (a * _P0 + b * _P1))),
    "r_x_meas": _u(lambda a, b, x, y: (y * _P0, -y * _P1)),
    "r_y_meas": _u(lambda a, b, x, y: (-x * _P0, x * _P1)),
    "r_x_ind_prep": _u(lambda a, b, x, y: (-a * _Y, b * _Y)),
    "r_x_dep_prep": _u(lambda a, b, x, y: (a * _Y, b * _Y)),
    "r_y_ind_prep": _u(lambda a, b, x, y: (-a * _X, b * _X)),
    "r_y_dep_prep": _u(lambda a, b, x, y: (a * _X, b * _X)),
    "rt_x_meas": _u(lambda a, b, x, y: (y * _P1, -y * _P0)),
    "rt_y_meas": _u(lambda a, b, x, y: (x * _P1, -x * _P0)),
    "rt_xz_meas": _u(lambda a, b, x, y: (-y * _Z, y * _Z)),
    "rt_yz_meas": _u(lambda a, b, x, y: (x * _Z, -x * _Z)),
    "rt_x_ind_prep": _u(lambda a, b, x, y: (b * _Y, -a * _Y)),
    "rt_x_dep_prep": _u(lambda a, b, x, y: (b * _Y, a * _Y)),
    "rt_y_ind_prep": _u(lambda a, b, x, y: (b * _X, -a * _X)),
    "rt_y_dep_prep": _u(lambda a, b, x, y: (b * _X, a * _X)),
    "w0": _u(lambda a, b, x, y: (x * _X + y * _Y, x * _X + y * _Y)),
    "w1": _u(lambda a, b, x, y: (-(x * _X + y * _Y), x * _X + y * _Y)),
    "w2": _u(lambda a, b, x, y: (x * _Y + y * _X, x * _Y - y * _X)),
    "w3": _u(lambda a, b, x, y: (-(x * _Y + y * _X), x * _Y - y * _X)),
    "wt0": _u(lambda a, b, x, y: (x * _X - y * _Y, x * _X - y * _Y)),
    "wt1": _u(lambda a, b, x, y: (-(x * _X - y * _Y), x * _X - y * _Y)),
    "wt2": _u(lambda a, b, x, y: (x * _Y + y * _X, x * _Y + y * _X)),
    "wt3": _u(lambda a, b, x, y: (-(x * _Y + y * _X), x * _Y + y * _X)),
}

# (model, total parameters, 2 Delta logL, N_sigma, gamma vs CPTP+Stark)
REFERENCE_FIT_STATISTICS: tuple[tuple[str, int, float, float, float | None], ...] = (
    ("CPTP+Stark", 60, 166.0, 1.6, None),
    ("CPTP", 59, 284.0, 8.5, 118.0),
    ("MPR+Stark", 43, 192.0, 2.0, 1.5),
    ("MPR", 42, 313.0, 8.8, 8.4),
    ("USI", 34, 15290.0, 830.0, 582.0),
)
REFERENCE_K_SAT = 200

# Entries of the reference tables that disagree with the generated basis.
# Each value lists (generator label, reference coefficient, generated coefficient)
# for combinations, or the string "unit action" for operator forms.
KNOWN_DISCREPANCIES: dict[str, tuple] = {
    "s_meas": (("C_XX_YY", -1, -2), ("C_XY_YX", 1, 2)),
    "s_prep": (("A_XI_YZ", 1, 2), ("A_XZ_YI", 1, 2)),
    "s_read": (("A_IX_ZY", 1, 2), ("A_IY_ZX", -1, -2)),
    "rt_y_dep_prep": (("C_XY_ZY", -1, 1), ("C_YX_ZY", -1, 1), ("A_IX_YX", -1, 1)),
    "unit_actions": (
        "a_prep", "r_x_dep_prep", "r_y_ind_prep",
        "rt_x_meas", "rt_xz_meas", "rt_yz_meas", "rt_y_ind_prep", "rt_y_dep_prep",
        "w0", "w1", "w2", "w3", "wt0", "wt1", "wt2", "wt3",
    ),
}  # fmt: skip

_TERM_RE = re.compile(r"([+-]?)\s*(\d*)([hsca])_([ixyz]+)")


def parse_combination(text: str) -> dict[EegIndex, int]:
    """Parse ``"h_xi + a_ixyy - 2a_xizz ..."`` into canonical generator coefficients."""
    out: dict[EegIndex, int] = {}
    pos = 0
    for m in _TERM_RE.finditer(text):
        if text[pos : m.start()].strip():
            raise ValidationError(f"unparseable text {text[pos:m.start()]!r}")
        pos = m.end()
        sign = -1 if m.group(1) == "-" else 1
        mag = int(m.group(2)) if m.group(2) else 1
        sector, paulis = m.group(3).upper(), m.group(4).upper()
        if sector in "HS":
            idx, s = canonical_index(sector, paulis)
        else:
            if len(paulis) != 4:
                raise ValidationError(f"pair term {m.group(0)!r} needs two 2-qubit labels")
            idx, s = canonical_index(sector, paulis[:2], paulis[2:])
        out[idx] = out.get(idx, 0) + sign * s * mag
    if text[pos:].strip():
        raise ValidationError(f"unparseable text {text[pos:]!r}")
    return out
