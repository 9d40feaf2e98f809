"""Game data, standing-assumption checks, coefficient reduction, time grids.

The controlled dynamics are

    dx = [A x + B1 u1 + B2 u2] dt + [Abar x + B1bar u1 + B2bar u2] dw,

with each player i paying a quadratic running cost (Qi, Ri) plus terminal
weight Hi, and acting on information delayed by hi (0 < h2 < h1 < T).
Everything downstream consumes a validated :class:`GameSpec`, the eight
reduced control products of :class:`ReducedCoefficients`, and a
delay-commensurate :class:`Grid`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IncommensurateDelays, SingularWeight

# Accept numerically semi-definite inputs: smallest eigenvalue may dip this
# far below zero before a PSD check fails.
PSD_EIG_TOL = -1e-10
SYM_TOL = 1e-10


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got ndim={arr.ndim}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got ndim={arr.ndim}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GameSpec:
    """Full problem data for the two-player delayed-information LQ game.

    Matrices may be given as scalars, nested lists, or arrays; they are
    normalized to read-only float arrays. ``d1c``/``d2c`` are the control
    dimensions of players 1 and 2.
    """

    A: np.ndarray
    Abar: np.ndarray
    B1: np.ndarray
    B1bar: np.ndarray
    B2: np.ndarray
    B2bar: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    h1: float
    h2: float
    T: float
    x0: np.ndarray

    def __post_init__(self):
        for name in ("A", "Abar", "B1", "B1bar", "B2", "B2bar",
                     "Q1", "Q2", "R1", "R2", "H1", "H2"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        object.__setattr__(self, "x0", _as_vector(self.x0, "x0"))
        object.__setattr__(self, "h1", float(self.h1))
        object.__setattr__(self, "h2", float(self.h2))
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d1c(self) -> int:
        return self.B1.shape[1]

    @property
    def d2c(self) -> int:
        return self.B2.shape[1]


@dataclass(frozen=True)
class ReducedCoefficients:
    """The eight reduced control products driving the decoupled dynamics.

    ``B11 = -B1 R1^{-1} B1'`` and so on; ``Bbar11 = -B1bar R1^{-1} B1'``
    pairs with ``B21 = -B1 R1^{-1} B1bar'`` through ``B21' = Bbar11``.
    All are n-by-n.
    """

    B11: np.ndarray
    B12: np.ndarray
    B21: np.ndarray
    B22: np.ndarray
    Bbar11: np.ndarray
    Bbar12: np.ndarray
    Bbar21: np.ndarray
    Bbar22: np.ndarray

    def __post_init__(self):
        for name in ("B11", "B12", "B21", "B22",
                     "Bbar11", "Bbar12", "Bbar21", "Bbar22"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))


@dataclass(frozen=True)
class Grid:
    """Uniform time grid with N+1 subintervals and integer delay lags.

    ``delta = T / (N + 1)`` and ``hi = di * delta`` exactly (to relative
    1e-12); commensurability is enforced here, not at spec construction,
    so one spec can be solved at several resolutions.
    """

    N: int
    delta: float
    d1: int
    d2: int

    @property
    def n_steps(self) -> int:
        """Number of subintervals, N + 1."""
        return self.N + 1

    def times(self) -> np.ndarray:
        """Sample times t_k = k * delta for k = 0..N+1."""
        return self.delta * np.arange(self.N + 2)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list[str]:
        return [f"{c.name}: {c.detail}" for c in self.checks if not c.passed]

    def __str__(self) -> str:
        if self.passed:
            return "all invariants hold"
        return "; ".join(self.violations)


def _sym_gap(M: np.ndarray) -> float:
    return float(np.max(np.abs(M - M.T))) if M.size else 0.0


def _min_eig(M: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))


def validate(spec: GameSpec) -> ValidationReport:
    """Check every standing assumption; failures carry eigenvalue evidence."""
    checks: list[CheckResult] = []

    def add(name: str, passed: bool, detail: str):
        checks.append(CheckResult(name, bool(passed), detail))

    n = spec.n
    shape_ok = True
    expected = {
        "A": (n, n), "Abar": (n, n),
        "B1": (n, spec.d1c), "B1bar": (n, spec.d1c),
        "B2": (n, spec.d2c), "B2bar": (n, spec.d2c),
        "Q1": (n, n), "Q2": (n, n), "H1": (n, n), "H2": (n, n),
        "R1": (spec.d1c, spec.d1c), "R2": (spec.d2c, spec.d2c),
    }
    bad = [f"{k} is {getattr(spec, k).shape}, expected {v}"
           for k, v in expected.items() if getattr(spec, k).shape != v]
    if spec.x0.shape != (n,):
        bad.append(f"x0 is {spec.x0.shape}, expected ({n},)")
    shape_ok = not bad
    add("dimensions", shape_ok, "consistent" if shape_ok else "; ".join(bad))
    if not shape_ok:
        return ValidationReport(tuple(checks))

    add("delay ordering", 0.0 < spec.h2 < spec.h1 < spec.T,
        f"need 0 < h2 < h1 < T; delays must satisfy h2 < h1 "
        f"(h1={spec.h1:.6g}, h2={spec.h2:.6g}, T={spec.T:.6g})")

    for name in ("Q1", "Q2", "H1", "H2"):
        M = getattr(spec, name)
        gap = _sym_gap(M)
        lam = _min_eig(M)
        add(f"{name} symmetric psd",
            gap <= SYM_TOL * max(1.0, float(np.max(np.abs(M)))) and lam >= PSD_EIG_TOL,
            f"{name} not positive semi-definite "
            f"(symmetry gap {gap:.3e}, smallest eigenvalue {lam:.3e})")

    for name in ("R1", "R2"):
        M = getattr(spec, name)
        gap = _sym_gap(M)
        lam = _min_eig(M)
        add(f"{name} symmetric pd",
            gap <= SYM_TOL * max(1.0, float(np.max(np.abs(M)))) and lam > 0.0,
            f"{name} not positive definite "
            f"(symmetry gap {gap:.3e}, smallest eigenvalue {lam:.3e})")

    return ValidationReport(tuple(checks))


def reduce_coefficients(spec: GameSpec) -> ReducedCoefficients:
    """Form the eight reduced products from the control maps and weights.

    Raises :class:`SingularWeight` if R1 or R2 fails Cholesky factorization,
    which signals an invalid spec slipped past validation.
    """
    try:
        c1 = scipy.linalg.cho_factor(spec.R1)
        c2 = scipy.linalg.cho_factor(spec.R2)
    except scipy.linalg.LinAlgError as exc:
        raise SingularWeight(f"control weight factorization failed: {exc}") from exc

    r1_b1t = scipy.linalg.cho_solve(c1, spec.B1.T)
    r1_b1bart = scipy.linalg.cho_solve(c1, spec.B1bar.T)
    r2_b2t = scipy.linalg.cho_solve(c2, spec.B2.T)
    r2_b2bart = scipy.linalg.cho_solve(c2, spec.B2bar.T)

    return ReducedCoefficients(
        B11=-spec.B1 @ r1_b1t,
        B12=-spec.B2 @ r2_b2t,
        B21=-spec.B1 @ r1_b1bart,
        B22=-spec.B2 @ r2_b2bart,
        Bbar11=-spec.B1bar @ r1_b1t,
        Bbar12=-spec.B2bar @ r2_b2t,
        Bbar21=-spec.B1bar @ r1_b1bart,
        Bbar22=-spec.B2bar @ r2_b2bart,
    )


def _float_gcd(values, floor: float) -> float:
    """Greatest common real divisor of positive floats, via Euclid.

    Returns 0.0 if no divisor >= ``floor`` exists (irrational ratios make
    the remainders decay without ever dividing the inputs cleanly).
    """
    g = values[0]
    for v in values[1:]:
        a, b = max(g, v), min(g, v)
        while b > floor:
            a, b = b, math.fmod(a, b)
        g = a
        if g <= floor:
            return 0.0
    for v in values:
        if abs(round(v / g) * g - v) > 1e-9 * max(abs(v), 1.0):
            return 0.0
    return g


def build_grid(spec: GameSpec, delta_target: float) -> Grid:
    """Finest grid with delta <= delta_target dividing h1, h2, and T.

    Raises :class:`IncommensurateDelays` when no step length >= 1e-6*T
    works; the caller must round the delays first.
    """
    if delta_target <= 0:
        raise ValueError("delta_target must be positive")
    floor = 1e-6 * spec.T
    g = _float_gcd([spec.T, spec.h1, spec.h2], floor=floor)
    if g <= 0.0:
        raise IncommensurateDelays(
            f"no common step >= {floor:.3e} divides h1={spec.h1!r}, "
            f"h2={spec.h2!r}, T={spec.T!r}")
    m = max(1, math.ceil(g / delta_target * (1.0 - 1e-10)))
    n_sub = int(round(spec.T / (g / m)))
    delta = spec.T / n_sub
    d1 = int(round(spec.h1 / delta))
    d2 = int(round(spec.h2 / delta))
    for d, h, name in ((d1, spec.h1, "h1"), (d2, spec.h2, "h2")):
        if d == 0 or abs(d * delta - h) > 1e-12 * max(h, 1.0):
            raise IncommensurateDelays(
                f"{name}={h!r} is not an integer multiple of delta={delta!r}")
    if not (0 < d2 < d1 < n_sub):
        raise IncommensurateDelays(
            f"lag counts violate 0 < d2 < d1 < N+1 (d1={d1}, d2={d2}, N+1={n_sub})")
    return Grid(N=n_sub - 1, delta=delta, d1=d1, d2=d2)


_PROBLEM_MATRIX_KEYS = ("A", "Abar", "B1", "B1bar", "B2", "B2bar",
                        "Q1", "Q2", "R1", "R2", "H1", "H2")


def load_problem(path) -> GameSpec:
    """Read a problem file: JSON with row-major nested arrays and scalars."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    missing = [k for k in (*_PROBLEM_MATRIX_KEYS, "h1", "h2", "T", "x0")
               if k not in data]
    if missing:
        raise ValueError(f"problem file {path} missing keys: {missing}")
    kwargs = {k: data[k] for k in _PROBLEM_MATRIX_KEYS}
    return GameSpec(**kwargs, h1=data["h1"], h2=data["h2"], T=data["T"],
                    x0=data["x0"])


def save_problem(spec: GameSpec, path) -> None:
    data = {k: getattr(spec, k).tolist() for k in _PROBLEM_MATRIX_KEYS}
    data.update(h1=spec.h1, h2=spec.h2, T=spec.T, x0=spec.x0.tolist())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
