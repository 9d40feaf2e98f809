"""Closed-loop simulation with a sliding window of state estimates.

A path batch carries, at step k, the window of conditional expectations
E_j[x_k] for information levels j = k-d1-1 .. k-1; the top entry is x_k
itself (the state is measurable at level k-1). Window propagation is the
exact conditional expectation of the simulated recursion: entries at
levels that cannot see the new increment advance with the coefficients'
increment-free parts, inner estimates coarsen by the tower property, and
the top entry advances with the realized increment. Before the warm-up
has filled, negative levels collapse to the deterministic mean, so every
entry starts at x0.

Both closed-loop representations share this machinery: the ladder form
advances the state by the solved recursion coefficients, the gain form by
an Euler step of the controlled equation with the law's gains applied to
the window (kernel integrated by trapezoid on its lattice).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .discrete_engine import RiccatiLadder
from .gains import FeedbackLaw
from .model import GameSpec, Grid


@dataclass
class Trajectory:
    """Batch of simulated paths on a common grid.

    ``x[k]`` is the state at step k (shape (paths, n)); ``u1``/``u2`` and
    the increments ``dw`` cover steps 0..N; ``diff[k]`` records the
    increment coefficient of the state update (needed to reconstruct the
    second costate component). ``windows[k]`` holds the estimate window at
    step k when recording was requested.
    """

    grid: Grid
    seed: int
    x: np.ndarray                    # (N+2, P, n)
    u1: np.ndarray                   # (N+1, P, d1c)
    u2: np.ndarray                   # (N+1, P, d2c)
    dw: np.ndarray                   # (N+1, P)
    diff: np.ndarray                 # (N+1, P, n)
    windows: np.ndarray | None = None  # (N+2, d1+1, P, n)

    @property
    def n_paths(self) -> int:
        return self.x.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.x[-1]


def draw_increments(grid: Grid, n_paths: int, seed: int) -> np.ndarray:
    """All Brownian increments for a batch, one deterministic block draw."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((grid.N + 1, n_paths)) * np.sqrt(grid.delta)


def initial_window(x0: np.ndarray, n_paths: int, d1: int) -> np.ndarray:
    """Warm-up window: every level holds the (deterministic) initial state."""
    n = len(x0)
    win = np.empty((d1 + 1, n_paths, n))
    win[:] = np.asarray(x0, dtype=float)[None, None, :]
    return win


class LadderStepper:
    """Advances a window batch by the solved closed-loop recursion."""

    def __init__(self, ladder: RiccatiLadder):
        self.ladder = ladder
        self.grid = ladder.grid
        self.gap = ladder.gap

    def controls(self, k: int, win: np.ndarray):
        step = self.ladder.step(k)
        u1 = win[0] @ step.u1_gain.T
        u2 = win[0] @ step.u2_gain[0].T
        for l in range(1, self.gap + 1):
            u2 = u2 + win[l] @ step.u2_gain[l].T
        return u1, u2

    def advance(self, k: int, win: np.ndarray, dw_k: np.ndarray):
        """Returns (new window, diffusion coefficient of the update).

        Entry at level j advances with increment-free coefficients; inner
        estimates at levels above j coarsen to j, which folds their
        coefficient tail into one matrix per entry (suffix sums), while
        already-passed levels accumulate into a running prefix.
        """
        step = self.ladder.step(k)
        d1, gap = self.grid.d1, self.gap
        mats = [(step.m_mat, 0)] + [(step.mm[m - 1], m) for m in range(1, gap)] \
            + [(step.h_mat, gap)]
        a_c, a_n = step.a_mat.const_part, step.a_mat.noise_part
        n = a_c.shape[0]

        # suffix[lvl] = sum of const parts with window index > lvl
        suffix = np.zeros((gap + 1, n, n))
        for mat, idx in mats:
            if idx >= 1:
                suffix[:idx] += mat.const_part
        new = np.empty_like(win)
        prefix = np.zeros_like(win[0])
        ptr = 0
        for i in range(d1):
            lvl = i + 1
            while ptr < len(mats) and mats[ptr][1] <= lvl:
                mat, idx = mats[ptr]
                prefix = prefix + win[idx] @ mat.const_part.T
                ptr += 1
            tail = suffix[lvl] if lvl <= gap else None
            acc = win[lvl] @ (a_c + tail).T if tail is not None \
                else win[lvl] @ a_c.T
            new[i] = acc + prefix
        diff = win[d1] @ a_n.T
        x_next = win[d1] @ a_c.T + prefix
        for mat, idx in mats:
            diff = diff + win[idx] @ mat.noise_part.T
        new[d1] = x_next + dw_k[:, None] * diff
        return new, diff


class GainStepper:
    """Advances a window batch by an Euler step under the feedback law."""

    def __init__(self, law: FeedbackLaw, spec: GameSpec, grid: Grid):
        self.law = law
        self.spec = spec
        self.grid = grid
        self.gap = grid.d1 - grid.d2
        self.weights = law.kernel_weights(grid.delta)

    def _gain_terms(self, k: int):
        """Player-2 gain terms as (window index, effective matrix) pairs."""
        law = self.law
        terms = [(0, law.k2_h1[k])]
        terms += [(j, w * law.k2_kernel[k, j])
                  for j, w in enumerate(self.weights)]
        terms.append((self.gap, law.k2_h2[k]))
        terms.sort(key=lambda item: item[0])
        return terms

    def u_levels(self, k: int, win: np.ndarray):
        """Controls and their conditional expectations per window level.

        Returns ``(u1, u2_lv)`` where ``u1`` is the realized first control
        (measurable already at the coarsest level, so constant across
        levels) and ``u2_lv[l]`` is E[u2 | level l] for the saturating
        level index l = 0..gap; ``u2_lv[gap]`` is the realized control.
        """
        law, gap = self.law, self.gap
        terms = self._gain_terms(k)
        d2c = terms[0][1].shape[0]
        n = win.shape[2]
        u1 = win[0] @ law.k1[k].T + law.offset1[k]
        suffix = np.zeros((gap + 1, d2c, n))
        for idx, mat in terms:
            if idx >= 1:
                suffix[:idx] += mat
        u2_lv = np.empty((gap + 1, win.shape[1], d2c))
        prefix = np.zeros((win.shape[1], d2c))
        ptr = 0
        for l in range(gap + 1):
            while ptr < len(terms) and terms[ptr][0] <= l:
                idx, mat = terms[ptr]
                prefix = prefix + win[idx] @ mat.T
                ptr += 1
            u2_lv[l] = prefix + law.offset2[k]
            if l < gap:
                u2_lv[l] += win[l] @ suffix[l].T
        return u1, u2_lv

    def controls(self, k: int, win: np.ndarray):
        u1, u2_lv = self.u_levels(k, win)
        return u1, u2_lv[self.gap]

    def advance_with(self, win: np.ndarray, dw_k: np.ndarray,
                     u1: np.ndarray, u2_lv: np.ndarray):
        """Euler update of every window entry under given control levels."""
        spec, grid = self.spec, self.grid
        d1, gap = grid.d1, self.gap
        new = np.empty_like(win)
        u1_drift = u1 @ spec.B1.T
        u2_drift = u2_lv @ spec.B2.T           # (gap+1, P, n)
        base = win[1:] @ spec.A.T              # (d1, P, n)
        for i in range(d1):
            lvl = i + 1
            new[i] = win[lvl] + grid.delta * (base[i] + u1_drift
                                              + u2_drift[min(lvl, gap)])
        x = win[d1]
        u2 = u2_lv[gap]
        drift = base[d1 - 1] + u1_drift + u2_drift[gap]
        diff = x @ spec.Abar.T + u1 @ spec.B1bar.T + u2 @ spec.B2bar.T
        new[d1] = x + grid.delta * drift + dw_k[:, None] * diff
        return new, diff

    def advance(self, k: int, win: np.ndarray, dw_k: np.ndarray):
        u1, u2_lv = self.u_levels(k, win)
        return self.advance_with(win, dw_k, u1, u2_lv)


def _run(stepper, grid: Grid, x0: np.ndarray, seed: int, n_paths: int,
         record_windows: bool) -> Trajectory:
    n = len(x0)
    dw = draw_increments(grid, n_paths, seed)
    win = initial_window(x0, n_paths, grid.d1)
    n_steps = grid.N + 1
    d1c = None
    x = np.empty((n_steps + 1, n_paths, n))
    diff = np.empty((n_steps, n_paths, n))
    u1s = None
    u2s = None
    windows = (np.empty((n_steps + 1, grid.d1 + 1, n_paths, n))
               if record_windows else None)
    for k in range(n_steps):
        x[k] = win[grid.d1]
        if windows is not None:
            windows[k] = win
        u1, u2 = stepper.controls(k, win)
        if u1s is None:
            u1s = np.empty((n_steps, n_paths, u1.shape[1]))
            u2s = np.empty((n_steps, n_paths, u2.shape[1]))
        u1s[k], u2s[k] = u1, u2
        win, diff[k] = stepper.advance(k, win, dw[k])
    x[n_steps] = win[grid.d1]
    if windows is not None:
        windows[n_steps] = win
    return Trajectory(grid=grid, seed=seed, x=x, u1=u1s, u2=u2s, dw=dw,
                      diff=diff, windows=windows)


def simulate_path_ladder(ladder: RiccatiLadder, grid: Grid, x0, seed: int,
                         n_paths: int = 1,
                         record_windows: bool = False) -> Trajectory:
    """Simulate the explicit closed-loop recursion; controls are the ones
    the recursion implies, read back through the window gains."""
    return _run(LadderStepper(ladder), grid, np.asarray(x0, dtype=float),
                seed, n_paths, record_windows)


def simulate_path_gains(law: FeedbackLaw, spec: GameSpec, grid: Grid,
                        x0=None, seed: int = 0, n_paths: int = 1,
                        record_windows: bool = False) -> Trajectory:
    """Euler simulation of the controlled equation under the feedback law."""
    x0 = spec.x0 if x0 is None else np.asarray(x0, dtype=float)
    return _run(GainStepper(law, spec, grid), grid, x0, seed, n_paths,
                record_windows)


def mean_recursion(ladder: RiccatiLadder, x0) -> np.ndarray:
    """Deterministic mean propagation: the increment-free parts of the
    closed-loop coefficients applied to the running mean."""
    grid = ladder.grid
    m = np.asarray(x0, dtype=float).copy()
    out = np.empty((grid.N + 2, len(m)))
    out[0] = m
    for k in range(grid.N + 1):
        step = ladder.step(k)
        total = step.a_mat.const_part + step.m_mat.const_part \
            + sum((mm.const_part for mm in step.mm),
                  np.zeros_like(step.h_mat.const_part)) + step.h_mat.const_part
        m = total @ m
        out[k + 1] = m
    return out


def _quad(v: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.einsum("pi,ij,pj->p", v, M, v)


def path_costs(target, spec: GameSpec, grid: Grid, n_paths: int,
               seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-path quadratic costs of both players under either representation.

    Rectangle rule in time (left endpoints), matching the Euler order.
    """
    if isinstance(target, RiccatiLadder):
        stepper = LadderStepper(target)
    else:
        stepper = GainStepper(target, spec, grid)
    dw = draw_increments(grid, n_paths, seed)
    win = initial_window(spec.x0, n_paths, grid.d1)
    c1 = np.zeros(n_paths)
    c2 = np.zeros(n_paths)
    for k in range(grid.N + 1):
        x = win[grid.d1]
        u1, u2 = stepper.controls(k, win)
        c1 += grid.delta * (_quad(x, spec.Q1) + _quad(u1, spec.R1))
        c2 += grid.delta * (_quad(x, spec.Q2) + _quad(u2, spec.R2))
        win, _ = stepper.advance(k, win, dw[k])
    xT = win[grid.d1]
    c1 += _quad(xT, spec.H1)
    c2 += _quad(xT, spec.H2)
    return 0.5 * c1, 0.5 * c2


def paired_deviation_costs(base_law: FeedbackLaw, dev_law: FeedbackLaw,
                           player: int, spec: GameSpec, grid: Grid,
                           n_paths: int, seed: int):
    """Deviating player's per-path costs under the base pair and under a
    unilateral deviation, on common noise.

    A unilateral deviation holds the opponent to its equilibrium CONTROL
    process, not its feedback rule: the opponent's path (and the
    estimates of it entering the window propagation) stay driven by the
    undeviated state. Both processes are stepped together on one noise
    draw, so the margin's standard error comes from paired differences.
    """
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    sb = GainStepper(base_law, spec, grid)
    sd = GainStepper(dev_law, spec, grid)
    dw = draw_increments(grid, n_paths, seed)
    win_b = initial_window(spec.x0, n_paths, grid.d1)
    win_d = win_b.copy()
    own_q = spec.Q1 if player == 1 else spec.Q2
    own_r = spec.R1 if player == 1 else spec.R2
    own_h = spec.H1 if player == 1 else spec.H2
    c_base = np.zeros(n_paths)
    c_dev = np.zeros(n_paths)
    for k in range(grid.N + 1):
        u1_b, u2_b = sb.u_levels(k, win_b)
        if player == 1:
            u1_d, _ = sd.u_levels(k, win_d)
            u2_d = u2_b
            own_b, own_d = u1_b, u1_d
        else:
            _, u2_d = sd.u_levels(k, win_d)
            u1_d = u1_b
            own_b, own_d = u2_b[sb.gap], u2_d[sd.gap]
        x_b, x_d = win_b[grid.d1], win_d[grid.d1]
        c_base += grid.delta * (_quad(x_b, own_q) + _quad(own_b, own_r))
        c_dev += grid.delta * (_quad(x_d, own_q) + _quad(own_d, own_r))
        win_b, _ = sb.advance_with(win_b, dw[k], u1_b, u2_b)
        win_d, _ = sd.advance_with(win_d, dw[k], u1_d, u2_d)
    c_base += _quad(win_b[grid.d1], own_h)
    c_dev += _quad(win_d[grid.d1], own_h)
    return 0.5 * c_base, 0.5 * c_dev


@dataclass(frozen=True)
class CostEstimate:
    j1: float
    j1_se: float | None
    j2: float
    j2_se: float | None
    n_paths: int
    seed: int


def estimate_costs(target, spec: GameSpec, grid: Grid, n_paths: int,
                   seed: int) -> CostEstimate:
    """Monte Carlo mean and standard error of both players' costs."""
    c1, c2 = path_costs(target, spec, grid, n_paths, seed)
    if n_paths >= 2:
        se1 = float(np.std(c1, ddof=1) / np.sqrt(n_paths))
        se2 = float(np.std(c2, ddof=1) / np.sqrt(n_paths))
    else:
        se1 = se2 = None
    return CostEstimate(j1=float(np.mean(c1)), j1_se=se1,
                        j2=float(np.mean(c2)), j2_se=se2,
                        n_paths=n_paths, seed=seed)


PERTURBATION_KINDS = ("constant_shift", "gain_scale", "time_bump")


def perturb_control(base: FeedbackLaw, player: int, kind: str,
                    magnitude: float) -> FeedbackLaw:
    """A unilaterally modified law; the altered control still reads only
    window entries at (or coarser than) that player's information lag.

    ``constant_shift`` adds the magnitude to every control component at
    all times, ``gain_scale`` multiplies the player's gains, ``time_bump``
    adds the magnitude on the middle fifth of the horizon.
    """
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    if kind not in PERTURBATION_KINDS:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    law = replace(
        base,
        k1=base.k1.copy(), k2_h1=base.k2_h1.copy(),
        k2_kernel=base.k2_kernel.copy(), k2_h2=base.k2_h2.copy(),
        offset1=base.offset1.copy(), offset2=base.offset2.copy(),
    )
    t = law.t_samples
    t_hi = t[-1]
    if kind == "constant_shift":
        mask = np.ones_like(t, dtype=bool)
    elif kind == "time_bump":
        mask = (t >= 0.4 * t_hi) & (t <= 0.6 * t_hi)
    if kind == "gain_scale":
        if player == 1:
            law.k1 *= magnitude
        else:
            law.k2_h1 *= magnitude
            law.k2_kernel *= magnitude
            law.k2_h2 *= magnitude
    else:
        if player == 1:
            law.offset1[mask] += magnitude
        else:
            law.offset2[mask] += magnitude
    return law
