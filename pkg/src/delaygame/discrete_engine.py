"""Backward sweep for the layered matrix recursion with two delay lags.

Working backward from the terminal weights, each step k

  * assembles four 2n-by-2n block systems from the next layer's aggregates,
  * solves the chain of conditional-expectation pairs level by level
    (coarsest information first, each level's right-hand side augmented by
    the already-solved levels), and
  * substitutes the solved pairs back to express the state update as

        x_{k+1} = A_k x_k + M_k E_{k-d1-1}[x_k]
                  + sum_m Mm_k E_{k-d1-1+m}[x_k] + H_k E_{k-d2-1}[x_k],

    with every coefficient affine in the Brownian increment, then
  * advances the layer matrices one step back.

All expectations over the increment use exactly the first two moments
(E[dw] = 0, E[dw^2] = delta); higher moments are deliberately dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularGamma
from .model import GameSpec, Grid, ReducedCoefficients, reduce_coefficients

# A block system counts as singular when its reciprocal condition number
# drops below this.
RCOND_MIN = 1e-12


@dataclass(frozen=True)
class AffineMatrix:
    """Matrix-valued affine function of the increment: X(dw) = const + dw*noise."""

    const_part: np.ndarray
    noise_part: np.ndarray

    @property
    def shape(self):
        return self.const_part.shape

    def __call__(self, dw: float) -> np.ndarray:
        return self.const_part + dw * self.noise_part

    @staticmethod
    def zeros(shape) -> "AffineMatrix":
        return AffineMatrix(np.zeros(shape), np.zeros(shape))


def expectation_of_product(X: AffineMatrix, Y: AffineMatrix, delta: float) -> np.ndarray:
    """E[X(dw) Y(dw)] for an increment with mean 0 and variance delta.

    Cross terms carry E[dw] = 0 and vanish; the quadratic term carries
    E[dw^2] = delta. Moments beyond the second are dropped, matching the
    truncation used throughout the sweep.
    """
    return (X.const_part @ Y.const_part
            + delta * (X.noise_part @ Y.noise_part))


@dataclass
class RiccatiLayer:
    """Per-step layer of the backward recursion.

    ``phat[i]`` is the state coefficient; ``phat_lag[i][j]`` (j = 0..d1)
    and ``ccheck_lag[i][j]`` (j = 0..d2) are the lag-family entries whose
    forward index is k + j; lag entries with k + j > N are identically
    zero. ``shat``/``sm``/``scheck`` are the information aggregates: sums
    of phat and the lag families from lag offsets 0 / m-1 / (d1-d2)-1.
    Player index i is 0-based (player 1 -> 0).
    """

    k: int
    phat: np.ndarray          # (2, n, n)
    phat_lag: np.ndarray      # (2, d1+1, n, n)
    ccheck_lag: np.ndarray    # (2, d2+1, n, n)
    shat: np.ndarray          # (2, n, n)
    scheck: np.ndarray        # (2, n, n)
    sm: np.ndarray            # (2, gap-1, n, n), S^m stored at index m-1
    provisional: bool = False

    @property
    def n(self) -> int:
        return self.phat.shape[-1]


@dataclass
class GammaBlocks:
    """The 2n-by-2n block families of one chain step, with conditioning info."""

    gamma_hat: np.ndarray
    gamma_m: list[np.ndarray]     # index m-1 holds the level-m block, m = 1..gap-1
    gamma_check: np.ndarray
    g_block: np.ndarray
    rcond: dict[str, float]

    @property
    def rcond_min(self) -> float:
        return min(self.rcond.values())


@dataclass
class ClosedLoopStep:
    """Noise-affine coefficients advancing x_k to x_{k+1}.

    ``mm[m-1]`` multiplies the estimate at information level k-d1-1+m and
    is zero once m >= d1-d2 or k+m > N. ``u1_gain`` / ``u2_gain`` recover
    the controls implied by the closed loop as gains on the estimate
    window (u2_gain[l] acts on level k-d1-1+l). ``zfactors`` are the
    level-coupling operators that tend to the identity as delta -> 0.
    """

    k: int
    a_mat: AffineMatrix
    m_mat: AffineMatrix
    mm: tuple[AffineMatrix, ...]
    h_mat: AffineMatrix
    u1_gain: np.ndarray             # (d1c, n)
    u2_gain: np.ndarray             # (gap+1, d2c, n)
    zfactors: tuple[np.ndarray, ...] = ()
    rcond: dict[str, float] = field(default_factory=dict)


@dataclass
class RiccatiLadder:
    """Every layer (k = 0..N+1) and closed-loop step (k = 0..N) of a sweep.

    Layers below k = d1 are computed (the simulation warm-up needs them)
    but flagged provisional; verification treats them separately.
    """

    grid: Grid
    layers: list[RiccatiLayer]
    closed_loop: list[ClosedLoopStep]
    rcond_min: dict[str, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.layers[-1].n

    @property
    def gap(self) -> int:
        return self.grid.d1 - self.grid.d2

    def layer(self, k: int) -> RiccatiLayer:
        return self.layers[k]

    def step(self, k: int) -> ClosedLoopStep:
        return self.closed_loop[k]


@dataclass(frozen=True)
class SweepCoefficients:
    """Everything the sweep consumes: state maps, reduced products, and the
    control-map data needed to read the implied controls back out."""

    A: np.ndarray
    Abar: np.ndarray
    reduced: ReducedCoefficients
    B1: np.ndarray
    B1bar: np.ndarray
    B2: np.ndarray
    B2bar: np.ndarray
    R1inv: np.ndarray
    R2inv: np.ndarray

    @staticmethod
    def from_spec(spec: GameSpec) -> "SweepCoefficients":
        return SweepCoefficients(
            A=spec.A, Abar=spec.Abar,
            reduced=reduce_coefficients(spec),
            B1=spec.B1, B1bar=spec.B1bar, B2=spec.B2, B2bar=spec.B2bar,
            R1inv=np.linalg.inv(spec.R1), R2inv=np.linalg.inv(spec.R2),
        )


def terminal_layer(H1: np.ndarray, H2: np.ndarray, grid: Grid) -> RiccatiLayer:
    """Layer at k = N+1: state coefficients equal the terminal weights,
    every lag entry zero, every aggregate equal to the state coefficient."""
    n = H1.shape[0]
    gap = grid.d1 - grid.d2
    phat = np.stack([np.asarray(H1, dtype=float), np.asarray(H2, dtype=float)])
    return RiccatiLayer(
        k=grid.N + 1,
        phat=phat,
        phat_lag=np.zeros((2, grid.d1 + 1, n, n)),
        ccheck_lag=np.zeros((2, grid.d2 + 1, n, n)),
        shat=phat.copy(),
        scheck=phat.copy(),
        sm=np.repeat(phat[:, None], gap - 1, axis=1) if gap > 1
        else np.zeros((2, 0, n, n)),
    )


def _rcond(M: np.ndarray) -> float:
    c = np.linalg.cond(M, 1)
    return 0.0 if not np.isfinite(c) or c == 0.0 else 1.0 / c


def assemble_blocks(layer_next: RiccatiLayer, coeffs: SweepCoefficients,
                    delta: float, k: int | None = None) -> GammaBlocks:
    """Build the four block families from the next layer's aggregates.

    Raises :class:`SingularGamma` when any block is numerically singular,
    i.e. the explicit-solution hypothesis fails at this step/resolution.
    """
    r = coeffs.reduced
    n = layer_next.n
    eye = np.eye(n)
    S1h, S2h = layer_next.shat
    P1, P2 = layer_next.phat
    S2c = layer_next.scheck[1]

    gamma_hat = np.block([
        [eye - delta * (r.B11 @ S1h + r.B12 @ S2h), -(r.B21 @ P1 + r.B22 @ P2)],
        [-delta * (r.Bbar11 @ S1h + r.Bbar12 @ S2h),
         eye - r.Bbar21 @ P1 - r.Bbar22 @ P2],
    ])
    gamma_m = []
    for m in range(1, layer_next.sm.shape[1] + 1):
        S2m = layer_next.sm[1, m - 1]
        gamma_m.append(np.block([
            [eye - delta * (r.B12 @ S2m), -(r.B22 @ P2)],
            [-delta * (r.Bbar12 @ S2m), eye - r.Bbar22 @ P2],
        ]))
    gamma_check = np.block([
        [eye - delta * (r.B12 @ S2c), -(r.B22 @ P2)],
        [-delta * (r.Bbar12 @ S2c), eye - r.Bbar22 @ P2],
    ])
    g_block = np.block([
        [delta * (r.B11 @ S1h), r.B21 @ P1],
        [delta * (r.Bbar11 @ S1h), r.Bbar21 @ P1],
    ])

    rcond = {"gamma_hat": _rcond(gamma_hat), "gamma_check": _rcond(gamma_check)}
    for m, gm in enumerate(gamma_m, start=1):
        rcond[f"gamma_m{m}"] = _rcond(gm)
    where = k if k is not None else layer_next.k
    for which, rc in rcond.items():
        if rc < RCOND_MIN:
            raise SingularGamma(where, which, rc)
    return GammaBlocks(gamma_hat, gamma_m, gamma_check, g_block, rcond)


def _row_apply(top: np.ndarray, bot: np.ndarray, W: np.ndarray, n: int) -> np.ndarray:
    """Apply the 1x2 block row [top, bot] to a stacked (2n, n) column."""
    return top @ W[:n] + bot @ W[n:]


def solve_estimate_chain(layer_next: RiccatiLayer, coeffs: SweepCoefficients,
                         delta: float, k: int) -> ClosedLoopStep:
    """Back-substitution chain producing the closed-loop step at index k.

    Solves the estimate pair at the coarsest information level through
    ``gamma_hat``, then each finer level m through its own block (the
    right-hand side gaining the coarse-level coupling plus the kernel
    coupling of already-solved levels), the last level through
    ``gamma_check``; substitutes everything back into the state update.
    """
    r = coeffs.reduced
    n = layer_next.n
    d1 = layer_next.phat_lag.shape[1] - 1
    d2 = layer_next.ccheck_lag.shape[1] - 1
    gap = d1 - d2

    blocks = assemble_blocks(layer_next, coeffs, delta, k)
    S1h = layer_next.shat[0]
    P1, P2 = layer_next.phat
    S2c = layer_next.scheck[1]
    # lag entries of player 2 at the next layer, offsets 0..gap-2, that
    # enter both the kernel couplings and the mid-level state terms
    lag2 = layer_next.phat_lag[1]

    a_hat = np.eye(n) + delta * coeffs.A
    rhs_base = np.vstack([a_hat, delta * coeffs.Abar])

    lu_hat = scipy.linalg.lu_factor(blocks.gamma_hat)
    lu_mid = [scipy.linalg.lu_factor(gm) for gm in blocks.gamma_m]
    lu_check = scipy.linalg.lu_factor(blocks.gamma_check)

    def lu_for(m: int):
        return lu_check if m == gap else lu_mid[m - 1]

    # W[m][l]: (2n, n) dependence of the level-m estimate pair on the
    # level-l estimate of the previous state; lower triangular in (m, l).
    W: list[list[np.ndarray | None]] = [[None] * (gap + 1) for _ in range(gap + 1)]
    W[0][0] = scipy.linalg.lu_solve(lu_hat, rhs_base)
    for m in range(1, gap + 1):
        lu = lu_for(m)
        W[m][m] = scipy.linalg.lu_solve(lu, rhs_base)
        for l in range(m):
            acc = np.zeros((2 * n, n))
            if l == 0:
                acc += blocks.g_block @ W[0][0]
            for j in range(max(1, l), m):
                top = lag2[j - 1] @ W[j][l][:n]
                acc[:n] += delta * (r.B12 @ top)
                acc[n:] += delta * (r.Bbar12 @ top)
            W[m][l] = scipy.linalg.lu_solve(lu, acc)

    # state-update coefficients, affine in the increment
    rhat_c = (delta * (r.B11 @ S1h), r.B21 @ P1)
    rhat_n = (r.Bbar11 @ S1h, r.Bbar21 @ P1 / delta)
    rcheck_c = (delta * (r.B12 @ S2c), r.B22 @ P2)
    rcheck_n = (r.Bbar12 @ S2c, r.Bbar22 @ P2 / delta)

    coeff: list[AffineMatrix] = []
    for l in range(gap + 1):
        const = np.zeros((n, n))
        noise = np.zeros((n, n))
        if l == 0:
            const += _row_apply(*rhat_c, W[0][0], n)
            noise += _row_apply(*rhat_n, W[0][0], n)
        for j in range(gap - 1):
            if W[j + 1][l] is None:
                continue
            top = lag2[j] @ W[j + 1][l][:n]
            const += delta * (r.B12 @ top)
            noise += r.Bbar12 @ top
        const += _row_apply(*rcheck_c, W[gap][l], n)
        noise += _row_apply(*rcheck_n, W[gap][l], n)
        coeff.append(AffineMatrix(const, noise))

    # controls implied by the solved estimate pairs, as window gains
    u1_gain = -coeffs.R1inv @ (
        coeffs.B1.T @ (S1h @ W[0][0][:n])
        + coeffs.B1bar.T @ (P1 @ W[0][0][n:]) / delta)
    u2_gain = np.zeros((gap + 1, coeffs.B2.shape[1], n))
    for l in range(gap + 1):
        est_p = S2c @ W[gap][l][:n]
        for j in range(gap - 1):
            if W[j + 1][l] is not None:
                est_p += lag2[j] @ W[j + 1][l][:n]
        est_q = P2 @ W[gap][l][n:] / delta
        u2_gain[l] = -coeffs.R2inv @ (coeffs.B2.T @ est_p + coeffs.B2bar.T @ est_q)

    zfactors = []
    kc = np.zeros((2 * n, 2 * n))
    kc[:n, :n] = delta * r.B12
    kc[n:, :n] = delta * r.Bbar12
    for j in range(1, gap - 1):
        inner = scipy.linalg.lu_solve(lu_mid[j], kc)
        lift = np.kron(np.eye(2), lag2[j])
        zfactors.append(np.eye(2 * n) + lift @ inner)

    return ClosedLoopStep(
        k=k,
        a_mat=AffineMatrix(a_hat, coeffs.Abar.copy()),
        m_mat=coeff[0],
        mm=tuple(coeff[1:gap]),
        h_mat=coeff[gap],
        u1_gain=u1_gain,
        u2_gain=u2_gain,
        zfactors=tuple(zfactors),
        rcond=blocks.rcond,
    )


def riccati_step(layer_next: RiccatiLayer, closed_loop: ClosedLoopStep,
                 coeffs: SweepCoefficients, Q1: np.ndarray, Q2: np.ndarray,
                 delta: float) -> RiccatiLayer:
    """Advance the layer one step back using the closed-loop coefficients.

    The lag families shift by one offset per step: offset m at the new
    layer reads offset m-1 at the next layer, with the coupled branch
    active only for 0 < m < d1-d2.
    """
    n = layer_next.n
    d1 = layer_next.phat_lag.shape[1] - 1
    d2 = layer_next.ccheck_lag.shape[1] - 1
    gap = d1 - d2
    k = layer_next.k - 1

    a_hat = np.eye(n) + delta * coeffs.A
    a_bar = coeffs.Abar
    q_mats = (np.asarray(Q1, dtype=float), np.asarray(Q2, dtype=float))
    M, H = closed_loop.m_mat, closed_loop.h_mat
    mm = closed_loop.mm

    phat = np.empty((2, n, n))
    phat_lag = np.zeros((2, d1 + 1, n, n))
    ccheck_lag = np.zeros((2, d2 + 1, n, n))

    # const-part tail sum(Mm[j], j >= m) + H + A_hat used by the coupled branch
    tail = a_hat + H.const_part
    tails = [tail + sum((mmj.const_part for mmj in mm[m - 1:]), np.zeros((n, n)))
             for m in range(1, gap)]

    for i in range(2):
        P_next = layer_next.phat[i]
        phat[i] = (a_hat.T @ P_next @ a_hat
                   + delta * (a_bar.T @ P_next @ a_bar)
                   + a_hat.T @ (layer_next.phat_lag[i][d1]
                                + layer_next.ccheck_lag[i][d2]) @ a_hat
                   + delta * q_mats[i])
        left = AffineMatrix(a_hat.T @ layer_next.shat[i], a_bar.T @ P_next)
        phat_lag[i][0] = expectation_of_product(left, M, delta)
        for m in range(1, gap):
            left_m = AffineMatrix(a_hat.T @ layer_next.sm[i][m - 1],
                                  a_bar.T @ P_next)
            phat_lag[i][m] = (expectation_of_product(left_m, mm[m - 1], delta)
                              + a_hat.T @ layer_next.phat_lag[i][m - 1]
                              @ tails[m - 1])
        # free-branch transport of both lag families, batched over offsets
        phat_lag[i][gap:] = a_hat.T @ layer_next.phat_lag[i][gap - 1:d1] @ a_hat
        left_h = AffineMatrix(a_hat.T @ layer_next.scheck[i], a_bar.T @ P_next)
        ccheck_lag[i][0] = expectation_of_product(left_h, H, delta)
        if d2 >= 1:
            ccheck_lag[i][1:] = a_hat.T @ layer_next.ccheck_lag[i][:d2] @ a_hat

    lag_sum = phat_lag.sum(axis=1) + ccheck_lag.sum(axis=1)
    shat = phat + lag_sum
    scheck = phat + phat_lag[:, gap - 1:].sum(axis=1) + ccheck_lag.sum(axis=1)
    sm = np.zeros((2, max(gap - 1, 0), n, n))
    for m in range(1, gap):
        sm[:, m - 1] = phat + phat_lag[:, m - 1:].sum(axis=1) + ccheck_lag.sum(axis=1)

    return RiccatiLayer(k=k, phat=phat, phat_lag=phat_lag,
                        ccheck_lag=ccheck_lag, shat=shat, scheck=scheck,
                        sm=sm, provisional=k < d1)


def backward_sweep(coeffs: SweepCoefficients, grid: Grid,
                   Q1: np.ndarray, Q2: np.ndarray,
                   H1: np.ndarray, H2: np.ndarray) -> RiccatiLadder:
    """Run the full recursion from the terminal layer down to k = 0.

    Layers with k < d1 fall outside the explicit solution's proven range;
    they are still produced (the forward simulation needs its warm-up
    window) but marked provisional.
    """
    layers: list[RiccatiLayer | None] = [None] * (grid.N + 2)
    steps: list[ClosedLoopStep | None] = [None] * (grid.N + 1)
    layers[grid.N + 1] = terminal_layer(np.asarray(H1, dtype=float),
                                        np.asarray(H2, dtype=float), grid)
    rcond_min: dict[str, float] = {}
    for k in range(grid.N, -1, -1):
        step = solve_estimate_chain(layers[k + 1], coeffs, grid.delta, k)
        for which, rc in step.rcond.items():
            rcond_min[which] = min(rcond_min.get(which, np.inf), rc)
        layers[k] = riccati_step(layers[k + 1], step, coeffs, Q1, Q2, grid.delta)
        steps[k] = step
    return RiccatiLadder(grid=grid, layers=layers, closed_loop=steps,
                         rcond_min=rcond_min)


def solve_ladder(spec: GameSpec, grid: Grid) -> RiccatiLadder:
    """Convenience wrapper: reduce the spec's coefficients and sweep."""
    coeffs = SweepCoefficients.from_spec(spec)
    return backward_sweep(coeffs, grid, spec.Q1, spec.Q2, spec.H1, spec.H2)
