"""Independent correctness oracles for solved scenarios.

Nothing here reuses the backward-recursion formulas: deviation tests replay
costs under perturbed policies, the one-step solver minimizes each agent's
objective numerically from the raw problem data, the quadratic reduction is
checked against a separately coded scalar Riccati recursion, and the
one-step value identity is evaluated with exact moment pushforwards
recomputed from the gains.  These oracles are what certify the solver.

Scope: the deviation tests perturb within the linear-feedback class the
equilibrium lives in (plus an open-loop jitter smoke test); they certify no
profitable deviation inside that class, not over all measurable policies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import noise_even_moment
from .recursion import CoefficientTable, GainSchedule, solve, stationarity_residual
from .scenario import Family, Scenario
from .simulate import propagate_mean

STATIONARITY_TOL = 1e-9
BELLMAN_TOL = 1e-10
DEVIATION_TOL = 1e-9
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# unilateral deviation testing


@dataclass(frozen=True)
class DeviationGrid:
    """Multiplicative perturbation grid for one agent's gain schedule.

    ``points`` factors span 1 +- ``span``; the uniform mode scales every
    step at once, the per-step mode (when enabled) perturbs one step at a
    time.  Stochastic families replay ``paths`` common-noise Monte Carlo
    paths per policy so cost differences are tightly paired.
    """

    points: int = 101
    span: float = 0.2
    per_step: bool = True
    paths: int = 2000
    seed: int | None = None

    def factors(self) -> np.ndarray:
        return np.linspace(1.0 - self.span, 1.0 + self.span, self.points)


@dataclass(frozen=True)
class DeviationReport:
    """Outcome of a unilateral deviation scan for one agent.

    ``margin`` is equilibrium cost minus the best perturbed cost (positive
    means some deviation improved on the equilibrium), taken over the worst
    mode.  ``tolerance`` is what the margin was allowed to reach: a relative
    slack for exact (deterministic) costs, three standard errors of the
    paired cost difference for Monte Carlo ones.
    """

    agent: int
    margin: float
    normalized_margin: float
    std_error: float
    tolerance: float
    passed: bool
    uniform_argmin_factor: float
    worst_mode: str
    equilibrium_cost: float


def _mean_costs(sc: Scenario, gains: GainSchedule, agent: int,
                factors: np.ndarray, step: int | None) -> np.ndarray:
    """Exact mean-channel cost of ``agent`` for each perturbation factor."""
    n = sc.horizon
    p2 = 2 * sc.p
    a_bar = np.asarray(sc.a_bar)
    b_bar = np.asarray(sc.b_bar)
    q_bar = np.asarray(sc.q_bar)
    r_bar = np.asarray(sc.r_bar)
    xb = np.full(factors.shape, float(sc.x0.mean))
    cost = np.zeros(factors.shape)
    for k in range(n):
        u = -gains.mean_gain[:, k][:, None] * (a_bar[k] * xb)[None, :]
        if step is None or step == k:
            u[agent] *= factors
        cost += q_bar[agent, k] * xb ** p2 + r_bar[agent, k] * u[agent] ** p2
        xb = a_bar[k] * xb + b_bar[:, k] @ u
    cost += q_bar[agent, n] * xb ** p2
    return cost


def _common_noise(sc: Scenario, grid: DeviationGrid):
    """Shared initial deviations and noise rows for paired policy replays."""
    seed = sc.mc.seed if grid.seed is None else grid.seed
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), 0x0DD5]))
    n, paths = sc.horizon, grid.paths
    law = sc.x0
    if law.kind == "deterministic":
        d0 = np.full(paths, law.start_value() - law.mean)
    elif law.kind == "gaussian_around_mean":
        d0 = np.sqrt(law.variance) * rng.standard_normal(paths)
    else:
        samples = np.asarray(law.samples)
        d0 = samples[rng.integers(0, samples.size, paths)] - law.mean
    sigma = np.asarray(sc.noise.sigma)
    if sc.noise.kind == "gaussian":
        raw = rng.standard_normal((paths, n))
    elif sc.noise.kind == "rademacher":
        raw = 2.0 * rng.integers(0, 2, (paths, n)) - 1.0
    elif sc.noise.kind == "uniform":
        raw = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), (paths, n))
    else:
        raise ValueError(f"noise kind {sc.noise.kind!r} cannot be sampled")
    return d0, raw * sigma[None, :]


def _dev_costs(sc: Scenario, gains: GainSchedule, agent: int, factors: np.ndarray,
               d0: np.ndarray, eps: np.ndarray, step: int | None) -> np.ndarray:
    """Per-path deviation-channel cost of ``agent`` for each factor: (F, B)."""
    n = sc.horizon
    mo = sc.moment_order
    q_dev = np.asarray(sc.q_dev)
    r_dev = np.asarray(sc.r_dev)
    a_bar = np.asarray(sc.a_bar)
    b_bar = np.asarray(sc.b_bar)
    general = sc.family is Family.GENERAL_MOMENT
    if general:
        a_dev = np.asarray(sc.a_dev)
        b_dev = np.asarray(sc.b_dev)
    out = np.empty((factors.size, d0.size))
    for fi, f in enumerate(factors):
        d = d0.copy()
        cost = np.zeros(d0.size)
        for k in range(n):
            v = -(gains.dev_gain[:, k] * gains.dev_scale[k])[:, None] * d[None, :]
            if step is None or step == k:
                v[agent] *= f
            cost += q_dev[agent, k] * d ** mo + r_dev[agent, k] * v[agent] ** mo
            if sc.family is Family.ADDITIVE:
                d = a_bar[k] * d + b_bar[:, k] @ v + eps[:, k]
            elif sc.family is Family.MULTIPLICATIVE:
                d = a_bar[k] * d + b_bar[:, k] @ v + d * eps[:, k]
            else:
                d = (a_dev[k] * d + b_dev[:, k] @ v) * eps[:, k]
        cost += q_dev[agent, n] * d ** mo
        out[fi] = cost
    return out


def unilateral_deviation_test(
    sc: Scenario, gains: GainSchedule, agent: int, grid: DeviationGrid | None = None
) -> DeviationReport:
    """Scan multiplicative perturbations of one agent's gains, all other
    agents held at equilibrium, and report the best cost improvement found.

    Moments-only noise cannot be replayed path by path, so for
    explicit-moment specs the scan covers the exact mean channel only.
    """
    grid = grid or DeviationGrid()
    factors = grid.factors()
    eq_idx = int(np.argmin(np.abs(factors - 1.0)))
    stochastic = sc.family.stochastic and sc.noise.kind != "explicit_moments"
    if stochastic:
        d0, eps = _common_noise(sc, grid)

    modes: list[int | None] = [None]
    if grid.per_step:
        modes.extend(range(sc.horizon))

    worst = None
    uniform_argmin = 1.0
    for step in modes:
        total = _mean_costs(sc, gains, agent, factors, step)
        dev = None
        if stochastic:
            dev = _dev_costs(sc, gains, agent, factors, d0, eps, step)
            total = total + dev.mean(axis=1)
        best = int(np.argmin(total))
        margin = float(total[eq_idx] - total[best])
        eq_cost = float(total[eq_idx])
        if stochastic and best != eq_idx:
            diff = dev[eq_idx] - dev[best]
            se = float(np.std(diff, ddof=1) / np.sqrt(diff.size))
        else:
            se = 0.0
        if stochastic:
            tol = 3.0 * se
        else:
            tol = DEVIATION_TOL * max(abs(eq_cost), 1e-12)
        if step is None:
            uniform_argmin = float(factors[best])
        record = (margin, se, tol, eq_cost,
                  "uniform" if step is None else f"step {step}")
        if worst is None or margin - tol > worst[0] - worst[2]:
            worst = record

    margin, se, tol, eq_cost, mode = worst
    return DeviationReport(
        agent=agent,
        margin=margin,
        normalized_margin=margin / max(abs(eq_cost), 1e-12),
        std_error=se,
        tolerance=tol,
        passed=margin <= tol,
        uniform_argmin_factor=uniform_argmin,
        worst_mode=mode,
        equilibrium_cost=eq_cost,
    )


def inject_gain_scaling(
    gains: GainSchedule, agent: int, step: int | None, factor: float
) -> GainSchedule:
    """Test hook: return a copy with one agent's mean gain scaled.

    ``step=None`` corrupts the whole schedule.  Closed-loop audit factors
    are recomputed from the corrupted gains so downstream consumers stay
    consistent.
    """
    mean_gain = np.array(gains.mean_gain)
    if step is None:
        mean_gain[agent] *= factor
    else:
        mean_gain[agent, step] *= factor
    mean_gain.setflags(write=False)
    return replace(gains, mean_gain=mean_gain)


def open_loop_jitter_test(
    sc: Scenario, gains: GainSchedule, agent: int,
    n_jitter: int = 64, scale: float | None = None, seed: int = 0,
) -> float:
    """Smoke test: random open-loop jitter of one agent's control sequence on
    the deterministic family must not beat the equilibrium.  Returns the
    margin (equilibrium cost minus best jittered cost)."""
    if sc.family is not Family.DETERMINISTIC:
        raise ValueError("open-loop jitter smoke test covers the deterministic family")
    n = sc.horizon
    p2 = 2 * sc.p
    a_bar = np.asarray(sc.a_bar)
    b_bar = np.asarray(sc.b_bar)
    q_bar = np.asarray(sc.q_bar)
    r_bar = np.asarray(sc.r_bar)
    mean = propagate_mean(sc, gains)
    if scale is None:
        scale = 0.1 * max(1.0, float(np.max(np.abs(mean.u_bar[agent]))))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0x70C1]))
    deltas = np.vstack([np.zeros(n), rng.normal(0.0, scale, (n_jitter, n))])
    xb = np.full(n_jitter + 1, float(sc.x0.mean))
    cost = np.zeros(n_jitter + 1)
    for k in range(n):
        u = -gains.mean_gain[:, k][:, None] * (a_bar[k] * xb)[None, :]
        u[agent] = mean.u_bar[agent, k] + deltas[:, k]
        cost += q_bar[agent, k] * xb ** p2 + r_bar[agent, k] * u[agent] ** p2
        xb = a_bar[k] * xb + b_bar[:, k] @ u
    cost += q_bar[agent, n] * xb ** p2
    return float(cost[0] - np.min(cost))


# ---------------------------------------------------------------------------
# brute-force one-step best responses


@dataclass(frozen=True)
class OneStepSolution:
    """Numerically solved one-step equilibrium, in gain form.

    ``mean_value`` is each agent's full mean-channel cost at the fixed point
    with the mean state at ``probe_mean``; ``dev_value`` the deviation-channel
    cost with a unit initial deviation moment.
    """

    mean_gain: np.ndarray
    mean_value: np.ndarray
    probe_mean: float
    dev_gain: np.ndarray | None = None
    dev_value: np.ndarray | None = None
    converged: bool = True
    rounds: int = 0


def _golden_min(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    # Bounded iteration count and a scale-aware floor: an absolute tolerance
    # below the float spacing of a wide bracket would never be reached.
    for _ in range(220):
        if abs(b - a) <= max(tol, 1e-14 * (abs(a) + abs(b))):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _minimize_convex(f, rough: float) -> float:
    """Dense grid scan with bracket expansion, then golden-section refine.

    Refinement runs past the 1e-10 accuracy target so that repeated calls
    inside the best-response loop do not jitter at the loop's own tolerance.
    """
    radius = max(1.0, abs(rough))
    for _ in range(60):
        grid = np.linspace(-radius, radius, 801)
        values = f(grid)
        best = int(np.argmin(values))
        if 0 < best < grid.size - 1:
            return _golden_min(lambda t: float(f(np.asarray([t]))[0]),
                               grid[best - 1], grid[best + 1], tol=1e-13)
        radius *= 4.0
    raise RuntimeError("minimizer bracket expansion failed")


def _iterate_best_responses(br, agents: int, max_rounds: int, damping: float,
                            tol: float):
    """Damped best-response rounds with reduced-rank extrapolation.

    Strong cross-agent coupling pushes the damped iteration's linear rate
    toward 1, so after every window of agents + 2 iterates the sequence is
    extrapolated: the convex combination of window iterates that minimizes
    the combined displacement is the exact fixed point when the response map
    is affine, and a sharp improvement otherwise.  Safeguards fall back to
    the plain iterate when the window's Gram system is degenerate.
    Returns (controls, converged, rounds).
    """
    u = np.zeros(agents)
    window = [u.copy()]
    depth = agents + 2
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        previous = u.copy()
        for i in range(agents):
            u[i] = (1.0 - damping) * u[i] + damping * br(i, u)
        if np.max(np.abs(u - previous)) <= tol:
            converged = True
            break
        window.append(u.copy())
        if len(window) == depth:
            iterates = np.array(window)
            diffs = np.diff(iterates, axis=0)
            # Weights c with sum 1 minimizing ||sum_i c_i diff_i||: solved on
            # the sum-zero subspace so an exactly annihilating combination
            # (the affine case) is found rather than approximated.
            m1 = depth - 1
            base = np.full(m1, 1.0 / m1)
            sum_zero = np.vstack([np.eye(m1 - 1), -np.ones((1, m1 - 1))])
            lhs = diffs.T @ sum_zero
            rhs = -diffs.T @ base
            y, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
            c = base + sum_zero @ y
            candidate = c @ iterates[:-1]
            scale = 1.0 + float(np.max(np.abs(iterates)))
            if np.all(np.isfinite(candidate)) and np.max(np.abs(candidate)) < 1e8 * scale:
                u = candidate
            window = [u.copy()]
    return u, converged, rounds


def brute_force_one_step(sc: Scenario, max_rounds: int = 100,
                         damping: float = 0.5, tol: float = 1e-10) -> OneStepSolution:
    """Solve a one-step instance by per-agent numeric best responses.

    Each agent's objective is assembled from the raw dynamics and cost
    definitions (never from the recursion formulas) and minimized by grid
    search plus golden-section refinement; best responses are iterated with
    damping until the controls stop moving.  Gains are recovered by dividing
    out the probe states, so the mean probe must be nonzero.
    """
    if sc.horizon != 1:
        raise ValueError("brute_force_one_step requires a one-step instance")
    agents = sc.agents
    p2 = 2 * sc.p
    a0 = sc.a_bar[0]
    b0 = np.asarray(sc.b_bar)[:, 0]
    r_bar0 = np.asarray(sc.r_bar)[:, 0]
    q_bar = np.asarray(sc.q_bar)
    xb = sc.x0.mean if sc.x0.mean != 0.0 else 1.0
    if a0 == 0.0:
        raise ValueError("mean-gain recovery needs a nonzero dynamics coefficient")

    def mean_objective(i, u_i, u_other):
        inner = a0 * xb + b0 @ u_other + b0[i] * u_i
        return r_bar0[i] * u_i ** p2 + q_bar[i, 1] * inner ** p2

    def mean_br(i, u):
        others = u.copy()
        others[i] = 0.0
        scale = max(abs(a0 * xb), 2.0 * float(np.max(np.abs(u))))
        return _minimize_convex(lambda t: mean_objective(i, t, others), rough=scale)

    u, converged, rounds = _iterate_best_responses(
        mean_br, agents, max_rounds, damping, tol
    )
    mean_gain = -u / (a0 * xb)
    inner = a0 * xb + b0 @ u
    mean_value = q_bar[:, 0] * xb ** p2 + r_bar0 * u ** p2 + q_bar[:, 1] * inner ** p2

    if not sc.family.stochastic:
        return OneStepSolution(mean_gain=mean_gain, mean_value=mean_value,
                               probe_mean=xb, converged=converged, rounds=rounds)

    mo = sc.moment_order
    q_dev = np.asarray(sc.q_dev)
    r_dev0 = np.asarray(sc.r_dev)[:, 0]
    e2 = noise_even_moment(sc.noise, 1, 2)
    if sc.family is Family.GENERAL_MOMENT:
        a_d = sc.a_dev[0]
        b_d = np.asarray(sc.b_dev)[:, 0]
        m2o = noise_even_moment(sc.noise, 1, mo)
    else:
        a_d, b_d = a0, b0

    def dev_objective(i, w_i, w_other):
        # One-step deviation cost with E[(x0 - xbar0)^mo] normalized to 1.
        inner = a_d + b_d @ w_other + b_d[i] * w_i
        if sc.family is Family.ADDITIVE:
            return r_dev0[i] * w_i ** 2 + q_dev[i, 1] * (inner ** 2 + e2)
        if sc.family is Family.MULTIPLICATIVE:
            return r_dev0[i] * w_i ** 2 + q_dev[i, 1] * (inner ** 2 + e2)
        return r_dev0[i] * w_i ** mo + q_dev[i, 1] * inner ** mo * m2o

    if a_d == 0.0:
        raise ValueError("deviation-gain recovery needs a nonzero deviation coefficient")

    def dev_br(i, w):
        others = w.copy()
        others[i] = 0.0
        scale = max(abs(a_d), 2.0 * float(np.max(np.abs(w))))
        return _minimize_convex(lambda t: dev_objective(i, t, others), rough=scale)

    w, dev_converged, dev_rounds = _iterate_best_responses(
        dev_br, agents, max_rounds, damping, tol
    )
    dev_gain = -w / a_d
    inner = a_d + b_d @ w
    if sc.family is Family.GENERAL_MOMENT:
        tail = q_dev[:, 1] * inner ** mo * m2o
    else:
        tail = q_dev[:, 1] * (inner ** 2 + e2)
    dev_value = q_dev[:, 0] + r_dev0 * w ** mo + tail

    return OneStepSolution(
        mean_gain=mean_gain,
        mean_value=mean_value,
        probe_mean=xb,
        dev_gain=dev_gain,
        dev_value=dev_value,
        converged=converged and dev_converged,
        rounds=max(rounds, dev_rounds),
    )


# ---------------------------------------------------------------------------
# quadratic (p = 1) reduction


@dataclass(frozen=True)
class LqReduction:
    passed: bool
    max_discrepancy: float


def _scalar_riccati(a, b, q_run, q_term, r) -> np.ndarray:
    """Textbook scalar finite-horizon Riccati recursion, coded independently."""
    n = len(a)
    value = np.empty(n + 1)
    value[n] = q_term
    for k in range(n - 1, -1, -1):
        nxt = value[k + 1]
        gain = a[k] * nxt * b[k] / (r[k] + b[k] * nxt * b[k])
        value[k] = q_run[k] + a[k] * nxt * a[k] - gain * b[k] * nxt * a[k]
    return value


def lq_reduction_check(sc: Scenario) -> LqReduction:
    """For p = 1, the odd-root gain formula must collapse to the quadratic
    one, and (single agent) the mean coefficients must follow the scalar
    Riccati recursion."""
    if sc.p != 1:
        raise ValueError("lq_reduction_check requires p = 1")
    table, gains = solve(sc)
    n = sc.horizon
    b_bar = np.asarray(sc.b_bar)
    r_bar = np.asarray(sc.r_bar)
    worst = 0.0
    for k in range(n):
        nxt = table.alpha_bar[:, k + 1]
        quad = nxt * b_bar[:, k] / (r_bar[:, k] + nxt * b_bar[:, k] ** 2)
        gap = np.max(np.abs(quad - gains.c_bar[:, k]) / np.maximum(1.0, np.abs(quad)))
        worst = max(worst, float(gap))
    if sc.agents == 1:
        riccati = _scalar_riccati(
            np.asarray(sc.a_bar), b_bar[0],
            np.asarray(sc.q_bar)[0, :n], sc.q_bar[0][n], r_bar[0],
        )
        gap = np.max(np.abs(riccati - table.alpha_bar[0]) / np.maximum(1.0, np.abs(riccati)))
        worst = max(worst, float(gap))
    return LqReduction(passed=worst <= 1e-12, max_discrepancy=worst)


# ---------------------------------------------------------------------------
# one-step value identity


def _clf_mean(sc: Scenario, gains: GainSchedule, k: int) -> float:
    b = np.asarray(sc.b_bar)[:, k]
    return sc.a_bar[k] * (1.0 - gains.mean_gain[:, k] @ b)


def _clf_dev(sc: Scenario, gains: GainSchedule, k: int) -> float:
    if sc.family is Family.GENERAL_MOMENT:
        b = np.asarray(sc.b_dev)[:, k]
        return sc.a_dev[k] * (1.0 - gains.dev_gain[:, k] @ b)
    b = np.asarray(sc.b_bar)[:, k]
    return sc.a_bar[k] * (1.0 - gains.dev_gain[:, k] @ b)


DEFAULT_PROBES = tuple(
    (x_bar, moment) for x_bar in (-2.0, -0.5, 1.0, 3.0) for moment in (0.0, 0.5, 2.0)
)


def bellman_identity_check(
    sc: Scenario, table: CoefficientTable, gains: GainSchedule, k: int,
    probes=None,
) -> float:
    """Max residual of the one-step cost-to-go identity at step k.

    For each probe state (mean, deviation moment), the cost-to-go must equal
    the equilibrium stage cost plus the cost-to-go of the exactly pushed
    forward state.  Pushforward factors are recomputed from the gains, and
    the noise enters through its exact moments, so residuals beyond roundoff
    indicate a recursion that prices the noise wrongly.
    """
    if probes is None:
        probes = DEFAULT_PROBES
    p2 = 2 * sc.p
    mo = sc.moment_order
    clf_m = _clf_mean(sc, gains, k)
    dev_scale = None
    if sc.family.stochastic:
        clf_d = _clf_dev(sc, gains, k)
        dev_scale = sc.a_dev[k] if sc.family is Family.GENERAL_MOMENT else sc.a_bar[k]
    worst = 0.0
    for i in range(sc.agents):
        for x_bar, moment in probes:
            value = table.alpha_bar[i, k] * x_bar ** p2
            stage = (
                sc.q_bar[i][k] * x_bar ** p2
                + sc.r_bar[i][k] * (gains.mean_gain[i, k] * sc.a_bar[k] * x_bar) ** p2
            )
            nxt = table.alpha_bar[i, k + 1] * (clf_m * x_bar) ** p2
            if sc.family.stochastic:
                value += table.alpha[i, k] * moment
                stage += (
                    sc.q_dev[i][k] * moment
                    + sc.r_dev[i][k] * (gains.dev_gain[i, k] * dev_scale) ** mo * moment
                )
                if sc.family is Family.ADDITIVE:
                    pushed = clf_d ** 2 * moment + noise_even_moment(sc.noise, k + 1, 2)
                elif sc.family is Family.MULTIPLICATIVE:
                    pushed = (clf_d ** 2 + noise_even_moment(sc.noise, k + 1, 2)) * moment
                else:
                    pushed = clf_d ** mo * moment * noise_even_moment(sc.noise, k + 1, mo)
                nxt += table.alpha[i, k + 1] * pushed
            if table.gamma_bar is not None:
                value += table.gamma_bar[i, k]
                nxt += table.gamma_bar[i, k + 1]
            residual = abs(value - (stage + nxt)) / max(abs(value), 1.0)
            worst = max(worst, residual)
    return worst


# ---------------------------------------------------------------------------
# convexity sampling and the aggregate report


def sample_convexity(sc: Scenario, table: CoefficientTable, gains: GainSchedule) -> float:
    """Minimum sampled second derivative of the per-agent best-response
    objectives, probed around the equilibrium controls and at the points
    where either curvature term vanishes."""
    p2 = 2 * sc.p
    a_bar = np.asarray(sc.a_bar)
    b_bar = np.asarray(sc.b_bar)
    r_bar = np.asarray(sc.r_bar)
    worst = np.inf
    for k in range(sc.horizon):
        u_eq = -gains.mean_gain[:, k] * a_bar[k]  # at unit mean state
        for i in range(sc.agents):
            rest = a_bar[k] + b_bar[:, k] @ u_eq - b_bar[i, k] * u_eq[i]
            if b_bar[i, k] == 0.0:
                continue
            width = 2.0 * max(1.0, abs(u_eq[i]))
            grid = np.concatenate([
                np.linspace(u_eq[i] - width, u_eq[i] + width, 9),
                [0.0, -rest / b_bar[i, k]],
            ])
            curvature = p2 * (p2 - 1) * (
                r_bar[i, k] * grid ** (p2 - 2)
                + table.alpha_bar[i, k + 1] * b_bar[i, k] ** 2
                * (rest + b_bar[i, k] * grid) ** (p2 - 2)
            )
            worst = min(worst, float(np.min(curvature)))
    if sc.family.stochastic:
        mo = sc.moment_order
        r_dev = np.asarray(sc.r_dev)
        b_d = np.asarray(sc.b_dev if sc.family is Family.GENERAL_MOMENT else sc.b_bar)
        a_d = np.asarray(sc.a_dev if sc.family is Family.GENERAL_MOMENT else sc.a_bar)
        for k in range(sc.horizon):
            noise = (noise_even_moment(sc.noise, k + 1, mo)
                     if sc.family is Family.GENERAL_MOMENT else 1.0)
            w_eq = -gains.dev_gain[:, k] * a_d[k]
            for i in range(sc.agents):
                rest = a_d[k] + b_d[:, k] @ w_eq - b_d[i, k] * w_eq[i]
                if b_d[i, k] == 0.0:
                    continue
                width = 2.0 * max(1.0, abs(w_eq[i]))
                grid = np.concatenate([
                    np.linspace(w_eq[i] - width, w_eq[i] + width, 9),
                    [0.0, -rest / b_d[i, k]],
                ])
                curvature = mo * (mo - 1) * (
                    r_dev[i, k] * grid ** (mo - 2)
                    + table.alpha[i, k + 1] * noise * b_d[i, k] ** 2
                    * (rest + b_d[i, k] * grid) ** (mo - 2)
                )
                worst = min(worst, float(np.min(curvature)))
    return worst


@dataclass(frozen=True)
class VerificationReport:
    """Aggregate pass/fail evidence for one solved scenario."""

    deviation: list[DeviationReport]
    stationarity_max: float
    positivity_alpha_bar: bool
    positivity_alpha: bool | None
    positivity_gamma: bool | None
    convexity_min: float
    bellman_max_per_step: np.ndarray
    notes: list[str] = field(default_factory=list)

    @property
    def positivity_ok(self) -> bool:
        return (self.positivity_alpha_bar
                and self.positivity_alpha is not False
                and self.positivity_gamma is not False)

    @property
    def passed(self) -> bool:
        return (
            all(report.passed for report in self.deviation)
            and self.stationarity_max <= STATIONARITY_TOL
            and self.positivity_ok
            and self.convexity_min > 0.0
            and float(np.max(self.bellman_max_per_step)) <= BELLMAN_TOL
        )

    def failures(self) -> list[str]:
        out = []
        for report in self.deviation:
            if not report.passed:
                out.append(
                    f"deviation margin {report.margin:.3e} above tolerance "
                    f"{report.tolerance:.3e} for agent {report.agent + 1} ({report.worst_mode})"
                )
        if self.stationarity_max > STATIONARITY_TOL:
            out.append(f"stationarity residual {self.stationarity_max:.3e} above {STATIONARITY_TOL:g}")
        if not self.positivity_ok:
            out.append("coefficient positivity violated")
        if not self.convexity_min > 0.0:
            out.append(f"sampled convexity minimum {self.convexity_min:.3e} not positive")
        bellman = float(np.max(self.bellman_max_per_step))
        if bellman > BELLMAN_TOL:
            out.append(f"cost-to-go identity residual {bellman:.3e} above {BELLMAN_TOL:g}")
        return out


def run_verification(
    sc: Scenario,
    table: CoefficientTable,
    gains: GainSchedule,
    grid: DeviationGrid | None = None,
    probes=None,
) -> VerificationReport:
    """Run every oracle against a solved scenario and collect the evidence."""
    deviation = [unilateral_deviation_test(sc, gains, i, grid) for i in range(sc.agents)]
    stationarity = max(
        stationarity_residual(sc, table, gains, i, k)
        for i in range(sc.agents) for k in range(sc.horizon)
    )
    bellman = np.array([
        bellman_identity_check(sc, table, gains, k, probes) for k in range(sc.horizon)
    ])
    notes = [
        f"agent {report.agent + 1}: uniform deviation argmin at factor "
        f"{report.uniform_argmin_factor:.4f}"
        for report in deviation
    ]
    pos_alpha_bar = bool(np.all(table.alpha_bar > 0.0))
    pos_alpha = None if table.alpha is None else bool(np.all(table.alpha > 0.0))
    pos_gamma = None if table.gamma_bar is None else bool(np.all(table.gamma_bar >= 0.0))
    return VerificationReport(
        deviation=deviation,
        stationarity_max=float(stationarity),
        positivity_alpha_bar=pos_alpha_bar,
        positivity_alpha=pos_alpha,
        positivity_gamma=pos_gamma,
        convexity_min=sample_convexity(sc, table, gains),
        bellman_max_per_step=bellman,
        notes=notes,
    )
