"""Problem-instance data model: schema, loading, validation, serialization.

A scenario bundles everything one game instance needs: the family tag, agent
count and horizon, dynamics coefficients, cost weights, the noise spec, the
initial-state law, and Monte Carlo settings.  The loader broadcasts scalar
entries to fully materialized per-step sequences once; after that a Scenario
is immutable and safe to share across threads.

Configuration documents are YAML (see the schema reference in README.md).
Key shapes:

* ``a_bar`` is a scalar or a list with one entry per step (``horizon`` many).
* Per-agent fields (``b_bar``, ``r_bar``, ...) are a scalar (all agents) or a
  list with one entry per agent, each entry again scalar or per-step list.
* Running-plus-terminal weights (``q_bar``, ``q_dev``) materialize to
  ``horizon + 1`` entries; a per-step list must supply the terminal entry,
  a scalar covers it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import yaml

from .errors import ConfigSyntaxError, SchemaError, ScenarioValidationError


class Family(str, enum.Enum):
    """Game family selector.

    DETERMINISTIC: mean dynamics only, 2p-power state and control costs.
    ADDITIVE: additive zero-mean noise, variance-aware 2p costs, with a
        constant cost-to-go accumulator fed by the noise variance.
    MULTIPLICATIVE: noise scales the state deviation; variance-aware 2p costs.
    GENERAL_MOMENT: noise scales the whole deviation channel (state and
        control deviations with their own coefficients); 2o-moment deviation
        costs alongside 2p mean costs.
    """

    DETERMINISTIC = "deterministic_2p"
    ADDITIVE = "additive_variance_2p"
    MULTIPLICATIVE = "multiplicative_variance_2p"
    GENERAL_MOMENT = "general_moment_2o2p"

    @property
    def stochastic(self) -> bool:
        return self is not Family.DETERMINISTIC

    @property
    def uses_dev_dynamics(self) -> bool:
        return self is Family.GENERAL_MOMENT

    @property
    def tracks_gamma(self) -> bool:
        return self is Family.ADDITIVE


NOISE_KINDS = ("gaussian", "rademacher", "uniform", "explicit_moments")
INITIAL_KINDS = ("deterministic", "gaussian_around_mean", "empirical_samples")
STREAM_SCHEME = "per-path substream"


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean disturbance schedule.

    sigma[j] is the standard deviation of the disturbance entering the
    transition from step j to j+1 (the step-(j+1) noise variable; no
    disturbance acts at step 0).  For kind ``explicit_moments``, ``moments``
    maps an even order to its per-step values with the same indexing.
    """

    kind: str
    sigma: tuple[float, ...]
    moments: dict[int, tuple[float, ...]] | None = None

    def max_sigma(self) -> float:
        return max(self.sigma) if self.sigma else 0.0


@dataclass(frozen=True)
class InitialLaw:
    """Law of the initial state.

    ``mean`` is the model mean the controllers and recursions consume.  A
    deterministic law places every path at ``atom`` (default: the mean); an
    atom away from the mean reproduces degenerate setups where the modelled
    mean and the realized start differ.  ``sample_offset`` records how far
    empirical samples were recentred so their average equals ``mean``.
    """

    mean: float
    kind: str = "deterministic"
    variance: float = 0.0
    atom: float | None = None
    samples: tuple[float, ...] | None = None
    sample_offset: float = 0.0

    def start_value(self) -> float:
        return self.mean if self.atom is None else self.atom


@dataclass(frozen=True)
class MonteCarloConfig:
    paths: int = 0
    seed: int = 0
    stream_scheme: str = STREAM_SCHEME


@dataclass(frozen=True)
class Scenario:
    family: Family
    agents: int
    horizon: int
    p: int
    o: int | None
    a_bar: tuple[float, ...]
    b_bar: tuple[tuple[float, ...], ...]
    q_bar: tuple[tuple[float, ...], ...]
    r_bar: tuple[tuple[float, ...], ...]
    a_dev: tuple[float, ...] | None = None
    b_dev: tuple[tuple[float, ...], ...] | None = None
    q_dev: tuple[tuple[float, ...], ...] | None = None
    r_dev: tuple[tuple[float, ...], ...] | None = None
    noise: NoiseSpec | None = None
    x0: InitialLaw = field(default_factory=lambda: InitialLaw(mean=0.0))
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)

    @property
    def moment_order(self) -> int:
        """Even order of the deviation-cost moment (2 unless general family)."""
        return 2 * self.o if self.family is Family.GENERAL_MOMENT else 2


@dataclass(frozen=True)
class Diagnostic:
    """One violated validation condition."""

    code: str
    message: str


# ---------------------------------------------------------------------------
# loading


def _require_map(doc, where: str) -> dict:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where} must be a mapping, got {type(doc).__name__}")
    return doc


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where} must be an integer, got {value!r}")
    return value


def _steps(value, n: int, where: str) -> tuple[float, ...]:
    """Broadcast a scalar to n steps, or check a per-step list."""
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise SchemaError(f"{where} must have exactly {n} entries, got {len(value)}")
        return tuple(_as_number(v, f"{where}[{i}]") for i, v in enumerate(value))
    return (_as_number(value, where),) * n


def _per_agent(value, agents: int, n: int, where: str) -> tuple[tuple[float, ...], ...]:
    """Broadcast agent-indexed fields: scalar, or list of one entry per agent."""
    if isinstance(value, (list, tuple)):
        if len(value) != agents:
            raise SchemaError(
                f"{where} must list one entry per agent ({agents}), got {len(value)}"
            )
        return tuple(_steps(v, n, f"{where}[{i}]") for i, v in enumerate(value))
    row = _steps(value, n, where)
    return (row,) * agents


def _run_plus_terminal(value, agents: int, n: int, where: str):
    """Weights with a terminal entry: materialize to n+1 steps per agent.

    Scalars cover the terminal index too; explicit lists may give either n+1
    entries or n entries (terminal then defaults to the last running value).
    """
    def one(v, w):
        if isinstance(v, (list, tuple)):
            if len(v) == n + 1:
                return tuple(_as_number(x, f"{w}[{i}]") for i, x in enumerate(v))
            if len(v) == n:
                run = tuple(_as_number(x, f"{w}[{i}]") for i, x in enumerate(v))
                return run + (run[-1],)
            raise SchemaError(f"{w} must have {n} or {n + 1} entries, got {len(v)}")
        return (_as_number(v, w),) * (n + 1)

    if isinstance(value, (list, tuple)):
        if len(value) != agents:
            raise SchemaError(
                f"{where} must list one entry per agent ({agents}), got {len(value)}"
            )
        return tuple(one(v, f"{where}[{i}]") for i, v in enumerate(value))
    row = one(value, where)
    return (row,) * agents


def _reject_unknown(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _build_noise(doc, n: int) -> NoiseSpec:
    doc = _require_map(doc, "noise")
    _reject_unknown(doc, {"kind", "sigma", "moments"}, "noise")
    kind = doc.get("kind")
    if kind not in NOISE_KINDS:
        raise SchemaError(f"noise.kind must be one of {NOISE_KINDS}, got {kind!r}")
    moments = None
    if kind == "explicit_moments":
        raw = _require_map(doc.get("moments", {}), "noise.moments")
        if not raw:
            raise SchemaError("explicit_moments noise requires a moments table")
        moments = {}
        for key, values in raw.items():
            order = _as_int(key, "noise.moments key")
            if order < 2 or order % 2 != 0:
                raise SchemaError(f"noise.moments keys must be even orders >= 2, got {order}")
            moments[order] = _steps(values, n, f"noise.moments[{order}]")
        if "sigma" in doc:
            sigma = _steps(doc["sigma"], n, "noise.sigma")
        elif 2 in moments:
            sigma = tuple(math.sqrt(max(v, 0.0)) for v in moments[2])
        else:
            raise SchemaError(
                "explicit_moments noise needs either sigma or an order-2 row"
            )
    else:
        if "moments" in doc:
            raise SchemaError("moments table is only valid for explicit_moments noise")
        if "sigma" not in doc:
            raise SchemaError(f"{kind} noise requires sigma")
        sigma = _steps(doc["sigma"], n, "noise.sigma")
    return NoiseSpec(kind=kind, sigma=sigma, moments=moments)


def _build_initial(doc) -> InitialLaw:
    doc = _require_map(doc, "initial")
    _reject_unknown(doc, {"mean", "kind", "variance", "atom", "samples", "sample_offset"}, "initial")
    kind = doc.get("kind", "deterministic")
    if kind not in INITIAL_KINDS:
        raise SchemaError(f"initial.kind must be one of {INITIAL_KINDS}, got {kind!r}")

    if kind == "empirical_samples":
        raw = doc.get("samples")
        if not isinstance(raw, (list, tuple)) or not raw:
            raise SchemaError("empirical_samples initial law requires a non-empty samples list")
        samples = [_as_number(v, f"initial.samples[{i}]") for i, v in enumerate(raw)]
        if "variance" in doc or "atom" in doc:
            raise SchemaError("variance/atom are not valid for empirical_samples")
        if "sample_offset" in doc:
            # Already-centred samples round-tripping through serialization.
            if "mean" not in doc:
                raise SchemaError("initial.mean is required alongside sample_offset")
            mean = _as_number(doc["mean"], "initial.mean")
            offset = _as_number(doc["sample_offset"], "initial.sample_offset")
            return InitialLaw(mean=mean, kind=kind, samples=tuple(samples), sample_offset=offset)
        average = math.fsum(samples) / len(samples)
        mean = _as_number(doc["mean"], "initial.mean") if "mean" in doc else average
        offset = mean - average
        recentred = tuple(s + offset for s in samples)
        return InitialLaw(mean=mean, kind=kind, samples=recentred, sample_offset=offset)

    if "mean" not in doc:
        raise SchemaError("initial.mean is required")
    mean = _as_number(doc["mean"], "initial.mean")
    if "samples" in doc:
        raise SchemaError(f"samples are only valid for empirical_samples, not {kind}")
    if kind == "deterministic":
        if "variance" in doc and _as_number(doc["variance"], "initial.variance") != 0.0:
            raise SchemaError("deterministic initial law must have variance 0")
        atom = _as_number(doc["atom"], "initial.atom") if "atom" in doc else None
        return InitialLaw(mean=mean, kind=kind, atom=atom)
    # gaussian_around_mean
    if "atom" in doc:
        raise SchemaError("atom is only valid for the deterministic initial law")
    variance = _as_number(doc.get("variance", 0.0), "initial.variance")
    return InitialLaw(mean=mean, kind=kind, variance=variance)


def _build_mc(doc) -> MonteCarloConfig:
    doc = _require_map(doc, "monte_carlo")
    _reject_unknown(doc, {"paths", "seed", "stream_scheme"}, "monte_carlo")
    scheme = doc.get("stream_scheme", STREAM_SCHEME)
    if scheme != STREAM_SCHEME:
        raise SchemaError(f"monte_carlo.stream_scheme must be {STREAM_SCHEME!r}")
    return MonteCarloConfig(
        paths=_as_int(doc.get("paths", 0), "monte_carlo.paths"),
        seed=_as_int(doc.get("seed", 0), "monte_carlo.seed"),
        stream_scheme=scheme,
    )


def build_scenario(doc: dict) -> Scenario:
    """Materialize a parsed configuration mapping into a validated Scenario."""
    doc = _require_map(doc, "scenario document")
    _reject_unknown(
        doc,
        {"family", "agents", "horizon", "p", "o", "dynamics", "weights",
         "noise", "initial", "monte_carlo"},
        "scenario document",
    )
    try:
        family = Family(doc.get("family"))
    except ValueError:
        raise SchemaError(
            f"family must be one of {[f.value for f in Family]}, got {doc.get('family')!r}"
        ) from None
    for key in ("agents", "horizon", "p", "dynamics", "weights", "initial"):
        if key not in doc:
            raise SchemaError(f"missing required key {key!r}")
    agents = _as_int(doc["agents"], "agents")
    horizon = _as_int(doc["horizon"], "horizon")
    p = _as_int(doc["p"], "p")

    o = None
    if family is Family.GENERAL_MOMENT:
        if "o" not in doc:
            raise SchemaError("general_moment_2o2p requires the moment half-order o")
        o = _as_int(doc["o"], "o")
    elif "o" in doc:
        raise SchemaError(f"o is only valid for general_moment_2o2p, not {family.value}")

    dyn = _require_map(doc["dynamics"], "dynamics")
    wts = _require_map(doc["weights"], "weights")
    dyn_keys = {"a_bar", "b_bar"}
    wt_keys = {"q_bar", "r_bar"}
    if family.uses_dev_dynamics:
        dyn_keys |= {"a_dev", "b_dev"}
    if family.stochastic:
        wt_keys |= {"q_dev", "r_dev"}
    _reject_unknown(dyn, dyn_keys, "dynamics")
    _reject_unknown(wts, wt_keys, "weights")
    for key in dyn_keys:
        if key not in dyn:
            raise SchemaError(f"dynamics.{key} is required for family {family.value}")
    for key in wt_keys:
        if key not in wts:
            raise SchemaError(f"weights.{key} is required for family {family.value}")

    a_bar = _steps(dyn["a_bar"], horizon, "dynamics.a_bar")
    b_bar = _per_agent(dyn["b_bar"], agents, horizon, "dynamics.b_bar")
    a_dev = b_dev = None
    if family.uses_dev_dynamics:
        a_dev = _steps(dyn["a_dev"], horizon, "dynamics.a_dev")
        b_dev = _per_agent(dyn["b_dev"], agents, horizon, "dynamics.b_dev")

    q_bar = _run_plus_terminal(wts["q_bar"], agents, horizon, "weights.q_bar")
    r_bar = _per_agent(wts["r_bar"], agents, horizon, "weights.r_bar")
    q_dev = r_dev = None
    if family.stochastic:
        q_dev = _run_plus_terminal(wts["q_dev"], agents, horizon, "weights.q_dev")
        r_dev = _per_agent(wts["r_dev"], agents, horizon, "weights.r_dev")

    noise = None
    if family.stochastic:
        if "noise" not in doc:
            raise SchemaError(f"family {family.value} requires a noise block")
        noise = _build_noise(doc["noise"], horizon)
    elif "noise" in doc:
        raise SchemaError("deterministic_2p forbids a noise block")

    scenario = Scenario(
        family=family,
        agents=agents,
        horizon=horizon,
        p=p,
        o=o,
        a_bar=a_bar,
        b_bar=b_bar,
        q_bar=q_bar,
        r_bar=r_bar,
        a_dev=a_dev,
        b_dev=b_dev,
        q_dev=q_dev,
        r_dev=r_dev,
        noise=noise,
        x0=_build_initial(doc["initial"]),
        mc=_build_mc(doc.get("monte_carlo", {})),
    )
    diagnostics = validate(scenario)
    if diagnostics:
        raise ScenarioValidationError(diagnostics)
    return scenario


def load_scenario(text: str) -> Scenario:
    """Parse a YAML configuration document into a validated Scenario."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigSyntaxError(f"invalid scenario document{where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(f"invalid scenario document: {exc}") from exc
    if doc is None:
        raise SchemaError("scenario document is empty")
    return build_scenario(doc)


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as handle:
        return load_scenario(handle.read())


# ---------------------------------------------------------------------------
# validation


def _positive(rows, name: str, out: list[Diagnostic]) -> None:
    for i, row in enumerate(rows):
        if any(not (v > 0.0) for v in row):
            out.append(Diagnostic(
                code="weight-positivity",
                message=(
                    f"weight positivity violated: {name} for agent {i + 1} has a "
                    "non-positive entry (coefficients stay positive only when "
                    "every cost weight is strictly positive)"
                ),
            ))


def _lengths(rows, n: int, name: str, out: list[Diagnostic]) -> None:
    for i, row in enumerate(rows):
        if len(row) != n:
            out.append(Diagnostic(
                code="length-mismatch",
                message=f"length mismatch: {name} for agent {i + 1} has {len(row)} "
                        f"entries, expected {n}",
            ))


def _finite(values, name: str, out: list[Diagnostic]) -> None:
    flat = []
    for v in values:
        flat.extend(v) if isinstance(v, tuple) else flat.append(v)
    if any(not math.isfinite(v) for v in flat):
        out.append(Diagnostic(
            code="coefficient-bounded",
            message=f"boundedness violated: {name} contains a non-finite entry",
        ))


def validate(sc: Scenario) -> list[Diagnostic]:
    """Check every positivity/boundedness/shape condition of a Scenario.

    Returns an empty list when the instance is solvable under the positivity
    remarks; otherwise one diagnostic per violated condition.  Never mutates
    the scenario.
    """
    out: list[Diagnostic] = []
    n, agents = sc.horizon, sc.agents

    if agents < 1:
        out.append(Diagnostic("shape", f"agent count must be >= 1, got {agents}"))
    if n < 1:
        out.append(Diagnostic("shape", f"horizon must be >= 1, got {n}"))
    if sc.p < 1:
        out.append(Diagnostic("shape", f"mean-cost half-order p must be >= 1, got {sc.p}"))
    if agents < 1 or n < 1:
        return out

    if len(sc.a_bar) != n:
        out.append(Diagnostic(
            "length-mismatch", f"length mismatch: a_bar has {len(sc.a_bar)} entries, expected {n}"
        ))
    _lengths(sc.b_bar, n, "b_bar", out)
    _lengths(sc.q_bar, n + 1, "q_bar", out)
    _lengths(sc.r_bar, n, "r_bar", out)
    _positive(sc.q_bar, "q_bar", out)
    _positive(sc.r_bar, "r_bar", out)
    _finite(sc.a_bar, "a_bar", out)
    _finite(sc.b_bar, "b_bar", out)

    if sc.family.stochastic:
        if sc.noise is None:
            out.append(Diagnostic("noise-spec", f"family {sc.family.value} requires a noise spec"))
        if sc.q_dev is None or sc.r_dev is None:
            out.append(Diagnostic("noise-spec", "stochastic families require q_dev and r_dev"))
        else:
            _lengths(sc.q_dev, n + 1, "q_dev", out)
            _lengths(sc.r_dev, n, "r_dev", out)
            _positive(sc.q_dev, "q_dev", out)
            _positive(sc.r_dev, "r_dev", out)
    else:
        if sc.noise is not None:
            out.append(Diagnostic("noise-spec", "deterministic_2p forbids a noise spec"))

    if sc.family.uses_dev_dynamics:
        if sc.o is None or sc.o < 1:
            out.append(Diagnostic("shape", "general_moment_2o2p requires moment half-order o >= 1"))
        if sc.a_dev is None or sc.b_dev is None:
            out.append(Diagnostic(
                "noise-spec", "general_moment_2o2p requires deviation dynamics a_dev and b_dev"
            ))
        else:
            if len(sc.a_dev) != n:
                out.append(Diagnostic(
                    "length-mismatch",
                    f"length mismatch: a_dev has {len(sc.a_dev)} entries, expected {n}",
                ))
            _lengths(sc.b_dev, n, "b_dev", out)
            _finite(sc.a_dev, "a_dev", out)
            _finite(sc.b_dev, "b_dev", out)

    if sc.noise is not None:
        if len(sc.noise.sigma) != n:
            out.append(Diagnostic(
                "length-mismatch",
                f"length mismatch: noise.sigma has {len(sc.noise.sigma)} entries, expected {n}",
            ))
        if any(s < 0.0 for s in sc.noise.sigma):
            out.append(Diagnostic("noise-spec", "noise.sigma entries must be >= 0"))
        if sc.noise.kind == "explicit_moments":
            table = sc.noise.moments or {}
            for order, row in table.items():
                if len(row) != n:
                    out.append(Diagnostic(
                        "length-mismatch",
                        f"length mismatch: noise.moments[{order}] has {len(row)} entries, "
                        f"expected {n}",
                    ))
                if any(v < 0.0 for v in row):
                    out.append(Diagnostic(
                        "missing-moment", f"noise.moments[{order}] entries must be >= 0"
                    ))
            required = sc.moment_order
            if required not in table:
                out.append(Diagnostic(
                    "missing-moment",
                    f"missing moment order: explicit table lacks order {required}",
                ))

    law = sc.x0
    if law.kind not in INITIAL_KINDS:
        out.append(Diagnostic("initial-law", f"unknown initial-law kind {law.kind!r}"))
    if law.kind == "deterministic" and law.variance != 0.0:
        out.append(Diagnostic("initial-law", "deterministic initial law must have variance 0"))
    if law.kind == "gaussian_around_mean" and law.variance < 0.0:
        out.append(Diagnostic("initial-law", "initial variance must be >= 0"))
    if law.kind == "empirical_samples":
        if not law.samples:
            out.append(Diagnostic("initial-law", "empirical_samples initial law has no samples"))
        else:
            average = math.fsum(law.samples) / len(law.samples)
            if abs(average - law.mean) > 1e-12 * max(1.0, abs(law.mean)):
                out.append(Diagnostic(
                    "initial-law",
                    "empirical samples do not average to the declared mean after recentring",
                ))

    if sc.mc.paths < 0:
        out.append(Diagnostic("monte-carlo", "monte_carlo.paths must be >= 0"))
    if not (0 <= sc.mc.seed < 2 ** 64):
        out.append(Diagnostic("monte-carlo", "monte_carlo.seed must fit in 64 unsigned bits"))
    return out


# ---------------------------------------------------------------------------
# serialization


def _seq(values):
    return [float(v) for v in values]


def scenario_to_doc(sc: Scenario) -> dict:
    """Plain-dict form of a materialized scenario (loss-free)."""
    doc: dict = {
        "family": sc.family.value,
        "agents": sc.agents,
        "horizon": sc.horizon,
        "p": sc.p,
        "dynamics": {
            "a_bar": _seq(sc.a_bar),
            "b_bar": [_seq(row) for row in sc.b_bar],
        },
        "weights": {
            "q_bar": [_seq(row) for row in sc.q_bar],
            "r_bar": [_seq(row) for row in sc.r_bar],
        },
        "monte_carlo": {
            "paths": sc.mc.paths,
            "seed": sc.mc.seed,
            "stream_scheme": sc.mc.stream_scheme,
        },
    }
    if sc.o is not None:
        doc["o"] = sc.o
    if sc.family.uses_dev_dynamics:
        doc["dynamics"]["a_dev"] = _seq(sc.a_dev)
        doc["dynamics"]["b_dev"] = [_seq(row) for row in sc.b_dev]
    if sc.family.stochastic:
        doc["weights"]["q_dev"] = [_seq(row) for row in sc.q_dev]
        doc["weights"]["r_dev"] = [_seq(row) for row in sc.r_dev]
        noise = {"kind": sc.noise.kind, "sigma": _seq(sc.noise.sigma)}
        if sc.noise.moments is not None:
            noise["moments"] = {order: _seq(row) for order, row in sc.noise.moments.items()}
        doc["noise"] = noise

    law = sc.x0
    initial: dict = {"mean": float(law.mean), "kind": law.kind}
    if law.kind == "deterministic" and law.atom is not None:
        initial["atom"] = float(law.atom)
    if law.kind == "gaussian_around_mean":
        initial["variance"] = float(law.variance)
    if law.kind == "empirical_samples":
        initial["samples"] = _seq(law.samples)
        initial["sample_offset"] = float(law.sample_offset)
    doc["initial"] = initial
    return doc


def serialize_scenario(sc: Scenario) -> str:
    """Loss-free canonical YAML for a materialized scenario."""
    return yaml.safe_dump(scenario_to_doc(sc), sort_keys=True, default_flow_style=False)


def with_params(sc: Scenario, **updates) -> Scenario:
    """Return a validated copy of a scenario with selected fields replaced."""
    new = replace(sc, **updates)
    diagnostics = validate(new)
    if diagnostics:
        raise ScenarioValidationError(diagnostics)
    return new
