"""Command-line scenario driver: JSON config in, CSV/JSON reports out."""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .config import settings
from .drives import CouplingModSpec, FreqModSpec, rwa_validation
from .entanglement import cascaded_entanglement_scenario, entangling_control_case, locc_suite
from .errors import NUMERICAL_EXIT, ConfigError, NonrecipError
from .feedforward import (
    FeedforwardSpec,
    compare_with_generator,
    directional_model,
    run_ensemble,
    simulate_trajectory,
    unconditional_generator,
)
from .fock import Bipartition, FockSpace, parse_operator
from .lattice import LatticeModel, ring_model, ring_spectrum
from .lindblad import (
    DensityMatrix,
    Directional,
    ModelSpec,
    adiabatic_eliminate,
    build_nonreciprocal,
    compare_adiabatic,
    evolve,
    lindblad_model_from_spec,
)
from .reports import Report, emit_report
from .scattering import circulator_check, directionality_tuning, sweep

logger = logging.getLogger(__name__)

Command = Literal[
    "spectrum", "scatter", "tune", "ring-demo", "rwa", "eliminate", "meq", "feedforward", "entangle"
]


# ============================================================================
# Configuration schemas
# ============================================================================


class ComplexValue(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    re: float = 0.0
    im: float = 0.0

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


class ScenarioConfig(BaseModel):
    """Top-level scenario file."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    command: Optional[Command] = Field(None, description="Scenario to run")
    params: Dict[str, Any] = Field(default_factory=dict, description="Command parameters")
    output: Optional[str] = Field(None, description="Output directory")
    seed: Optional[int] = Field(None, ge=0, lt=2**64, description="Random seed")
    format: Optional[Literal["csv", "json"]] = Field(None, description="Report format")


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class SpectrumParams(_Params):
    t: float = Field(1.0, gt=0)
    flux_start: float = 0.0
    flux_stop: float = 2.0 * math.pi
    count: int = Field(9, ge=2)


class ScatterParams(_Params):
    model: Optional[Dict[str, Any]] = None
    t: float = Field(1.0, gt=0)
    flux: float = math.pi / 2
    kappa: float = Field(2.0, ge=0)
    start: float = -3.0
    stop: float = 3.0
    count: int = Field(61, ge=0)


class TuneParams(_Params):
    t: float = Field(1.0, gt=0)
    omegas: List[float] = Field(default_factory=lambda: [0.0, 0.3, 0.9])
    direction: Literal[1, -1] = 1


class RingDemoParams(_Params):
    t: float = Field(1.0, gt=0)


class RwaParams(_Params):
    scheme: Literal["coupling", "frequency"] = "coupling"
    omega1: float = 0.0
    omega2: float = 1.0
    t_tilde: float = Field(0.01, gt=0)
    amplitude: float = Field(1.8412, ge=0)
    t: float = Field(0.02, gt=0)
    phi: float = 0.0
    dt: Optional[float] = Field(None, gt=0)
    cycles: float = Field(1.0, gt=0)
    sample_every: int = Field(50, ge=1)


class EliminateParams(_Params):
    t: float = Field(1.0, gt=0)
    phi: float = math.pi / 6
    kappa1: float = Field(0.0, ge=0)
    kappa2: float = Field(0.0, ge=0)
    kappa3: List[float] = Field(default_factory=lambda: [100.0, 200.0])
    duration: float = Field(5.0, gt=0)
    samples: int = Field(500, ge=1)


class DirectionalParams(_Params):
    modes: int = Field(2, ge=2, le=3)
    cutoff: int = Field(2, ge=1)
    o1: str = "a1"
    o2: str = "a2"
    lam: float = Field(1.0, gt=0)
    eta: float = Field(1.0, gt=0)
    sign: Literal[1, -1] = 1
    hamiltonian: str = "0"


class MeqParams(_Params):
    model: Optional[ModelSpec] = None
    directional: Optional[DirectionalParams] = None
    initial: List[int] = Field(default_factory=lambda: [1, 0])
    t_final: float = Field(5.0, ge=0)
    dt: float = Field(0.01, gt=0)
    method: Literal["rk4", "expm"] = "rk4"
    store_every: int = Field(10, ge=1)
    observables: List[str] = Field(default_factory=lambda: ["n1", "n2"])


class FeedforwardParams(_Params):
    cutoff: int = Field(1, ge=1)
    a1: str = "a1 + adjoint(a1)"
    f2: str = "a2 + adjoint(a2)"
    k: float = Field(1.0, gt=0)
    gamma: float = Field(1.0, gt=0)
    dt: float = Field(0.005, gt=0)
    t_final: float = Field(1.0, gt=0)
    trajectories: int = Field(2000, ge=1)
    initial: List[int] = Field(default_factory=lambda: [0, 0])
    observables: List[str] = Field(
        default_factory=lambda: ["I - 2*n1", "I - 2*n2", "1j*(a2 - adjoint(a2))"]
    )


class EntangleParams(_Params):
    num_cases: int = Field(20, ge=0)
    lam: float = Field(1.0, gt=0)
    drive1: ComplexValue = Field(default_factory=lambda: ComplexValue(re=0.0, im=0.2))
    drive2: ComplexValue = Field(default_factory=lambda: ComplexValue(re=0.0, im=0.2))
    cutoff: int = Field(6, ge=5)
    scenario: bool = True


# ============================================================================
# Commands
# ============================================================================


def run_spectrum(p: SpectrumParams, seed: int) -> List[Report]:
    fluxes = np.linspace(p.flux_start, p.flux_stop, p.count)
    rows = []
    for flux in fluxes:
        spectrum = ring_spectrum(p.t, float(flux))
        order = np.argsort(spectrum.energies, kind="stable")
        energies = [float(spectrum.energies[i]) for i in order]
        labels = [spectrum.labels[i] for i in order]
        rows.append([float(flux), *energies, *labels])
    columns = ["flux", "E1", "E2", "E3", "m1", "m2", "m3"]
    return [Report("spectrum", columns, rows, {"t": p.t})]


def run_scatter(p: ScatterParams, seed: int) -> List[Report]:
    if p.model is not None:
        model = LatticeModel.from_json(json.dumps(p.model))
    else:
        model = ring_model(p.t, p.flux, p.kappa)
    n = model.num_sites
    names = [f"s{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    if n >= 2:
        names += ["abs_G21", "abs_G12"]
    rows = []
    for r in sweep(model, p.start, p.stop, p.count):
        row = [r.frequency, *r.s.reshape(-1).tolist()]
        if n >= 2:
            row += [abs(r.greens[1, 0]), abs(r.greens[0, 1])]
        rows.append(row)
    return [Report("scatter", ["omega", *names], rows)]


def run_tune(p: TuneParams, seed: int) -> List[Report]:
    rows = []
    for omega in p.omegas:
        tuning = directionality_tuning(p.t, omega, p.direction)
        rows.append([omega, tuning.flux, tuning.kappa])
    return [Report("tune", ["omega", "flux", "kappa"], rows, {"t": p.t})]


def run_ring_demo(p: RingDemoParams, seed: int) -> List[Report]:
    report = circulator_check(p.t)
    rows = [[i + 1, *report.s[i].tolist()] for i in range(3)]
    meta = {
        "flux": report.flux,
        "kappa": report.kappa,
        "s21_abs": report.s21_abs,
        "s12": report.z,
        "z_cubed": report.z_cubed,
        "reflection_max": report.reflection_max,
        "circulant_deviation": report.circulant_deviation,
    }
    summary = Report("ring_demo_summary", ["quantity", "value"], [[k, v] for k, v in meta.items()])
    return [Report("ring_demo", ["row", "s_1", "s_2", "s_3"], rows, meta), summary]


def run_rwa(p: RwaParams, seed: int) -> List[Report]:
    spec: Any
    if p.scheme == "coupling":
        spec = CouplingModSpec(
            omega1=p.omega1,
            omega2=p.omega2,
            t_tilde=p.t_tilde,
            omega_drive=p.omega2 - p.omega1,
            phi=p.phi,
        )
    else:
        spec = FreqModSpec(
            omega1=p.omega1,
            omega2=p.omega2,
            amplitude=p.amplitude * abs(p.omega2 - p.omega1),
            omega_mod=p.omega2 - p.omega1,
            phi=p.phi,
            t=p.t,
        )
    result = rwa_validation(spec, p.dt, p.cycles, p.sample_every)
    summary = Report(
        "rwa_summary",
        ["scheme", "coupling", "simulated_rate", "rwa_rate", "rate_error", "phase_error", "max_transfer"],
        [[
            p.scheme,
            result.coupling,
            result.simulated_rate,
            result.rwa_rate,
            result.rate_error,
            result.phase_error,
            result.max_transfer,
        ]],
        {"norm_drift": result.norm_drift, "rwa_ratio": result.rwa_ratio},
    )
    trajectory = result.trajectory
    assert trajectory is not None
    populations = [[t, *pops.tolist()] for t, pops in zip(trajectory.times, trajectory.populations)]
    return [summary, Report("rwa_populations", ["time", "p1", "p2"], populations)]


def run_eliminate(p: EliminateParams, seed: int) -> List[Report]:
    rows = []
    errors = []
    for kappa3 in p.kappa3:
        t_prime = math.sqrt(p.t * kappa3 / 2.0)
        elimination = adiabatic_eliminate(p.t, t_prime, p.phi, p.kappa1, p.kappa2, kappa3)
        comparison = compare_adiabatic(
            p.t, kappa3, p.phi, p.kappa1, p.kappa2, t_prime, p.duration, p.samples
        )
        errors.append(comparison.relative_error)
        rows.append([
            kappa3,
            t_prime,
            elimination.kappa_tilde,
            elimination.t12,
            elimination.t21,
            comparison.relative_error,
        ])
    meta = {"error_ratios": [a / b for a, b in zip(errors, errors[1:]) if b > 0]}
    return [Report("eliminate", ["kappa3", "t_prime", "kappa_tilde", "t12", "t21", "relative_error"], rows, meta)]


def run_meq(p: MeqParams, seed: int) -> List[Report]:
    if (p.model is None) == (p.directional is None):
        raise ConfigError("meq needs exactly one of 'model' or 'directional'")
    if p.model is not None:
        model = lindblad_model_from_spec(p.model)
    else:
        d = p.directional
        assert d is not None
        space = FockSpace(d.modes, d.cutoff)
        cut = Bipartition.of(space, [1])
        model = build_nonreciprocal(
            parse_operator(d.o1, space), parse_operator(d.o2, space), d.lam, Directional(d.eta, d.sign), cut
        ).with_hamiltonian(parse_operator(d.hamiltonian, space))
    space = model.space
    rho0 = DensityMatrix.fock(space, p.initial)
    run = evolve(model, rho0, p.t_final, p.dt, p.method, p.store_every)
    observables = [parse_operator(expr, space) for expr in p.observables]
    series = [run.expect(op) for op in observables]
    rows = [[t, *(complex(s[i]) for s in series)] for i, t in enumerate(run.times)]
    return [Report("meq", ["time", *p.observables], rows, {"dimension": space.dimension})]


def run_feedforward(p: FeedforwardParams, seed: int) -> List[Report]:
    space = FockSpace(2, p.cutoff)
    spec = FeedforwardSpec(
        parse_operator(p.a1, space), parse_operator(p.f2, space), p.k, p.gamma, p.dt, seed
    )
    gap = float(
        np.max(np.abs(unconditional_generator(spec).liouvillian() - directional_model(spec).liouvillian()))
    )
    rho0 = DensityMatrix.fock(space, p.initial)
    observables = {expr: parse_operator(expr, space) for expr in p.observables}
    ensemble = run_ensemble(spec, rho0, p.t_final, p.trajectories, observables)
    checks = compare_with_generator(ensemble, spec, rho0, observables)
    first = simulate_trajectory(spec, rho0, p.t_final, index=0)

    columns = ["time"]
    series = []
    for entry in ensemble.observables:
        columns += [f"mean[{entry.name}]", f"stderr[{entry.name}]"]
        series += [entry.mean, entry.stderr]
    rows = [[t, *(float(s[i]) for s in series)] for i, t in enumerate(ensemble.times)]
    equivalence = Report(
        "feedforward_equivalence",
        ["observable", "deviation", "stderr", "pass"],
        [[c.name, c.deviation, c.stderr, c.passed] for c in checks],
        {"superoperator_gap": gap, "N": ensemble.num_trajectories, "dt": ensemble.dt},
    )
    trajectory = Report("feedforward_trajectory", ["time", "dI", "A1", "F2"], first.rows())
    return [Report("feedforward_ensemble", columns, rows), equivalence, trajectory]


def run_entangle(p: EntangleParams, seed: int) -> List[Report]:
    suite = locc_suite(p.num_cases, seed)
    reports = [
        Report(
            "locc_suite",
            ["seed", "max_negativity", "pass"],
            [[c.seed, c.max_negativity, c.passed] for c in suite.cases],
            {"max_negativity": suite.max_negativity, "pass": suite.passed},
        )
    ]
    if p.scenario:
        scenario = cascaded_entanglement_scenario(p.lam, p.drive1.value, p.drive2.value, p.cutoff)
        reports.append(
            Report(
                "cascaded_scenario",
                ["lam", "drive1", "drive2", "cutoff", "negativity", "top_population", "cutoff_shift"],
                [
                    [
                        p.lam,
                        p.drive1.value,
                        p.drive2.value,
                        p.cutoff,
                        scenario.negativity,
                        scenario.top_population,
                        scenario.cutoff_shift,
                    ]
                ],
            )
        )
        times, values = entangling_control_case(p.lam, p.drive1.value)
        transient = [[float(t), float(v)] for t, v in zip(times, values)]
        reports.append(Report("cascaded_transient", ["time", "negativity"], transient))
    return reports


COMMANDS: Dict[str, tuple] = {
    "spectrum": (SpectrumParams, run_spectrum),
    "scatter": (ScatterParams, run_scatter),
    "tune": (TuneParams, run_tune),
    "ring-demo": (RingDemoParams, run_ring_demo),
    "rwa": (RwaParams, run_rwa),
    "eliminate": (EliminateParams, run_eliminate),
    "meq": (MeqParams, run_meq),
    "feedforward": (FeedforwardParams, run_feedforward),
    "entangle": (EntangleParams, run_entangle),
}


# ============================================================================
# Entry point
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonrecip", description="Non-reciprocal photonic and open-system scenarios"
    )
    parser.add_argument("command", nargs="?", choices=sorted(COMMANDS), help="Scenario to run")
    parser.add_argument("--config", type=Path, help="JSON scenario file")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--seed", type=int, help="Random seed (u64)")
    parser.add_argument("--format", choices=["csv", "json"], help="Report format")
    parser.add_argument("--gnuplot", action="store_true", help="Write a .gp script next to each CSV")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def load_config(path: Optional[Path]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e
    return validate(ScenarioConfig, document)


def validate(schema: Type[BaseModel], document: Any) -> Any:
    try:
        return schema.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"invalid {schema.__name__}: {location}: {first['msg']}") from e


def run(config: ScenarioConfig, gnuplot: bool = False) -> List[Path]:
    """
    Execute one scenario and write its reports.

    Args:
        config: Validated scenario configuration (command resolved)
        gnuplot: Also write gnuplot scripts for CSV reports

    Returns:
        Paths of the written artifacts
    """
    if config.command is None:
        raise ConfigError("no command given (positional argument or 'command' in the config)")
    schema, handler = COMMANDS[config.command]
    params = validate(schema, config.params)
    seed = settings.default_seed if config.seed is None else config.seed
    fmt = config.format or settings.default_format
    out_dir = Path(config.output or settings.output_dir)
    logger.info(f"Running {config.command} (seed={seed}, format={fmt}, out={out_dir})")

    reports = handler(params, seed)
    recorded = config.model_dump(mode="json")
    recorded.update({"seed": seed, "format": fmt, "output": str(out_dir)})
    recorded["params"] = params.model_dump(mode="json")
    return emit_report(reports, out_dir, fmt, recorded, seed, gnuplot)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI; returns 0 on success, 2 for config errors, 3 for numerical failures."""
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        config = load_config(args.config)
        overrides = {
            "command": args.command,
            "output": str(args.out) if args.out is not None else None,
            "seed": args.seed,
            "format": args.format,
        }
        config = config.model_copy(update={k: v for k, v in overrides.items() if v is not None})
        artifacts = run(config, args.gnuplot)
    except NonrecipError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected failure: {e}")
        envelope = {"status": "error", "error": type(e).__name__, "message": str(e)}
        print(json.dumps(envelope), file=sys.stderr)
        return NUMERICAL_EXIT

    print(
        json.dumps(
            {"status": "success", "command": config.command, "artifacts": [str(p) for p in artifacts]}
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
