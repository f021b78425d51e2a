"""Config-driven command line: ed / vqe / nsi / qmc / sweep.

Each subcommand reads one flat key = value config file (dotted sections,
`#` comments), applies flag overrides, runs the requested experiment, and
writes machine-readable records into the output directory.  Exit codes:
0 success, 2 config error, 3 model error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exactdiag import (
    DENSE_DIM_LIMIT,
    diagonalize,
    number_sector_indices,
    project_to_sector,
)
from .fciqmc import (
    FciqmcError,
    RunConfig,
    run,
    statistics,
    summary_record,
    trajectory_to_csv,
)
from .matelem import ExactBackend, MatelemError, SampledBackend
from .nsi import NsiError, nsi_report, transformed_nsi
from .operators import (
    HubbardSpec,
    OperatorError,
    PauliSum,
    PauliWord,
    build_hubbard,
    build_molecular,
    diagonal_entry,
    jordan_wigner,
    parse_fcidump,
    to_dense,
)
from .simulator import BasisFlip, Circuit, PauliApply, PauliRotation, SimulatorError
from .vqa import (
    AnsatzSpec,
    OptimizerConfig,
    VqaError,
    adapt_vqe,
    hubbard_hv_generator_groups,
    layered_ansatz,
    lowest_diagonal_reference,
    molecular_reference,
    singles_doubles_pool,
    vqe_minimize,
)


class CliError(Exception):
    pass


class ConfigError(CliError):
    exit_code = 2


class ModelError(CliError):
    exit_code = 3


CIRCUIT_FORMAT = "qcfciqmc-circuit"
CIRCUIT_VERSION = 1


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """`key = value` per line; blank lines and `#` comments ignored."""
    out: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


class _Conf:
    """Typed accessor over the flat mapping; tracks consumed keys so unknown
    ones can be rejected afterwards."""

    def __init__(self, mapping: dict):
        self.mapping = dict(mapping)
        self.used: set = set()

    def has(self, key) -> bool:
        return key in self.mapping

    def raw(self, key, default=None):
        if key in self.mapping:
            self.used.add(key)
            return self.mapping[key]
        return default

    def _typed(self, key, default, conv, what):
        value = self.raw(key)
        if value is None:
            return default
        try:
            return conv(value)
        except (ValueError, TypeError):
            raise ConfigError(f"{key}: expected {what}, got {value!r}") from None

    def get_int(self, key, default=None):
        return self._typed(key, default, int, "an integer")

    def get_float(self, key, default=None):
        return self._typed(key, default, float, "a number")

    def get_str(self, key, default=None):
        return self._typed(key, default, str, "a string")

    def get_bool(self, key, default=None):
        def conv(v):
            low = v.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(v)

        return self._typed(key, default, conv, "true/false")

    def get_int_list(self, key, default=None):
        def conv(v):
            return [int(x) for x in v.split(",") if x.strip() != ""]

        return self._typed(key, default, conv, "comma-separated integers")

    def unknown_keys(self):
        return sorted(set(self.mapping) - self.used)


def _parse_shape(value: str):
    try:
        rows, cols = value.lower().split("x")
        shape = (int(rows), int(cols))
    except ValueError:
        raise ConfigError(f"model.hubbard.shape: expected RxC, got {value!r}") from None
    if shape[0] < 1 or shape[1] < 1:
        raise ConfigError("model.hubbard.shape: dimensions must be positive")
    return shape


@dataclass
class ExperimentConfig:
    """Everything a subcommand needs, resolved from file + flag overrides."""

    seed: int = 1
    output_dir: Path = Path(".")
    hubbard: HubbardSpec | None = None
    fcidump_path: Path | None = None
    fcidump_frozen: tuple = ()
    sector_override: tuple | None = None  # (n_up, n_dn)
    reference_override: int | None = None
    ansatz: AnsatzSpec = field(default_factory=AnsatzSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    vqe_init_scale: float = 0.2
    vqe_restarts: int = 1
    qmc: dict = field(default_factory=dict)
    nsi_beta: float = 0.1
    nsi_phi0: int | None = None
    backend_kind: str = "exact"
    backend_opts: dict = field(default_factory=dict)
    circuit_path: Path | None = None
    identity_basis: bool = False
    sweep_depths: list = field(default_factory=list)
    effective: dict = field(default_factory=dict)


def load_config(path, overrides=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    mapping = parse_config_text(path.read_text())
    for key, value in (overrides or {}).items():
        mapping[key] = value
    conf = _Conf(mapping)
    cfg = ExperimentConfig()
    cfg.seed = conf.get_int("seed", 1)
    cfg.output_dir = Path(conf.get_str("output.dir", "."))

    has_hubbard = any(k.startswith("model.hubbard.") for k in mapping)
    has_fcidump = any(k.startswith("model.fcidump.") for k in mapping)
    if has_hubbard == has_fcidump:
        raise ConfigError("config must name exactly one model source "
                          "(model.hubbard.* or model.fcidump.*)")
    if has_hubbard:
        shape = _parse_shape(conf.get_str("model.hubbard.shape", "1x2"))
        cfg.hubbard = HubbardSpec(
            shape=shape,
            t=conf.get_float("model.hubbard.t", 1.0),
            u=conf.get_float("model.hubbard.u", 0.0),
            periodic=conf.get_bool("model.hubbard.periodic", False),
        )
        n_up = conf.get_int("model.hubbard.n_up")
        n_dn = conf.get_int("model.hubbard.n_dn")
        if (n_up is None) != (n_dn is None):
            raise ConfigError("model.hubbard.n_up and n_dn must be set together")
        if n_up is not None:
            cfg.sector_override = (n_up, n_dn)
    else:
        cfg.fcidump_path = Path(conf.get_str("model.fcidump.path", ""))
        if str(cfg.fcidump_path) == "":
            raise ConfigError("model.fcidump.path is required")
        if not cfg.fcidump_path.is_file():
            raise ConfigError(f"fcidump file not found: {cfg.fcidump_path}")
        cfg.fcidump_frozen = tuple(conf.get_int_list("model.fcidump.frozen", []))

    kind = conf.get_str("ansatz.kind", "hv")
    if kind not in ("hv", "adapt"):
        raise ConfigError(f"ansatz.kind: expected hv or adapt, got {kind!r}")
    cfg.ansatz = AnsatzSpec(
        kind=kind,
        layers=conf.get_int("ansatz.layers", 3),
        max_operators=conf.get_int("ansatz.max_operators", 8),
        gradient_tol=conf.get_float("ansatz.gradient_tol", 1e-3),
    )
    if cfg.ansatz.layers < 0 or cfg.ansatz.max_operators < 0:
        raise ConfigError("ansatz depth settings must be non-negative")

    base = OptimizerConfig()
    cfg.optimizer = OptimizerConfig(
        gtol=conf.get_float("vqe.gtol", base.gtol),
        max_iterations=conf.get_int("vqe.max_iterations", base.max_iterations),
        armijo=conf.get_float("vqe.armijo", base.armijo),
        shrink=conf.get_float("vqe.shrink", base.shrink),
        initial_step=conf.get_float("vqe.initial_step", base.initial_step),
        max_backtracks=conf.get_int("vqe.max_backtracks", base.max_backtracks),
    )
    cfg.vqe_init_scale = conf.get_float("vqe.init_scale", 0.2)
    cfg.vqe_restarts = conf.get_int("vqe.restarts", 1)
    if cfg.vqe_restarts < 1:
        raise ConfigError("vqe.restarts must be at least 1")

    cfg.qmc = {
        "delta_tau": conf.get_float("qmc.delta_tau", 1e-3),
        "total_time": conf.get_float("qmc.total_time", 10.0),
        "initial_walkers": conf.get_int("qmc.initial_walkers", 100),
        "damping": conf.get_float("qmc.damping", 0.05),
        "update_interval": conf.get_int("qmc.update_interval", 5),
        "threshold": conf.get_int("qmc.threshold", 5000),
        "equilibration_fraction": conf.get_float("qmc.equilibration_fraction", 0.5),
    }
    cfg.reference_override = conf.get_int("qmc.reference")

    cfg.nsi_beta = conf.get_float("nsi.beta", 0.1)
    cfg.nsi_phi0 = conf.get_int("nsi.phi0")

    cfg.backend_kind = conf.get_str("backend.kind", "exact")
    if cfg.backend_kind not in ("exact", "sampled"):
        raise ConfigError(f"backend.kind: expected exact or sampled, got {cfg.backend_kind!r}")
    cfg.backend_opts = {
        "shots_magnitude": conf.get_int("backend.shots_magnitude"),
        "shots_sign": conf.get_int("backend.shots_sign"),
        "magnitude_floor": conf.get_float("backend.magnitude_floor"),
        "ambiguity_z": conf.get_float("backend.ambiguity_z"),
    }

    raw_circuit = conf.get_str("circuit.path")
    if raw_circuit is not None:
        cfg.circuit_path = Path(raw_circuit)
    cfg.identity_basis = conf.get_bool("identity.basis", False)
    cfg.sweep_depths = conf.get_int_list("sweep.depths", [])

    unknown = conf.unknown_keys()
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg.effective = {k: str(v) for k, v in sorted(mapping.items())}
    return cfg


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

@dataclass
class BuiltModel:
    h: PauliSum
    n_qubits: int
    sector: np.ndarray
    reference: int
    label: str
    hubbard: HubbardSpec | None = None


def build_model(cfg: ExperimentConfig) -> BuiltModel:
    try:
        if cfg.hubbard is not None:
            spec = cfg.hubbard
            h = jordan_wigner(build_hubbard(spec))
            n = spec.n_qubits
            if cfg.sector_override is not None:
                n_up, n_dn = cfg.sector_override
            else:
                # half filling, extra electron (odd site count) goes spin-up
                n_up = (spec.n_sites + 1) // 2
                n_dn = spec.n_sites // 2
            sector = number_sector_indices(n, n_up=n_up, n_dn=n_dn)
            ref = lowest_diagonal_reference(h, sector)
            label = f"hubbard {spec.shape[0]}x{spec.shape[1]} t={spec.t} u={spec.u}"
        else:
            data = parse_fcidump(cfg.fcidump_path.read_text())
            ferm = build_molecular(data, cfg.fcidump_frozen)
            h = jordan_wigner(ferm)
            n = ferm.n_modes
            n_active_elec = data.n_electrons - 2 * len(cfg.fcidump_frozen)
            n_up = (n_active_elec + data.ms2) // 2
            n_dn = (n_active_elec - data.ms2) // 2
            sector = number_sector_indices(n, n_up=n_up, n_dn=n_dn)
            ref = molecular_reference(n, n_active_elec, data.ms2)
            label = f"fcidump {cfg.fcidump_path.name}"
    except (OperatorError, VqaError) as exc:
        raise ModelError(str(exc)) from exc
    if cfg.reference_override is not None:
        ref = cfg.reference_override
        if not (0 <= ref < (1 << n)):
            raise ConfigError("qmc.reference out of range")
    return BuiltModel(h=h, n_qubits=n, sector=sector, reference=int(ref),
                      label=label, hubbard=cfg.hubbard)


def build_backend(cfg: ExperimentConfig):
    opts = {k: v for k, v in cfg.backend_opts.items() if v is not None}
    if cfg.backend_kind == "exact":
        allowed = {"magnitude_floor"}
        bad = set(opts) - allowed
        if bad:
            raise ConfigError(f"backend options not valid for exact backend: {sorted(bad)}")
        return ExactBackend(**opts)
    return SampledBackend(**opts)


# ---------------------------------------------------------------------------
# circuit file format, version 1
# ---------------------------------------------------------------------------

def serialize_circuit(circuit: Circuit, params) -> str:
    params = np.asarray(params, dtype=float)
    if params.shape != (circuit.n_slots,):
        raise CliError("parameter count does not match circuit slots")
    lines = [
        f"{CIRCUIT_FORMAT} {CIRCUIT_VERSION}",
        f"qubits {circuit.n_qubits}",
        f"slots {circuit.n_slots}",
    ]
    for g in circuit.gates:
        if isinstance(g, BasisFlip):
            lines.append(f"flip {g.qubit}")
        elif isinstance(g, PauliApply):
            lines.append(f"apply {g.word.x_mask:#x} {g.word.z_mask:#x}")
        elif isinstance(g, PauliRotation):
            if g.slot is None:
                lines.append(f"frot {g.word.x_mask:#x} {g.word.z_mask:#x} {g.angle!r}")
            else:
                lines.append(
                    f"rot {g.word.x_mask:#x} {g.word.z_mask:#x} {g.slot} {g.scale!r}"
                )
        else:
            raise CliError(f"unserializable gate {type(g).__name__}")
    lines.append("params " + " ".join(repr(float(p)) for p in params))
    return "\n".join(lines) + "\n"


def parse_circuit(text: str):
    """Inverse of serialize_circuit; returns (Circuit, params array)."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("circuit file is empty")
    head = lines[0].split()
    if len(head) != 2 or head[0] != CIRCUIT_FORMAT:
        raise ConfigError("not a circuit file (bad header)")
    if head[1] != str(CIRCUIT_VERSION):
        raise ConfigError(f"unsupported circuit format version {head[1]}")

    def want(idx, name):
        parts = lines[idx].split()
        if len(parts) != 2 or parts[0] != name:
            raise ConfigError(f"circuit file: expected '{name} N' on line {idx + 1}")
        try:
            return int(parts[1])
        except ValueError:
            raise ConfigError(f"circuit file: bad {name} count") from None

    n_qubits = want(1, "qubits")
    n_slots = want(2, "slots")
    gates = []
    params = None
    for ln, line in enumerate(lines[3:], start=4):
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "flip":
                gates.append(BasisFlip(int(parts[1])))
            elif kind == "apply":
                gates.append(PauliApply(PauliWord(n_qubits, int(parts[1], 16),
                                                  int(parts[2], 16))))
            elif kind == "frot":
                word = PauliWord(n_qubits, int(parts[1], 16), int(parts[2], 16))
                gates.append(PauliRotation(word, slot=None, angle=float(parts[3])))
            elif kind == "rot":
                word = PauliWord(n_qubits, int(parts[1], 16), int(parts[2], 16))
                gates.append(PauliRotation(word, slot=int(parts[3]),
                                           scale=float(parts[4])))
            elif kind == "params":
                params = np.array([float(x) for x in parts[1:]], dtype=float)
            else:
                raise ConfigError(f"circuit file line {ln}: unknown gate {kind!r}")
        except (IndexError, ValueError, OperatorError, SimulatorError):
            raise ConfigError(f"circuit file line {ln}: malformed entry {line!r}") from None
    if params is None:
        raise ConfigError("circuit file has no params line")
    if params.shape != (n_slots,):
        raise ConfigError("circuit file: params length does not match slots")
    circuit = Circuit(n_qubits, gates)
    if circuit.n_slots != n_slots:
        raise ConfigError("circuit file: slot count does not match gates")
    return circuit, params


def load_circuit(cfg: ExperimentConfig):
    if cfg.circuit_path is None:
        raise ConfigError("circuit.path is required (or pass --identity-basis)")
    if not cfg.circuit_path.is_file():
        raise ConfigError(f"circuit file not found: {cfg.circuit_path}")
    return parse_circuit(cfg.circuit_path.read_text())


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def _write_json(cfg: ExperimentConfig, name: str, record: dict) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / name
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def _sector_ground_energy(model: BuiltModel) -> float:
    dim = 1 << model.n_qubits
    if dim > DENSE_DIM_LIMIT:
        raise ModelError(f"dense dimension {dim} exceeds limit {DENSE_DIM_LIMIT}")
    dense = to_dense(model.h).real
    sub = project_to_sector(dense, model.sector)
    return diagonalize(sub).ground_energy()


def _train_ansatz(cfg: ExperimentConfig, model: BuiltModel, depth=None, seed=None):
    """Run the configured VQE at the given depth; returns a VqeResult."""
    spec = cfg.ansatz
    seed = cfg.seed if seed is None else seed
    if spec.kind == "hv":
        if model.hubbard is None:
            raise ConfigError("hv ansatz requires a hubbard model")
        layers = spec.layers if depth is None else depth
        groups = hubbard_hv_generator_groups(model.hubbard)
        circuit = layered_ansatz(groups, layers, model.reference, model.n_qubits)
        rng = np.random.default_rng(seed)
        best = None
        # the all-zeros point is a symmetry saddle, so every start is random
        for _ in range(cfg.vqe_restarts):
            init = cfg.vqe_init_scale * rng.standard_normal(circuit.n_slots)
            res = vqe_minimize(circuit, model.h, init, cfg.optimizer)
            if best is None or res.energy < best.energy:
                best = res
        return best
    max_ops = spec.max_operators if depth is None else depth
    pool = singles_doubles_pool(model.n_qubits)
    return adapt_vqe(model.h, pool, max_ops, model.reference, model.n_qubits,
                     gradient_tol=spec.gradient_tol, config=cfg.optimizer)


def _run_qmc(cfg: ExperimentConfig, model: BuiltModel, circuit, params, phi0, seed):
    run_cfg = RunConfig(seed=seed, reference=phi0, **cfg.qmc)
    backend = build_backend(cfg)
    traj = run(model.h, circuit, params, run_cfg, backend=backend)
    stats = statistics(traj, run_cfg)
    return traj, stats, run_cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ed(cfg: ExperimentConfig) -> dict:
    model = build_model(cfg)
    energy = _sector_ground_energy(model)
    record = {
        "command": "ed",
        "model": model.label,
        "energy": energy,
        "dim": 1 << model.n_qubits,
        "sector_dim": int(len(model.sector)),
        "reference": model.reference,
        "config": cfg.effective,
    }
    _write_json(cfg, "ed.json", record)
    print(f"ed: ground energy {energy!r} (sector dim {len(model.sector)})")
    return record


def cmd_vqe(cfg: ExperimentConfig) -> dict:
    model = build_model(cfg)
    result = _train_ansatz(cfg, model)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    circuit_file = cfg.output_dir / "circuit.txt"
    circuit_file.write_text(serialize_circuit(result.circuit, result.params))
    record = {
        "command": "vqe",
        "model": model.label,
        "ansatz": cfg.ansatz.kind,
        "energy": result.energy,
        "converged": result.converged,
        "message": result.message,
        "iterations": len(result.history),
        "n_parameters": int(result.circuit.n_slots),
        "n_gates": len(result.circuit.gates),
        "reference": model.reference,
        "circuit_file": circuit_file.name,
        "config": cfg.effective,
    }
    _write_json(cfg, "vqe.json", record)
    print(f"vqe: energy {result.energy!r} ({record['iterations']} iterations, "
          f"converged={result.converged})")
    return record


def cmd_nsi(cfg: ExperimentConfig) -> dict:
    model = build_model(cfg)
    dim = 1 << model.n_qubits
    if dim > DENSE_DIM_LIMIT:
        raise ModelError(f"dense dimension {dim} exceeds limit {DENSE_DIM_LIMIT}")
    phi0 = cfg.nsi_phi0 if cfg.nsi_phi0 is not None else model.reference
    dense = to_dense(model.h).real
    identity_rep = nsi_report(dense, cfg.nsi_beta, phi0=phi0)
    record = {
        "command": "nsi",
        "model": model.label,
        "identity": identity_rep.to_dict(),
        "config": cfg.effective,
    }
    if not cfg.identity_basis and cfg.circuit_path is not None:
        circuit, params = load_circuit(cfg)
        # the circuit owns its preparation flips, so its reference index is 0
        trans_phi0 = cfg.nsi_phi0 if cfg.nsi_phi0 is not None else 0
        trans_rep = transformed_nsi(model.h, circuit, params, cfg.nsi_beta,
                                    phi0=trans_phi0)
        record["transformed"] = trans_rep.to_dict()
        if identity_rep.s_thermal > 0.0:
            record["ratio"] = trans_rep.s_thermal / identity_rep.s_thermal
        else:
            record["ratio"] = None
    _write_json(cfg, "nsi.json", record)
    line = f"nsi: identity s_thermal {identity_rep.s_thermal!r}"
    if "transformed" in record:
        line += f", transformed {record['transformed']['s_thermal']!r}"
    print(line)
    return record


def cmd_qmc(cfg: ExperimentConfig) -> dict:
    model = build_model(cfg)
    if cfg.identity_basis:
        circuit, params = Circuit(model.n_qubits, []), np.zeros(0)
        phi0 = model.reference
    else:
        circuit, params = load_circuit(cfg)
        if circuit.n_qubits != model.n_qubits:
            raise ConfigError("circuit qubit count does not match model")
        phi0 = 0  # preparation is inside the circuit
    if cfg.reference_override is not None:
        phi0 = cfg.reference_override
    traj, stats, run_cfg = _run_qmc(cfg, model, circuit, params, phi0, cfg.seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "trajectory.csv").write_text(trajectory_to_csv(traj))
    record = summary_record(traj, stats)
    record["run_config"] = record.pop("config")
    record["command"] = "qmc"
    record["model"] = model.label
    record["identity_basis"] = cfg.identity_basis
    record["config"] = cfg.effective
    _write_json(cfg, "summary.json", record)
    print(f"qmc: e_mixed {stats.mean!r} +- {stats.std_error!r} "
          f"({record['final_walkers']} walkers)")
    return record


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    if not cfg.sweep_depths:
        raise ConfigError("sweep.depths is required for the sweep command")
    model = build_model(cfg)
    dim = 1 << model.n_qubits
    if dim > DENSE_DIM_LIMIT:
        raise ModelError(f"dense dimension {dim} exceeds limit {DENSE_DIM_LIMIT}")
    dense = to_dense(model.h).real
    rows = []
    for index, depth in enumerate(cfg.sweep_depths):
        seed = cfg.seed + index  # derived seed, one independent stream per point
        row = {"depth": depth, "e_vqe": None, "e_qmc_mean": None,
               "e_qmc_std": None, "nsi": None, "theorem1_bound": None,
               "error": ""}
        try:
            if depth == 0:
                circuit, params = Circuit(model.n_qubits, []), np.zeros(0)
                phi0 = model.reference
                row["e_vqe"] = diagonal_entry(model.h, model.reference)
                rep = nsi_report(dense, cfg.nsi_beta)
            else:
                result = _train_ansatz(cfg, model, depth=depth, seed=seed)
                circuit, params = result.circuit, result.params
                phi0 = 0
                row["e_vqe"] = result.energy
                rep = transformed_nsi(model.h, circuit, params, cfg.nsi_beta)
            row["nsi"] = rep.s_thermal
            row["theorem1_bound"] = rep.theorem1_bound
            _, stats, _ = _run_qmc(cfg, model, circuit, params, phi0, seed)
            row["e_qmc_mean"] = stats.mean
            row["e_qmc_std"] = stats.std
        except (CliError, FciqmcError, MatelemError, NsiError, VqaError,
                OperatorError, SimulatorError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    header = ["depth", "e_vqe", "e_qmc_mean", "e_qmc_std", "nsi",
              "theorem1_bound", "error"]
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for col in header:
            value = row[col]
            if value is None:
                cells.append("")
            elif col == "error":
                cells.append(str(value).replace(",", ";").replace("\n", " "))
            elif col == "depth":
                cells.append(str(value))
            else:
                cells.append(repr(float(value)))
        lines.append(",".join(cells))
    (cfg.output_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    record = {"command": "sweep", "model": model.label, "rows": rows,
              "config": cfg.effective}
    _write_json(cfg, "sweep.json", record)
    failures = sum(1 for r in rows if r["error"])
    print(f"sweep: {len(rows)} points, {failures} failed")
    return record


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {"ed": cmd_ed, "vqe": cmd_vqe, "nsi": cmd_nsi, "qmc": cmd_qmc,
            "sweep": cmd_sweep}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcfciqmc",
                                     description="hybrid QC-FCIQMC toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--backend", choices=["exact", "sampled"], default=None)
        p.add_argument("--identity-basis", action="store_true", default=False)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.output_dir is not None:
        overrides["output.dir"] = args.output_dir
    if args.backend is not None:
        overrides["backend.kind"] = args.backend
    if args.identity_basis:
        overrides["identity.basis"] = "true"
    try:
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    except (CliError, FciqmcError, MatelemError, NsiError, VqaError,
            OperatorError, SimulatorError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
