import json
import math

import numpy as np
import pytest

from qcfciqmc import cli
from qcfciqmc.cli import (
    CliError,
    ConfigError,
    ExperimentConfig,
    ModelError,
    cmd_sweep,
    load_config,
    parse_circuit,
    parse_config_text,
    serialize_circuit,
)
from qcfciqmc.exactdiag import number_sector_indices
from qcfciqmc.fciqmc import trajectory_from_csv
from qcfciqmc.operators import PauliSum, PauliTerm, PauliWord
from qcfciqmc.simulator import (
    BasisFlip,
    Circuit,
    PauliApply,
    PauliRotation,
    apply_circuit,
    prepare_basis_state,
)

E_1X2 = 2.0 - 2.0 * math.sqrt(2.0)


def write_conf(tmp_path, body, name="exp.conf"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


BASE_1X2 = """
seed = 3
output.dir = {out}
model.hubbard.shape = 1x2
model.hubbard.t = 1.0
model.hubbard.u = 4.0
ansatz.kind = adapt
ansatz.max_operators = 6
ansatz.gradient_tol = 1e-4
qmc.total_time = 4.0
qmc.delta_tau = 2e-3
qmc.threshold = 400
"""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_config_text_basics():
    text = """
    # comment
    seed = 7

    model.hubbard.shape = 2x2   # trailing comment
    output.dir = runs/a
    """
    mapping = parse_config_text(text)
    assert mapping == {"seed": "7", "model.hubbard.shape": "2x2",
                       "output.dir": "runs/a"}


def test_parse_config_rejects_bad_lines():
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        parse_config_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError):
        parse_config_text(" = 3\n")


def test_load_config_unknown_key(tmp_path):
    conf = write_conf(tmp_path, "model.hubbard.shape = 1x2\nmodel.hubbard.typo = 1\n")
    with pytest.raises(ConfigError, match="unknown config keys"):
        load_config(conf)


def test_load_config_requires_one_model(tmp_path):
    with pytest.raises(ConfigError, match="exactly one model"):
        load_config(write_conf(tmp_path, "seed = 1\n"))
    both = "model.hubbard.shape = 1x2\nmodel.fcidump.path = x\n"
    with pytest.raises(ConfigError, match="exactly one model"):
        load_config(write_conf(tmp_path, both))


def test_load_config_shape_and_values(tmp_path):
    conf = write_conf(tmp_path, """
model.hubbard.shape = 2x3
model.hubbard.t = 0.5
model.hubbard.u = 8
model.hubbard.periodic = true
vqe.max_iterations = 50
nsi.beta = 0.2
""")
    cfg = load_config(conf)
    assert cfg.hubbard.shape == (2, 3)
    assert cfg.hubbard.periodic is True
    assert cfg.optimizer.max_iterations == 50
    assert cfg.nsi_beta == 0.2


def test_load_config_bad_shape(tmp_path):
    with pytest.raises(ConfigError, match="shape"):
        load_config(write_conf(tmp_path, "model.hubbard.shape = 4\n"))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.conf")


def test_flag_overrides_take_precedence(tmp_path):
    conf = write_conf(tmp_path, "seed = 3\nmodel.hubbard.shape = 1x2\n")
    cfg = load_config(conf, {"seed": "11"})
    assert cfg.seed == 11
    assert cfg.effective["seed"] == "11"


# ---------------------------------------------------------------------------
# circuit file round trip
# ---------------------------------------------------------------------------

def sample_circuit():
    w1 = PauliWord(3, 0b011, 0b110)
    w2 = PauliWord(3, 0b101, 0b000)
    gates = [
        BasisFlip(0),
        BasisFlip(2),
        PauliRotation(w1, slot=0, scale=-2.0),
        PauliApply(w2),
        PauliRotation(w2, slot=None, angle=0.7853981633974483),
        PauliRotation(w2, slot=1, scale=1.5),
    ]
    return Circuit(3, gates), np.array([0.3141592653589793, -1.1])


def test_circuit_round_trip_statevector():
    circuit, params = sample_circuit()
    text = serialize_circuit(circuit, params)
    loaded, lparams = parse_circuit(text)
    assert loaded.gates == circuit.gates
    np.testing.assert_array_equal(lparams, params)
    a = apply_circuit(prepare_basis_state(3, 0), circuit, params).amplitudes
    b = apply_circuit(prepare_basis_state(3, 0), loaded, lparams).amplitudes
    np.testing.assert_array_equal(a, b)


def test_circuit_serialization_is_stable():
    circuit, params = sample_circuit()
    text = serialize_circuit(circuit, params)
    again = serialize_circuit(*parse_circuit(text))
    assert again == text


def test_circuit_format_versioned():
    circuit, params = sample_circuit()
    text = serialize_circuit(circuit, params)
    assert text.splitlines()[0] == "qcfciqmc-circuit 1"
    bumped = text.replace("qcfciqmc-circuit 1", "qcfciqmc-circuit 2")
    with pytest.raises(ConfigError, match="version"):
        parse_circuit(bumped)


def test_circuit_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_circuit("")
    with pytest.raises(ConfigError):
        parse_circuit("something else\n")
    good = serialize_circuit(*sample_circuit())
    with pytest.raises(ConfigError, match="malformed"):
        parse_circuit(good.replace("flip 0", "flip zero"))
    with pytest.raises(ConfigError, match="params"):
        parse_circuit(good.rsplit("params", 1)[0])  # params line removed


def test_circuit_params_length_checked():
    circuit, params = sample_circuit()
    with pytest.raises(CliError):
        serialize_circuit(circuit, params[:1])
    text = serialize_circuit(circuit, params)
    short = text.replace("params 0.3141592653589793 -1.1", "params 0.25")
    with pytest.raises(ConfigError, match="length"):
        parse_circuit(short)


def test_empty_circuit_round_trips():
    text = serialize_circuit(Circuit(4, []), np.zeros(0))
    loaded, params = parse_circuit(text)
    assert loaded.gates == []
    assert loaded.n_qubits == 4
    assert params.shape == (0,)


# ---------------------------------------------------------------------------
# cmd_ed
# ---------------------------------------------------------------------------

def test_ed_1x2_hubbard(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["ed", conf]) == 0
    record = json.loads((out / "ed.json").read_text())
    assert abs(record["energy"] - E_1X2) < 1e-10
    assert record["sector_dim"] == 4
    assert record["config"]["seed"] == "3"


def test_ed_identity_only_hamiltonian():
    h = PauliSum([PauliTerm(-1.5, PauliWord(2, 0, 0))])
    model = cli.BuiltModel(h=h, n_qubits=2, sector=np.arange(4), reference=0,
                           label="identity")
    assert abs(cli._sector_ground_energy(model) + 1.5) < 1e-12


def test_ed_dense_limit_exit_code(tmp_path):
    conf = write_conf(tmp_path, f"""
output.dir = {tmp_path / 'out'}
model.hubbard.shape = 1x7
model.hubbard.t = 1.0
model.hubbard.u = 4.0
""")
    assert cli.main(["ed", conf]) == 3


# ---------------------------------------------------------------------------
# cmd_vqe
# ---------------------------------------------------------------------------

def test_vqe_adapt_1x2_reaches_ed(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["vqe", conf]) == 0
    record = json.loads((out / "vqe.json").read_text())
    assert abs(record["energy"] - E_1X2) < 1e-6
    assert record["converged"] is True

    # reloaded circuit reproduces the recorded energy
    circuit, params = parse_circuit((out / "circuit.txt").read_text())
    from qcfciqmc.vqa import circuit_energy
    from qcfciqmc.operators import HubbardSpec, build_hubbard, jordan_wigner
    h = jordan_wigner(build_hubbard(HubbardSpec(shape=(1, 2), t=1.0, u=4.0)))
    assert abs(circuit_energy(circuit, h, params) - record["energy"]) < 1e-12


def test_vqe_zero_layer_hv_gives_reference_energy(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, f"""
seed = 5
output.dir = {out}
model.hubbard.shape = 1x2
model.hubbard.t = 1.0
model.hubbard.u = 4.0
ansatz.kind = hv
ansatz.layers = 0
""")
    assert cli.main(["vqe", conf]) == 0
    record = json.loads((out / "vqe.json").read_text())
    # reference determinant is singly occupied on each site: diagonal 0
    assert abs(record["energy"]) < 1e-12
    assert record["n_parameters"] == 0


def test_vqe_hv_requires_hubbard(tmp_path, n2_missing=None):
    fake = tmp_path / "mol.fcidump"
    fake.write_text("&FCI NORB=1,NELEC=2,MS2=0,\n&END\n"
                    " 1.0 1 1 0 0\n 0.0 0 0 0 0\n")
    conf = write_conf(tmp_path, f"""
output.dir = {tmp_path / 'out'}
model.fcidump.path = {fake}
ansatz.kind = hv
""")
    assert cli.main(["vqe", conf]) == 2


# ---------------------------------------------------------------------------
# cmd_nsi
# ---------------------------------------------------------------------------

def test_nsi_identity_circuit_ratio_one(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    circuit_file = out / "identity.txt"
    circuit_file.write_text(serialize_circuit(Circuit(8, []), np.zeros(0)))
    conf = write_conf(tmp_path, f"""
output.dir = {out}
model.hubbard.shape = 2x2
model.hubbard.t = 1.0
model.hubbard.u = 4.0
circuit.path = {circuit_file}
nsi.beta = 0.1
""")
    assert cli.main(["nsi", conf]) == 0
    record = json.loads((out / "nsi.json").read_text())
    assert record["identity"]["s_thermal"] > 0.0
    assert abs(record["ratio"] - 1.0) < 1e-9


def test_nsi_diagonalizing_circuit_near_zero(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["vqe", conf]) == 0
    conf2 = write_conf(tmp_path, BASE_1X2.format(out=out)
                       + f"circuit.path = {out / 'circuit.txt'}\n", name="nsi.conf")
    assert cli.main(["nsi", conf2]) == 0
    record = json.loads((out / "nsi.json").read_text())
    assert abs(record["transformed"]["s_thermal"]) < 1e-9
    # stoquastic instance: identity indicator is exactly zero, no ratio defined
    assert record["identity"]["s_thermal"] == 0.0
    assert record["ratio"] is None


def test_nsi_ratio_matches_direct_computation(tmp_path):
    from qcfciqmc.nsi import nsi_thermal, transformed_nsi
    from qcfciqmc.operators import HubbardSpec, build_hubbard, jordan_wigner, to_dense
    from qcfciqmc.vqa import (hubbard_hv_generator_groups, layered_ansatz,
                              lowest_diagonal_reference)

    spec = HubbardSpec(shape=(2, 2), t=1.0, u=4.0)
    h = jordan_wigner(build_hubbard(spec))
    sector = number_sector_indices(8, n_up=2, n_dn=2)
    ref = lowest_diagonal_reference(h, sector)
    circuit = layered_ansatz(hubbard_hv_generator_groups(spec), 1, ref, 8)
    rng = np.random.default_rng(9)
    params = 0.1 * rng.standard_normal(circuit.n_slots)

    out = tmp_path / "out"
    out.mkdir()
    circuit_file = out / "c.txt"
    circuit_file.write_text(serialize_circuit(circuit, params))
    conf = write_conf(tmp_path, f"""
output.dir = {out}
model.hubbard.shape = 2x2
model.hubbard.t = 1.0
model.hubbard.u = 4.0
circuit.path = {circuit_file}
nsi.beta = 0.1
""")
    assert cli.main(["nsi", conf]) == 0
    record = json.loads((out / "nsi.json").read_text())
    s_id = nsi_thermal(to_dense(h).real, 0.1)
    s_tr = transformed_nsi(h, circuit, params, 0.1).s_thermal
    assert abs(record["identity"]["s_thermal"] - s_id) < 1e-12
    assert abs(record["transformed"]["s_thermal"] - s_tr) < 1e-12
    assert abs(record["ratio"] - s_tr / s_id) < 1e-9


def test_nsi_bad_beta_is_numerical_failure(tmp_path):
    conf = write_conf(tmp_path, f"""
output.dir = {tmp_path / 'out'}
model.hubbard.shape = 1x2
model.hubbard.u = 4.0
nsi.beta = -0.5
""")
    assert cli.main(["nsi", conf]) == 4


# ---------------------------------------------------------------------------
# cmd_qmc
# ---------------------------------------------------------------------------

def test_qmc_identity_basis_outputs(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["qmc", conf, "--identity-basis"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["identity_basis"] is True
    assert np.isfinite(summary["mean_e_mixed"])
    traj = trajectory_from_csv((out / "trajectory.csv").read_text())
    assert len(traj.records) == 2001  # 4.0 / 2e-3 steps plus the initial record
    assert traj.records[0].n_walkers == 100


def test_qmc_diagonalizing_circuit_constant(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["vqe", conf]) == 0
    conf2 = write_conf(tmp_path, BASE_1X2.format(out=out)
                       + f"circuit.path = {out / 'circuit.txt'}\n", name="q.conf")
    assert cli.main(["qmc", conf2]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["mean_e_mixed"] - E_1X2) < 1e-8
    assert summary["std_e_mixed"] < 1e-12
    assert summary["final_walkers"] == 100


def test_qmc_requires_circuit_unless_identity(tmp_path):
    conf = write_conf(tmp_path, BASE_1X2.format(out=tmp_path / "out"))
    assert cli.main(["qmc", conf]) == 2


def test_qmc_circuit_qubit_mismatch(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    wrong = out / "wrong.txt"
    wrong.write_text(serialize_circuit(Circuit(6, []), np.zeros(0)))
    conf = write_conf(tmp_path, BASE_1X2.format(out=out)
                      + f"circuit.path = {wrong}\n")
    assert cli.main(["qmc", conf]) == 2


def test_qmc_byte_identical_reruns(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["qmc", conf, "--identity-basis"]) == 0
    first_traj = (out / "trajectory.csv").read_bytes()
    first_sum = (out / "summary.json").read_bytes()
    assert cli.main(["qmc", conf, "--identity-basis"]) == 0
    assert (out / "trajectory.csv").read_bytes() == first_traj
    assert (out / "summary.json").read_bytes() == first_sum


def test_qmc_seed_flag_changes_output(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, BASE_1X2.format(out=out))
    assert cli.main(["qmc", conf, "--identity-basis"]) == 0
    first = (out / "trajectory.csv").read_bytes()
    assert cli.main(["qmc", conf, "--identity-basis", "--seed", "99"]) == 0
    assert (out / "trajectory.csv").read_bytes() != first


def test_qmc_sampled_backend_runs(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, f"""
seed = 3
output.dir = {out}
model.hubbard.shape = 1x2
model.hubbard.t = 1.0
model.hubbard.u = 4.0
qmc.total_time = 1.0
qmc.delta_tau = 2e-3
qmc.threshold = 400
backend.shots_magnitude = 20000
backend.shots_sign = 4000
""")
    assert cli.main(["qmc", conf, "--identity-basis", "--backend", "sampled"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["backend.kind"] == "sampled"
    assert np.isfinite(summary["mean_e_mixed"])


# ---------------------------------------------------------------------------
# cmd_sweep
# ---------------------------------------------------------------------------

SWEEP_1X2 = BASE_1X2 + "sweep.depths = 0,2,4\n"


def test_sweep_rows_and_depth_zero(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, SWEEP_1X2.format(out=out))
    assert cli.main(["sweep", conf]) == 0
    record = json.loads((out / "sweep.json").read_text())
    rows = record["rows"]
    assert [r["depth"] for r in rows] == [0, 2, 4]
    assert all(r["error"] == "" for r in rows)

    # depth-0 row is the identity-basis FCIQMC run with the same base seed
    qdir = tmp_path / "qout"
    qconf = write_conf(tmp_path, BASE_1X2.format(out=qdir), name="q.conf")
    assert cli.main(["qmc", qconf, "--identity-basis"]) == 0
    summary = json.loads((qdir / "summary.json").read_text())
    assert rows[0]["e_qmc_mean"] == summary["mean_e_mixed"]
    assert rows[0]["e_qmc_std"] == summary["std_e_mixed"]
    assert rows[0]["e_vqe"] == 0.0  # reference diagonal on the open dimer


def test_sweep_std_non_increasing(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, SWEEP_1X2.format(out=out))
    assert cli.main(["sweep", conf]) == 0
    rows = json.loads((out / "sweep.json").read_text())["rows"]
    stds = [r["e_qmc_std"] for r in rows]
    inversions = sum(1 for a, b in zip(stds, stds[1:]) if b > a)
    assert inversions <= 1
    assert stds[-1] < stds[0]


def test_sweep_csv_shape(tmp_path):
    out = tmp_path / "out"
    conf = write_conf(tmp_path, SWEEP_1X2.format(out=out))
    assert cli.main(["sweep", conf]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "depth,e_vqe,e_qmc_mean,e_qmc_std,nsi,theorem1_bound,error"
    assert len(lines) == 4
    # numeric cells parse back
    cells = lines[1].split(",")
    assert int(cells[0]) == 0
    float(cells[1]), float(cells[4]), float(cells[5])


def test_sweep_partial_failure_continues(tmp_path, monkeypatch):
    from qcfciqmc.vqa import VqaError

    real = cli._train_ansatz

    def flaky(cfg, model, depth=None, seed=None):
        if depth == 2:
            raise VqaError("injected failure")
        return real(cfg, model, depth=depth, seed=seed)

    monkeypatch.setattr(cli, "_train_ansatz", flaky)
    out = tmp_path / "out"
    cfg = load_config(write_conf(tmp_path, SWEEP_1X2.format(out=out)))
    record = cmd_sweep(cfg)
    rows = record["rows"]
    assert rows[1]["error"] == "injected failure"
    assert rows[1]["e_vqe"] is None
    assert rows[0]["error"] == "" and rows[2]["error"] == ""
    text = (out / "sweep.csv").read_text().splitlines()
    assert text[2].startswith("2,,,,,")


def test_sweep_requires_depths(tmp_path):
    conf = write_conf(tmp_path, BASE_1X2.format(out=tmp_path / "out"))
    assert cli.main(["sweep", conf]) == 2
