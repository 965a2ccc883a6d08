"""End-to-end command-line behavior: artifacts, determinism, exit codes."""
import filecmp
import json
import os

import numpy as np
import pytest

from reefinvert.cli import main
from reefinvert.observation import read_labels_csv
from reefinvert.runconfig import default_config


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["--out", str(out), "synthesize"]) == 0
    return out


@pytest.fixture(scope="module")
def infer_ini(tmp_path_factory, synth_dir):
    cfgdir = tmp_path_factory.mktemp("cfg")
    path = cfgdir / "run.ini"
    path.write_text(
        "[sampler]\n"
        "samples = 150\n"
        "burn_in = 0.2\n"
        "seed = 7\n"
        "[inference]\n"
        f"observed = {synth_dir / 'time_labels.csv'}\n"
        "structure = time\n"
        "free = epsilon, alpha_s\n"
    )
    return str(path)


@pytest.fixture(scope="module")
def infer_dir(tmp_path_factory, infer_ini):
    out = tmp_path_factory.mktemp("infer")
    assert main(["--config", infer_ini, "--out", str(out), "infer"]) == 0
    return out


# --------------------------------------------------------------- synthesize

def test_synthesize_writes_artifacts(synth_dir):
    for name in ("proportions.csv", "time_labels.csv", "depth_labels.csv",
                 "provenance.ini"):
        assert (synth_dir / name).exists()


def test_synthesized_labels_round_trip(synth_dir):
    config = default_config()
    core = config.posterior().predict(config.base_theta())
    obs = read_labels_csv(
        synth_dir / "time_labels.csv", "time", 50.0, config.categories()
    )
    assert np.array_equal(obs.labels, core.time_labels)


def test_synthesized_proportions_parse_close(synth_dir):
    config = default_config()
    core = config.posterior().predict(config.base_theta())
    rows = (synth_dir / "proportions.csv").read_text().strip().splitlines()
    assert len(rows) == 171
    parsed = np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])
    # nine significant digits in, nine out
    assert np.allclose(parsed, core.proportions, atol=1e-8)


def test_provenance_replays_identically(synth_dir, tmp_path):
    replay = tmp_path / "replay"
    code = main(
        ["--config", str(synth_dir / "provenance.ini"), "--out", str(replay),
         "synthesize"]
    )
    assert code == 0
    for name in ("proportions.csv", "time_labels.csv", "depth_labels.csv"):
        assert filecmp.cmp(synth_dir / name, replay / name, shallow=False)


def test_synthesize_six_assemblages(tmp_path):
    ini = tmp_path / "six.ini"
    lines = ["[assemblages]", "names = " + ", ".join(f"b{i}" for i in range(6))]
    for i in range(6):
        d1 = 0.5 + 5.0 * i
        lines += [
            f"[assemblage.b{i}]",
            "max_va_rate = 10",
            "flow_threshold = 0.0, 0.0, 0.29, 0.3",
            "sediment_threshold = 0.0, 0.0, 0.004, 0.005",
            f"depth_threshold = {d1}, {d1 + 1.0}, {d1 + 6.0}, {d1 + 10.0}",
        ]
    ini.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    assert main(["--config", str(ini), "--out", str(out), "synthesize"]) == 0
    header = (out / "proportions.csv").read_text().splitlines()[0]
    assert header == "time_bp," + ",".join(f"b{i}" for i in range(6)) + ",sediment"


# -------------------------------------------------------------------- infer

def test_infer_writes_artifacts(infer_dir):
    for name in ("trace.csv", "summary.json", "envelope.csv", "provenance.ini"):
        assert (infer_dir / name).exists()


def test_trace_layout(infer_dir):
    rows = (infer_dir / "trace.csv").read_text().strip().splitlines()
    header = rows[0].split(",")
    assert header == [
        "iteration", "replica", "log_likelihood", "log_prior", "accepted",
        "epsilon", "alpha_s",
    ]
    assert len(rows) == 151
    first = rows[1].split(",")
    assert first[0] == "0" and first[1] == "0"
    assert len(first) == len(header)


def test_summary_contents(infer_dir):
    payload = json.loads((infer_dir / "summary.json").read_text())
    assert set(payload["parameters"]) == {"epsilon", "alpha_s"}
    for stats in payload["parameters"].values():
        assert {"mean", "mode", "p5", "p95"} <= set(stats)
    assert payload["method"] == "single"
    assert payload["n_samples"] == 120  # 150 minus 20 percent burn-in
    assert 0.0 <= payload["acceptance_rate"] <= 1.0
    assert np.isfinite(payload["log_likelihood_max"])


def test_envelope_rows(infer_dir):
    rows = (infer_dir / "envelope.csv").read_text().strip().splitlines()
    assert len(rows) == 171
    assert rows[0].startswith("index,freq_shallow,")


def test_infer_deterministic(infer_ini, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["--config", infer_ini, "--out", str(a), "infer"]) == 0
    assert main(["--config", infer_ini, "--out", str(b), "infer"]) == 0
    assert filecmp.cmp(a / "trace.csv", b / "trace.csv", shallow=False)


def test_seed_flag_changes_chain(infer_ini, infer_dir, tmp_path):
    other = tmp_path / "other"
    assert main(
        ["--config", infer_ini, "--seed", "99", "--out", str(other), "infer"]
    ) == 0
    assert not filecmp.cmp(infer_dir / "trace.csv", other / "trace.csv",
                           shallow=False)


def test_blank_free_value_means_default(synth_dir, tmp_path):
    # blank INI values fall back to defaults rather than emptying the set
    ini = tmp_path / "blank.ini"
    ini.write_text(
        "[sampler]\nsamples = 60\n"
        f"[inference]\nobserved = {synth_dir / 'time_labels.csv'}\n"
        "free =\n"
    )
    out = tmp_path / "o"
    assert main(["--config", str(ini), "--out", str(out), "infer"]) == 0
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header.endswith("epsilon,alpha_s")


def test_infer_requires_free_parameters(monkeypatch, synth_dir, tmp_path):
    import dataclasses

    from reefinvert import cli as climod
    from reefinvert.parameters import ParameterSpace

    cfg = default_config()
    cfg = dataclasses.replace(
        cfg,
        space=ParameterSpace(
            assemblage_names=cfg.space.assemblage_names, free=()
        ),
        observed_path=str(synth_dir / "time_labels.csv"),
    )
    monkeypatch.setattr(climod, "load_config", lambda path: cfg)
    assert climod.main(["--out", str(tmp_path / "o"), "infer"]) == 2


def test_infer_requires_observed(tmp_path):
    assert main(["--out", str(tmp_path / "o"), "infer"]) == 2


def test_infer_unrunnable_model_is_runtime_failure(synth_dir, tmp_path, capsys):
    # a population cap below the seed level kills every forward run, so
    # no admissible starting point can be found
    ini = tmp_path / "bad.ini"
    ini.write_text(
        "[simulation]\npopulation_cap = 1e-6\n"
        "[sampler]\nsamples = 50\n"
        f"[inference]\nobserved = {synth_dir / 'time_labels.csv'}\n"
        "free = epsilon, alpha_s\n"
    )
    code = main(["--config", str(ini), "--out", str(tmp_path / "o"), "infer"])
    assert code == 1
    err = capsys.readouterr().err
    assert "hint" in err


# ------------------------------------------------------------------ surface

def test_surface_small_grid(infer_ini, tmp_path):
    out = tmp_path / "surf"
    code = main(
        ["--config", infer_ini, "--out", str(out), "--sequential", "surface",
         "--resolution", "5",
         "--min-a", "0.05", "--max-a", "0.12",
         "--min-b", "-0.06", "--max-b", "-0.01"]
    )
    assert code == 0
    rows = (out / "surface.csv").read_text().strip().splitlines()
    assert len(rows) == 6
    assert rows[0].split(",")[0] == "epsilon\\alpha_s"
    values = [float(v) for v in rows[1].split(",")[1:]]
    assert len(values) == 5


def test_surface_rejects_unknown_parameter(infer_ini, tmp_path):
    code = main(
        ["--config", infer_ini, "--out", str(tmp_path / "o"), "surface",
         "--param-a", "banana", "--resolution", "3"]
    )
    assert code == 2


# --------------------------------------------------------------------- psrf

def test_psrf_two_traces(infer_ini, infer_dir, tmp_path):
    other = tmp_path / "seed99"
    assert main(
        ["--config", infer_ini, "--seed", "99", "--out", str(other), "infer"]
    ) == 0
    out = tmp_path / "psrf"
    code = main(
        ["--out", str(out), "psrf",
         str(infer_dir / "trace.csv"), str(other / "trace.csv")]
    )
    assert code == 0
    payload = json.loads((out / "psrf.json").read_text())
    assert set(payload) == {"epsilon", "alpha_s"}
    assert all(np.isfinite(v) for v in payload.values())


def test_psrf_single_trace_rejected(infer_dir, tmp_path, capsys):
    code = main(
        ["--out", str(tmp_path / "o"), "psrf", str(infer_dir / "trace.csv")]
    )
    assert code == 2
    assert "two" in capsys.readouterr().err


def test_psrf_mismatched_parameters(synth_dir, infer_dir, tmp_path):
    ini = tmp_path / "eps_only.ini"
    ini.write_text(
        "[sampler]\nsamples = 150\nseed = 3\n"
        f"[inference]\nobserved = {synth_dir / 'time_labels.csv'}\n"
        "free = epsilon\n"
    )
    solo = tmp_path / "solo"
    assert main(["--config", str(ini), "--out", str(solo), "infer"]) == 0
    code = main(
        ["--out", str(tmp_path / "o"), "psrf",
         str(infer_dir / "trace.csv"), str(solo / "trace.csv")]
    )
    assert code == 2


def test_psrf_rejects_non_trace_file(infer_dir, synth_dir, tmp_path):
    code = main(
        ["--out", str(tmp_path / "o"), "psrf",
         str(infer_dir / "trace.csv"), str(synth_dir / "proportions.csv")]
    )
    assert code == 2


# ------------------------------------------------------------------- errors

def test_missing_config_file(tmp_path):
    code = main(
        ["--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path),
         "synthesize"]
    )
    assert code == 2


def test_bad_config_value(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[sampler]\nsamples = many\n")
    assert main(["--config", str(ini), "--out", str(tmp_path), "synthesize"]) == 2


def test_out_directory_created(tmp_path):
    nested = tmp_path / "a" / "b" / "c"
    assert main(["--out", str(nested), "synthesize"]) == 0
    assert (nested / "proportions.csv").exists()
