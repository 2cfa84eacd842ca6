import json

import pytest

from steerlab.cli import _parse_target, _parse_window, main

WORLD = """\
dimension 2
attribute gender male female
component engineer gender=male   mean=4,0 weight=0.325
component engineer gender=female mean=0,0 weight=0.175
component teacher  gender=male   mean=4,6 weight=0.175
component teacher  gender=female mean=0,6 weight=0.325
"""


@pytest.fixture()
def workspace(tmp_path):
    (tmp_path / "demo.world").write_text(WORLD)
    config = {
        "world_path": "demo.world",
        "prompts": [
            {"concept": "engineer", "count": 3},
            {"concept": "teacher", "count": 3},
        ],
        "target": {"gender": {"male": 0.5, "female": 0.5}},
        "policy": "deficit",
        "samples_per_prompt": 3,
        "steps": 30,
        "beta_end": 0.3,
        "seed": 9,
    }
    (tmp_path / "run.json").write_text(json.dumps(config))
    return tmp_path


class TestParsers:
    def test_parse_target(self):
        parsed = _parse_target("gender=male:0.6,female:0.4;age=young:1,old:0")
        assert parsed == {
            "gender": {"male": 0.6, "female": 0.4},
            "age": {"young": 1.0, "old": 0.0},
        }

    def test_parse_target_rejects_garbage(self):
        with pytest.raises(ValueError):
            _parse_target("gender")
        with pytest.raises(ValueError):
            _parse_target("gender=male")

    def test_parse_window(self):
        assert _parse_window("0.25,0.75") == (0.25, 0.75)
        with pytest.raises(ValueError):
            _parse_window("0.25")


class TestGenerateCommand:
    def test_successful_run(self, workspace, capsys):
        out = workspace / "out"
        code = main(["generate", "--config", str(workspace / "run.json"),
                     "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "bias_combined=" in stdout
        assert (out / "samples.csv").exists()
        assert (out / "report.csv").exists()

    def test_override_flags_change_digest(self, workspace):
        out_a = workspace / "a"
        out_b = workspace / "b"
        main(["generate", "--config", str(workspace / "run.json"), "--out", str(out_a)])
        main(["generate", "--config", str(workspace / "run.json"), "--out", str(out_b),
              "--gamma", "0.9"])
        digest_a = json.loads((out_a / "manifest.json").read_text())["config_digest"]
        digest_b = json.loads((out_b / "manifest.json").read_text())["config_digest"]
        assert digest_a != digest_b

    def test_target_override(self, workspace, capsys):
        code = main(["generate", "--config", str(workspace / "run.json"),
                     "--target", "gender=male:0.9,female:0.1"])
        assert code == 0
        assert "bias_combined=" in capsys.readouterr().out

    def test_bad_target_override_exits_2(self, workspace, capsys):
        code = main(["generate", "--config", str(workspace / "run.json"),
                     "--target", "gender=male:0.9"])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_exits_2(self, workspace, capsys):
        code = main(["generate", "--config", str(workspace / "nope.json")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, workspace, capsys):
        cfg = workspace / "bad.json"
        data = json.loads((workspace / "run.json").read_text())
        data["verbose"] = True
        cfg.write_text(json.dumps(data))
        code = main(["generate", "--config", str(cfg)])
        assert code == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_failed_prompts_exit_1(self, workspace, capsys):
        cfg = workspace / "partial.json"
        data = json.loads((workspace / "run.json").read_text())
        data["prompts"] = [{"concept": "engineer", "count": 1},
                           {"concept": "astronaut", "count": 1}]
        cfg.write_text(json.dumps(data))
        code = main(["generate", "--config", str(cfg)])
        captured = capsys.readouterr()
        assert code == 1
        assert "failed prompt" in captured.err
        assert "bias_combined=" in captured.out


class TestOtherCommands:
    def test_sweep_command(self, workspace, capsys):
        cfg = workspace / "sweep.json"
        data = json.loads((workspace / "run.json").read_text())
        data["sweep"] = {"attribute": "gender", "value": "male",
                         "proportions": [0.3, 0.7]}
        cfg.write_text(json.dumps(data))
        out = workspace / "sweep_out"
        code = main(["sweep", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "arm 0:" in stdout and "arm 1:" in stdout
        assert "avg_bias=" in stdout
        assert (out / "sweep.csv").exists()

    def test_ablate_window_command(self, workspace, capsys):
        cfg = workspace / "ablate.json"
        data = json.loads((workspace / "run.json").read_text())
        data["windows"] = [[0.0, 0.5], [0.5, 1.0]]
        cfg.write_text(json.dumps(data))
        code = main(["ablate-window", "--config", str(cfg),
                     "--out", str(workspace / "ablate_out")])
        assert code == 0
        assert "window=0,0.5" in capsys.readouterr().out
        assert (workspace / "ablate_out" / "ablation.csv").exists()

    def test_inspect_memory_command(self, workspace, capsys):
        mem = workspace / "memory.json"
        code = main(["generate", "--config", str(workspace / "run.json"),
                     "--memory", str(mem)])
        assert code == 0
        capsys.readouterr()
        code = main(["inspect-memory", "--memory", str(mem)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("# budget=")
        assert "cluster,total,centroid0,centroid1" in stdout

    def test_inspect_memory_bad_file_exits_2(self, workspace, capsys):
        bad = workspace / "not_memory.json"
        bad.write_text("{}")
        code = main(["inspect-memory", "--memory", str(bad)])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_render_command(self, workspace, capsys):
        out = workspace / "out"
        main(["generate", "--config", str(workspace / "run.json"), "--out", str(out)])
        capsys.readouterr()
        svg = workspace / "plot.svg"
        code = main(["render", "--samples", str(out / "samples.csv"),
                     "--world", str(workspace / "demo.world"), "--out", str(svg)])
        assert code == 0
        assert svg.read_text().startswith("<svg ")

    def test_validate_world_command(self, workspace, capsys):
        code = main(["validate-world", "--world", str(workspace / "demo.world")])
        assert code == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("ok:")
        assert "digest=" in stdout

    def test_validate_world_rejects_broken_file(self, workspace, capsys):
        bad = workspace / "broken.world"
        bad.write_text("dimension 2\ncomponent a mean=0 weight=1\n")
        code = main(["validate-world", "--world", str(bad)])
        assert code == 2
        assert "broken.world:2:" in capsys.readouterr().err

    def test_policy_override_to_vanilla(self, workspace, capsys):
        code = main(["generate", "--config", str(workspace / "run.json"),
                     "--policy", "vanilla", "--seed", "77"])
        assert code == 0
        assert "bias_combined=" in capsys.readouterr().out
