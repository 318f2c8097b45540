"""Config parsing/echo, run orchestration, CSV outputs, comparison math, CLI."""

import csv
from pathlib import Path

import numpy as np
import pytest

from ntnsim import cli, harness
from ntnsim.harness import (
    ConfigError,
    ExperimentConfig,
    compare,
    dump_config,
    format_comparison,
    load_config,
    parse_config,
    run,
    run_single,
    summarize_eval,
)


def small_cfg(method="rr", out_dir="results", episodes=4, seeds=(0,)):
    cfg = ExperimentConfig()
    cfg.method = method
    cfg.seeds = list(seeds)
    cfg.out_dir = out_dir
    cfg.train.episodes = episodes
    cfg.train.slots_per_episode = 20
    cfg.train.eval_every_episodes = 2
    cfg.train.eval_episodes = 2
    cfg.train.warmup_transitions = 40
    cfg.train.batch_size = 8
    cfg.scenario.n_ues = 6
    return cfg


def test_parse_config_sections_and_dotted_keys():
    cfg = parse_config(
        """
        [run]
        method = rr
        seeds = 1, 2, 3

        [traffic]
        lambda = 4
        ; comment line
        # another comment
        train.episodes = 12
        """
    )
    assert cfg.method == "rr"
    assert cfg.seeds == [1, 2, 3]
    assert cfg.traffic.lambda_pkts == 4.0
    assert cfg.train.episodes == 12


def test_parse_config_lambda_roundtrip():
    cfg = parse_config("[traffic]\nlambda = 4\n")
    assert cfg.traffic.lambda_pkts == 4.0
    echo = dump_config(cfg)
    assert parse_config(echo).traffic.lambda_pkts == 4.0


def test_parse_config_errors_name_line_numbers():
    with pytest.raises(ConfigError, match="test.ini:2"):
        parse_config("[traffic]\nlambda = banana\n", source="test.ini")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[traffic]\nlambdas = 4\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[traffics]\n")
    with pytest.raises(ConfigError, match="before any"):
        parse_config("lambda = 4\n")
    with pytest.raises(ConfigError, match="expected key = value"):
        parse_config("[traffic]\nlambda 4\n")


def test_parse_config_rejects_invalid_values():
    with pytest.raises(ConfigError):
        parse_config("[run]\nmethod = dqn\n")
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nn_ues = 0\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\ntau = 1.5\n")


def test_dump_config_roundtrip_exact():
    cfg = parse_config(
        "[run]\nmethod = maddpg\nseeds = 5 6\n[scenario]\nn_ues = 9\n"
        "[channel]\neta_nlos_db = 7.5\n[train]\nactor_lr = 0.0002\n"
    )
    echo = dump_config(cfg)
    cfg2 = parse_config(echo)
    assert dump_config(cfg2) == echo
    assert cfg2.method == "maddpg"
    assert cfg2.seeds == [5, 6]
    assert cfg2.scenario.n_ues == 9
    assert cfg2.channel.eta_nlos_db == 7.5
    assert cfg2.train.actor_lr == 2e-4


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/path.ini")


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_run_single_rr_outputs(tmp_path):
    cfg = small_cfg(out_dir=str(tmp_path))
    out = run_single(cfg, 0, quiet=True)
    assert out == tmp_path / "rr_seed0"
    train_rows = read_csv(out / "train.csv")
    assert len(train_rows) == 4
    assert [r["episode"] for r in train_rows] == ["0", "1", "2", "3"]
    eval_rows = read_csv(out / "eval.csv")
    # eval every 2 episodes, 2 eval episodes each
    assert len(eval_rows) == 4
    assert {r["episode"] for r in eval_rows} == {"1", "3"}
    assert not (out / "checkpoints").exists()
    # per-UAV columns sum to the overall column
    for r in train_rows + eval_rows:
        parts = sum(float(r[f"uav{i}_mbps"]) for i in range(5))
        assert parts == pytest.approx(float(r["overall_mbps"]), abs=1e-6)


def test_run_single_learning_method_writes_checkpoints(tmp_path):
    cfg = small_cfg(method="maddpg", out_dir=str(tmp_path), episodes=2)
    out = run_single(cfg, 1, quiet=True)
    ck = out / "checkpoints"
    assert (ck / "sched0_actor.bin").exists()
    assert (ck / "sched4_critic_target.bin").exists()
    assert not (ck / "traj1_actor.bin").exists()
    echo = load_config(out / "config.ini")
    assert echo.method == "maddpg"
    assert echo.seeds == [1]


def test_config_echo_reproduces_csvs(tmp_path):
    cfg = small_cfg(method="tts-maddpg", out_dir=str(tmp_path / "a"), episodes=2)
    out = run_single(cfg, 0, quiet=True)
    echo_cfg = load_config(out / "config.ini")
    echo_cfg.out_dir = str(tmp_path / "b")
    out2 = run_single(echo_cfg, 0, quiet=True)
    assert (out / "train.csv").read_bytes() == (out2 / "train.csv").read_bytes()
    assert (out / "eval.csv").read_bytes() == (out2 / "eval.csv").read_bytes()


def test_run_multi_seed_sequential_equals_parallel(tmp_path):
    cfg = small_cfg(out_dir=str(tmp_path / "seq"), seeds=(0, 1))
    run(cfg, parallel=False, quiet=True)
    cfg2 = small_cfg(out_dir=str(tmp_path / "par"), seeds=(0, 1))
    run(cfg2, parallel=True, quiet=True)
    for s in (0, 1):
        a = (tmp_path / "seq" / f"rr_seed{s}" / "train.csv").read_bytes()
        b = (tmp_path / "par" / f"rr_seed{s}" / "train.csv").read_bytes()
        assert a == b


def write_eval_csv(d: Path, episodes, values):
    d.mkdir(parents=True)
    with open(d / "eval.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["episode", "eval_index", "overall_mbps", "drop_rate"])
        for ep, v in zip(episodes, values):
            w.writerow([ep, 0, f"{v:.6f}", "0.1"])


def test_summarize_eval_last_tenth(tmp_path):
    d = tmp_path / "fake"
    episodes = list(range(0, 100, 10)) * 1
    values = [10.0] * 9 + [70.0]
    write_eval_csv(d, episodes, values)
    s = summarize_eval(d)
    # only episode 90 survives the >81 cutoff
    assert s.mean_mbps == pytest.approx(70.0)
    assert s.n_rows == 1


def test_compare_gain_formula(tmp_path):
    a = tmp_path / "rr"
    b = tmp_path / "tts"
    write_eval_csv(a, [99], [70.0])
    write_eval_csv(b, [99], [175.0])
    summaries, gains = compare([str(b), str(a)])
    by = {s.path: s.label for s in summaries}
    g = gains[(by[str(b)], by[str(a)])]
    assert g == pytest.approx(1.5)
    g2 = gains[(by[str(a)], by[str(b)])]
    assert g2 == pytest.approx((70.0 - 175.0) / 175.0)
    text = format_comparison(summaries, gains)
    assert "+150.0%" in text


def test_compare_identical_dirs_zero_gain(tmp_path):
    a = tmp_path / "x"
    b = tmp_path / "y"
    write_eval_csv(a, [99], [42.0])
    write_eval_csv(b, [99], [42.0])
    _, gains = compare([str(a), str(b)])
    assert all(g == pytest.approx(0.0) for g in gains.values())


def test_compare_needs_two_dirs(tmp_path):
    with pytest.raises(ConfigError):
        compare([str(tmp_path)])
    with pytest.raises(ConfigError, match="no eval.csv"):
        compare([str(tmp_path), str(tmp_path / "nope")])


def test_cli_run_and_compare(tmp_path, capsys):
    conf = tmp_path / "exp.ini"
    conf.write_text(
        "[run]\nmethod = rr\nseeds = 0\nout_dir = {out}\n"
        "[scenario]\nn_ues = 6\n"
        "[train]\nepisodes = 2\nslots_per_episode = 20\n"
        "eval_every_episodes = 1\neval_episodes = 2\n".format(out=tmp_path / "res")
    )
    assert cli.main(["run", "--config", str(conf), "--quiet"]) == 0
    assert (tmp_path / "res" / "rr_seed0" / "eval.csv").exists()
    assert cli.main(["run", "--config", str(conf), "--method", "maddpg",
                     "--out", str(tmp_path / "res2"), "--episodes", "1",
                     "--quiet"]) == 0
    rc = cli.main([
        "compare", str(tmp_path / "res" / "rr_seed0"), str(tmp_path / "res2" / "maddpg_seed0"),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "converged evaluation throughput" in out
    assert "over" in out


def test_cli_dump_config_roundtrip(capsys):
    assert cli.main(["dump-config"]) == 0
    text = capsys.readouterr().out
    cfg = parse_config(text)
    assert cfg.method == ExperimentConfig().method


def test_cli_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[traffic]\nlambda = banana\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "bad.ini:2" in err
    assert cli.main(["compare", str(tmp_path / "missing")]) == 2
