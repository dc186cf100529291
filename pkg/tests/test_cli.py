import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from acnmp.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_DATA, main
from acnmp.cnmp import CNMPModel, DemonstrationSet, generate
from acnmp.config import TrainConfig, preset, save
from acnmp.envs.push import arc_targets, PushEnv
from acnmp.metrics import silhouette
from acnmp.plotting import write_curve_csv


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = preset("viapoint").replace(encoder=(32, 32, 8), decoder=(32, 32, 2),
                                     train=TrainConfig(steps=3000, batch_size=8, log_every=100))
    save(cfg, root / "small.ini")
    assert main(["demo-gen", "--env", "viapoint2d", "--n", "6", "--seed", "1", "--out", str(root / "demos.jsonl")]) == 0
    assert main(["train", "--config", str(root / "small.ini"), "--demos", str(root / "demos.jsonl"),
                 "--out", str(root / "train")]) == 0
    return root


def run_adapt(work, out, *extra):
    return main(["adapt", "--config", str(work / "small.ini"), "--demos", str(work / "demos.jsonl"),
                 "--model", str(work / "train" / "model.txt"), "--out", str(out), *extra])


def test_demo_gen_is_deterministic(work, tmp_path):
    lines = (work / "demos.jsonl").read_text().splitlines()
    assert len(lines) == 6
    main(["demo-gen", "--env", "viapoint2d", "--n", "6", "--seed", "1", "--out", str(tmp_path / "again.jsonl")])
    assert (tmp_path / "again.jsonl").read_bytes() == (work / "demos.jsonl").read_bytes()
    manifest = json.loads((work / "demos.jsonl.manifest.json").read_text())
    assert manifest["n"] == 6 and manifest["seed"] == 1


def test_demo_gen_push_demos_verify(tmp_path):
    assert main(["demo-gen", "--env", "push", "--n", "9", "--out", str(tmp_path / "push.jsonl")]) == 0
    demos = DemonstrationSet.load(tmp_path / "push.jsonl")
    assert len(demos) == 9
    for tr, target in zip(demos, arc_targets()):
        assert PushEnv(tuple(target)).evaluate(tr) >= -0.01


@pytest.mark.parametrize("argv, code", [
    (["demo-gen", "--env", "trampoline", "--out", "x.jsonl"], EXIT_CONFIG),
    (["train", "--config", "no-such-preset", "--demos", "d.jsonl", "--out", "o"], EXIT_CONFIG),
    (["eval", "--model", "missing.txt", "--demos", "missing.jsonl"], EXIT_DATA),
    (["transfer", "--config", "transfer4", "--pairs", "nowhere", "--out", "o"], EXIT_DATA),
])
def test_failures_exit_with_one_tagged_line(tmp_path, argv, code):
    proc = subprocess.run([sys.executable, "-m", "acnmp.cli", *argv], cwd=tmp_path,
                          capture_output=True, text=True)
    assert proc.returncode == code
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error[E_")


def test_train_width_mismatch(work, tmp_path):
    main(["demo-gen", "--env", "push", "--n", "3", "--out", str(tmp_path / "push.jsonl")])
    assert main(["train", "--config", str(work / "small.ini"), "--demos", str(tmp_path / "push.jsonl"),
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_snapshot_reload_is_bit_exact(work):
    header, *rows = read_csv(work / "train" / "loss.csv")
    assert header == ["step", "loss"] and len(rows) == 30
    m1 = CNMPModel.load(work / "train" / "model.txt")
    m2 = CNMPModel.load(work / "train" / "model.txt")
    tr = DemonstrationSet.load(work / "demos.jsonl")[2]
    a = generate(m1, [tr.observation(0)], tr.task_params)
    b = generate(m2, [tr.observation(0)], tr.task_params)
    np.testing.assert_array_equal(a.values, b.values)
    assert json.loads((work / "train" / "run.json").read_text())["command"] == "train"


def test_training_loss_drops(tmp_path):
    cfg = preset("viapoint").replace(encoder=(16, 16, 4), decoder=(16, 16, 2),
                                     train=TrainConfig(steps=50000, batch_size=4, log_every=1000))
    save(cfg, tmp_path / "c.ini")
    main(["demo-gen", "--env", "viapoint2d", "--n", "6", "--out", str(tmp_path / "d.jsonl")])
    gaps = []
    for seed in range(3):
        out = tmp_path / f"s{seed}"
        main(["train", "--config", str(tmp_path / "c.ini"), "--seed", str(seed), "--demos", str(tmp_path / "d.jsonl"),
              "--out", str(out)])
        loss = {int(s): float(v) for s, v in read_csv(out / "loss.csv")[1:]}
        gaps.append(loss[1000] - loss[50000])
    assert np.median(gaps) > 0


def test_adapt_metrics_schema_and_reproducibility(work):
    # success is not the point here; both runs must end the same way and log the same rows
    codes = {run_adapt(work, work / d, "--env-params", "0.5", "1.0", "--max-rollouts", "60") for d in ("a1", "a2")}
    assert len(codes) == 1 and codes <= {0, EXIT_BUDGET}
    header = read_csv(work / "a1" / "metrics.csv")[0]
    assert header == ["rollout_index", "reward", "best_reward", "pg_loss", "sl_loss", "retention_error"]
    assert (work / "a1" / "metrics.csv").read_bytes() == (work / "a2" / "metrics.csv").read_bytes()
    assert len(DemonstrationSet.load(work / "a1" / "solution.jsonl")) == 1


def test_rl_only_flag(work):
    assert run_adapt(work, work / "rl", "--env-params", "0.5", "1.0", "--sl-steps", "0", "--max-rollouts", "60") == 0
    rows = read_csv(work / "rl" / "metrics.csv")[1:]
    assert rows and all(r[4] == "nan" for r in rows)


def test_budget_exhaustion_exit_code(work, capsys):
    code = run_adapt(work, work / "far", "--env-params", "0.5", "3.0", "--max-rollouts", "10")
    assert code == EXIT_BUDGET
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error[E_BUDGET]")
    assert json.loads((work / "far" / "run.json").read_text())["success"] is False


def test_export_latent(viapoint_fit, tmp_path):
    viapoint_fit.model.save(tmp_path / "m.txt")
    viapoint_fit.demos.save(tmp_path / "d.jsonl")
    base = ["export-latent", "--model", str(tmp_path / "m.txt"), "--demos", str(tmp_path / "d.jsonl")]
    main(base + ["--out", str(tmp_path / "all.csv")])
    header, *rows = read_csv(tmp_path / "all.csv")
    assert header == ["trajectory_id", "t"] + [f"l{k}" for k in range(viapoint_fit.model.L)]
    assert len(rows) == sum(len(tr) for tr in viapoint_fit.demos)
    main(base + ["--per-traj", "20", "--seed", "4", "--out", str(tmp_path / "a.csv")])
    main(base + ["--per-traj", "20", "--seed", "4", "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    sub = read_csv(tmp_path / "a.csv")[1:]
    assert len(sub) == 20 * len(viapoint_fit.demos)
    points = np.array([[float(v) for v in r[2:]] for r in rows])
    assert silhouette(points, [r[0] for r in rows]) > 0


def test_plot_outputs(work, tmp_path):
    run = work / "a1"
    (run / "curve.json").write_text(json.dumps({"rows": [{"trajectories": 30, "mean_test_error": 0.4},
                                                         {"trajectories": 130, "mean_test_error": 0.1}]}))
    assert main(["plot", "--run", str(run), "--out", str(tmp_path / "p1")]) == 0
    assert main(["plot", "--run", str(run), "--out", str(tmp_path / "p2")]) == 0
    for name in ("overlay.svg", "error_vs_trajectories.csv"):
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()
    svg = (tmp_path / "p1" / "overlay.svg").read_text()
    assert svg.count('class="demo"') == 6 and 'class="generated"' in svg and 'class="condition"' in svg
    assert read_csv(tmp_path / "p1" / "error_vs_trajectories.csv")[0] == ["trajectories", "mean_test_error"]
    assert main(["plot", "--run", str(tmp_path), "--out", str(tmp_path / "p3")]) == EXIT_DATA


def test_curve_csv_schema(tmp_path):
    write_curve_csv(tmp_path / "c.csv", [(30, 0.5)])
    assert (tmp_path / "c.csv").read_text() == "trajectories,mean_test_error\n30,0.5\n"
