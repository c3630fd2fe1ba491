from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

import pytest

from navafford import datastore as ds
from navafford.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, build_parser, main


def run_cli(capsys, *argv) -> tuple[int, dict]:
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else {}


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def labeled(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["run", "--seed", "7", "--scenes", "2", "--configs-per-scene", "2", "--views", "3",
                 "--jobs", "1", "--out", str(root)]) == EXIT_OK
    return root


def test_generate_twice_identical(tmp_path, capsys):
    for name in ("a", "b"):
        code, doc = run_cli(capsys, "generate", "--seed", 7, "--scenes", 2, "--configs-per-scene", 2,
                            "--views", 2, "--jobs", 1, "--out", tmp_path / name)
        assert code == EXIT_OK and doc["dataset"].endswith(name)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_parallel_generation_matches_serial(tmp_path, capsys):
    for name, jobs in (("serial", 1), ("parallel", 2)):
        run_cli(capsys, "generate", "--seed", 3, "--scenes", 2, "--configs-per-scene", 1, "--views", 2,
                "--jobs", jobs, "--out", tmp_path / name)
    assert tree_digest(tmp_path / "serial") == tree_digest(tmp_path / "parallel")


def test_eval_against_itself(labeled, capsys):
    code, doc = run_cli(capsys, "eval", labeled, labeled)
    assert code == EXIT_OK
    assert doc["rmse"] == 0.0 and doc["pcc"] == 1.0 and doc["weighted_mse"] == 0.0


def test_stats_reports_split(labeled, capsys):
    code, doc = run_cli(capsys, "stats", labeled)
    assert code == EXIT_OK
    assert doc["splits"]["train"]["scenes"] == 1 and doc["splits"]["test"]["scenes"] == 1


def test_predict_then_msr(labeled, tmp_path, capsys):
    code, doc = run_cli(capsys, "predict", labeled, "--kind", "random", "--out", tmp_path / "p")
    assert code == EXIT_OK and doc["episodes"] > 0
    code, doc = run_cli(capsys, "msr", tmp_path / "p", labeled, "--top", 3)
    assert code == EXIT_OK and doc["k"] == 3 and 0 <= doc["top1"] <= 1 and doc["trials"] == 4
    code, doc = run_cli(capsys, "eval", tmp_path / "p", labeled, "--csv", tmp_path / "s.csv")
    assert code == EXIT_OK and (tmp_path / "s.csv").read_text().startswith("scene_id,")


def test_label_and_interpolate_rerun_is_idempotent(labeled, tmp_path, capsys):
    root = tmp_path / "copy"
    shutil.copytree(labeled, root)
    before = tree_digest(root)
    assert run_cli(capsys, "label", root)[0] == EXIT_OK
    code, doc = run_cli(capsys, "interpolate", root)
    assert code == EXIT_OK and doc["params"] == {"k": 8, "sigma": 0.1, "theta": 0.05}
    assert tree_digest(root) == before


def test_usage_errors(tmp_path, capsys):
    code, doc = run_cli(capsys, "generate", "--scenes", 0, "--out", tmp_path)
    assert code == EXIT_USAGE and doc["error"] == "usage"
    code, _ = run_cli(capsys, "generate", "--robot", "nope", "--out", tmp_path)
    assert code == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == EXIT_USAGE


def test_io_and_data_errors(labeled, tmp_path, capsys):
    code, doc = run_cli(capsys, "stats", tmp_path / "missing")
    assert code == EXIT_IO and doc["error"] == "io"
    root = tmp_path / "broken"
    shutil.copytree(labeled, root)
    m = ds.read_manifest(root)
    s, c, e = next(m.episodes())
    shutil.rmtree(ds.episode_dir(root, s, c, e))
    code, doc = run_cli(capsys, "stats", root)
    assert code == EXIT_DATA and doc["discrepancies"]
    corrupt = tmp_path / "corrupt"
    shutil.copytree(labeled, corrupt)
    ep = ds.episode_dir(corrupt, s, c, e)
    (ep / "dense.bin").write_bytes(b"JUNK" + (ep / "dense.bin").read_bytes()[4:])
    code, doc = run_cli(capsys, "eval", corrupt, labeled)
    assert code == EXIT_DATA and doc["offset"] == 0 and doc["path"].endswith("dense.bin")


def test_flag_defaults_match_module_defaults():
    from navafford import affordance, evaluate, geom, labeler, pipeline
    ns = build_parser().parse_args(["run", "--out", "x"])
    assert (ns.k, ns.sigma, ns.theta) == (affordance.DEFAULT_K, affordance.DEFAULT_SIGMA, affordance.DEFAULT_THETA)
    assert ns.spacing == labeler.GRID_SPACING and ns.zmax == geom.FLOOR_Z_MAX and ns.lam == evaluate.DEFAULT_LAMBDA
    assert ns.views == labeler.VIEWS_PER_CONFIG and ns.configs_per_scene == pipeline.PipelineConfig.configs_per_scene
