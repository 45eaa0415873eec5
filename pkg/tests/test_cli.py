import csv
import json
import subprocess
import sys

import pytest

from axdse.accel import Genome
from axdse.cli import main
from axdse.mult import load_lut, make_truncated
from axdse.wtune import WeightMap

from conftest import DATA


def write_lib(path, entries):
    path.write_text(json.dumps({"multipliers": entries}))
    return path


@pytest.fixture
def desk_lib_file(tmp_path):
    return write_lib(tmp_path / "lib.json", [
        {"builtin": "exact", "name": "exact", "energy_pj": 1.0},
        {"builtin": "truncated", "dropped": 3, "name": "trunc_op3", "energy_pj": 0.7},
        {"builtin": "truncated", "dropped": 5, "name": "trunc_op5", "energy_pj": 0.45},
    ])


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_mult_stats_exact_only(tmp_path, capsys):
    lib = write_lib(tmp_path / "lib.json", [{"builtin": "exact", "energy_pj": 0.9}])
    code, out, _ = run(["mult-stats", "--lib", lib, "--csv", tmp_path / "s.csv"], capsys)
    assert code == 0 and "exact" in out
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 1
    r = rows[0]
    assert float(r["energy_pj"]) == 0.9
    assert [float(r[k]) for k in ("med", "med_tuned", "err_prob", "mre", "wce")] == [0.0] * 5


def test_mult_stats_tuning_helps(desk_lib_file, tmp_path, capsys):
    code, _, _ = run(["mult-stats", "--lib", desk_lib_file, "--csv", tmp_path / "s.csv"], capsys)
    assert code == 0
    for r in csv.DictReader(open(tmp_path / "s.csv")):
        assert float(r["med_tuned"]) <= float(r["med"])


def test_empty_library_is_an_error(tmp_path, capsys):
    lib = write_lib(tmp_path / "lib.json", [])
    code, out, err = run(["mult-stats", "--lib", lib], capsys)
    assert code != 0 and out == ""
    assert err.count("\n") == 1 and err.startswith("error: ")


def test_unreadable_lut_is_an_error(tmp_path, capsys):
    (tmp_path / "bad.lut").write_bytes(b"junk")
    lib = write_lib(tmp_path / "lib.json", ["bad.lut"])
    code, _, err = run(["mult-stats", "--lib", lib], capsys)
    assert code == 1 and "bad.lut" in err and err.count("\n") == 1


def test_build_maps_deterministic(desk_lib_file, tmp_path, capsys):
    for d in ("a", "b"):
        assert run(["build-maps", "--lib", desk_lib_file, "--out", tmp_path / d], capsys)[0] == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["exact.map.json", "trunc_op3.map.json", "trunc_op5.map.json"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    assert WeightMap.load(tmp_path / "a" / "exact.map.json").is_identity()
    assert not WeightMap.load(tmp_path / "a" / "trunc_op5.map.json").is_identity()


def test_schedule_csv(capsys):
    code, out, _ = run(["schedule", "--genome", "TM:[0,1,2]|LT:[2,1,3,3,2,1,2]", "--arch", "pipelined",
                        "--tiles", 3], capsys)
    assert code == 0
    assert out.splitlines() == ["step,T1,T2,T3", "1,L2,L1,L3", "2,L6,L5,L4", "3,idle,L7,idle"]


def test_schedule_power_gated_to_file(tmp_path, capsys):
    code, _, _ = run(["schedule", "--genome", "TM:[0,0]|LT:[1,1,2]", "--arch", "power-gated", "--tiles", 2,
                      "--csv", tmp_path / "p.csv"], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["step", "T1", "T2"] and len(rows) == 1 + 4


def test_schedule_invalid_genome(capsys):
    code, _, err = run(["schedule", "--genome", "TM:[0,0]|LT:[1,1]", "--arch", "pipelined", "--tiles", 2], capsys)
    assert code == 1 and err.startswith("error: ValueError")


def test_count_space(capsys):
    code, out, _ = run(["count-space", "--mults", 20, "--tiles", 4, "--layers", 50, "--arch", "power-gated"], capsys)
    assert code == 0 and int(out) == 20**4 * 4**50
    code, out, _ = run(["count-space", "--mults", 20, "--tiles", 4, "--layers", 50, "--arch", "pipelined"], capsys)
    assert int(out) == 20**4 * 24**12 * 12


def test_lut_from_text_round_trip(tmp_path, capsys):
    m = make_truncated(4, 1, energy_pj=0.5)
    lines = [f"{a} {b} {m.lut[a, b]}" for a in range(16) for b in range(16)]
    (tmp_path / "t.txt").write_text("# a b p\n" + "\n".join(lines) + "\n")
    code, _, _ = run(["lut-from-text", tmp_path / "t.txt", tmp_path / "t.lut", "--bits", 4, "--energy", 0.5],
                     capsys)
    assert code == 0
    back = load_lut(tmp_path / "t.lut")
    assert back.name == "t" and back.energy_pj == 0.5
    assert (back.lut == m.lut).all()


def test_lut_from_text_missing_pair(tmp_path, capsys):
    (tmp_path / "t.txt").write_text("0 0 0\n")
    code, _, err = run(["lut-from-text", tmp_path / "t.txt", tmp_path / "t.lut", "--bits", 2, "--energy", 1],
                       capsys)
    assert code == 1 and "LutFormatError" in err


def test_make_lut(tmp_path, capsys):
    code, _, _ = run(["make-lut", "truncated", tmp_path / "m.lut", "--dropped", 2, "--energy", 0.8,
                      "--name", "t2"], capsys)
    assert code == 0
    m = load_lut(tmp_path / "m.lut")
    assert m == make_truncated(8, 2, energy_pj=0.8, name="t2")


def test_quantize_command(tmp_path, capsys):
    code, _, _ = run(["quantize", "--net", DATA / "fixture_float", "--data", DATA / "synthetic_test.bin",
                      "--count", 50, "--out", tmp_path / "q"], capsys)
    assert code == 0 and (tmp_path / "q" / "manifest.json").exists()
    code, _, err = run(["quantize", "--net", tmp_path / "q", "--data", DATA / "synthetic_test.bin",
                        "--out", tmp_path / "q2"], capsys)
    assert code == 1 and "already quantized" in err


def _search(tmp_path, capsys, out, *extra):
    argv = ["search", "--net", DATA / "toy_net", "--data", DATA / "synthetic_test.bin",
            "--lib", tmp_path / "lib.json", "--arch", "pipelined", "--tiles", 2, "--pop", 8, "--off", 6,
            "--iters", 3, "--subset", 40, "--seed", 11, "--out", tmp_path / out, *extra]
    return run(argv, capsys)


def test_search_seed_replay(desk_lib_file, tmp_path, capsys):
    assert _search(tmp_path, capsys, "r1", "--jobs", 1)[0] == 0
    assert _search(tmp_path, capsys, "r2", "--jobs", 2)[0] == 0
    for name in ("archive.csv", "evaluations.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    echo = json.loads((tmp_path / "r1" / "run_manifest.json").read_text())
    assert echo["seed"] == 11 and echo["pop"] == 8 and "jobs" not in echo
    rows = list(csv.DictReader(open(tmp_path / "r1" / "evaluations.csv")))
    assert len(rows) == 3 + 3 * 6
    for r in csv.DictReader(open(tmp_path / "r1" / "archive.csv")):
        Genome.parse(r["genome"])


def test_search_exact_only_single_row(tmp_path, capsys):
    write_lib(tmp_path / "lib.json", [{"builtin": "exact", "energy_pj": 1.0}])
    assert _search(tmp_path, capsys, "r")[0] == 0
    assert len(list(csv.DictReader(open(tmp_path / "r" / "archive.csv")))) == 1


def test_search_manifest_and_overrides(desk_lib_file, tmp_path, capsys):
    manifest = {"net": str(DATA / "toy_net"), "data": str(DATA / "synthetic_test.bin"), "lib": "lib.json",
                "arch": "power-gated", "tiles": 2, "pop": 6, "off": 4, "iters": 2, "subset": 20, "seed": 1,
                "out": "run"}
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    code, _, _ = run(["search", "--manifest", tmp_path / "m.json", "--iters", 1, "--jobs", 1], capsys)
    assert code == 0
    echo = json.loads((tmp_path / "run" / "run_manifest.json").read_text())
    assert echo["iters"] == 1 and echo["arch"] == "power_gated"
    assert len(list(csv.DictReader(open(tmp_path / "run" / "evaluations.csv")))) == 3 + 4


def test_search_missing_paths(tmp_path, capsys):
    code, _, err = run(["search", "--net", tmp_path / "nope", "--data", tmp_path / "x", "--lib", tmp_path / "l",
                        "--out", tmp_path / "o"], capsys)
    assert code == 1 and err.count("\n") == 1
    assert not (tmp_path / "o").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "axdse.cli", "count-space", "--mults", "3", "--tiles", "2",
                          "--layers", "4", "--arch", "pipelined"], capture_output=True, text=True)
    assert res.returncode == 0 and int(res.stdout) == 3**2 * 2 * 2
