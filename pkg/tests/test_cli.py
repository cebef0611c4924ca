import csv

import numpy as np
import pytest

from coupled_hsr import io as hio
from coupled_hsr.cli import SWEEP_COLUMNS, main, svd_profile
from coupled_hsr.metrics import RSNR_CLAMP_DB
from coupled_hsr.recoverability import classify_generic


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def small_sri(tmp_path):
    y = np.random.default_rng(0).random((8, 8, 5)) + 0.1
    path = tmp_path / "sri.hsrc"
    hio.write_cube(path, y)
    return path, y


def test_degrade_identity_then_metrics(tmp_path, small_sri):
    src, y = small_sri
    out = tmp_path / "pair"
    # One band per MSI channel makes P_M the identity.
    assert main(["degrade", "--sri", str(src), "--d", "2", "--q", "1", "--sensor", "CUSTOM", "--k-m", "5",
                 "--out", str(out), "--write-ref"]) == 0
    assert np.array_equal(hio.read_cube(out / "msi.hsrc"), y)
    assert hio.read_cube(out / "hsi.hsrc").shape == (4, 4, 5)
    m = tmp_path / "m.csv"
    assert main(["metrics", "--ref", str(src), "--est", str(out / "sri.hsrc"), "--out", str(m)]) == 0
    (row,) = read_csv(m)
    assert float(row["r_snr"]) == RSNR_CLAMP_DB and float(row["cc"]) == 1.0
    assert float(row["sam"]) == 0.0 and float(row["ergas"]) == 0.0


@pytest.fixture(scope="module")
def n2_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("n2")
    assert main(["degrade", "--scenario", "N2", "--out", str(out), "--write-ref"]) == 0
    return out


def test_n2_scott_pipeline(tmp_path, n2_pair):
    m = tmp_path / "m.csv"
    est = tmp_path / "est.hsrc"
    code = main(["fuse", "--hsi", str(n2_pair / "hsi.hsrc"), "--msi", str(n2_pair / "msi.hsrc"),
                 "--deg", str(n2_pair / "deg.hsrd"), "--method", "scott", "--ranks", "2,2,2",
                 "--out", str(est), "--ref", str(n2_pair / "sri.hsrc"), "--metrics-out", str(m)])
    assert code == 0
    (row,) = read_csv(m)
    assert row["method"] == "scott" and row["params"] == "R=2,2,2"
    assert float(row["r_snr"]) == RSNR_CLAMP_DB


def test_flag_contract(tmp_path, n2_pair, capsys):
    args = ["fuse", "--hsi", str(n2_pair / "hsi.hsrc"), "--msi", str(n2_pair / "msi.hsrc"),
            "--deg", str(n2_pair / "deg.hsrd"), "--out", str(tmp_path / "e")]
    assert main(args + ["--method", "stereo", "--ranks", "2,2,2"]) == 2
    assert "--cprank" in capsys.readouterr().err
    assert main(args + ["--method", "scott", "--cprank", "3"]) == 2
    assert main(args + ["--method", "hybrid", "--cprank", "3"]) == 2
    assert main(["fuse"]) == 2
    assert main(["synth", "--out", str(tmp_path / "x")]) == 2


def test_singular_exit_code(tmp_path, n2_pair):
    args = ["fuse", "--hsi", str(n2_pair / "hsi.hsrc"), "--msi", str(n2_pair / "msi.hsrc"),
            "--deg", str(n2_pair / "deg.hsrd"), "--method", "scott", "--ranks", "40,40,8", "--out", str(tmp_path / "e")]
    assert main(args) == 4
    assert main(args + ["--allow-singular"]) == 0


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.hsrc"
    bad.write_bytes(b"junk")
    assert main(["metrics", "--ref", str(bad), "--est", str(bad)]) == 3


def test_cp_fuse(tmp_path, n2_pair):
    est = tmp_path / "est.hsrc"
    assert main(["fuse", "--hsi", str(n2_pair / "hsi.hsrc"), "--msi", str(n2_pair / "msi.hsrc"),
                 "--deg", str(n2_pair / "deg.hsrd"), "--method", "hybrid", "--cprank", "3", "--r3", "2",
                 "--out", str(est)]) == 0
    ref = hio.read_cube(n2_pair / "sri.hsrc")
    assert np.linalg.norm(hio.read_cube(est) - ref) <= 1e-6 * np.linalg.norm(ref)


SWEEP = ["sweep", "--scenario", "N2", "--r1", "2,3", "--r3-range", "1:4", "--no-time", "--snr-hsi", "40", "--seed", "7"]


def test_sweep_rows_and_regions(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--scenario", "N2", "--r1", "2:4", "--r3-range", "1:4", "--no-time", "--out", str(out)]) == 0
    with open(out) as fh:
        assert next(csv.reader(fh)) == list(SWEEP_COLUMNS)
    rows = read_csv(out)
    assert len(rows) == 12
    for r in rows:
        ranks = (int(r["R1"]), int(r["R2"]), int(r["R3"]))
        assert r["region"] == classify_generic((120, 120, 200), (30, 30), 6, ranks).value
        assert r["cond"] != "" and r["time_s"] == ""
    snr = {(int(r["R1"]), int(r["R3"])): float(r["r_snr"]) for r in rows}
    best = max(snr.values())
    # Best at R3 = N = 2 for every R1 = R2; larger R3 loses little, R3 = 1 collapses.
    for r1 in (2, 3, 4):
        assert snr[r1, 2] == best
        assert snr[r1, 1] < snr[r1, 2] - 100
        assert min(snr[r1, 3], snr[r1, 4]) >= 0.9 * best


def test_sweep_deterministic_across_workers(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(SWEEP + ["--out", str(a)]) == 0
    assert main(SWEEP + ["--out", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_skipped_points_are_reported(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--scenario", "N2", "--method", "blindscott", "--r1", "2", "--r3-range", "6:7",
                 "--no-time", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2
    assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("skipped")


def test_sweep_usage_errors():
    assert main(["sweep", "--scenario", "N2", "--method", "tenrec", "--r1", "2", "--r3-range", "1"]) == 2
    assert main(["sweep", "--scenario", "N2", "--r1", "2"]) == 2
    assert main(["sweep", "--scenario", "N2", "--r1", "2", "--r3-range", "3:1"]) == 2


def test_svd_profile(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["svd-profile", "--scenario", "N2", "--top", "4", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 4
    for col in ("msi_unfold1", "msi_unfold2", "hsi_unfold3"):
        s = [float(r[col]) for r in rows]
        assert s[1] >= 1e6 * s[2]
    zeros = svd_profile(np.zeros((2, 2, 3)), np.zeros((4, 4, 2)), 3)
    assert all(float(x) == 0 for row in zeros for x in row[1:])


def test_svd_profile_noise_lifts_tail(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["svd-profile", "--scenario", "N2", "--top", "3", "--snr-hsi", "20", "--snr-msi", "20",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    for col in ("msi_unfold1", "msi_unfold2", "hsi_unfold3"):
        s = [float(r[col]) for r in rows]
        assert s[2] > 1e-10 * s[0] and s[0] >= s[1] >= s[2]


def test_region_map(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["region-map", "--dims", "32,32,24", "--hsi-dims", "8,8", "--k-m", "6",
                 "--r1", "1:12", "--r3-range", "1:10", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 120
    for r in rows:
        ranks = (int(r["R1"]), int(r["R2"]), int(r["R3"]))
        assert r["region"] == classify_generic((32, 32, 24), (8, 8), 6, ranks).value


def test_config_file(tmp_path, small_sri):
    src, _ = small_sri
    cfg = tmp_path / "run.ini"
    cfg.write_text("[degrade]\nd = 2\nq = 3\nsensor = custom\nk-m = 2\n")
    out = tmp_path / "pair"
    assert main(["--config", str(cfg), "degrade", "--sri", str(src), "--out", str(out)]) == 0
    assert hio.read_cube(out / "hsi.hsrc").shape == (4, 4, 5)
    assert hio.read_cube(out / "msi.hsrc").shape == (8, 8, 2)
    cfg.write_text("[degrade]\nbogus = 1\n")
    assert main(["--config", str(cfg), "degrade", "--sri", str(src), "--out", str(out)]) == 2


def test_ingest_command(tmp_path):
    y = np.arange(24, dtype="<f4").reshape(4, 2, 3)  # band-sequential K, I, J
    raw = tmp_path / "x.raw"
    raw.write_bytes(y.tobytes())
    out = tmp_path / "x.hsrc"
    assert main(["ingest", "--src", str(raw), "--dims", "2,3,4", "--out", str(out)]) == 0
    np.testing.assert_array_equal(hio.read_cube(out), y.transpose(1, 2, 0))
