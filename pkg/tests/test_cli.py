import os
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from wheatai.cli import main

from conftest import make_fdk_env

REPO = Path(__file__).resolve().parent.parent


class TestRun:
    def test_fdk_happy_path(self, tmp_path, capsys):
        images, preds = make_fdk_env(tmp_path)
        out = tmp_path / "r"
        rc = main(["run", "--pipeline", "fdk", "--input", str(images), "--backend", str(preds), "--out", str(out)])
        assert rc == 0
        assert (out / "fdk.csv").is_file()
        assert (out / "results.json").is_file()
        assert len(list((out / "overlays").glob("*.png"))) == 3

    def test_missing_pipeline_flag_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--input", "x", "--backend", "y", "--out", "z"])
        assert exc.value.code == 2

    def test_unknown_pipeline_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--pipeline", "frost", "--input", "x", "--backend", "y", "--out", "z"])
        assert exc.value.code == 2

    def test_kernel_morph_without_calibration_exit_2(self, tmp_path, capsys):
        images, preds = make_fdk_env(tmp_path)
        rc = main(
            ["run", "--pipeline", "kernel-morph", "--input", str(images), "--backend", str(preds), "--out", str(tmp_path / "o")]
        )
        assert rc == 2
        assert "calibration_required" in capsys.readouterr().err

    def test_both_calibrations_exit_2(self, tmp_path, capsys):
        images, preds = make_fdk_env(tmp_path)
        rc = main(
            ["run", "--pipeline", "kernel-morph", "--input", str(images), "--backend", str(preds),
             "--out", str(tmp_path / "o"), "--px-per-mm", "8", "--marker-mm", "20"]
        )
        assert rc == 2

    def test_missing_input_dir_exit_1(self, tmp_path, capsys):
        rc = main(["run", "--pipeline", "fdk", "--input", str(tmp_path / "none"), "--backend", str(tmp_path), "--out", str(tmp_path / "o")])
        assert rc == 1

    def test_all_images_failed_exit_1(self, tmp_path, capsys):
        images, preds = make_fdk_env(tmp_path, missing=(0, 1, 2))
        rc = main(["run", "--pipeline", "fdk", "--input", str(images), "--backend", str(preds), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "all_images_failed" in capsys.readouterr().err

    def test_partial_failure_still_succeeds(self, tmp_path, capsys):
        images, preds = make_fdk_env(tmp_path, missing=(1,))
        rc = main(["run", "--pipeline", "fdk", "--input", str(images), "--backend", str(preds), "--out", str(tmp_path / "o")])
        assert rc == 0
        err = capsys.readouterr().err
        assert "missing_prediction" in err

    def test_workers_flag_matches_serial(self, tmp_path):
        images, preds = make_fdk_env(tmp_path)
        out1, out4 = tmp_path / "w1", tmp_path / "w4"
        assert main(["run", "--pipeline", "fdk", "--input", str(images), "--backend", str(preds), "--out", str(out1), "--no-overlays"]) == 0
        assert main(["run", "--pipeline", "fdk", "--input", str(images), "--backend", str(preds), "--out", str(out4), "--workers", "4", "--no-overlays"]) == 0
        assert (out1 / "fdk.csv").read_bytes() == (out4 / "fdk.csv").read_bytes()


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestServe:
    def test_serves_pipelines_endpoint(self, tmp_path):
        port = free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "wheatai.cli", "serve", "--port", str(port),
             "--data-dir", str(tmp_path / "data"), "--workers", "2"],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
            env={**os.environ, "PYTHONPATH": str(REPO / "src")},
        )
        try:
            deadline = time.monotonic() + 15
            body = None
            while time.monotonic() < deadline:
                try:
                    with urllib.request.urlopen(f"http://127.0.0.1:{port}/api/v1/pipelines", timeout=1) as resp:
                        body = resp.read().decode()
                    break
                except OSError:
                    time.sleep(0.1)
            assert body is not None, "server never answered"
            assert body.count("pipeline_id") == 8
        finally:
            proc.terminate()
            proc.wait(10)

    def test_occupied_port_exits_nonzero(self, tmp_path):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            rc = subprocess.call(
                [sys.executable, "-m", "wheatai.cli", "serve", "--port", str(port),
                 "--data-dir", str(tmp_path / "data")],
                stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, timeout=30,
                env={**os.environ, "PYTHONPATH": str(REPO / "src")},
            )
            assert rc != 0
        finally:
            blocker.close()

    def test_env_var_port_honored(self, tmp_path):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            rc = subprocess.call(
                [sys.executable, "-m", "wheatai.cli", "serve", "--data-dir", str(tmp_path / "data")],
                stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, timeout=30,
                env={**os.environ, "PYTHONPATH": str(REPO / "src"), "WHEATAI_PORT": str(port)},
            )
            assert rc != 0  # env port was in use, so env var was read
        finally:
            blocker.close()
