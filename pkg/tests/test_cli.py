import subprocess
import sys

import pytest

from qneurons.cli import main


class TestDumpQSamples:
    def test_stdout_one_column_csv(self, capsys):
        rc = main(["dump-q-samples", "--lambda", "0.1", "--phi", "1e-3", "--n", "5", "--seed", "42"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "q"
        vals = [float(v) for v in lines[1:]]
        assert len(vals) == 5
        assert all(abs(v - 1.0) >= 1e-3 for v in vals)

    def test_file_output_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            main(["dump-q-samples", "--lambda", "0.5", "--n", "100", "--seed", "7", "--out", str(p)])
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().splitlines()) == 101


class TestGradcheck:
    def test_prints_per_check_lines_and_passes(self, capsys):
        rc = main(["gradcheck"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "max relative error" in out
        assert "composite_mlp" in out


class TestMakeDigitsIdx:
    def test_writes_loadable_files(self, tmp_path, capsys):
        rc = main([
            "make-digits-idx", "--out", str(tmp_path), "--train-count", "40",
            "--test-count", "16", "--seed", "1",
        ])
        assert rc == 0
        from qneurons.harness import load_mnist_dir

        train, test = load_mnist_dir(tmp_path)
        assert train.images.shape == (40, 28, 28)
        assert test.images.shape == (16, 28, 28)


class TestTrain:
    def test_end_to_end_tiny_run(self, small_digits_dir, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main([
            "train", "--preset", "mnist_mlp", "--activation", "tanh",
            "--q-mode", "fixed", "--lambda0", "0.1",
            "--epochs", "1", "--batch", "64", "--lr", "0.05",
            "--runs", "1", "--seed", "0", "--subset", "256",
            "--data", str(small_digits_dir), "--out", str(out),
        ])
        assert rc == 0
        text = capsys.readouterr().out
        assert "final test accuracy" in text
        metrics = (out / "metrics.csv").read_text().splitlines()
        assert metrics[0].startswith("run_index,epoch,train_cross_entropy")
        assert len(metrics) == 2

    def test_annealed_mode_records_schedule(self, small_digits_dir, tmp_path):
        out = tmp_path / "out"
        rc = main([
            "train", "--q-mode", "annealed", "--lambda0", "1.0", "--gamma", "0.5",
            "--epochs", "3", "--runs", "1", "--subset", "256",
            "--data", str(small_digits_dir), "--out", str(out),
        ])
        assert rc == 0
        header = (out / "metrics.csv").read_text().splitlines()[0].split(",")
        rows = (out / "metrics.csv").read_text().splitlines()[1:]
        col = header.index("lambda_now")
        lam = [float(r.split(",")[col]) for r in rows]
        assert lam == [1.0, pytest.approx(1.0 / 1.5, rel=1e-9), pytest.approx(0.5, rel=1e-9)]

    def test_installed_entry_point_smoke(self):
        proc = subprocess.run(
            [sys.executable, "-m", "qneurons.cli", "dump-q-samples",
             "--lambda", "0.1", "--n", "3", "--seed", "0"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.splitlines()[0] == "q"
