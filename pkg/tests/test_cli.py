import numpy as np
import pytest

from corgan import cli
from corgan.data import load_binary_matrix, load_continuous_csv, write_binary_matrix


def run(*args):
    return cli.main([str(a) for a in args])


def artifacts(d):
    # resolved configs embed the output directory, so they are left out
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix != ".cfg"}


def test_synth_corpus_header_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert run("synth-corpus", "--n", 10000, "--m", 20, "--band", 2, "--seed", 7, "--out", tmp_path / name) == 0
    first = (tmp_path / "a" / "corpus.bin").read_text().splitlines()[0]
    assert first == "corgan-bin v1 10000 20"
    assert artifacts(tmp_path / "a") == artifacts(tmp_path / "b")


def test_synth_corpus_rejects_narrow(tmp_path, capsys):
    assert run("synth-corpus", "--n", 10, "--m", 1, "--out", tmp_path) != 0
    assert "m must be >= 2" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# corpus settings\nn = 30\nm = 6\nband = 3\n")
    assert run("synth-corpus", "--config", cfg, "--band", 2, "--out", tmp_path / "o") == 0
    resolved = (tmp_path / "o" / "synth-corpus.cfg").read_text()
    assert "band = 2\n" in resolved and "n = 30\n" in resolved
    assert load_binary_matrix(tmp_path / "o" / "corpus.bin").shape == (30, 6)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 30\nm = 6\nlearning_rate = 3\n")
    assert run("synth-corpus", "--config", cfg, "--out", tmp_path) != 0
    assert "learning_rate" in capsys.readouterr().err


def test_missing_file_names_flag(tmp_path, capsys):
    assert run("eval", "--train-real", tmp_path / "nope.bin", "--syn", tmp_path / "nope.bin",
               "--out", tmp_path) != 0
    assert "--train-real" in capsys.readouterr().err


def test_eval_identity_prints_zero(tmp_path, capsys):
    run("synth-corpus", "--n", 200, "--m", 10, "--out", tmp_path)
    data = tmp_path / "corpus.bin"
    assert run("eval", "--train-real", data, "--syn", data, "--test-real", data, "--runs", 4,
               "--out", tmp_path / "e") == 0
    out = capsys.readouterr().out
    assert "mean abs deviation 0.000000" in out and "max deviation 0.000000" in out
    assert "F1 diff 0.0000 +/- 0.0000" in out
    assert (tmp_path / "e" / "dimension_probability.csv").exists()
    assert (tmp_path / "e" / "dimension_prediction.csv").exists()


def test_eval_width_mismatch(tmp_path, capsys):
    write_binary_matrix(tmp_path / "a.bin", np.zeros((3, 4)))
    write_binary_matrix(tmp_path / "b.bin", np.zeros((3, 5)))
    assert run("eval", "--train-real", tmp_path / "a.bin", "--syn", tmp_path / "b.bin", "--out", tmp_path) != 0
    assert "--syn 5" in capsys.readouterr().err


def test_privacy_audit_exact_copy(tmp_path, capsys):
    # members and non-members live on disjoint columns so only the copies match
    rng = np.random.default_rng(0)
    tr = np.zeros((50, 40))
    te = np.zeros((50, 40))
    tr[:, :20] = rng.random((50, 20)) < 0.5
    te[:, 20:] = rng.random((50, 20)) < 0.5
    tr[:, 0] = te[:, 20] = 1
    write_binary_matrix(tmp_path / "tr.bin", tr)
    write_binary_matrix(tmp_path / "te.bin", te)
    assert run("privacy-audit", "--train-real", tmp_path / "tr.bin", "--test-real", tmp_path / "te.bin",
               "--syn", tmp_path / "tr.bin", "--known", 40, "--sweep-known", "10,40",
               "--out", tmp_path / "p") == 0
    out = capsys.readouterr().out
    assert "precision 1.0000, recall 1.0000" in out
    assert (tmp_path / "p" / "attack.csv").exists() and (tmp_path / "p" / "sweep_known.csv").exists()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Tiny discrete pipeline run twice with identical flags."""
    outs = []
    for name in ("r1", "r2"):
        d = tmp_path_factory.mktemp(name)
        assert run("synth-corpus", "--n", 120, "--m", 12, "--seed", 3, "--out", d) == 0
        common = ["--seed", 3, "--out", d, "--epochs", 2, "--batch-size", 40]
        arch = ["--code-width", 8, "--noise-width", 8, "--mbd-kernels", 4, "--mbd-dim", 2]
        assert run("pretrain-ae", "--data", d / "corpus.bin", *common, *arch) == 0
        assert run("train", "--data", d / "corpus.bin", "--ae", d / "ae.ckpt", *common) == 0
        assert run("generate", "--model", d / "model.ckpt", "--count", 1000, "--seed", 3, "--out", d) == 0
        assert run("privacy-audit", "--train-real", d / "corpus.bin", "--test-real", d / "corpus.bin",
                   "--syn", d / "synthetic.bin", "--known", 20, "--sweep-sizes", "10,30",
                   "--model", d / "model.ckpt", "--seed", 3, "--out", d) == 0
        outs.append(d)
    return outs


def test_generate_rows_are_binary(pipeline):
    rec = load_binary_matrix(pipeline[0] / "synthetic.bin")
    assert rec.shape == (1000, 12)
    assert set(np.unique(rec.values)) <= {0.0, 1.0}


def test_pipeline_reruns_are_byte_identical(pipeline):
    a, b = artifacts(pipeline[0]), artifacts(pipeline[1])
    assert {"ae.ckpt", "model.ckpt", "pretrain_log.csv", "train_log.csv", "synthetic.bin", "attack.csv",
            "sweep_volume.csv"} <= a.keys()
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name
    assert (pipeline[0] / "train.cfg").exists()


def test_train_discrete_needs_ae(tmp_path, capsys):
    run("synth-corpus", "--n", 20, "--m", 8, "--out", tmp_path)
    assert run("train", "--data", tmp_path / "corpus.bin", "--out", tmp_path) != 0
    assert "--ae" in capsys.readouterr().err


def test_continuous_pipeline(tmp_path, capsys):
    assert run("synth-corpus", "--kind", "continuous", "--n", 120, "--m", 16, "--out", tmp_path) == 0
    data = tmp_path / "corpus.csv"
    assert run("train", "--mode", "continuous", "--data", data, "--ae", tmp_path / "x.ckpt",
               "--out", tmp_path) != 0
    assert "continuous mode eliminates the autoencoder" in capsys.readouterr().err
    assert run("train", "--mode", "continuous", "--data", data, "--epochs", 1, "--batch-size", 20,
               "--noise-width", 8, "--mbd-kernels", 4, "--mbd-dim", 2, "--out", tmp_path) == 0
    assert run("generate", "--model", tmp_path / "model.ckpt", "--count", 50, "--out", tmp_path) == 0
    syn = load_continuous_csv(tmp_path / "synthetic.csv")
    real = load_continuous_csv(data)
    assert syn.shape == (50, 16)
    assert abs(syn.labels.mean() - real.labels.mean()) <= 1 / 50 + 1e-12
    assert run("eval", "--mode", "continuous", "--train-real", data, "--test-real", data,
               "--syn", tmp_path / "synthetic.csv", "--out", tmp_path) == 0
    assert "setting B" in capsys.readouterr().out
