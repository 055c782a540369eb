import numpy as np
import pytest
from PIL import Image

from cortex import cli, nn
from cortex.data import make_synthetic, write_image_tree


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def parse(out):
    return dict(line.split(": ", 1) for line in out.splitlines() if ": " in line)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds = make_synthetic(n_per_class=5, size=48, seed=3)
    ds.save(root / "syn.cfds")
    write_image_tree(ds, root / "tree")
    (root / "fast.cfg").write_text("epochs = 2\nbatch_size = 8\n")
    return root


@pytest.fixture(scope="module")
def trained(workspace):
    ckpt = workspace / "model.cfck"
    code = cli.main(["train", "--dataset", str(workspace / "syn.cfds"), "--config", str(workspace / "fast.cfg"),
                     "--seed", "7", "--out", str(ckpt), "--metrics-dir", str(workspace / "m1")])
    assert code == 0
    return ckpt


def test_prepare(capsys, workspace, tmp_path):
    code, out, _ = run(capsys, "prepare", "--input-dir", workspace / "tree", "--output", tmp_path / "a.cfds", "--size", 48)
    assert code == 0
    kv = parse(out)
    assert kv["count[glioma]"] == "5" and kv["total"] == "20"
    run(capsys, "prepare", "--input-dir", workspace / "tree", "--output", tmp_path / "b.cfds", "--size", 48)
    assert (tmp_path / "a.cfds").read_bytes() == (tmp_path / "b.cfds").read_bytes()


def test_prepare_missing_folder(capsys, tmp_path):
    (tmp_path / "t" / "healthy").mkdir(parents=True)
    code, _, err = run(capsys, "prepare", "--input-dir", tmp_path / "t", "--output", tmp_path / "x.cfds")
    assert code == 1
    assert err.startswith("error: missing class directory")


def test_prepare_label_map_override(capsys, tmp_path):
    for name in ("a", "b"):
        (tmp_path / "t" / name).mkdir(parents=True)
        Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "t" / name / "x.png")
    code, out, _ = run(capsys, "prepare", "--input-dir", tmp_path / "t", "--output", tmp_path / "x.cfds",
                       "--label-map", "a=0,b=1", "--size", 8)
    assert code == 0 and parse(out)["count[b]"] == "1"


def test_unknown_flag_rejected(capsys):
    code, _, err = run(capsys, "train", "--bogus")
    assert code == 1 and err.startswith("error:")


def test_train_outputs(trained, workspace):
    report = (workspace / "m1" / "report.txt").read_text()
    assert "accuracy:" in report
    assert (workspace / "m1" / "config.txt").read_text().startswith("epochs = 2")
    curves = (workspace / "m1" / "curves.csv").read_text().splitlines()
    assert curves[0] == "epoch,train_loss,train_accuracy,eval_accuracy,eval_macro_precision"
    assert len(curves) == 3


def test_train_prints_accuracy(capsys, workspace, tmp_path):
    code, out, _ = run(capsys, "train", "--dataset", workspace / "syn.cfds", "--config", workspace / "fast.cfg",
                       "--epochs", 1, "--out", tmp_path / "m.cfck")
    kv = parse(out)
    assert code == 0
    assert 0.0 <= float(kv["final_train_accuracy"]) <= 1.0
    assert (int(kv["train_size"]), int(kv["test_size"])) == (16, 4)


def test_train_bad_split(capsys, workspace, tmp_path):
    code, _, err = run(capsys, "train", "--dataset", workspace / "syn.cfds", "--split", 1.1, "--out", tmp_path / "m")
    assert code == 1 and "split" in err


def test_train_bad_config(capsys, workspace, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rate = -3\n")
    code, _, _ = run(capsys, "train", "--dataset", workspace / "syn.cfds", "--config", cfg, "--out", tmp_path / "m")
    assert code == 1


def test_train_nonfinite_exit_code(capsys, workspace, tmp_path, monkeypatch):
    import cortex.train.loop as loop

    def explode(*a, **k):
        return float("nan"), np.zeros((1, 4))

    monkeypatch.setattr(loop, "cross_entropy_loss", explode)
    code, _, err = run(capsys, "train", "--dataset", workspace / "syn.cfds", "--epochs", 1, "--out", tmp_path / "m")
    assert code == 3 and "epoch 1, batch 0" in err


def test_train_missing_dataset(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--dataset", tmp_path / "none.cfds", "--out", tmp_path / "m")
    assert code == 2 and err.startswith("error:")


def test_evaluate_reconstructs_split(capsys, trained, workspace):
    code, out, _ = run(capsys, "train", "--dataset", workspace / "syn.cfds", "--config", workspace / "fast.cfg",
                       "--seed", 7, "--out", workspace / "again.cfck")
    train_kv = parse(out)
    code, out, _ = run(capsys, "evaluate", "--dataset", workspace / "syn.cfds", "--checkpoint", trained,
                       "--metrics-dir", workspace / "ev")
    kv = parse(out)
    assert code == 0
    assert kv["split_membership"] == train_kv["split_membership"]
    assert int(kv["evaluated"]) == int(train_kv["test_size"])
    from cortex.metrics import read_confusion

    _, counts = read_confusion(workspace / "ev" / "confusion.csv")
    assert counts.sum() == int(train_kv["test_size"])
    assert not (workspace / "ev" / "curves.csv").exists()


def test_evaluate_topology_mismatch(capsys, trained, tmp_path):
    make_synthetic(n_per_class=1, size=64).save(tmp_path / "big.cfds")
    code, _, err = run(capsys, "evaluate", "--dataset", tmp_path / "big.cfds", "--checkpoint", trained)
    assert code == 1 and err.startswith("error: topology mismatch")


def test_predict(capsys, trained, workspace):
    img = next((workspace / "tree" / "pituitary").iterdir())
    outs = []
    for _ in range(2):
        code, out, _ = run(capsys, "predict", "--image", img, "--checkpoint", trained)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    kv = parse(outs[0])
    assert kv["class"] in {"healthy", "glioma", "meningioma", "pituitary"}
    scores = [float(v) for v in kv["scores"].split()]
    assert len(scores) == 4 and sum(scores) == pytest.approx(1.0, abs=1e-5)


def test_predict_bad_image(capsys, trained, tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"nope")
    code, _, _ = run(capsys, "predict", "--image", bad, "--checkpoint", trained)
    assert code == 2


def test_gradcheck_default(capsys):
    code, out, _ = run(capsys, "gradcheck")
    assert code == 0 and parse(out)["status"] == "pass"
    code2, out2, _ = run(capsys, "gradcheck")
    assert out == out2


def test_gradcheck_detects_corruption(capsys, monkeypatch):
    real = nn.dense_backward

    def corrupted(*a, **k):
        g = real(*a, **k)
        return nn.LayerGradients(g.d_input, nn.Tensor(g.d_weights.array * 1.01), g.d_bias)

    monkeypatch.setattr(nn, "dense_backward", corrupted)
    code, _, err = run(capsys, "gradcheck", "--layer", "dense")
    assert code == 4
    assert "dense" in err and "d_weights" in err


def test_synthesize(capsys, tmp_path):
    code, out, _ = run(capsys, "synthesize", "--dataset", tmp_path / "s.cfds", "--per-class", 2, "--size", 16)
    assert code == 0 and parse(out)["total"] == "8"
