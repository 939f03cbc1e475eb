"""Smoke test for the sepll_py extension module.

Build and run:

    maturin develop -m crates/python/Cargo.toml
    python python/smoke_test.py
"""

import math
import os
import tempfile

import sepll_py as sp

CONFIG = """
[train]
max_epochs = 4
seed = 3
"""


def check_ops():
    p = sp.softmax([2.0, 1.0])
    assert abs(p[0] - 1 / (1 + math.exp(-1))) < 1e-12

    l = sp.MatchMatrix(3, 4, [(0, 1), (0, 2), (2, 3)])
    assert l.n == 3 and l.m == 4 and l.nnz() == 3
    targets = sp.build_targets(l)
    assert targets[0] == [0.0, 0.5, 0.5, 0.0]
    assert targets[1] == [0.25] * 4

    t = sp.MappingMatrix([0, 0, 1, 1], 2)
    assert sp.combine([1.0, -1.0], [0.0] * 4, t) == [1.0, 1.0, -1.0, -1.0]
    assert abs(sp.cross_entropy([[0.5, 0.5]], [[1.0, 0.0]]) - math.log(2)) < 1e-12
    assert sp.majority_vote(sp.MatchMatrix(1, 4, [(0, 0), (0, 1), (0, 2)]), t) == [0]

    noisy = sp.inject_noise(sp.MatchMatrix(1, 4, [(0, 0)]), t, 1.0)
    assert noisy.row(0) == [0, 1]

    try:
        sp.MappingMatrix([0, 2], 2)
    except sp.SepllError:
        pass
    else:
        raise AssertionError("out-of-range class accepted")


def check_training():
    data = sp.Dataset.synth(seed=1, n_train=400, n_dev=100, n_test=100)
    matches, mapping = data.one_class_lfs()
    mv = sp.majority_vote(matches["test"], mapping, seed=1)
    gold = data.gold("test")
    mv_acc = sum(a == b for a, b in zip(mv, gold)) / len(gold)

    model = sp.Model.train(CONFIG, dataset=data)
    assert 1 <= len(model.history) <= 4
    report = model.evaluate(data, "test")
    assert report["accuracy"] > 0.75, report["accuracy"]

    mem = model.memorization(data, threshold_k=2)
    for path in ("lf_latent", "full", "task_mapped"):
        assert set(mem[path]) == {"accuracy", "macro_f1", "cross_entropy"}
    assert abs(mem["uniform"]["cross_entropy"] - math.log(mapping.m)) < 1e-12

    texts = data.texts("test")[:20]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.ckpt")
        model.save(path)
        loaded = sp.Model.load(path)
        assert loaded.predict(texts) == model.predict(texts)
        assert loaded.history is None

    try:
        sp.Model.train("[train]\nlearning_rte = 1.0\n", dataset=data)
    except sp.ConfigError:
        pass
    else:
        raise AssertionError("unknown config key accepted")

    print(f"test accuracy {report['accuracy']:.3f} (majority vote {mv_acc:.3f})")


def main():
    check_ops()
    check_training()
    print("ok")


if __name__ == "__main__":
    main()
