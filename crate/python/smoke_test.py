"""Smoke test for the hptr_py extension.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""

import os
import tempfile

import hptr_py


def check_dependency():
    train = hptr_py.gen_synthetic_dep(seed=3, count=24, max_len=8, vocab=40, labels=4)
    parser = hptr_py.DependencyParser(
        train,
        seed=5,
        encoder_size=32,
        encoder_layers=1,
        decoder_size=32,
        arc_mlp=32,
        label_mlp=16,
        word_dim=16,
        pos_dim=8,
        char_dim=8,
        char_filters=8,
    )
    logs = parser.train(train, epochs=3, batch_size=4, lr=0.002, patience=100)
    assert len(logs) == 3 and all(l["loss"] > 0 for l in logs), logs

    words = ["w1", "w2", "w3", "w4"]
    heads, labels = parser.parse(words, beam=4)
    assert len(heads) == len(labels) == 4
    assert hptr_py.is_valid_tree(heads), heads

    pred = parser.parse_conllu(train)
    scores = hptr_py.score_dependencies(train, pred)
    assert 0.0 <= scores["las"] <= scores["uas"] <= 100.0
    assert scores == parser.evaluate(train)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "dep.json")
        parser.save(path)
        again = hptr_py.DependencyParser.load(path)
        assert again.parse(words, beam=4) == (heads, labels)
        assert again.num_params == parser.num_params
    print(f"dependency: uas={scores['uas']:.2f} las={scores['las']:.2f}")


def check_discourse():
    train = hptr_py.gen_synthetic_rst(seed=4, count=16, max_edus=6, labels=6)
    parser = hptr_py.DiscourseParser(
        train,
        seed=2,
        labels="corpus",
        word_dim=16,
        encoder_size=16,
        decoder_size=16,
        label_mlp=16,
    )
    logs = parser.train(train, epochs=2, batch_size=4)
    assert len(logs) == 2

    tree = parser.parse(["the first unit", "a second one", "and a third ."])
    assert tree.startswith("(") and tree.count("(EDU") == 3, tree

    scores = parser.evaluate(train)
    self_scores = hptr_py.score_discourse(train, train)
    assert self_scores["span_f1"] == 100.0
    assert 0.0 <= scores["relation_f1"] <= scores["span_f1"] <= 100.0
    assert 1 <= len(parser.labels) <= 39
    print(f"discourse: span={scores['span_f1']:.2f} relation={scores['relation_f1']:.2f}")


def check_errors():
    train = hptr_py.gen_synthetic_dep(seed=1, count=2)
    try:
        hptr_py.DependencyParser(train, variant="Q")
    except ValueError as e:
        assert "variant" in str(e).lower() or "Q" in str(e), e
    else:
        raise AssertionError("invalid variant accepted")
    assert not hptr_py.is_valid_tree([2, 1])


if __name__ == "__main__":
    check_dependency()
    check_discourse()
    check_errors()
    print("ok")
