"""Smoke test for the mbpool extension module.

Build with `maturin develop -m crates/python/Cargo.toml`, or copy
target/release/libmbpool_py.so next to this file as mbpool.so.
"""

import math
import os
import random
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import mbpool


def check_proposals():
    a = (0.0, 0.0, 2.0, 2.0, 0.9)
    b = (1.0, 0.0, 2.0, 2.0, 0.8)
    assert math.isclose(mbpool.iou(a, b), 1.0 / 3.0)
    c = (0.0, 0.0, 2.0, 2.1, 0.95)
    assert mbpool.greedy_nms([a, b, c], 0.5) == [2, 1]
    assert [t[4] for t in mbpool.select_top_k([a, b, c], 2)] == [0.95, 0.9]


def check_pooling():
    rep = mbpool.build_image_representation([1.0, 2.0], [[3.0, 4.0], [5.0, 6.0]])
    assert rep == [3.0, 4.0]
    assert mbpool.build_image_representation([1.0, 2.0], [[3.0, 0.0]], "max") == [3.0, 2.0]
    assert mbpool.tokenize("The place is a <BLANK>.") == ["the", "place", "is", "a", "<BLANK>"]


def check_selection():
    q = [1.0, 0.0]
    assert mbpool.choose_completion(q, [[0.0, 1.0], None, [2.0, 0.1], [-1.0, 0.0]]) == 2
    assert math.isclose(mbpool.cosine_similarity([1.0, 0.0], [1.0, 1.0]), 1 / math.sqrt(2))


def check_cca(tmp):
    rng = random.Random(0)
    x = [[rng.gauss(0, 1) for _ in range(3)] for _ in range(200)]
    y = [[r[0] + 0.1 * rng.gauss(0, 1), rng.gauss(0, 1)] for r in x]
    model = mbpool.CcaModel.fit(x, y)
    rho = model.correlations
    assert len(rho) == 2 and rho[0] > 0.9 and rho[1] < 0.3
    path = os.path.join(tmp, "m.ncca")
    model.save(path)
    again = mbpool.CcaModel.load(path)
    assert again.project(x[0], "image") == model.project(x[0], "image")


def check_table(tmp):
    table = mbpool.EmbeddingTable(2)
    table.insert("beach", [1.0, 0.0])
    table.insert("sand", [0.0, 1.0])
    assert table.encode_answer("Beach sand") == [0.5, 0.5]
    path = os.path.join(tmp, "words.txt")
    table.save(path)
    assert len(mbpool.EmbeddingTable.load(path)) == 2


def check_cli(tmp):
    assert mbpool.run_cli(["synth", "--images", "32", "--concepts", "2", "--vocab", "8",
                           "--proposals", "5", "--out", tmp]) == 0
    assert mbpool.run_cli(["no-such-command"]) == 1


def main():
    with tempfile.TemporaryDirectory() as tmp:
        check_proposals()
        check_pooling()
        check_selection()
        check_cca(tmp)
        check_table(tmp)
        check_cli(tmp)
    print("smoke test ok")


if __name__ == "__main__":
    main()
