import copy
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flakesim.export import (
    CATEGORIES,
    ExportValidationError,
    SceneRecord,
    bbox_from_mask,
    check_qa_consistency,
    dumps_coco,
    dumps_jsonl,
    flake_index_mask,
    gen_qa,
    to_coco,
    validate_coco,
)
from flakesim.synthesis import FlakeInstance
from oracles import bbox_scan


def flake(mask, pos, layers):
    return FlakeInstance(np.asarray(mask, bool), pos, "mos2", layers, 0.65 * layers, np.array([0.3, 0.4, 0.5]), 2.5)


def scene(name, flakes, w=100, h=80):
    return SceneRecord(name, w, h, flakes)


def test_bbox_examples():
    assert bbox_from_mask(np.ones((5, 7), bool), (10, 20)) == [10, 20, 7, 5]
    m = np.zeros((4, 5), bool)
    m[2, 3] = True
    assert bbox_from_mask(m, (0, 0)) == [3, 2, 1, 1]
    with pytest.raises(ValueError):
        bbox_from_mask(np.zeros((3, 3), bool), (0, 0))


@given(st.integers(0, 2**32 - 1))
def test_bbox_matches_scan(seed):
    g = np.random.default_rng(seed)
    m = g.random((int(g.integers(1, 15)), int(g.integers(1, 15)))) < 0.2
    m[int(g.integers(m.shape[0])), int(g.integers(m.shape[1]))] = True
    pos = (int(g.integers(0, 50)), int(g.integers(0, 50)))
    assert bbox_from_mask(m, pos) == bbox_scan(m, pos)


def test_coco_empty():
    d = to_coco([])
    validate_coco(d)
    assert d["images"] == [] and d["annotations"] == []
    assert [(c["id"], c["name"], c["supercategory"]) for c in d["categories"]] == \
        [(1, "Mono", "flake"), (2, "Few", "flake"), (3, "Thick", "flake")]


def test_coco_mono_flake():
    d = to_coco([scene("a.png", [flake(np.ones((3, 4)), (5, 6), 1)])])
    validate_coco(d)
    ann = d["annotations"][0]
    cats = {c["id"]: c["name"] for c in d["categories"]}
    assert cats[ann["category_id"]] == "Mono"
    assert ann["bbox"] == [5, 6, 4, 3] and ann["area"] == 12 and ann["iscrowd"] == 0


@pytest.mark.parametrize("layers,name", [(1, "Mono"), (2, "Few"), (5, "Few"), (6, "Thick")])
def test_coco_category_bins(layers, name):
    d = to_coco([scene("a.png", [flake(np.ones((2, 2)), (0, 0), layers)])])
    assert CATEGORIES[d["annotations"][0]["category_id"] - 1]["name"] == name


def test_coco_roundtrip_and_ids():
    scenes = [scene(f"s{i}.png", [flake(np.ones((2, 3)), (i, 2 * j), 1 + j) for j in range(i + 1)]) for i in range(4)]
    d = to_coco(scenes)
    assert json.loads(dumps_coco(d)) == d
    assert [a["id"] for a in d["annotations"]] == list(range(1, 11))
    assert [a["image_id"] for a in d["annotations"]] == [1, 2, 2, 3, 3, 3, 4, 4, 4, 4]


def test_coco_duplicate_names():
    with pytest.raises(ExportValidationError):
        to_coco([scene("a.png", []), scene("a.png", [])])


def test_validate_rejects_corruption():
    good = to_coco([scene("a.png", [flake(np.ones((3, 4)), (5, 6), 1)])])
    bad = []
    d = copy.deepcopy(good); d["annotations"][0]["image_id"] = 9; bad.append(d)
    d = copy.deepcopy(good); d["annotations"][0]["category_id"] = 7; bad.append(d)
    d = copy.deepcopy(good); d["annotations"][0]["bbox"] = [98, 6, 4, 3]; bad.append(d)
    d = copy.deepcopy(good); del d["images"]; bad.append(d)
    d = copy.deepcopy(good); d["annotations"].append(dict(d["annotations"][0])); bad.append(d)
    for d in bad:
        with pytest.raises(ExportValidationError):
            validate_coco(d)


def _qa(flakes, seed=0):
    sc = scene("x.png", flakes)
    return sc, gen_qa(sc, np.random.default_rng(seed)), to_coco([sc])


def test_qa_three_monolayers():
    _, recs, coco = _qa([flake(np.ones((2, 2)), (10 * i, 0), 1) for i in range(3)] + [flake(np.ones((2, 2)), (50, 50), 4)])
    assert [r["task"] for r in recs] == ["counting", "localization", "verification"]
    assert "3" in recs[0]["answer"]["conclusion"]
    assert recs[2]["answer"]["conclusion"].startswith("Yes")
    for r in recs:
        check_qa_consistency(r, coco)
        assert set(r) == {"image", "task", "question", "answer"}
        assert set(r["answer"]) == {"candidates", "reasoning", "conclusion"}


def test_qa_no_monolayers():
    _, recs, coco = _qa([flake(np.ones((2, 2)), (0, 0), 3)])
    assert recs[2]["answer"]["conclusion"].startswith("No")
    assert " 0 monolayer" in recs[0]["answer"]["conclusion"]
    for r in recs:
        check_qa_consistency(r, coco)


@given(st.integers(0, 2**32 - 1))
def test_localization_set_equality(seed):
    g = np.random.default_rng(seed)
    fl = []
    for _ in range(int(g.integers(0, 8))):
        m = g.random((int(g.integers(1, 8)), int(g.integers(1, 8)))) < 0.6
        m[0, 0] = True
        fl.append(flake(m, (int(g.integers(0, 90)), int(g.integers(0, 70))), int(g.integers(1, 8))))
    _, recs, coco = _qa(fl, seed)
    loc = recs[1]
    import re
    boxes = sorted(tuple(map(int, b)) for b in re.findall(r"\[(\d+), (\d+), (\d+), (\d+)\]", loc["answer"]["conclusion"]))
    truth = sorted(tuple(a["bbox"]) for a in coco["annotations"] if a["category_id"] == 1)
    assert boxes == truth
    for r in recs:
        check_qa_consistency(r, coco)


def test_qa_inconsistency_detected():
    _, recs, coco = _qa([flake(np.ones((2, 2)), (0, 0), 1)])
    r = copy.deepcopy(recs[0])
    r["answer"]["conclusion"] = "There are 2 monolayer flakes in the image."
    with pytest.raises(ExportValidationError):
        check_qa_consistency(r, coco)
    r = copy.deepcopy(recs[2])
    r["answer"]["conclusion"] = "No, the sample does not contain a monolayer flake."
    with pytest.raises(ExportValidationError):
        check_qa_consistency(r, coco)


def test_qa_deterministic_and_jsonl():
    sc = scene("x.png", [flake(np.ones((2, 2)), (0, 0), 1)])
    a = dumps_jsonl(gen_qa(sc, np.random.default_rng(3)))
    assert a == dumps_jsonl(gen_qa(sc, np.random.default_rng(3)))
    lines = a.splitlines()
    assert len(lines) == 3 and all(json.loads(line)["image"] == "x.png" for line in lines)


def test_flake_index_mask():
    fl = [flake(np.ones((2, 2)), (0, 0), 1), flake([[0, 1], [1, 1]], (3, 1), 2)]
    m = flake_index_mask((5, 6), fl)
    assert m.dtype == np.uint8
    assert m[0:2, 0:2].tolist() == [[1, 1], [1, 1]]
    assert m[1, 3] == 0 and m[1, 4] == 2 and m[2, 3] == 2
    assert np.count_nonzero(m) == 7
