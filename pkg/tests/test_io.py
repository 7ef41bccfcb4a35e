import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from leaky_asm import io, krw
from leaky_asm.sandpile import RATIONAL, HeightField, ToppleRule, point_source, stabilize


def test_fmt():
    assert io.fmt(Fraction(3, 4)) == "3/4"
    assert io.fmt(Fraction(8, 2)) == "4"
    assert io.fmt(7) == "7"
    assert io.fmt(0.1) == "0.1"
    assert float(io.fmt(1 / 3)) == 1 / 3


def test_heights_csv_roundtrip_rational(tmp_path):
    res = stabilize(point_source(5, 1, RATIONAL), ToppleRule.uniform(Fraction(5, 4)))
    p = io.write_heights_csv(res, tmp_path / "h.csv")
    raw = p.read_bytes()
    assert raw.startswith(b"x,y,height\n") and b"\r" not in raw
    rows = {(int(r["x"]), int(r["y"])): r["height"] for r in csv.DictReader(open(p))}
    assert rows == {(0, 0): "0", (1, 0): "1", (-1, 0): "1", (0, 1): "1", (0, -1): "1"}
    back = io.read_heights_csv(p, RATIONAL)
    assert back[1, 0] == 1 and back.total_mass() == 4


def test_heights_csv_roundtrip_float(tmp_path):
    res = stabilize(point_source(1e6, 1), ToppleRule.uniform(1.7))
    p = io.write_heights_csv(res, tmp_path / "h.csv")
    back = io.read_heights_csv(p)
    R = max(back.radius, res.radius)
    assert np.array_equal(back.padded(R).cells, res.final.padded(R).cells)


def test_odometer_csv(tmp_path):
    res = stabilize(point_source(100, 1, RATIONAL), ToppleRule.uniform(2))
    p = io.write_odometer_csv(res, tmp_path / "u.csv")
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == res.visited_count
    origin = [r for r in rows if r["x"] == "0" and r["y"] == "0"][0]
    assert Fraction(origin["u"]) == 8 * int(origin["topples"])


def test_logp_csv_and_json(tmp_path):
    fld = krw.death_prob_dp(ToppleRule.uniform(2), tail_eps=1e-6)
    p = io.write_logp_csv(fld, tmp_path / "p.csv")
    rows = list(csv.DictReader(open(p)))
    assert sum(np.exp(float(r["log_p"])) for r in rows) == pytest.approx(fld.total(), rel=1e-14)
    j = io.write_json({"b": Fraction(1, 3), "a": np.float64(2.5), "c": np.arange(3)},
                      tmp_path / "m.json")
    text = j.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 2.5, "b": "1/3", "c": [0, 1, 2]}


def test_render_all_zero_is_background(tmp_path):
    f = HeightField.zeros(1)
    img = io.read_ppm(io.render_ppm(f, tmp_path / "z.ppm", threshold=4))
    assert img.shape == (3, 3, 3)
    assert np.all(img == np.array(io.BACKGROUND, np.uint8))


def test_render_single_topple_buckets(tmp_path):
    res = stabilize(point_source(5, 1), ToppleRule.uniform(1.25))
    img = io.read_ppm(io.render_ppm(res, tmp_path / "s.ppm"))
    R = res.radius
    assert tuple(img[R, R]) == io.PALETTE[0]
    for r, col in ((R - 1, R), (R + 1, R), (R, R - 1), (R, R + 1)):
        assert tuple(img[r, col]) == io.PALETTE[1]
    assert tuple(img[R - 1, R - 1]) == io.BACKGROUND


def test_render_orientation(tmp_path):
    f = HeightField.zeros(1)
    f[0, 1] = 3.0  # up
    img = io.read_ppm(io.render_ppm(f, tmp_path / "o.ppm", threshold=4))
    assert tuple(img[0, 1]) != io.BACKGROUND  # top row is the largest y
    assert tuple(img[2, 1]) == io.BACKGROUND


def test_render_deterministic(tmp_path):
    res = stabilize(point_source(1e10, 1), ToppleRule.uniform(2))
    a = io.render_ppm(res, tmp_path / "a.ppm").read_bytes()
    b = io.render_ppm(res, tmp_path / "b.ppm").read_bytes()
    assert a == b and a.startswith(b"P6\n")


def test_render_errors(tmp_path):
    with pytest.raises(ValueError):
        io.render_ppm(HeightField(np.zeros((0, 0))), tmp_path / "e.ppm")
    f = HeightField.zeros(1)
    f[0, 0] = np.inf
    with pytest.raises(ValueError):
        io.render_ppm(f, tmp_path / "e.ppm", threshold=4)
