import json

import numpy as np
import pytest

from bidigen.data import Example, gen_copy, gen_reverse, gen_xor_template, load_jsonl, save_jsonl
from bidigen.errors import ParseError


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert load_jsonl(tmp_path / "e.jsonl") == []


def test_one_line(tmp_path):
    (tmp_path / "one.jsonl").write_text(json.dumps({"source": "hi", "target": "yes", "gold_class": "yes"}) + "\n")
    assert load_jsonl(tmp_path / "one.jsonl") == [Example("hi", "yes", "YES")]


def test_roundtrip_100_lines(tmp_path):
    rng = np.random.default_rng(0)
    classes = [None, "YES", "NO", "IRRELEVANT", "MORE"]
    exs = [Example(f"src {i} é", " ".join(map(str, rng.integers(0, 9, 4))), classes[i % 5])
           for i in range(100)]
    save_jsonl(exs, tmp_path / "d.jsonl")
    assert load_jsonl(tmp_path / "d.jsonl") == exs


@pytest.mark.parametrize("line,where", [
    ("{not json", 2),
    ('{"source": "a"}', 2),
    ('{"source": "a", "target": 3}', 2),
    ('["a", "b"]', 2),
    ('{"source": "a", "target": "b", "gold_class": "MAYBE"}', 2),
])
def test_malformed_line_reports_line_number(tmp_path, line, where):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"source": "ok", "target": "ok"}\n' + line + "\n")
    with pytest.raises(ParseError) as info:
        load_jsonl(path)
    assert info.value.line == where


def test_copy_task():
    assert gen_copy(0) == []
    exs = gen_copy(500, 8, 10, seed=1)
    assert all(ex.source == ex.target for ex in exs)
    assert all(1 <= len(ex.source.split()) <= 8 for ex in exs)
    assert {t for ex in exs for t in ex.source.split()} <= {str(d) for d in range(10)}


def test_copy_length_histogram_is_uniform():
    n, max_len = 10_000, 8
    lengths = np.array([len(ex.source.split()) for ex in gen_copy(n, max_len, 10, seed=3)])
    counts = np.bincount(lengths, minlength=max_len + 1)[1:]
    p = 1 / max_len
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_reverse_task():
    for ex in gen_reverse(300, 6, 10, seed=2):
        assert ex.target.split() == ex.source.split()[::-1]
        if len(ex.source.split()) == 1 or ex.source.split() == ex.source.split()[::-1]:
            assert ex.target == ex.source


def test_xor_task():
    n = 4000
    exs = gen_xor_template(n, seed=0)
    assert {ex.source for ex in exs} == {"choose"}
    assert {ex.target for ex in exs} <= {"a b", "b a"}
    share = sum(ex.target == "a b" for ex in exs) / n
    assert abs(share - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_generators_are_seeded():
    assert gen_copy(50, seed=4) == gen_copy(50, seed=4)
    assert gen_copy(50, seed=4) != gen_copy(50, seed=5)
