"""Smoke test for the pyphrasesum extension against the bundled toy corpus."""

import json
from pathlib import Path

import pyphrasesum

TOY = Path(__file__).resolve().parent.parent / "data" / "toy"


def main():
    corpus = pyphrasesum.Corpus.load(str(TOY / "responses.jsonl"), str(TOY / "annotations.jsonl"))
    assert corpus.lecture_ids == ["L1", "L2", "L3"], corpus.lecture_ids
    assert len(corpus.cells()) == 6
    print(corpus)

    summary = json.loads(pyphrasesum.summarize(corpus, "L2", "confusing", variant="cdsum"))
    bullets = summary["bullets"]
    assert 0 < len(bullets) <= 5
    supporters = [b["supporters"] for b in bullets]
    assert supporters == sorted(supporters, reverse=True)
    for b in bullets:
        print(f"- {b['text']} [{b['supporters']}]")

    p, r, f = pyphrasesum.rouge([["central", "limit"]], [[["central", "limit", "theorem"]]], n=1)
    assert (p, r) == (1.0, 2.0 / 3.0)

    human = [("y", 12), ("g", 9), ("r", 6), ("b", 5), ("m", 3)]
    system = [("y", 11), ("y", 3), ("g", 17), ("r", 7), ("b", 7)]
    p, r, f = pyphrasesum.color_match(system, human)
    assert (round(p, 3), round(r, 3), round(f, 3)) == (0.711, 0.914, 0.8)

    a = pyphrasesum.crossval(corpus, json.dumps({"seed": 5}), jobs=1, format="tsv")
    b = pyphrasesum.crossval(corpus, json.dumps({"seed": 5}), jobs=3, format="tsv")
    assert a == b and a.startswith("course\tlecture\tprompt\tsystem\tmetric\tP\tR\tF\n")

    try:
        pyphrasesum.crossval(corpus, json.dumps({"variant": "nonsense"}))
    except ValueError as e:
        print("rejected bad config:", e)
    else:
        raise AssertionError("bad config accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
