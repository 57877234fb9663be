import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "scripts"))

import import_corpus  # noqa: E402


def test_esconv_merges_consecutive_turns(tmp_path):
    src = tmp_path / "ESConv.json"
    src.write_text(json.dumps([{
        "emotion_type": "anxiety", "problem_type": "job crisis",
        "dialog": [
            {"speaker": "seeker", "content": "Hi."},
            {"speaker": "seeker", "content": "I lost  my job."},
            {"speaker": "supporter", "content": "That sounds hard.",
             "annotation": {"strategy": "Reflection of Feelings"}},
        ],
    }]))
    (d,) = import_corpus.esconv(src)
    assert d["topic"] == "job crisis"
    assert d["turns"][0] == {"speaker": "seeker", "text": "Hi. I lost my job.", "emotion": "anxiety"}
    assert d["turns"][1]["strategy"] == "Reflection of Feelings"


def test_dailydialog_labels_and_short_dialogues(tmp_path):
    text = tmp_path / "t.txt"
    text.write_text("Hi . __eou__ Hello ? __eou__ Bye . __eou__\nalone __eou__\n")
    emo = tmp_path / "e.txt"
    emo.write_text("0 4 5\n0\n")
    act = tmp_path / "a.txt"
    act.write_text("1 2 3\n1\n")
    ds = list(import_corpus.dailydialog(text, emo, act))
    assert len(ds) == 1
    turns = ds[0]["turns"]
    assert [t["speaker"] for t in turns] == ["seeker", "supporter", "seeker"]
    assert [t["emotion"] for t in turns] == ["no emotion", "happiness", "sadness"]
    assert [t["strategy"] for t in turns] == ["inform", "question", "directive"]


def test_cli_writes_jsonl(tmp_path):
    text = tmp_path / "t.txt"
    text.write_text("a __eou__ b __eou__\nc __eou__ d __eou__\n")
    out = tmp_path / "out.jsonl"
    import_corpus.main(["dailydialog", str(text), str(out)])
    lines = out.read_text().splitlines()
    assert [json.loads(l)["id"] for l in lines] == ["dailydialog-0", "dailydialog-1"]
