#!/usr/bin/env python3
"""Converts published dialogue releases into the canonical corpus JSONL.

  import_corpus.py esconv ESConv.json out.jsonl
  import_corpus.py dailydialog dialogues_text.txt out.jsonl \
      [--emotions dialogues_emotion.txt] [--acts dialogues_act.txt]

ESConv: the released JSON list; each dialogue has "dialog" turns with
"speaker" (seeker/supporter), "content" and an optional
"annotation.strategy". The dialogue's "emotion_type" is attached to seeker
turns and "problem_type" becomes the topic.

DailyDialog: one dialogue per line, utterances separated by "__eou__".
Speakers alternate; the first speaker is mapped to "seeker". Emotion and act
files hold parallel space-separated integer labels.
"""

import argparse
import json
import sys
from pathlib import Path

DD_EMOTIONS = ["no emotion", "anger", "disgust", "fear", "happiness", "sadness", "surprise"]
DD_ACTS = {1: "inform", 2: "question", 3: "directive", 4: "commissive"}


def esconv(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for i, d in enumerate(data):
        turns = []
        for t in d.get("dialog", []):
            text = " ".join(t.get("content", "").split())
            if not text:
                continue
            turn = {"speaker": t["speaker"], "text": text}
            if t["speaker"] == "seeker" and d.get("emotion_type"):
                turn["emotion"] = d["emotion_type"]
            strategy = (t.get("annotation") or {}).get("strategy")
            if t["speaker"] == "supporter" and strategy:
                turn["strategy"] = strategy
            # Consecutive turns of one speaker are merged into one utterance.
            if turns and turns[-1]["speaker"] == turn["speaker"]:
                turns[-1]["text"] += " " + text
                if "strategy" in turn and "strategy" not in turns[-1]:
                    turns[-1]["strategy"] = turn["strategy"]
            else:
                turns.append(turn)
        if len(turns) < 2:
            continue
        line = {"id": f"esconv-{i}", "turns": turns}
        if d.get("problem_type"):
            line["topic"] = d["problem_type"]
        yield line


def read_labels(path):
    if path is None:
        return None
    return [[int(x) for x in l.split()] for l in Path(path).read_text(encoding="utf-8").splitlines()]


def dailydialog(path, emotions_path=None, acts_path=None):
    emotions = read_labels(emotions_path)
    acts = read_labels(acts_path)
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for i, raw in enumerate(lines):
        utterances = [" ".join(u.split()) for u in raw.split("__eou__")]
        utterances = [u for u in utterances if u]
        if len(utterances) < 2:
            continue
        turns = []
        for k, text in enumerate(utterances):
            turn = {"speaker": "seeker" if k % 2 == 0 else "supporter", "text": text}
            if emotions and k < len(emotions[i]):
                turn["emotion"] = DD_EMOTIONS[emotions[i][k]]
            if acts and k < len(acts[i]):
                turn["strategy"] = DD_ACTS[acts[i][k]]
            turns.append(turn)
        yield {"id": f"dailydialog-{i}", "turns": turns}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="format", required=True)
    e = sub.add_parser("esconv")
    e.add_argument("input")
    e.add_argument("output")
    d = sub.add_parser("dailydialog")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--emotions")
    d.add_argument("--acts")
    args = p.parse_args(argv)

    if args.format == "esconv":
        dialogues = list(esconv(args.input))
    else:
        dialogues = list(dailydialog(args.input, args.emotions, args.acts))
    with open(args.output, "w", encoding="utf-8") as out:
        for d in dialogues:
            out.write(json.dumps(d, ensure_ascii=False) + "\n")
    print(f"{len(dialogues)} dialogues written to {args.output}", file=sys.stderr)


if __name__ == "__main__":
    main()
