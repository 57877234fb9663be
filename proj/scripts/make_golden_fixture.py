#!/usr/bin/env python3
"""Regenerates the golden end-to-end fixtures under tests/data.

Request fingerprints and expected metric values are computed here in Python,
independently of the C++ library, so the C++ tests check against them.
"""

import hashlib
import json
import math
import re
from collections import Counter
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

ESCONV_STRATEGIES = [
    "Question",
    "Restatement or Paraphrasing",
    "Reflection of Feelings",
    "Self-disclosure",
    "Affirmation and Reassurance",
    "Providing Suggestions",
    "Information",
    "Others",
]

COCT_SYSTEM = (
    "'" + ", ".join(ESCONV_STRATEGIES) + "',\n"
    "At the beginning of each generated response, use tags such as <XX> to denote different "
    "concepts, then follow the sentence content.\n"
    "Use chain of concepts to denote the concept transitions."
)

CORPUS = [
    {
        "id": "g1",
        "turns": [
            {"speaker": "seeker", "text": "Work has been crushing me lately and I can't keep up."},
            {"speaker": "supporter", "text": "What part of work feels the heaviest right now?",
             "strategy": "Question"},
        ],
    },
    {
        "id": "g2",
        "topic": "friendship",
        "turns": [
            {"speaker": "seeker", "text": "My best friend stopped answering my messages."},
            {"speaker": "seeker", "text": "I don't know what I did wrong."},
            {"speaker": "supporter",
             "text": "So your friend went quiet and you feel unsure. I have been there too.",
             "strategy": "Restatement or Paraphrasing"},
        ],
    },
    {
        "id": "g3",
        "turns": [
            {"speaker": "supporter", "text": "Hi, what brings you here today?"},
            {"speaker": "seeker", "text": "I finally told my family that I am struggling."},
            {"speaker": "supporter",
             "text": "That took real courage. How did they respond when you told them?",
             "strategy": "Affirmation and Reassurance"},
        ],
    },
]

RESPONSES = {
    "g1": "<Question> What happened at work this week? "
          "<Reflection of Feelings> It sounds like you feel overwhelmed.",
    "g2": "<Restatement or Paraphrasing> So your friend stopped replying to you. "
          "<Self-disclosure> I have felt that way too. "
          "<Providing Suggestions> Maybe you could send a short message.",
    "g3": "<Affirmation and Reassurance> You did the right thing by telling them. "
          "<Question> How did they respond?",
}

ECHO_CORPUS = [
    {"id": "e1", "turns": [{"speaker": "seeker", "text": "I feel tired every single morning."},
                           {"speaker": "supporter", "text": "I feel tired every single morning."}]},
    {"id": "e2", "turns": [{"speaker": "seeker", "text": "My exam results came back today."},
                           {"speaker": "supporter", "text": "My exam results came back today."}]},
    {"id": "e3", "turns": [{"speaker": "seeker", "text": "Nobody at the new school talks to me."},
                           {"speaker": "supporter", "text": "Nobody at the new school talks to me."}]},
]


def fingerprint(messages):
    canonical = "".join(f"{role}\x1f{content}\x1e" for role, content in messages)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def history(turns):
    end = len(turns)
    while end > 0 and turns[end - 1]["speaker"] == "supporter":
        end -= 1
    return [("user" if t["speaker"] == "seeker" else "assistant", t["text"]) for t in turns[:end]]


# --- metric oracle -----------------------------------------------------------

def tokenize(text):
    out, cur = [], ""
    for i, ch in enumerate(text):
        if ch.isspace():
            if cur:
                out.append(cur)
            cur = ""
        elif ch == "'":
            clitic = cur != "" and i + 1 < len(text) and text[i + 1].isascii() and text[i + 1].isalpha()
            if cur:
                out.append(cur)
            cur = "'" if clitic else ""
            if not clitic:
                out.append("'")
        elif ch.isascii() and not ch.isalnum() and ch.isprintable():
            if cur:
                out.append(cur)
            cur = ""
            out.append(ch)
        else:
            cur += ch.lower() if ch.isascii() else ch
    if cur:
        out.append(cur)
    return out


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu2(cand, ref):
    logs = 0.0
    for n in (1, 2):
        c, r = ngrams(cand, n), ngrams(ref, n)
        clipped = sum(min(v, r[k]) for k, v in c.items())
        total = max(len(cand) - n + 1, 0)
        if clipped == 0 or total == 0:
            return 0.0
        logs += 0.5 * math.log(clipped / total)
    bp = 1.0 if len(cand) > len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(logs)


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            table[i + 1][j + 1] = table[i][j] + 1 if a[i] == b[j] else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def cider(cands, refs, big_n=4):
    total = [0.0] * len(cands)
    for n in range(1, big_n + 1):
        df = Counter()
        for r in refs:
            df.update(set(ngrams(r, n)))

        def vec(tokens):
            return {k: v * math.log(len(cands) / max(df[k], 1)) for k, v in ngrams(tokens, n).items()}

        for i, (c, r) in enumerate(zip(cands, refs)):
            gc, gr = vec(c), vec(r)
            nc = math.sqrt(sum(x * x for x in gc.values()))
            nr = math.sqrt(sum(x * x for x in gr.values()))
            if nc and nr:
                total[i] += (sum(x * gr.get(k, 0.0) for k, x in gc.items()) / (nc * nr)) / big_n
    return sum(total) / len(total)


def distinct2(cands):
    grams = [tuple(c[i:i + 2]) for c in cands for i in range(len(c) - 1)]
    return len(set(grams)) / len(grams) if grams else 0.0


def strip_tags(response):
    parts = re.split(r"<[^<>\n]+>", response)
    return " ".join(p.strip() for p in parts if p.strip())


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    dump = lambda rows: "".join(json.dumps(r) + "\n" for r in rows)
    (DATA / "golden_corpus.jsonl").write_text(dump(CORPUS))
    (DATA / "echo_corpus.jsonl").write_text(dump(ECHO_CORPUS))

    entries = {}
    for d in CORPUS:
        messages = [("system", COCT_SYSTEM)] + history(d["turns"])
        entries[fingerprint(messages)] = RESPONSES[d["id"]]
    (DATA / "golden_mock.json").write_text(
        json.dumps({"entries": entries, "fallback": {"kind": "fail"}}, indent=2, sort_keys=True) + "\n")
    (DATA / "echo_mock.json").write_text(json.dumps({"fallback": {"kind": "echo"}}, indent=2) + "\n")

    cands = [tokenize(strip_tags(RESPONSES[d["id"]])) for d in CORPUS]
    refs = [tokenize(d["turns"][-1]["text"]) for d in CORPUS]
    b2 = sum(bleu2(c, r) for c, r in zip(cands, refs)) / len(cands)
    rl = sum(lcs(c, r) / len(r) for c, r in zip(cands, refs)) / len(cands)
    cd = cider(cands, refs)
    d2 = distinct2(cands)
    expected = {
        "bleu2": 100 * b2,
        "rougeL": 100 * rl,
        "cider": 100 * cd,
        "distinct2": 100 * d2,
        "n_examples": len(cands),
        "markdown": "| Method | B-2 | R-L | D-2 | CDr |\n|---|---:|---:|---:|---:|\n"
                    f"| coct | {100 * b2:.4f} | {100 * rl:.4f} | {100 * d2:.4f} | {100 * cd:.4f} |\n",
    }
    (DATA / "golden_expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()
