#!/usr/bin/env python3
"""Writes the bundled synthetic corpus under fixtures/synthetic60.

62 catalog videos over four search terms: one video is listed under two
terms and two are not English, so ingest keeps 60. Every draw comes from a
seeded random.Random, so rerunning the script rewrites identical files.
"""

import json
import math
import random
import re
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "synthetic60"
rng = random.Random(20240611)

TERMS = ["diabetes care", "blood pressure", "heart health", "insulin basics"]

LEXICON = [
    ("diabetes", "disease"), ("type 2 diabetes", "disease"), ("hypertension", "disease"),
    ("heart failure", "disease"), ("stroke", "disease"), ("obesity", "disease"),
    ("insulin", "treatment"), ("metformin", "treatment"), ("statin", "treatment"),
    ("beta blocker", "treatment"), ("diuretic", "treatment"),
    ("a1c test", "test"), ("blood glucose test", "test"), ("lipid panel", "test"), ("ecg", "test"),
    ("angioplasty", "procedure"), ("bypass surgery", "procedure"), ("dialysis", "procedure"),
    ("glucose meter", "medical_device"), ("insulin pump", "medical_device"), ("blood pressure cuff", "medical_device"),
    ("cardiologist", "medical_professional"), ("endocrinologist", "medical_professional"), ("nurse", "medical_professional"),
]

FILLER = ("today we talk about how you can stay well and what it means for your daily life and "
          "family so let us look at this together with some thoughts on food sleep walking and "
          "stress at home or work").split()
PLAIN = "simple step first next remember easy short tip example summary".split()
JARGON = "pathophysiology etiology mechanism modulation systemic homeostasis regulatory".split()
META_MED = "doctor clinical explained guide treatment medicine".split()
META_LOW = "vlog story journey motivation lifestyle daily".split()
META_PLAIN = "easy beginners quick tips basics".split()
META_DENSE = "lecture advanced review overview seminar".split()

PEMAT_ITEMS = [f"P{i:02d}" for i in range(1, 13)]


def lex_phrases():
    return [t for t, _ in LEXICON]


def tokens(text):
    return [t.lower() for t in re.findall(r"[^\W_]+", text)]


def transcript(med_high, und_high):
    n = rng.randint(40, 70)
    words = [rng.choice(FILLER) for _ in range(n)]
    style = PLAIN if und_high else JARGON
    for _ in range(rng.randint(4, 8)):
        words.insert(rng.randrange(len(words) + 1), rng.choice(style))
    target = rng.uniform(0.12, 0.25) if med_high else rng.uniform(0.0, 0.02)
    text_tokens = len(words)
    covered = 0
    while covered < target * (text_tokens + covered):
        term = rng.choice(lex_phrases())
        words.insert(rng.randrange(len(words) + 1), term)
        covered += len(term.split())
        text_tokens += len(term.split()) - 1
    return " ".join(words)


def rubric(und_high):
    rows = []
    p_agree = rng.uniform(0.78, 0.95) if und_high else rng.uniform(0.2, 0.55)
    for item in PEMAT_ITEMS:
        u = rng.random()
        if u < 0.12:
            rows.append((item, "na"))
        else:
            rows.append((item, "agree" if rng.random() < p_agree else "disagree"))
    agree = sum(1 for _, r in rows if r == "agree")
    rated = sum(1 for _, r in rows if r != "na")
    score = agree / rated if rated else 0.0
    if (score >= 0.7) != und_high:
        return rubric(und_high)
    return rows


def record(vid, med_high, und_high, gender, fv, language, views):
    meta = (META_MED if med_high else META_LOW)
    plain = (META_PLAIN if und_high else META_DENSE)
    title_words = [rng.choice(meta), rng.choice(plain), rng.choice(["diabetes", "heart", "pressure", "sugar"])]
    desc_words = [rng.choice(meta + plain + FILLER) for _ in range(rng.randint(8, 16))]
    tags = sorted({rng.choice(meta), rng.choice(plain)})
    rec = {
        "video_id": vid,
        "channel_id": f"ch{rng.randint(1, 12):02d}",
        "publish_time": f"2020-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}T{rng.randint(0, 23):02d}:00:00Z",
        "title": " ".join(title_words).capitalize(),
        "description": " ".join(desc_words),
        "tags": tags,
        "duration_seconds": rng.randint(60, 1800),
        "definition": rng.choice(["sd", "hd"]),
        "captions_available": rng.random() < 0.6,
        "view_count": views,
        "like_count": views // rng.randint(20, 60),
        "dislike_count": views // rng.randint(200, 900),
        "comment_count": views // rng.randint(100, 400),
        "subscriber_count": rng.randint(1000, 500000),
    }
    if language:
        rec["language"] = language
    return rec


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    ids = [f"v{i:03d}" for i in range(1, 63)]
    foreign = {"v020": "es", "v050": None}
    videos = {}
    truth = {}
    annotations = []
    english = [v for v in ids if v not in foreign]
    # Demographic layout of the 60 English videos.
    roles = (["zero"] * 8 + ["multi"] * 5 + ["off_topic"] * 2 + ["unreadable"] * 2 + ["silent"] * 2
             + ["zero_views"] * 2 + ["single"] * 39)
    rng.shuffle(roles)
    for vid, role in zip(english, roles):
        med_high = rng.random() < 0.55
        und_high = rng.random() < 0.55
        truth[vid] = (med_high, und_high)
        ann = {"video_id": vid}
        if role == "zero":
            gender = rng.choice(["male", "female"])
            ann.update(actor_count=0, face_visible=False, gender=gender, age_bracket="unknown", detection_source="speech")
        elif role == "multi":
            ann.update(actor_count=rng.randint(2, 3), face_visible=True, gender=rng.choice(["male", "female", "unknown"]),
                       age_bracket="unknown", detection_source="face")
        else:
            gender = "male" if rng.random() < 0.6 else "female"
            fv = rng.random() < 0.7
            age = rng.choice(["under20", "b20_30", "b30_40", "b40_50", "over50"])
            ann.update(actor_count=1, face_visible=fv, gender=gender,
                       age_bracket=age if fv else rng.choice([age, "unknown"]),
                       detection_source="face" if fv else "speech")
            if role == "off_topic":
                ann["off_topic"] = True
            if role == "unreadable":
                ann.update(unreadable=True, gender="unknown", age_bracket="unknown")
            if role == "silent":
                ann.update(narration=False, gender="unknown", age_bracket="unknown")
        annotations.append(ann)
        g = 1.0 if ann["gender"] == "male" else 0.0
        fv = 1.0 if ann["face_visible"] else 0.0
        log_views = 8.0 + 0.6 * g - 0.4 * fv + 0.5 * med_high + 0.3 * und_high + rng.gauss(0.0, 0.8)
        views = 0 if role == "zero_views" else max(1, int(round(math.exp(log_views))))
        videos[vid] = record(vid, med_high, und_high, ann["gender"], fv, "en" if rng.random() < 0.7 else None, views)
    videos["v020"] = record("v020", True, True, "male", 1, "es", 5000)
    videos["v020"]["title"] = "Consejos de salud"
    v050 = record("v050", True, True, "male", 1, None, 5000)
    v050["title"] = "糖尿病の基本"
    v050["description"] = "血圧と心臓の健康についての動画です"
    videos["v050"] = v050

    # Catalog: 16 results per term; v005 is listed under the first two terms.
    lists = [ids[0:16], ids[16:31], ids[31:46], ids[46:62]]
    lists[1].insert(1, "v005")
    (OUT / "catalog").mkdir(exist_ok=True)
    for term, members in zip(TERMS, lists):
        name = re.sub(r"[^0-9a-z]+", "_", term.lower()).strip("_") + ".jsonl"
        with open(OUT / "catalog" / name, "w") as f:
            for vid in members:
                f.write(json.dumps(videos[vid], ensure_ascii=False) + "\n")
    (OUT / "terms.txt").write_text("\n".join(TERMS) + "\n")

    with open(OUT / "lexicon.tsv", "w") as f:
        f.write("# term\tsemtype\n")
        for term, sem in LEXICON:
            f.write(f"{term}\t{sem}\n")

    with open(OUT / "transcripts.tsv", "w") as f:
        for vid in english:
            f.write(f"{vid}\t{transcript(*truth[vid])}\n")

    # Expert-rated subset: 24 videos, stratified on both axes.
    strata = {}
    for vid in english:
        strata.setdefault(truth[vid], []).append(vid)
    rated = []
    for key in sorted(strata):
        rated += strata[key][:6]
    rated.sort()
    with open(OUT / "rubrics.csv", "w") as f:
        f.write("video_id,criterion_id,response\n")
        for vid in rated:
            for item, resp in rubric(truth[vid][1]):
                f.write(f"{vid},{item},{resp}\n")

    with open(OUT / "annotations.jsonl", "w") as f:
        for ann in annotations:
            f.write(json.dumps(ann) + "\n")

    # Scripted reviewer answers: the hidden truth for every video on both axes.
    with open(OUT / "resolver.jsonl", "w") as f:
        for i, vid in enumerate(english):
            for dim, level in (("MED", truth[vid][0]), ("UND", truth[vid][1])):
                f.write(json.dumps({"video_id": vid, "dimension": dim, "label": "high" if level else "low",
                                    "resolver": f"expert_{'ab'[i % 2]}"}) + "\n")
    with open(OUT / "truth.jsonl", "w") as f:
        for vid in english:
            f.write(json.dumps({"video_id": vid, "med": "high" if truth[vid][0] else "low",
                                "und": "high" if truth[vid][1] else "low", "source": "human"}) + "\n")


if __name__ == "__main__":
    main()
