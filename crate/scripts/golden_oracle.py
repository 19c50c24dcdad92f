#!/usr/bin/env python3
"""Independent recomputation of the synthetic60 report files.

Reads the fixture inputs plus three pipeline outputs that depend on the
pipeline's own random streams (labels.jsonl, scores.csv, fairness/split.csv)
and writes every derived table under fixtures/synthetic60/golden/.

Usage: golden_oracle.py <pipeline out dir>
"""

import csv
import json
import math
import re
import shutil
import sys
import unicodedata
from collections import Counter, OrderedDict
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib
from scipy import stats
from sklearn.linear_model import Lasso
from sklearn.metrics import roc_auc_score, roc_curve

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "synthetic60"
GOLDEN = FIXTURE / "golden"
SLACK = 1e-9


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(l) for l in f if l.strip()]


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["NA" if v is None else fmt(v) for v in r])


def fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "NA"
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- config

def load_config():
    with open(FIXTURE / "config.toml", "rb") as f:
        cfg = tomllib.load(f)
    return {
        "seed": cfg["seed"],
        "per_term": cfg.get("ingest", {}).get("per_term", 50),
        "language": cfg.get("ingest", {}).get("language", "en"),
        "ascii": cfg.get("ingest", {}).get("ascii", 0.9),
        "med": cfg.get("measure", {}).get("med", 0.05),
        "und": cfg.get("measure", {}).get("und", 0.7),
        "threshold": {d: cfg.get("cotrain", {}).get(d, {}).get("threshold", 0.5) for d in ("MED", "UND")},
        "train_fraction": cfg.get("fairness", {}).get("train_fraction", 0.7),
        "alpha": cfg.get("fairness", {}).get("alpha", 0.05),
        "delta": cfg.get("fairness", {}).get("delta", 0.2),
        "top_k": cfg.get("fairness", {}).get("top_k", 10),
        "attribute": cfg.get("fairness", {}).get("attribute", "gender"),
    }


# ---------------------------------------------------------------- ingest

def term_file(term):
    parts = re.split(r"[^0-9a-zA-Z]+", term.strip().lower())
    return "_".join(p for p in parts if p) + ".jsonl"


def ingest(cfg):
    terms = [l.strip() for l in open(FIXTURE / "terms.txt") if l.strip() and not l.startswith("#")]
    raw = []
    for term in terms:
        results = read_jsonl(FIXTURE / "catalog" / term_file(term))[: cfg["per_term"]]
        for rank, r in enumerate(results, start=1):
            raw.append(dict(r, search_term=term, rank=rank))
    # Best rank wins, earliest on ties; the survivor sits where the id first
    # appeared.
    kept = OrderedDict()
    for r in raw:
        prev = kept.get(r["video_id"])
        if prev is None or r["rank"] < prev["rank"]:
            kept[r["video_id"]] = r
    deduped = list(kept.values())
    lang = cfg["language"].split("-")[0].lower()

    def english(r):
        tag = r.get("language")
        if tag:
            return tag.split("-")[0].lower() == lang
        text = r["title"] + " " + r["description"]
        return bool(text) and sum(c.isascii() for c in text) / len(text) >= cfg["ascii"]

    corpus = [r for r in deduped if english(r)]
    write_csv(
        GOLDEN / "ingest_report.csv",
        ["stage", "value", "detail"],
        [["raw", len(raw), ""], ["deduplicated", len(deduped), ""], ["language", len(corpus), cfg["language"]]],
    )
    write_csv(
        GOLDEN / "corpus_index.csv",
        ["video_id", "search_term", "rank", "view_count"],
        [[r["video_id"], r["search_term"], r["rank"], r["view_count"]] for r in corpus],
    )
    return corpus


# ---------------------------------------------------------------- measure

def tokens(text):
    out, cur = [], []
    for ch in text:
        if ch.isspace() or unicodedata.category(ch).startswith("P"):
            if cur:
                out.append("".join(cur).lower())
                cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur).lower())
    return out


def measure(cfg, corpus):
    lexicon = {}
    for line in open(FIXTURE / "lexicon.tsv"):
        if not line.strip() or line.startswith("#"):
            continue
        term, _ = line.rstrip("\n").split("\t")
        lexicon[" ".join(tokens(term))] = True
    longest = max(len(k.split()) for k in lexicon)
    transcripts = {}
    for line in open(FIXTURE / "transcripts.tsv"):
        vid, text = line.rstrip("\n").split("\t", 1)
        transcripts[vid] = text
    answers = {}
    with open(FIXTURE / "rubrics.csv") as f:
        for row in csv.DictReader(f):
            answers.setdefault(row["video_id"], []).append(row["response"])
    rows, seeds = [], []
    for r in corpus:
        vid = r["video_id"]
        if vid not in transcripts:
            raise SystemExit(f"{vid} has no transcript; the fixture is expected to cover every video")
        toks = tokens(transcripts[vid])
        covered, hits, i = 0, 0, 0
        while i < len(toks):
            n = 0
            for k in range(min(longest, len(toks) - i), 0, -1):
                if " ".join(toks[i : i + k]) in lexicon:
                    n = k
                    break
            if n:
                hits += 1
                covered += n
                i += n
            else:
                i += 1
        score = covered / len(toks) if toks else 0.0
        med = "high" if score >= cfg["med"] else "low"
        pemat = und = None
        if vid in answers:
            scored = [a for a in answers[vid] if a != "na"]
            pemat = sum(a == "agree" for a in scored) / len(scored)
            und = "high" if pemat >= cfg["und"] else "low"
            seeds.append([vid, med, und])
        rows.append([vid, "transcript", len(toks), hits, score, med, pemat, und])
    write_csv(
        GOLDEN / "measures.csv",
        ["video_id", "text_source", "tokens", "term_hits", "med_score", "med_level", "pemat_score", "und_level"],
        rows,
    )
    write_csv(GOLDEN / "seed_labels.csv", ["video_id", "med", "und"], seeds)


# ---------------------------------------------------------------- labels

def merged_labels(out):
    """video_id -> {"MED": (level, source), "UND": (level, source)}"""
    merged = {}
    for l in read_jsonl(out / "labels.jsonl"):
        for dim, key in (("MED", "med"), ("UND", "und")):
            if l[key] != "unlabeled":
                slot = merged.setdefault(l["video_id"], {})
                if dim in slot and slot[dim][0] != l[key]:
                    raise SystemExit(f"conflicting {dim} labels for {l['video_id']}")
                slot[dim] = (l[key], l["source"])
    return merged


def summary(corpus, merged):
    by_id = {r["video_id"]: r for r in corpus}
    rows = []
    for dim, name in (("MED", "med"), ("UND", "und")):
        for level in ("low", "high"):
            recs = [by_id[v] for v, m in merged.items() if dim in m and m[dim][0] == level]
            subs = [r["subscriber_count"] for r in recs if r.get("subscriber_count") is not None]
            rows.append([
                f"{level}_{name}",
                len(recs),
                float(np.mean([r["view_count"] for r in recs])) if recs else None,
                float(np.mean(subs)) if subs else None,
            ])
    write_csv(GOLDEN / "summary.csv", ["stratum", "videos", "mean_views", "mean_subscribers"], rows)


# ---------------------------------------------------------------- evaluate

def read_scores(out):
    with open(out / "scores.csv") as f:
        return {r["video_id"]: (float(r["med_score"]), float(r["und_score"])) for r in csv.DictReader(f)}


def evaluate(cfg, corpus, merged, scores):
    ids = {r["video_id"] for r in corpus}
    truth = {t["video_id"]: t for t in read_jsonl(FIXTURE / "truth.jsonl")}
    for col, dim in enumerate(("MED", "UND")):
        key = dim.lower()
        chosen = sorted(
            v for v, t in truth.items()
            if v in ids and t[key] != "unlabeled" and merged.get(v, {}).get(dim, (None, None))[1] != "human"
        )
        y = np.array([truth[v][key] == "high" for v in chosen])
        s = np.array([scores[v][col] for v in chosen])
        pred = s >= cfg["threshold"][dim]

        def cls(positive):
            t, p = (y, pred) if positive else (~y, ~pred)
            tp = int(np.sum(t & p))
            prec = tp / int(np.sum(p)) if np.sum(p) else None
            rec = tp / int(np.sum(t)) if np.sum(t) else None
            f1 = None
            if prec is not None and rec is not None:
                f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
            return int(np.sum(t)), prec, rec, f1

        rows = [["n", len(chosen)], ["threshold", cfg["threshold"][dim]]]
        f1s = []
        for name, positive in (("high", True), ("low", False)):
            sup, prec, rec, f1 = cls(positive)
            rows += [[f"{name}_support", sup], [f"{name}_precision", prec], [f"{name}_recall", rec], [f"{name}_f1", f1]]
            f1s.append(f1)
        rows.append(["accuracy", float(np.mean(pred == y))])
        rows.append(["macro_f1", None if None in f1s else (f1s[0] + f1s[1]) / 2])
        both = 0 < y.sum() < len(y)
        rows.append(["auc", float(roc_auc_score(y, s)) if both else None])
        write_csv(GOLDEN / "evaluation" / f"{dim}.csv", ["metric", "value"], rows)
        fpr, tpr, _ = roc_curve(y, s, drop_intermediate=False)
        write_csv(GOLDEN / "evaluation" / f"roc_{dim}.csv", ["fpr", "tpr"], [[float(a), float(b)] for a, b in zip(fpr, tpr)])


# ---------------------------------------------------------------- frame

STEPS = ["unlabeled", "unannotated", "multi_actor", "off_topic", "unreadable", "no_narration", "zero_views"]
AGES = ["under20", "b20_30", "b30_40", "b40_50", "over50", "unknown"]


def build_frame(corpus, merged):
    ann = {a["video_id"]: a for a in read_jsonl(FIXTURE / "annotations.jsonl")}
    removed = Counter()
    frame = []
    for r in corpus:
        vid = r["video_id"]
        m = merged.get(vid, {})
        a = ann.get(vid)
        if "MED" not in m or "UND" not in m:
            step = "unlabeled"
        elif a is None:
            step = "unannotated"
        elif a["actor_count"] > 1:
            step = "multi_actor"
        elif a.get("off_topic", False):
            step = "off_topic"
        elif a.get("unreadable", False):
            step = "unreadable"
        elif not a.get("narration", True):
            step = "no_narration"
        elif r["view_count"] == 0:
            step = "zero_views"
        else:
            step = None
        if step:
            removed[step] += 1
            continue
        if a["gender"] == "unknown":
            raise SystemExit(f"{vid} is analyzable but has no gender")
        frame.append({
            "video_id": vid,
            "fv": int(a["face_visible"]),
            "gender": a["gender"],
            "male": int(a["gender"] == "male"),
            "age": a["age_bracket"],
            "actors": a["actor_count"],
            "med": int(m["MED"][0] == "high"),
            "und": int(m["UND"][0] == "high"),
            "views": r["view_count"],
            "y": math.log(r["view_count"]),
        })
    remaining = len(corpus)
    rows = [["total", 0, remaining]]
    for s in STEPS:
        remaining -= removed[s]
        rows.append([s, removed[s], remaining])
    write_csv(GOLDEN / "fairness" / "funnel.csv", ["step", "removed", "remaining"], rows)
    return frame


def descriptives(frame):
    cells = Counter((f["med"], f["und"], f["gender"], f["fv"]) for f in frame)
    rows = [[m, u, g, v, cells[(m, u, g, v)]] for m in (0, 1) for u in (0, 1) for g in ("female", "male") for v in (0, 1)]
    write_csv(GOLDEN / "fairness" / "crosstab.csv", ["med", "und", "gender", "fv", "count"], rows)
    ages = Counter((f["age"], f["gender"]) for f in frame if f["actors"] == 1)
    rows = [[a, g, ages[(a, g)]] for a in AGES for g in ("female", "male") if ages[(a, g)]]
    write_csv(GOLDEN / "fairness" / "age_gender.csv", ["age_bracket", "gender", "count"], rows)
    cols = OrderedDict([
        ("FV", [f["fv"] for f in frame]),
        ("Gender", [f["male"] for f in frame]),
        ("MED", [f["med"] for f in frame]),
        ("UND", [f["und"] for f in frame]),
        ("viewCount", [f["views"] for f in frame]),
    ])
    rows = []
    for a, xa in cols.items():
        for b, xb in cols.items():
            if np.std(xa) == 0 or np.std(xb) == 0:
                rows.append([a, b, None, None])
            elif a == b:
                rows.append([a, b, 1.0, 0.0])
            else:
                res = stats.pearsonr(xa, xb)
                rows.append([a, b, float(res.statistic), float(res.pvalue)])
    write_csv(GOLDEN / "fairness" / "correlations.csv", ["var1", "var2", "r", "p_value"], rows)


# ---------------------------------------------------------------- models

DEMOGRAPHIC = ["FV", "Gender", "FV:Gender"]
WITH_LABELS = DEMOGRAPHIC + ["MED", "UND"]


def design(rows, names):
    def col(name, f):
        return {
            "FV": f["fv"],
            "Gender": f["male"],
            "FV:Gender": f["fv"] * f["male"],
            "MED": f["med"],
            "UND": f["und"],
        }[name]

    return np.array([[col(n, f) for n in names] for f in rows], dtype=float)


def ols(train, names):
    x = np.column_stack([np.ones(len(train)), design(train, names)])
    y = np.array([f["y"] for f in train])
    n, p = x.shape
    if np.linalg.matrix_rank(x) < p:
        raise SystemExit("rank-deficient design")
    beta = np.linalg.solve(x.T @ x, x.T @ y)
    resid = y - x @ beta
    sigma2 = resid @ resid / (n - p)
    cov = sigma2 * np.linalg.inv(x.T @ x)
    se = np.sqrt(np.diag(cov))
    t = beta / se
    pv = 2 * stats.t.sf(np.abs(t), n - p)
    return beta, cov, se, t, pv, n - p


def lasso_fit(x, y, lam):
    if lam == 0:
        return np.linalg.lstsq(x, y, rcond=None)[0]
    m = Lasso(alpha=lam, fit_intercept=False, tol=1e-14, max_iter=10_000_000)
    m.fit(x, y)
    return m.coef_.copy()


def standardize(x, y):
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        raise SystemExit("constant predictor")
    return (x - mu) / sd, y - y.mean(), mu, sd, y.mean()


def lasso(train, folds, names, nfolds):
    x = design(train, names)
    y = np.array([f["y"] for f in train])
    xs, yc, mu, sd, ym = standardize(x, y)
    n = len(y)
    lmax = np.max(np.abs(xs.T @ yc)) / n
    grid = [lmax * 1e-3 ** (i / 49) for i in range(50)]
    path = [lasso_fit(xs, yc, l) for l in grid]
    sse = np.zeros(len(grid))
    for k in range(nfolds):
        tr = folds != k
        te = folds == k
        xk, yk, muk, sdk, ymk = standardize(x[tr], y[tr])
        for j, l in enumerate(grid):
            b = lasso_fit(xk, yk, l)
            pred = ymk + ((x[te] - muk) / sdk) @ b
            sse[j] += np.sum((y[te] - pred) ** 2)
    cv = sse / n
    best = min(range(len(grid)), key=lambda j: (cv[j], -grid[j]))
    return {"grid": grid, "path": path, "cv": cv, "best": best, "mu": mu, "sd": sd, "ym": ym}


def audit(cfg, frame, out):
    with open(out / "fairness" / "split.csv") as f:
        split = {r["video_id"]: r for r in csv.DictReader(f)}
    if set(split) != {f["video_id"] for f in frame}:
        raise SystemExit("split.csv does not cover the frame")
    train = [f for f in frame if split[f["video_id"]]["part"] == "train"]
    test = [f for f in frame if split[f["video_id"]]["part"] == "test"]
    if len(train) != math.ceil(cfg["train_fraction"] * len(frame) - SLACK):
        raise SystemExit("unexpected training size")
    folds = np.array([int(split[f["video_id"]]["fold"]) for f in train])
    nfolds = int(folds.max()) + 1
    reg, fit, path_rows = [], [], []
    demographic = None
    for label, names in (("demographic", DEMOGRAPHIC), ("with_labels", WITH_LABELS)):
        beta, cov, se, t, pv, df = ols(train, names)
        if label == "demographic":
            demographic = (beta, cov, pv, df)
        for i, name in enumerate(["(Intercept)"] + names):
            reg.append([label, "glm", name, float(beta[i]), float(se[i]), float(t[i]), float(pv[i])])
        l = lasso(train, folds, names, nfolds)
        reg.append([label, "lasso", "(Intercept)", float(l["ym"]), None, None, None])
        coef = l["path"][l["best"]]
        for name, c in zip(names, coef):
            reg.append([label, "lasso", name, float(c), None, None, None])
        for j, lam in enumerate(l["grid"]):
            row = [label, float(lam), float(l["cv"][j])] + [float(c) for c in l["path"][j]]
            path_rows.append(row + [""] * (len(WITH_LABELS) - len(names)))
        xt = np.column_stack([np.ones(len(test)), design(test, names)])
        yt = np.array([f["y"] for f in test])
        glm_mse = float(np.mean((yt - xt @ beta) ** 2))
        lasso_pred = l["ym"] + ((design(test, names) - l["mu"]) / l["sd"]) @ coef
        lasso_mse = float(np.mean((yt - lasso_pred) ** 2))
        common = [len(train), len(test), cfg["seed"]]
        fit.append([label, "glm"] + common + [None, glm_mse])
        fit.append([label, "lasso"] + common + [float(l["grid"][l["best"]]), lasso_mse])
    d = GOLDEN / "fairness"
    write_csv(d / "regression.csv", ["model", "method", "term", "estimate", "std_error", "statistic", "p_value"], reg)
    write_csv(d / "model_fit.csv", ["model", "method", "n_train", "n_test", "seed", "best_lambda", "test_mse"], fit)
    write_csv(d / "lasso_path.csv", ["model", "lambda", "cv_mse"] + WITH_LABELS, path_rows)

    beta, cov, pv, df = demographic
    slopes = []
    for g in (0, 1):
        s = beta[1] + g * beta[3]
        se = math.sqrt(cov[1, 1] + g * g * cov[3, 3] + 2 * g * cov[1, 3])
        slopes.append([g, float(s), se, s / se, float(2 * stats.t.sf(abs(s / se), df))])
    write_csv(d / "simple_slopes.csv", ["gender", "slope", "std_error", "statistic", "p_value"], slopes)
    hyp = [
        [h, term, float(beta[i]), float(pv[i]), bool(pv[i] < cfg["alpha"])]
        for h, term, i in (("H1", "FV", 1), ("H2", "Gender", 2), ("H3", "FV:Gender", 3))
    ]
    write_csv(d / "hypotheses.csv", ["hypothesis", "term", "estimate", "p_value", "supported"], hyp)


# ---------------------------------------------------------------- parity

def group(f, attribute):
    if attribute == "gender":
        return f["gender"]
    if attribute == "age_bracket":
        return None if f["age"] == "unknown" else f["age"]
    return f"fv{f['fv']}"


def shares(frame, attribute):
    c = Counter(g for g in (group(f, attribute) for f in frame) if g is not None)
    total = sum(c.values())
    return {g: c[g] / total for g in sorted(c)}


def parity(frame):
    high = [f for f in frame if f["med"] and f["und"]]
    rows = []
    for attribute in ("gender", "age_bracket", "fv"):
        c = Counter(g for g in (group(f, attribute) for f in high) if g is not None)
        known = sum(c.values())
        if known == 0:
            continue
        for g, p in shares(frame, attribute).items():
            rs = c[g] / known
            rows.append([attribute, g, p, rs, rs / p])
    write_csv(GOLDEN / "fairness" / "parity.csv", ["attribute", "group", "population_share", "recommended_share", "ratio"], rows)


def ratio_ok(count, known, p, delta):
    r = count / known / p
    return 1 - delta - SLACK <= r <= 1 + delta + SLACK


def prefix_status(counts, known, sh, delta, supply):
    """Status of one prefix by enumerating every count vector of size `known`."""
    if known == 0 or all(ratio_ok(counts.get(g, 0), known, p, delta) for g, p in sh.items()):
        return "within"
    names = list(sh)
    feasible = attainable = False

    def rec(i, left, vec):
        nonlocal feasible, attainable
        if i == len(names) - 1:
            vec = vec + [left]
            if all(ratio_ok(c, known, sh[g], delta) for g, c in zip(names, vec)):
                feasible = True
                if all(c <= supply.get(g, 0) for g, c in zip(names, vec)):
                    attainable = True
            return
        for c in range(left + 1):
            rec(i + 1, left - c, vec + [c])

    rec(0, known, [])
    if not feasible:
        return "infeasible"
    if not attainable:
        return "exhausted"
    return "violated"


def rerank(cfg, frame, scores):
    attribute, delta, k = cfg["attribute"], cfg["delta"], cfg["top_k"]
    sh = shares(frame, attribute)
    cands = [
        {"id": f["video_id"], "med": scores.get(f["video_id"], (0.0, 0.0))[0], "und": scores.get(f["video_id"], (0.0, 0.0))[1],
         "views": f["views"], "group": group(f, attribute)}
        for f in frame if f["med"] and f["und"]
    ]
    cands.sort(key=lambda c: (-c["und"], -c["med"], -c["views"], c["id"]))
    supply = Counter(c["group"] for c in cands if c["group"] is not None)

    def bounds_ok(counts, m):
        # Each known group within its integer bounds at size m.
        for g, p in sh.items():
            lo = max(0, math.ceil(m * p * (1 - delta) - SLACK))
            hi = min(m, math.floor(m * p * (1 + delta) + SLACK))
            if not lo <= counts.get(g, 0) <= hi:
                return False
        return all(g in sh for g in counts)

    chosen, counts, known = [], Counter(), 0
    remaining = list(cands)
    while len(chosen) < k and remaining:
        pick = None
        for i, c in enumerate(remaining):
            if c["group"] is None:
                pick = i
                break
            nxt = Counter(counts)
            nxt[c["group"]] += 1
            if bounds_ok(nxt, known + 1):
                pick = i
                break
        if pick is None:
            def deficit(c):
                return sh.get(c["group"], 0.0) * (known + 1) - counts[c["group"]]
            pick = 0
            for i, c in enumerate(remaining):
                if deficit(c) > deficit(remaining[pick]) + SLACK:
                    pick = i
        c = remaining.pop(pick)
        if c["group"] is not None:
            counts[c["group"]] += 1
            known += 1
        chosen.append(c)
    rows, counts, known = [], Counter(), 0
    for n, c in enumerate(chosen, start=1):
        if c["group"] is not None:
            counts[c["group"]] += 1
            known += 1
        status = prefix_status(counts, known, sh, delta, supply)
        ratios = [counts[g] / known / p if known else None for g, p in sh.items()]
        rows.append([n, c["id"], status] + ratios)
    write_csv(GOLDEN / "recommend" / "recommendations.csv", ["rank", "video_id", "status"] + [f"ratio_{g}" for g in sh], rows)


# ---------------------------------------------------------------- main

def main():
    if len(sys.argv) != 2:
        raise SystemExit(__doc__)
    out = Path(sys.argv[1])
    cfg = load_config()
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    inputs = GOLDEN / "inputs"
    inputs.mkdir(parents=True)
    for name in ("labels.jsonl", "scores.csv", "fairness/split.csv"):
        shutil.copy(out / name, inputs / Path(name).name)
    corpus = ingest(cfg)
    measure(cfg, corpus)
    merged = merged_labels(out)
    scores = read_scores(out)
    summary(corpus, merged)
    evaluate(cfg, corpus, merged, scores)
    frame = build_frame(corpus, merged)
    descriptives(frame)
    audit(cfg, frame, out)
    parity(frame)
    rerank(cfg, frame, scores)


if __name__ == "__main__":
    main()
