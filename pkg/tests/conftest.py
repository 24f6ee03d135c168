"""Shared builders: synthetic corpora, sidecar files, micro models."""

import datetime
import json
import random
import sys

import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the run, outside capture."""
    mod = sys.modules.get("tests.test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(verdicts, key=lambda s: int(s.split("]")[0].split()[-1])):
        terminalreporter.write_line(line)

from petcast.corpus import Petition, UK_SCHEME, encode_ordinal, log_target, make_example
from petcast.nn.model import CnnModel, ModelHyper, create_model, forward_batch, pad_ids

WORDS = (
    "ban the a tax fund stop school hospital road justice reform we urge "
    "government to act now for every citizen fair free vote protect our future"
).split()


def make_petition(i, count, date, text=None, details=None):
    body = text if text is not None else " ".join(
        random.Random(i).choices(WORDS, k=12)
    )
    return Petition(
        id=f"p{i:04d}",
        title=f"petition number {i}",
        body=body,
        additional_details=details,
        signature_count=count,
        start_date=date,
    )


def synthetic_petitions(n=160, seed=7, start=datetime.date(2015, 1, 1)):
    """Counts log-uniform over [10^0.5, 10^5.5]; every third has details."""
    rng = random.Random(seed)
    petitions = []
    for i in range(n):
        count = max(1, int(round(10 ** rng.uniform(0.5, 5.5))))
        date = start + datetime.timedelta(days=3 * i)
        details = "more detail here please" if i % 3 == 0 else None
        petitions.append(make_petition(i, count, date, details=details))
    return petitions


def write_corpus(dirpath, petitions):
    path = dirpath / "data.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for p in petitions:
            record = {
                "id": p.id,
                "title": p.title,
                "body": p.body,
                "signature_count": p.signature_count,
                "start_date": p.start_date.isoformat(),
            }
            if p.additional_details:
                record["additional_details"] = p.additional_details
            fh.write(json.dumps(record) + "\n")
    return path


def write_sidecars(dirpath, petitions):
    """Annotation, score, lexicon and embedding files keyed to the corpus."""
    ann_path = dirpath / "annotations.jsonl"
    with open(ann_path, "w", encoding="utf-8") as fh:
        for p in petitions:
            tokens = p.body.split()
            tags = ["NN" if i % 2 == 0 else "VB" for i in range(len(tokens))]
            spans = [[0, 1]] if tokens else []
            fh.write(json.dumps({
                "petition_id": p.id, "tokens": tokens,
                "pos_tags": tags, "entity_spans": spans,
            }) + "\n")
    score_path = dirpath / "scores.jsonl"
    with open(score_path, "w", encoding="utf-8") as fh:
        for i, p in enumerate(petitions):
            fh.write(json.dumps({
                "petition_id": p.id,
                "act": (i % 10) / 10.0,
                "csc": float(i % 5),
                "pbias": (i % 4) / 4.0,
                "l_r": ((i % 9) - 4) / 4.0,
            }) + "\n")
    gi_path = dirpath / "gi.tsv"
    gi_rows = [
        ("justice", "positive"), ("fair", "positive"), ("free", "positive"),
        ("stop", "negative"), ("ban", "negative"), ("tax", "negative"),
        ("urge", "subjective"), ("protect", "subjective"),
    ]
    with open(gi_path, "w", encoding="utf-8") as fh:
        for word, cat in gi_rows:
            fh.write(f"{word}\t{cat}\n")
    bias_path = dirpath / "bias.txt"
    bias_path.write_text("reform\njustice\n", encoding="utf-8")
    emb_path = dirpath / "embeddings.txt"
    rng = np.random.default_rng(11)
    with open(emb_path, "w", encoding="utf-8") as fh:
        for word in WORDS:
            vec = rng.uniform(-0.05, 0.05, size=8)
            fh.write(word + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")
    return {
        "annotations_path": str(ann_path),
        "scores_path": str(score_path),
        "gi_path": str(gi_path),
        "bias_path": str(bias_path),
        "embeddings_path": str(emb_path),
    }


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """A full on-disk corpus with every sidecar plus a small run config."""
    root = tmp_path_factory.mktemp("corpus")
    petitions = synthetic_petitions()
    data_path = write_corpus(root, petitions)
    sidecars = write_sidecars(root, petitions)
    config = {
        "data_path": str(data_path),
        "out_dir": str(root / "artifacts"),
        "scheme": "uk",
        "seed": 0,
        "embed_dim": 8,
        **sidecars,
        "train": {
            "epochs": 2, "batch_size": 16, "n_filters": 4,
            "hidden_size": 8, "feature_hidden": 4, "max_len": 30,
        },
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return {
        "root": root,
        "petitions": petitions,
        "config": config,
        "config_path": config_path,
    }


MICRO_VARIANTS = {
    "regress": dict(use_features=False, use_ordinal=False, hidden_sizes=(6,)),
    "regress+ord": dict(use_features=False, use_ordinal=True, hidden_sizes=(6,)),
    "regress+ord+feat": dict(use_features=True, use_ordinal=True, hidden_sizes=(6,)),
    "regress+ord+feat+extra": dict(
        use_features=True, use_ordinal=True, hidden_sizes=(6, 6)
    ),
}


def micro_batch(variant, seed=0, vocab_size=20, embed_dim=4, n_filters=2, batch=3):
    """Seeded micro model plus one batch of inputs for gradient work."""
    flags = MICRO_VARIANTS[variant]
    hyper = ModelHyper(
        vocab_size=vocab_size,
        embed_dim=embed_dim,
        widths=(1, 2, 3),
        n_filters=n_filters,
        feature_dim=5 if flags["use_features"] else 0,
        feature_hidden=3,
        hidden_sizes=flags["hidden_sizes"],
        n_thresholds=4 if flags["use_ordinal"] else 0,
        use_features=flags["use_features"],
        use_ordinal=flags["use_ordinal"],
    )
    model = create_model(hyper, seed=seed)
    rng = np.random.default_rng(seed + 100)
    docs = [
        pad_ids(rng.integers(0, vocab_size, size=rng.integers(3, 9)))
        for _ in range(batch)
    ]
    feats = None
    if flags["use_features"]:
        feats = [rng.normal(size=hyper.feature_dim) for _ in range(batch)]
    targets = rng.uniform(0.0, 10.0, size=batch)
    bits = None
    if flags["use_ordinal"]:
        bits = np.zeros((batch, hyper.n_thresholds))
        for i in range(batch):
            level = int(rng.integers(0, hyper.n_thresholds + 1))
            bits[i, :level] = 1.0
    return model, docs, feats, targets, bits


def toy_examples(n=32, seed=3):
    """Labeled examples whose log count depends only on one keyword."""
    rng = random.Random(seed)
    examples = []
    for i in range(n):
        keyword = i % 2 == 0
        words = rng.choices([w for w in WORDS if w != "justice"], k=8)
        if keyword:
            words[rng.randrange(len(words))] = "justice"
        count = int(round(np.exp(5.0 if keyword else 0.0)))
        petition = Petition(
            id=f"t{i:03d}",
            title=" ".join(words[:3]),
            body=" ".join(words[3:]),
            signature_count=max(1, count),
            start_date=datetime.date(2016, 1, 1) + datetime.timedelta(days=i),
        )
        examples.append(make_example(petition, UK_SCHEME))
    return examples
