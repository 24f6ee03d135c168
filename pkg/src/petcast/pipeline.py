"""End-to-end orchestration: artifact preparation, variant training,
evaluation against the held-out split, statistical reports, and one-off
prediction.

Every step works off a run config (JSON) and an artifact directory.  The
artifact store records which files each step read, so callers can verify
for example that training never touched the held-out split.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines as bl
from . import eval as ev
from .corpus import (
    DEFAULT_SPLIT_RATIOS,
    UK_SCHEME,
    US_MIN_SIGNATURES,
    US_SCHEME,
    OrdinalScheme,
    SplitDataset,
    chronological_split,
    drop_low_counts,
    encode_ordinal,
    load_petitions,
    log_target,
    make_example,
    save_petitions,
)
from .errors import ValidationError
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    LexiconSet,
    Standardizer,
    assemble,
    lexical_ratios,
    load_annotations,
    load_external_scores,
    load_gi_categories,
    polarity,
)
from .nn import checkpoint as ckpt
from .nn import model as nn_model
from .nn.training import TrainConfig, select_gamma, train
from .text import TfidfVectorizer, Vocabulary, load_embeddings, random_embeddings, tokenize

logger = logging.getLogger(__name__)

VARIANTS = {
    "regress": {"use_ordinal": False, "use_features": False, "extra_hidden_layer": False},
    "regress+ord": {"use_ordinal": True, "use_features": False, "extra_hidden_layer": False},
    "regress+feat": {"use_ordinal": False, "use_features": True, "extra_hidden_layer": False},
    "regress+ord+feat": {"use_ordinal": True, "use_features": True, "extra_hidden_layer": False},
    "regress+ord+feat+extra": {
        "use_ordinal": True,
        "use_features": True,
        "extra_hidden_layer": True,
    },
}

BASELINE_NAMES = bl.SUITE_NAMES

SPLIT_FILES = ("split_train.jsonl", "split_dev.jsonl", "split_test.jsonl")


@dataclass(frozen=True)
class RunConfig:
    data_path: str
    out_dir: str
    scheme: str = "uk"
    seed: int = 0
    ratios: tuple = DEFAULT_SPLIT_RATIOS
    min_count: int = 2
    embed_dim: int = 100
    embeddings_path: Optional[str] = None
    annotations_path: Optional[str] = None
    scores_path: Optional[str] = None
    gi_path: Optional[str] = None
    bias_path: Optional[str] = None
    ridge_grid: tuple = bl.RIDGE_LAMBDA_GRID
    sigma_multipliers: tuple = bl.SIGMA_MULTIPLIERS
    raw_space: bool = False
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in ("uk", "us"):
            raise ValidationError(f"scheme must be 'uk' or 'us', got {self.scheme!r}")
        if len(self.ratios) != 3:
            raise ValidationError("ratios must have three entries")
        if not self.ridge_grid or any(lam <= 0 for lam in self.ridge_grid):
            raise ValidationError("ridge grid entries must be positive")
        if not self.sigma_multipliers or any(m <= 0 for m in self.sigma_multipliers):
            raise ValidationError("sigma multipliers must be positive")
        known = {f.name for f in dc_fields(TrainConfig)}
        unknown = set(self.train) - known
        if unknown:
            raise ValidationError(f"unknown train config keys: {sorted(unknown)}")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValidationError("run config must be a JSON object")
        known = {f.name for f in dc_fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown run config keys: {sorted(unknown)}")
        for key in ("ratios", "ridge_grid", "sigma_multipliers"):
            if key in raw:
                raw[key] = tuple(raw[key])
        config = cls(**raw)
        for key in (
            "data_path",
            "embeddings_path",
            "annotations_path",
            "scores_path",
            "gi_path",
            "bias_path",
        ):
            value = getattr(config, key)
            if value and not Path(value).exists():
                raise ValidationError(f"{key} does not exist: {value}")
        return config

    @property
    def ordinal_scheme(self) -> OrdinalScheme:
        return UK_SCHEME if self.scheme == "uk" else US_SCHEME


class ArtifactStore:
    """Filesystem-backed artifact directory with a read access log."""

    MANIFEST = "manifest.json"

    def __init__(self, root):
        self.root = Path(root)
        self.reads: list[str] = []
        self.writes: list[str] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def read_path(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise ValidationError(f"missing artifact {name!r}; run prepare first")
        self.reads.append(name)
        return p

    def write_path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        self.writes.append(name)
        return self.path(name)

    def read_json(self, name: str):
        with open(self.read_path(name), encoding="utf-8") as fh:
            return json.load(fh)

    def write_json(self, name: str, obj) -> None:
        with open(self.write_path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, sort_keys=True, indent=2)
            fh.write("\n")

    def write_text(self, name: str, text: str) -> None:
        self.write_path(name).write_text(text, encoding="utf-8")

    def sha256(self, name: str) -> str:
        return hashlib.sha256(self.path(name).read_bytes()).hexdigest()


def _lexicons(config: RunConfig) -> LexiconSet:
    return LexiconSet.from_files(gi_path=config.gi_path, bias_path=config.bias_path)


def _freshness_all(vectors, dates) -> np.ndarray:
    """Age-discounted similarity of each document to all earlier ones.

    Vectors are unit length (or zero), so dot products are cosines; the
    chronological ordering guarantees non-negative day gaps.
    """
    n = len(vectors)
    out = np.zeros(n)
    if n < 2:
        return out
    x = bl.to_csr(vectors)
    day_nums = np.array([d.toordinal() for d in dates], dtype=np.int64)
    block = 512
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = np.asarray((x[start:stop] @ x.T).todense())
        for row, i in enumerate(range(start, stop)):
            if i == 0:
                continue
            weeks = (day_nums[i] - day_nums[:i]) // 7
            out[i] = float(np.sum(sims[row, :i] / (1.0 + weeks)))
    return out


def compute_feature_table(
    petitions,
    lexicons: LexiconSet,
    annotations: dict,
    scores: dict,
    fre_values: np.ndarray,
    tokens_list,
) -> np.ndarray:
    rows = []
    for petition, tokens, fre in zip(petitions, tokens_list, fre_values):
        vec = assemble(
            petition,
            annotations.get(petition.id),
            lexicons,
            external=scores.get(petition.id),
            tokens=tokens,
            fre=float(fre),
        )
        rows.append(vec.as_array())
    return np.stack(rows)


def prepare_artifacts(config: RunConfig, store: ArtifactStore) -> dict:
    """Split the corpus, build the vocabulary, embeddings, hand features
    and scaler, and write a manifest with a hash per artifact."""
    petitions = load_petitions(config.data_path)
    n_dropped = 0
    if config.scheme == "us":
        petitions, n_dropped = drop_low_counts(petitions, US_MIN_SIGNATURES)
        logger.info("dropped %d low-count records", n_dropped)
    if not petitions:
        raise ValidationError("no petitions left after filtering")
    split = chronological_split(petitions, config.ratios)

    for name, part in zip(SPLIT_FILES, split):
        save_petitions(store.write_path(name), part)

    tokens_by_split = {
        name: [tokenize(p.text) for p in part]
        for name, part in zip(("train", "dev", "test"), split)
    }
    vocab = Vocabulary.build(tokens_by_split["train"], min_count=config.min_count)
    vocab.save(store.write_path("vocab.txt"))

    if config.embeddings_path:
        table = load_embeddings(config.embeddings_path, vocab, config.embed_dim, config.seed)
    else:
        table = random_embeddings(vocab, config.embed_dim, config.seed)
    np.save(store.write_path("embeddings.npy"), table.matrix)

    # hand features over the full chronological ordering
    ordered = split.train + split.dev + split.test
    ordered_tokens = (
        tokens_by_split["train"] + tokens_by_split["dev"] + tokens_by_split["test"]
    )
    tfidf = TfidfVectorizer().fit(tokens_by_split["train"])
    vectors = tfidf.transform_many(ordered_tokens)
    fre = _freshness_all(vectors, [p.start_date for p in ordered])
    annotations = (
        load_annotations(config.annotations_path) if config.annotations_path else {}
    )
    scores = load_external_scores(config.scores_path) if config.scores_path else {}
    matrix = compute_feature_table(
        ordered, _lexicons(config), annotations, scores, fre, ordered_tokens
    )
    with open(store.write_path("features.jsonl"), "w", encoding="utf-8") as fh:
        for petition, row in zip(ordered, matrix):
            fh.write(
                json.dumps(
                    {"petition_id": petition.id, "values": [float(v) for v in row]},
                    sort_keys=True,
                )
            )
            fh.write("\n")

    scaler = Standardizer().fit(matrix[: len(split.train)])
    store.write_json(
        "scaler.json",
        {
            "feature_names": list(FEATURE_NAMES),
            "mean": [float(v) for v in scaler.mean_],
            "std": [float(v) for v in scaler.std_],
        },
    )

    artifact_names = list(SPLIT_FILES) + [
        "vocab.txt",
        "embeddings.npy",
        "features.jsonl",
        "scaler.json",
    ]
    manifest = {
        "scheme": config.scheme,
        "thresholds": list(config.ordinal_scheme.thresholds),
        "ratios": list(config.ratios),
        "seed": config.seed,
        "min_count": config.min_count,
        "embed_dim": config.embed_dim,
        "counts": {
            "train": len(split.train),
            "dev": len(split.dev),
            "test": len(split.test),
            "dropped": n_dropped,
        },
        "vocab_sha256": vocab.content_hash(),
        "files": {name: store.sha256(name) for name in artifact_names},
    }
    store.write_json(store.MANIFEST, manifest)
    return manifest


def _load_split_petitions(store: ArtifactStore, name: str):
    return load_petitions(store.read_path(name))


def _load_features(store: ArtifactStore) -> dict[str, np.ndarray]:
    by_id = {}
    with open(store.read_path("features.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            by_id[record["petition_id"]] = np.asarray(record["values"], dtype=np.float64)
    return by_id


def _load_scaler(store: ArtifactStore) -> Standardizer:
    blob = store.read_json("scaler.json")
    return Standardizer(mean=blob["mean"], std=blob["std"])


def _feature_matrix(petitions, by_id, scaler: Standardizer) -> np.ndarray:
    rows = []
    for p in petitions:
        if p.id not in by_id:
            raise ValidationError(f"no feature row for petition {p.id!r}")
        rows.append(by_id[p.id])
    return scaler.apply(np.stack(rows))


def _checkpoint_name(variant: str) -> str:
    return f"model_{variant}.ckpt"


def train_variant(
    config: RunConfig,
    store: ArtifactStore,
    variant: str,
    gamma: Optional[float] = None,
) -> tuple[str, list]:
    """Train one model variant on the prepared artifacts.

    With ordinal heads and no explicit gamma, the gamma grid is searched
    on the development split first.  Returns the checkpoint artifact name
    and the training history.
    """
    if variant not in VARIANTS:
        raise ValidationError(
            f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}"
        )
    flags = VARIANTS[variant]
    manifest = store.read_json(store.MANIFEST)
    scheme = config.ordinal_scheme
    vocab = Vocabulary.load(store.read_path("vocab.txt"))
    embeddings = np.load(store.read_path("embeddings.npy"))

    overrides = dict(config.train)
    overrides.update(flags)
    overrides.setdefault("seed", config.seed)
    overrides["embed_dim"] = int(manifest["embed_dim"])
    train_cfg = TrainConfig(**overrides)

    train_pets = _load_split_petitions(store, "split_train.jsonl")
    dev_pets = _load_split_petitions(store, "split_dev.jsonl")
    labeled = SplitDataset(
        train=[make_example(p, scheme) for p in train_pets],
        dev=[make_example(p, scheme) for p in dev_pets],
        test=[],
        ratios=config.ratios,
    )
    features = None
    scaler = None
    if flags["use_features"]:
        by_id = _load_features(store)
        scaler = _load_scaler(store)
        features = {pid: scaler.apply(row) for pid, row in by_id.items()}

    if flags["use_ordinal"] and gamma is None:
        gamma, scores = select_gamma(
            train_cfg, labeled, vocab, embeddings=embeddings, features=features
        )
        logger.info("selected gamma=%g from grid %s", gamma, scores)
    if not flags["use_ordinal"]:
        gamma = 0.0
    train_cfg = TrainConfig(**{**overrides, "gamma": gamma})

    model, history = train(
        train_cfg, labeled, vocab, embeddings=embeddings, features=features
    )

    name = _checkpoint_name(variant)
    scaler_blob = None
    if scaler is not None:
        scaler_blob = {
            "mean": [float(v) for v in scaler.mean_],
            "std": [float(v) for v in scaler.std_],
        }
    ckpt.save_checkpoint(
        store.write_path(name),
        model,
        vocab_sha256=vocab.content_hash(),
        thresholds=scheme.thresholds,
        gamma=gamma,
        log_base=math.e,
        variant=variant,
        scaler=scaler_blob,
        extra={"min_len": train_cfg.min_len, "max_len": train_cfg.max_len},
    )
    store.write_json(f"history_{variant}.json", history)
    return name, history


def _predict_checkpoint(store: ArtifactStore, model_path, petitions) -> np.ndarray:
    """Log-space predictions (floored at zero) for a saved model."""
    model, manifest = ckpt.load_checkpoint(model_path)
    vocab = Vocabulary.load(store.read_path("vocab.txt"))
    if not ckpt.checkpoint_matches_vocab(manifest, vocab.content_hash()):
        raise ValidationError("checkpoint was trained against a different vocabulary")
    extra = manifest.get("extra", {})
    min_len = int(extra.get("min_len", 3))
    max_len = int(extra.get("max_len", 400))
    feats = None
    if model.hyper.use_features:
        scaler = Standardizer(
            mean=manifest["scaler"]["mean"], std=manifest["scaler"]["std"]
        )
        feats = _feature_matrix(petitions, _load_features(store), scaler)
    preds = []
    for i, p in enumerate(petitions):
        ids = nn_model.pad_ids(vocab.encode(tokenize(p.text)), min_len, max_len)
        f = None if feats is None else feats[i]
        trace = nn_model.forward(model, ids, features=f)
        preds.append(max(trace.y_hat, 0.0))
    return np.array(preds)


def _predict_baseline(config: RunConfig, store: ArtifactStore, name: str) -> bl.BaselineResult:
    """Fit one reference predictor on train/dev and score the test split."""
    split = {s: _load_split_petitions(store, f"split_{s}.jsonl") for s in ("train", "dev", "test")}
    tokens = {s: [tokenize(p.text) for p in split[s]] for s in split}
    tfidf = TfidfVectorizer().fit(tokens["train"])
    bow = {s: bl.to_csr(tfidf.transform_many(tokens[s])) for s in split}
    targets = {
        s: np.array([log_target(p.signature_count) for p in split[s]]) for s in split
    }
    kwargs: dict = {
        "seed": config.seed,
        "names": [name],
        "ridge_grid": config.ridge_grid,
        "sigma_multipliers": config.sigma_multipliers,
    }
    if name in ("KRR_feat", "KRR_BoW+feat"):
        by_id = _load_features(store)
        scaler = _load_scaler(store)
        feats = {s: _feature_matrix(split[s], by_id, scaler) for s in split}
    else:
        feats = {s: np.zeros((len(split[s]), 0)) for s in split}
    if name == "Linear_GI":
        categories = load_gi_categories(config.gi_path) if config.gi_path else {}
        if not categories:
            logger.warning("no lexicon categories configured; Linear_GI is intercept-only")
        kwargs["gi"] = {s: bl.gi_feature_matrix(tokens[s], categories) for s in split}
    if name == "Logistic_ord":
        scheme = config.ordinal_scheme
        kwargs["ordinal_bits"] = {
            s: np.array(
                [encode_ordinal(scheme, p.signature_count) for p in split[s]],
                dtype=np.float64,
            )
            for s in split
        }
        kwargs["thresholds"] = scheme.thresholds
    results = bl.baseline_suite(bow, feats, targets, **kwargs)
    return results[0]


def evaluate_target(
    config: RunConfig,
    store: ArtifactStore,
    target: str,
    raw_space: Optional[bool] = None,
) -> ev.EvalReport:
    """Score a trained checkpoint (by path) or a named reference predictor
    on the held-out split; writes and returns the report.

    MAE and MAPE are computed on log counts unless raw-space metrics were
    requested; the binned F-score always works on raw counts.
    """
    if raw_space is None:
        raw_space = config.raw_space
    test_pets = _load_split_petitions(store, "split_test.jsonl")
    if target in BASELINE_NAMES:
        pred_log = np.maximum(_predict_baseline(config, store, target).predictions, 0.0)
        label = target
    else:
        path = Path(target)
        if not path.exists():
            raise ValidationError(
                f"{target!r} is neither a checkpoint path nor one of {BASELINE_NAMES}"
            )
        pred_log = _predict_checkpoint(store, path, test_pets)
        label = path.stem
    true_log = np.array([log_target(p.signature_count) for p in test_pets])
    true_counts = np.array([float(p.signature_count) for p in test_pets])
    pred_counts = np.exp(pred_log)
    edges = [float(t) for t in config.ordinal_scheme.report_edges]
    per_bin, macro = ev.bin_fscore(pred_counts, true_counts, edges)
    if raw_space:
        pred_err, true_err = pred_counts, true_counts
    else:
        pred_err, true_err = pred_log, true_log
    report = ev.EvalReport(
        mae=ev.mae(pred_err, true_err),
        mape=ev.mape(pred_err, true_err),
        per_bin_f=tuple(per_bin),
        macro_f=macro,
        bin_edges=tuple(edges),
        mape_excluded=ev.mape_exclusions(true_err),
    )
    flat = dict(report.flat())
    flat["space"] = "raw" if raw_space else "log"
    ev.write_metrics(store.write_path(f"eval_{label}.txt"), flat)
    table = ev.format_table(
        ("metric", "value"),
        [(k, str(v)) for k, v in sorted(flat.items())],
    )
    store.write_text(f"eval_{label}_table.txt", table)
    return report


def stats_report(config: RunConfig, store: ArtifactStore, model_path) -> dict:
    """Group-difference tests per hand feature (train split) and a screen of
    how much of each feature the trained text representation already carries
    (test split), merged into one table.

    The additional-details flag only exists for the UK corpus, so its row is
    dropped under the US scheme.
    """
    scheme = config.ordinal_scheme
    names = list(FEATURE_NAMES)
    if config.scheme == "us":
        names = [n for n in names if n != "Add"]
    cols = [FEATURE_NAMES.index(n) for n in names]

    by_id = _load_features(store)

    def _raw_matrix(petitions):
        missing = [p.id for p in petitions if p.id not in by_id]
        if missing:
            raise ValidationError(f"feature rows missing for petitions {missing[:3]}")
        return np.stack([by_id[p.id] for p in petitions])

    train_pets = _load_split_petitions(store, "split_train.jsonl")
    raw_train = _raw_matrix(train_pets)[:, cols]
    counts = np.array([p.signature_count for p in train_pets])
    kw_rows = ev.feature_significance_table(raw_train, names, counts, scheme)

    model, manifest = ckpt.load_checkpoint(model_path)
    vocab = Vocabulary.load(store.read_path("vocab.txt"))
    if not ckpt.checkpoint_matches_vocab(manifest, vocab.content_hash()):
        raise ValidationError("checkpoint was trained against a different vocabulary")
    extra = manifest.get("extra", {})
    min_len = int(extra.get("min_len", 3))
    max_len = int(extra.get("max_len", 400))

    test_pets = _load_split_petitions(store, "split_test.jsonl")
    raw_test = _raw_matrix(test_pets)
    feats = None
    if model.hyper.use_features:
        scaler = _load_scaler(store)
        feats = scaler.apply(raw_test)
    hidden = []
    for i, p in enumerate(test_pets):
        ids = nn_model.pad_ids(vocab.encode(tokenize(p.text)), min_len, max_len)
        f = None if feats is None else feats[i]
        hidden.append(nn_model.forward(model, ids, features=f).hidden)
    dep_rows = ev.dependency_analysis(np.stack(hidden), raw_test[:, cols], names)

    kw_by_name = dict(kw_rows)
    dep_by_name = {r.feature: r for r in dep_rows}
    out = {
        "scheme": config.scheme,
        "kruskal_wallis": [
            {
                "feature": name,
                "h": float(r.h),
                "df": int(r.df),
                "p": float(r.p),
                "stars": ev.significance_stars(r.p),
            }
            for name, r in kw_rows
        ],
        "dependency": [
            {
                "feature": r.feature,
                "r2": float(r.r2),
                "f_stat": float(r.f_stat),
                "p": float(r.p_hidden),
                "stars": ev.significance_stars(r.p_hidden),
                "ridge_fallback": bool(r.ridge_fallback),
            }
            for r in dep_rows
        ],
    }
    store.write_json("stats.json", out)

    rows = []
    for name in names:
        kw = kw_by_name[name]
        dep = dep_by_name[name]
        rows.append(
            (
                name,
                f"{kw.h:.2f}",
                f"{kw.p:.3g}",
                ev.significance_stars(kw.p),
                f"{dep.p_hidden:.3g}",
                ev.significance_stars(dep.p_hidden),
            )
        )
    table = ev.format_table(("feature", "H", "p", "sig", "p_hidden", "sig_hidden"), rows)
    store.write_text("stats.txt", table)
    return out


def predict_one(config: RunConfig, store: ArtifactStore, model_path, text: str) -> dict:
    """Predict the final count (and threshold probabilities) for raw text.

    Features that need sidecar annotations, external scores or history are
    zero before scaling; only the wording-derived ones are live.  Unknown
    or empty wording still predicts, via the padding/unknown token path.
    """
    model, manifest = ckpt.load_checkpoint(model_path)
    vocab = Vocabulary.load(store.read_path("vocab.txt"))
    if not ckpt.checkpoint_matches_vocab(manifest, vocab.content_hash()):
        raise ValidationError("checkpoint was trained against a different vocabulary")
    extra = manifest.get("extra", {})
    tokens = tokenize(text)
    encoded = vocab.encode(tokens)
    if not any(i > 1 for i in encoded):
        logger.warning("no known tokens in the input; prediction uses the unknown-token path")
    ids = nn_model.pad_ids(
        encoded,
        int(extra.get("min_len", 3)),
        int(extra.get("max_len", 400)),
    )
    feats = None
    if model.hyper.use_features:
        lexicons = _lexicons(config)
        values = {"Pol": polarity(tokens, lexicons)}
        values.update(lexical_ratios(tokens, lexicons))
        raw = FeatureVector(**values).as_array()
        scaler = Standardizer(
            mean=manifest["scaler"]["mean"], std=manifest["scaler"]["std"]
        )
        feats = scaler.apply(raw)
    trace = nn_model.forward(model, ids, features=feats)
    log_pred = max(trace.y_hat, 0.0)
    base = float(manifest.get("log_base", math.e))
    out = {
        "log_count": log_pred,
        "signature_count": float(base ** log_pred),
    }
    if trace.ordinal_probs is not None:
        thresholds = manifest.get("thresholds", [])
        out["threshold_probs"] = {
            str(t): float(p) for t, p in zip(thresholds, trace.ordinal_probs)
        }
    return out
