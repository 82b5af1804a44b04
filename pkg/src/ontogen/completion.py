"""Knowledge-graph completion with complex-valued embeddings.

Entities and relations live in C^d, stored as separate real and imaginary
matrices.  The score of (h, r, t) is Re(sum_i r_i * h_i * conj(t_i)), which
lets one relation vector assign different scores to the two directions of a
pair.  Training minimizes logistic loss with L2 weight decay under
per-parameter adaptive gradient scaling; negatives come from corrupting
heads or tails, filtered against known positives.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .correction import string_similarity
from .model import KnowledgeGraph, META_CLASSES, ScoredTriple, Term, Triple
from .rdf_io import parse_term, render_term

_ADAGRAD_EPS = 1e-10
_MAGIC = b"CXEM"
_FORMAT_VERSION = 1


class CompletionError(ValueError):
    """Unknown vocabulary item or unusable training configuration."""


@dataclass(frozen=True)
class TrainConfig:
    dimension: int = 50
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 0.05
    l2_lambda: float = 1e-3
    negatives_per_positive: int = 5
    seed: int = 42
    loss: str = "logistic"  # or "margin"
    margin: float = 1.0
    #: pin relation imaginary parts to zero (symmetric control model)
    real_relations: bool = False

    def __post_init__(self) -> None:
        if self.dimension <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise CompletionError("dimension, epochs, and batch_size must be positive")
        if self.learning_rate <= 0 or self.l2_lambda < 0 or self.negatives_per_positive <= 0:
            raise CompletionError("learning_rate and negatives must be positive, l2 non-negative")
        if self.loss not in ("logistic", "margin"):
            raise CompletionError(f"unknown loss {self.loss!r}")


@dataclass
class EmbeddingModel:
    entity_re: np.ndarray
    entity_im: np.ndarray
    relation_re: np.ndarray
    relation_im: np.ndarray
    entity_index: dict[Term, int]
    relation_index: dict[Term, int]
    dimension: int
    loss_history: list[float] = field(default_factory=list, repr=False)

    @property
    def entities(self) -> list[Term]:
        return sorted(self.entity_index, key=lambda t: self.entity_index[t])

    @property
    def relations(self) -> list[Term]:
        return sorted(self.relation_index, key=lambda t: self.relation_index[t])

    def entity_row(self, term: Term) -> int:
        try:
            return self.entity_index[term]
        except KeyError:
            raise CompletionError(f"unknown entity {render_term(term)}") from None

    def relation_row(self, term: Term) -> int:
        try:
            return self.relation_index[term]
        except KeyError:
            raise CompletionError(f"unknown relation {render_term(term)}") from None


@dataclass
class RankMetrics:
    mrr: float
    hits: dict[int, float]
    evaluated: int


# ----------------------------------------------------------------------
# scoring

def _score_rows(m: EmbeddingModel, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    h_re, h_im = m.entity_re[h], m.entity_im[h]
    t_re, t_im = m.entity_re[t], m.entity_im[t]
    r_re, r_im = m.relation_re[r], m.relation_im[r]
    return (
        r_re * (h_re * t_re + h_im * t_im) + r_im * (h_re * t_im - h_im * t_re)
    ).sum(axis=-1)


def score(model: EmbeddingModel, h: Term, r: Term, t: Term) -> float:
    """Re(sum_i r_i * h_i * conj(t_i)) for one triple."""
    hi = np.array([model.entity_row(h)])
    ri = np.array([model.relation_row(r)])
    ti = np.array([model.entity_row(t)])
    return float(_score_rows(model, hi, ri, ti)[0])


def _all_tail_scores(m: EmbeddingModel, h: int, r: int) -> np.ndarray:
    h_re, h_im = m.entity_re[h], m.entity_im[h]
    r_re, r_im = m.relation_re[r], m.relation_im[r]
    c_re = r_re * h_re - r_im * h_im
    c_im = r_re * h_im + r_im * h_re
    return m.entity_re @ c_re + m.entity_im @ c_im


def _all_head_scores(m: EmbeddingModel, r: int, t: int) -> np.ndarray:
    t_re, t_im = m.entity_re[t], m.entity_im[t]
    r_re, r_im = m.relation_re[r], m.relation_im[r]
    c_re = r_re * t_re + r_im * t_im
    c_im = r_re * t_im - r_im * t_re
    return m.entity_re @ c_re + m.entity_im @ c_im


# ----------------------------------------------------------------------
# loss and gradients

def _partials(m: EmbeddingModel, h, r, t):
    """Score and per-example partial derivatives for index arrays."""
    h_re, h_im = m.entity_re[h], m.entity_im[h]
    t_re, t_im = m.entity_re[t], m.entity_im[t]
    r_re, r_im = m.relation_re[r], m.relation_im[r]
    f = (r_re * (h_re * t_re + h_im * t_im) + r_im * (h_re * t_im - h_im * t_re)).sum(axis=1)
    d = {
        "h_re": r_re * t_re + r_im * t_im,
        "h_im": r_re * t_im - r_im * t_re,
        "t_re": r_re * h_re - r_im * h_im,
        "t_im": r_re * h_im + r_im * h_re,
        "r_re": h_re * t_re + h_im * t_im,
        "r_im": h_re * t_im - h_im * t_re,
    }
    return f, d


@dataclass
class Gradients:
    entity_re: np.ndarray
    entity_im: np.ndarray
    relation_re: np.ndarray
    relation_im: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def loss_and_gradient(
    model: EmbeddingModel, batch: list[tuple[Triple, int]], cfg: TrainConfig
) -> tuple[float, Gradients]:
    """Logistic loss sum(log(1 + exp(-y f))) plus L2 on the distinct
    parameters the batch touches, with analytic gradients."""
    if not batch:
        raise CompletionError("empty batch")
    labels = np.array([y for _, y in batch], dtype=float)
    if not np.all(np.abs(labels) == 1):
        raise CompletionError("labels must be +1 or -1")
    h = np.array([model.entity_row(t.subject) for t, _ in batch])
    r = np.array([model.relation_row(t.predicate) for t, _ in batch])
    t_ = np.array([model.entity_row(t.object) for t, _ in batch])

    f, d = _partials(model, h, r, t_)
    loss = float(np.logaddexp(0.0, -labels * f).sum())
    dldf = -labels * _sigmoid(-labels * f)

    grads = Gradients(
        np.zeros_like(model.entity_re),
        np.zeros_like(model.entity_im),
        np.zeros_like(model.relation_re),
        np.zeros_like(model.relation_im),
    )
    w = dldf[:, None]
    np.add.at(grads.entity_re, h, w * d["h_re"])
    np.add.at(grads.entity_im, h, w * d["h_im"])
    np.add.at(grads.entity_re, t_, w * d["t_re"])
    np.add.at(grads.entity_im, t_, w * d["t_im"])
    np.add.at(grads.relation_re, r, w * d["r_re"])
    np.add.at(grads.relation_im, r, w * d["r_im"])

    lam = cfg.l2_lambda
    if lam > 0:
        ue = np.unique(np.concatenate([h, t_]))
        ur = np.unique(r)
        loss += lam * float(
            (model.entity_re[ue] ** 2).sum()
            + (model.entity_im[ue] ** 2).sum()
            + (model.relation_re[ur] ** 2).sum()
            + (model.relation_im[ur] ** 2).sum()
        )
        grads.entity_re[ue] += 2 * lam * model.entity_re[ue]
        grads.entity_im[ue] += 2 * lam * model.entity_im[ue]
        grads.relation_re[ur] += 2 * lam * model.relation_re[ur]
        grads.relation_im[ur] += 2 * lam * model.relation_im[ur]
    return loss, grads


# ----------------------------------------------------------------------
# training

def _build_vocab(triples: list[Triple]) -> tuple[dict[Term, int], dict[Term, int]]:
    entities = sorted({t.subject for t in triples} | {t.object for t in triples}, key=Term.sort_key)
    relations = sorted({t.predicate for t in triples}, key=Term.sort_key)
    return (
        {term: i for i, term in enumerate(entities)},
        {term: i for i, term in enumerate(relations)},
    )


def _init_model(n_e: int, n_r: int, cfg: TrainConfig, rng: np.random.Generator) -> tuple:
    entity_re = rng.normal(0.0, 0.1, (n_e, cfg.dimension))
    entity_im = rng.normal(0.0, 0.1, (n_e, cfg.dimension))
    relation_re = rng.normal(0.0, 0.1, (n_r, cfg.dimension))
    relation_im = rng.normal(0.0, 0.1, (n_r, cfg.dimension))
    if cfg.real_relations:
        relation_im[:] = 0.0
    return entity_re, entity_im, relation_re, relation_im


def _sample_negatives(
    rng: np.random.Generator,
    pos: np.ndarray,
    n_entities: int,
    known: set[tuple[int, int, int]],
    per_positive: int,
) -> np.ndarray:
    """Corrupt head or tail uniformly, resampling accidental positives up
    to 100 times before skipping a slot."""
    sides = rng.integers(0, 2, size=(len(pos), per_positive))
    cands = rng.integers(0, n_entities, size=(len(pos), per_positive))
    out = []
    for i in range(len(pos)):
        h, r, t = (int(pos[i, 0]), int(pos[i, 1]), int(pos[i, 2]))
        for j in range(per_positive):
            c = int(cands[i, j])
            corrupt_head = bool(sides[i, j])
            ok = False
            for _ in range(100):
                trial = (c, r, t) if corrupt_head else (h, r, c)
                if trial not in known:
                    ok = True
                    break
                c = int(rng.integers(0, n_entities))
            if ok:
                out.append((i, *trial))
    return np.array(out, dtype=np.int64).reshape(-1, 4)


def train(triples: list[Triple], cfg: TrainConfig | None = None) -> EmbeddingModel:
    """Train an embedding model on a triple list.

    Input order does not matter: the vocabulary and the positive pool are
    canonicalized by sorting, and every random draw comes from the seeded
    generator, so a fixed seed reproduces the model bit for bit.
    """
    cfg = cfg or TrainConfig()
    if not triples:
        raise CompletionError("cannot train on an empty triple list")
    triples = sorted(set(triples), key=Triple.sort_key)
    entity_index, relation_index = _build_vocab(triples)
    n_e, n_r = len(entity_index), len(relation_index)
    rng = np.random.default_rng(cfg.seed)

    e_re, e_im, r_re, r_im = _init_model(n_e, n_r, cfg, rng)
    model = EmbeddingModel(e_re, e_im, r_re, r_im, entity_index, relation_index, cfg.dimension)

    pos = np.array(
        [
            (entity_index[t.subject], relation_index[t.predicate], entity_index[t.object])
            for t in triples
        ],
        dtype=np.int64,
    )
    known = {tuple(row) for row in pos.tolist()}

    acc = Gradients(
        np.zeros_like(e_re), np.zeros_like(e_im), np.zeros_like(r_re), np.zeros_like(r_im)
    )
    lam, lr = cfg.l2_lambda, cfg.learning_rate

    for _epoch in range(cfg.epochs):
        order = rng.permutation(len(pos))
        epoch_loss = 0.0
        examples = 0
        for start in range(0, len(pos), cfg.batch_size):
            batch_pos = pos[order[start : start + cfg.batch_size]]
            negs = _sample_negatives(rng, batch_pos, n_e, known, cfg.negatives_per_positive)

            h = np.concatenate([batch_pos[:, 0], negs[:, 1]])
            r = np.concatenate([batch_pos[:, 1], negs[:, 2]])
            t = np.concatenate([batch_pos[:, 2], negs[:, 3]])
            f, d = _partials(model, h, r, t)
            n_pos = len(batch_pos)

            if cfg.loss == "logistic":
                y = np.concatenate([np.ones(n_pos), -np.ones(len(negs))])
                epoch_loss += float(np.logaddexp(0.0, -y * f).sum())
                dldf = -y * _sigmoid(-y * f)
            else:
                # margin ranking: each negative pairs with its positive
                f_pos_of_neg = f[negs[:, 0]]
                f_neg = f[n_pos:]
                active = (cfg.margin - f_pos_of_neg + f_neg) > 0
                epoch_loss += float(np.maximum(0.0, cfg.margin - f_pos_of_neg + f_neg).sum())
                dldf = np.zeros_like(f)
                np.add.at(dldf, negs[:, 0], -active.astype(float))
                dldf[n_pos:] = active.astype(float)
            examples += len(f)

            w = dldf[:, None]
            ue, inv_e = np.unique(np.concatenate([h, t]), return_inverse=True)
            ge_re = np.zeros((len(ue), cfg.dimension))
            ge_im = np.zeros((len(ue), cfg.dimension))
            np.add.at(ge_re, inv_e[: len(h)], w * d["h_re"])
            np.add.at(ge_im, inv_e[: len(h)], w * d["h_im"])
            np.add.at(ge_re, inv_e[len(h) :], w * d["t_re"])
            np.add.at(ge_im, inv_e[len(h) :], w * d["t_im"])

            ur, inv_r = np.unique(r, return_inverse=True)
            gr_re = np.zeros((len(ur), cfg.dimension))
            gr_im = np.zeros((len(ur), cfg.dimension))
            np.add.at(gr_re, inv_r, w * d["r_re"])
            np.add.at(gr_im, inv_r, w * d["r_im"])

            if lam > 0:
                epoch_loss += lam * float(
                    (model.entity_re[ue] ** 2).sum()
                    + (model.entity_im[ue] ** 2).sum()
                    + (model.relation_re[ur] ** 2).sum()
                    + (model.relation_im[ur] ** 2).sum()
                )
                ge_re += 2 * lam * model.entity_re[ue]
                ge_im += 2 * lam * model.entity_im[ue]
                gr_re += 2 * lam * model.relation_re[ur]
                gr_im += 2 * lam * model.relation_im[ur]

            if cfg.real_relations:
                gr_im[:] = 0.0

            for rows, grad, accum, params in (
                (ue, ge_re, acc.entity_re, model.entity_re),
                (ue, ge_im, acc.entity_im, model.entity_im),
                (ur, gr_re, acc.relation_re, model.relation_re),
                (ur, gr_im, acc.relation_im, model.relation_im),
            ):
                accum[rows] += grad * grad
                params[rows] -= lr * grad / np.sqrt(accum[rows] + _ADAGRAD_EPS)

        model.loss_history.append(epoch_loss / max(examples, 1))
    return model


# ----------------------------------------------------------------------
# evaluation

def evaluate(
    model: EmbeddingModel, test_triples: list[Triple], all_known: list[Triple]
) -> RankMetrics:
    """Filtered ranking over head and tail corruption.

    Known positives other than the test triple are excluded before
    ranking; ties rank the true entity after its equals (pessimistic).
    `evaluated` counts ranking directions (two per test triple).
    """
    known_tails: dict[tuple[int, int], set[int]] = {}
    known_heads: dict[tuple[int, int], set[int]] = {}
    for t in all_known:
        try:
            h = model.entity_row(t.subject)
            r = model.relation_row(t.predicate)
            o = model.entity_row(t.object)
        except CompletionError:
            continue
        known_tails.setdefault((h, r), set()).add(o)
        known_heads.setdefault((r, o), set()).add(h)

    ranks: list[int] = []
    for t in test_triples:
        h = model.entity_row(t.subject)
        r = model.relation_row(t.predicate)
        o = model.entity_row(t.object)

        tail_scores = _all_tail_scores(model, h, r)
        mask = np.zeros(len(tail_scores), dtype=bool)
        mask[list(known_tails.get((h, r), ()))] = True
        mask[o] = False
        scores = np.where(mask, -np.inf, tail_scores)
        ranks.append(1 + int((np.delete(scores, o) >= scores[o]).sum()))

        head_scores = _all_head_scores(model, r, o)
        mask = np.zeros(len(head_scores), dtype=bool)
        mask[list(known_heads.get((r, o), ()))] = True
        mask[h] = False
        scores = np.where(mask, -np.inf, head_scores)
        ranks.append(1 + int((np.delete(scores, h) >= scores[h]).sum()))

    arr = np.array(ranks, dtype=float)
    if len(arr) == 0:
        return RankMetrics(0.0, {1: 0.0, 3: 0.0, 10: 0.0}, 0)
    return RankMetrics(
        mrr=float((1.0 / arr).mean()),
        hits={k: float((arr <= k).mean()) for k in (1, 3, 10)},
        evaluated=len(arr),
    )


# ----------------------------------------------------------------------
# prediction

def predict_missing(
    model: EmbeddingModel,
    kg: KnowledgeGraph,
    candidate_relations: list[Term],
    threshold: float = 0.5,
    top_k: int = 1,
) -> list[ScoredTriple]:
    """Propose new statements for entities lacking a candidate relation.

    Candidate subjects are the model-covered entities sharing a type with
    the relation's observed subjects (all data-statement subjects when the
    observed subjects carry no types).  Confidence is sigmoid(score); only
    the top-k proposals strictly above the threshold are emitted, flagged
    as predicted.
    """
    data = [st for st in kg.data_statements]
    subjects_by_relation: dict[str, set[Term]] = {}
    objects_by_subject_relation: dict[tuple[Term, str], set[Term]] = {}
    for st in data:
        t = st.triple
        subjects_by_relation.setdefault(t.predicate.value, set()).add(t.subject)
        objects_by_subject_relation.setdefault((t.subject, t.predicate.value), set()).add(t.object)

    class_map = kg.class_map()
    all_subjects = {st.triple.subject for st in data}
    out: list[ScoredTriple] = []
    for rel in sorted(candidate_relations, key=Term.sort_key):
        r = model.relation_row(rel)
        observed = subjects_by_relation.get(rel.value, set())
        observed_types: set[str] = set()
        for s in observed:
            observed_types |= class_map.get(s, set())
        if observed_types:
            pool = {
                e
                for e in all_subjects
                if class_map.get(e, set()) & observed_types and e in model.entity_index
            }
        else:
            pool = {e for e in all_subjects if e in model.entity_index}
        candidates = sorted(
            (e for e in pool if (e, rel.value) not in objects_by_subject_relation),
            key=Term.sort_key,
        )
        entities = model.entities
        for subject in candidates:
            s_row = model.entity_row(subject)
            scores = _all_tail_scores(model, s_row, r)
            conf = _sigmoid(scores)
            order = sorted(
                range(len(scores)),
                key=lambda i: (-scores[i], entities[i].sort_key()),
            )
            emitted = 0
            for i in order:
                if emitted >= top_k:
                    break
                if i == s_row:
                    continue
                if conf[i] <= threshold:
                    break
                out.append(
                    ScoredTriple(
                        Triple(subject, rel, entities[i]),
                        float(conf[i]),
                        source_id="completion",
                        predicted=True,
                    )
                )
                emitted += 1
    return out


def agreement_check(
    old_labels: list[str], new_labels: list[str], sim_threshold: float = 0.8
) -> float:
    """Fraction of paired labels agreeing exactly (after case folding) or by
    normalized string similarity at the threshold."""
    if len(old_labels) != len(new_labels):
        raise CompletionError(
            f"label lists differ in length: {len(old_labels)} vs {len(new_labels)}"
        )
    if not old_labels:
        return 1.0
    agree = 0
    for a, b in zip(old_labels, new_labels):
        fa, fb = a.casefold(), b.casefold()
        if fa == fb or string_similarity(fa, fb) >= sim_threshold:
            agree += 1
    return agree / len(old_labels)


# ----------------------------------------------------------------------
# persistence and dataset loading

def save_model(model: EmbeddingModel, path) -> None:
    """Write the model in the versioned binary layout: magic, version,
    n_e, n_r, d, the two rendered-term name blocks, then the four float64
    little-endian matrices."""
    n_e, n_r, d = len(model.entity_index), len(model.relation_index), model.dimension
    e_names = "\n".join(render_term(t) for t in model.entities).encode("utf-8")
    r_names = "\n".join(render_term(t) for t in model.relations).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _FORMAT_VERSION, n_e, n_r, d))
        fh.write(struct.pack("<Q", len(e_names)))
        fh.write(e_names)
        fh.write(struct.pack("<Q", len(r_names)))
        fh.write(r_names)
        for arr in (model.entity_re, model.entity_im, model.relation_re, model.relation_im):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise CompletionError(f"{path}: not a model file (bad magic)")
        version, n_e, n_r, d = struct.unpack("<IIII", fh.read(16))
        if version != _FORMAT_VERSION:
            raise CompletionError(f"{path}: unsupported model version {version}")
        (e_len,) = struct.unpack("<Q", fh.read(8))
        e_names = fh.read(e_len).decode("utf-8")
        (r_len,) = struct.unpack("<Q", fh.read(8))
        r_names = fh.read(r_len).decode("utf-8")
        arrays = []
        for rows in (n_e, n_e, n_r, n_r):
            buf = fh.read(rows * d * 8)
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(rows, d).copy())
    entity_terms = [parse_term(s) for s in e_names.split("\n")] if e_names else []
    relation_terms = [parse_term(s) for s in r_names.split("\n")] if r_names else []
    return EmbeddingModel(
        arrays[0],
        arrays[1],
        arrays[2],
        arrays[3],
        {t: i for i, t in enumerate(entity_terms)},
        {t: i for i, t in enumerate(relation_terms)},
        d,
    )


def load_tsv(path) -> list[Triple]:
    """Load a 3-column (head, relation, tail) tab-separated triple file."""
    triples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CompletionError(f"expected 3 tab-separated columns, got {len(parts)}")
            h, r, t = (p.strip().replace(" ", "_") for p in parts)
            triples.append(Triple(Term.iri(h), Term.iri(r), Term.iri(t)))
    return triples


def training_triples(kg: KnowledgeGraph) -> list[Triple]:
    """The embedding training pool: resource-object data statements plus
    instance type assertions.

    Literal-valued statements are excluded (their objects are almost
    always singletons and contribute nothing learnable).  Instance typing
    stays because shared classes are strong similarity signal, but
    vocabulary declarations (rdf:type rdfs:Class and friends) are not
    instance data and are left out.
    """
    pool = {st.triple for st in kg.data_statements if not st.triple.object.is_literal}
    pool.update(
        t
        for t in kg.type_assertions()
        if t.object.is_iri and t.object.value not in META_CLASSES
    )
    return sorted(pool, key=Triple.sort_key)
