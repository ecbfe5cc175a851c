"""Seeded synthetic comment corpus with adversarial spam campaigns.

Benign comments are bags of topic tokens.  Spam comes from three campaign kinds:

a. a few dedicated accounts posting ads under many items, mixing overt ads with
   quiet teasers that read like ordinary comments;
b. one ad template reposted by many ordinary users, with contact tokens swapped
   for look-alike variants;
c. coupons posted by ordinary users under on-topic items: each reads like a
   normal comment whose topical words are respelled with fresh, never-repeated
   look-alikes of a few common words, and the contact token is often left out.

Look-alike variants and respellings get word vectors close to their base
token, so similarity search can still link deformed copies while a model that
memorises spellings cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import CommentRecord, write_node_features, write_records


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_users: int = 500
    n_items: int = 1500
    n_comments: int = 5000
    spam_fraction: float = 0.10
    campaign_mix: tuple = (0.20, 0.15, 0.65)  # (a) same-user ads, (b) deformed cross-user ads, (c) coupons
    deformation_rate: float = 0.5
    vocab_size: int = 2000
    embedding_dim: int = 24
    time_span: int = 30 * 86400
    n_topics: int = 20
    topic_size: int = 60
    generic_share: float = 0.35
    length_range: tuple = (6, 12)
    spammers_a: int = 10
    teaser_share: float = 0.5  # fraction of campaign (a) comments that read as benign
    campaigns_b: int = 4
    campaigns_c: int = 25
    contact_handles: int = 3
    coupon_template_share: float = 0.8
    coupon_contact_prob: float = 0.4
    template_size: int = 3
    topic_zipf: float = 1.0
    topic_coherence: float = 0.6  # weight of the topic centre in topic word vectors
    variants_per_token: int = 4
    variant_cosine: float = 0.9
    coupon_variant_cosine: float = 0.97
    feature_dim: int = 8
    feature_signal: float = 0.3

    def __post_init__(self):
        self.campaign_mix = tuple(float(x) for x in self.campaign_mix)
        self.length_range = tuple(int(x) for x in self.length_range)
        for name in ("n_users", "n_items", "n_comments", "vocab_size", "embedding_dim", "n_topics", "topic_size"):
            if getattr(self, name) <= 0:
                raise SynthConfigError(f"{name} must be positive")
        for name in ("spam_fraction", "deformation_rate", "generic_share", "teaser_share", "coupon_contact_prob", "coupon_template_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthConfigError(f"{name} must lie in [0, 1], got {v}")
        if len(self.campaign_mix) != 3 or min(self.campaign_mix) < 0 or sum(self.campaign_mix) <= 0:
            raise SynthConfigError("campaign_mix needs three non-negative weights with a positive sum")
        if self.contact_handles < 1:
            raise SynthConfigError("contact_handles must be at least 1")
        for name in ("variant_cosine", "coupon_variant_cosine"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise SynthConfigError(f"{name} must lie in (0, 1]")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise SynthConfigError("length_range must satisfy 1 <= lo <= hi")


@dataclass
class SynthCorpus:
    records: list[CommentRecord]
    tokens: list[str]
    vectors: np.ndarray
    user_features: dict[str, np.ndarray]
    item_features: dict[str, np.ndarray]
    campaign: dict[str, str] = field(default_factory=dict)  # comment_id -> "benign" | "a" | "b" | "c" | "teaser"

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "records": out / "records.jsonl",
            "embeddings": out / "embeddings.txt",
            "user_features": out / "user_features.jsonl",
            "item_features": out / "item_features.jsonl",
        }
        write_records(paths["records"], self.records)
        with open(paths["embeddings"], "w", encoding="utf-8") as fh:
            for tok, vec in zip(self.tokens, self.vectors):
                fh.write(tok + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")
        write_node_features(paths["user_features"], "user_id", self.user_features)
        write_node_features(paths["item_features"], "item_id", self.item_features)
        return paths


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _spam_counts(cfg: SynthConfig) -> tuple[int, int, int]:
    n_spam = int(round(cfg.spam_fraction * cfg.n_comments))
    mix = np.asarray(cfg.campaign_mix) / sum(cfg.campaign_mix)
    n_a = int(round(n_spam * mix[0]))
    n_b = int(round(n_spam * mix[1]))
    return n_a, n_b, n_spam - n_a - n_b


def synth_corpus(cfg: SynthConfig, seed: int) -> SynthCorpus:
    rng = np.random.default_rng(seed)
    n_a, n_b, n_c = _spam_counts(cfg)
    spammers = cfg.spammers_a if n_a else 0
    campaigns_b = cfg.campaigns_b if n_b else 0
    campaigns_c = cfg.campaigns_c if n_c else 0
    if n_a and spammers < 1 or n_b and campaigns_b < 1 or n_c and campaigns_c < 1:
        raise SynthConfigError("every campaign kind with a positive share needs at least one campaign")
    n_benign_users = cfg.n_users - spammers
    if n_benign_users < max(1, campaigns_b):
        raise SynthConfigError(
            f"{cfg.n_users} users cannot host {spammers} ad accounts and ordinary users"
        )
    if spammers and math.ceil(n_a / spammers) > cfg.n_items:
        raise SynthConfigError("campaign (a) needs more distinct items than exist")
    n_benign = cfg.n_comments - n_a - n_b - n_c
    if n_benign < 0:
        raise SynthConfigError("spam counts exceed n_comments")
    n_campaigns = campaigns_b + campaigns_c + (1 if spammers else 0)
    n_contacts = cfg.contact_handles if n_campaigns else 0
    n_base = cfg.vocab_size - n_contacts * (1 + cfg.variants_per_token)
    if n_base < cfg.n_topics * 2 or n_base < cfg.template_size:
        raise SynthConfigError("vocab_size too small for the requested topics and campaigns")

    d = cfg.embedding_dim
    # ---- vocabulary and word vectors
    tokens = [f"w{k:04d}" for k in range(n_base)]
    topic_centers = _unit(rng.normal(size=(cfg.n_topics, d)))
    n_generic = max(1, n_base // 10)
    token_topic = np.full(n_base, -1)
    token_topic[n_generic:] = rng.integers(0, cfg.n_topics, size=n_base - n_generic)
    vec = rng.normal(size=(n_base, d)) / math.sqrt(d)
    has_topic = token_topic >= 0
    vec[has_topic] += cfg.topic_coherence * topic_centers[token_topic[has_topic]]
    vectors = [_unit(vec)]
    generic = np.arange(n_generic)
    topic_tokens = [np.flatnonzero(token_topic == t) for t in range(cfg.n_topics)]
    for t in range(cfg.n_topics):
        if len(topic_tokens[t]) == 0:
            topic_tokens[t] = rng.choice(np.arange(n_generic, n_base), size=1)
        topic_tokens[t] = topic_tokens[t][: cfg.topic_size]
    generic_w = 1.0 / np.arange(1, n_generic + 1)
    generic_w /= generic_w.sum()
    topic_w = []
    for t in range(cfg.n_topics):
        wt = 1.0 / np.arange(1, len(topic_tokens[t]) + 1) ** cfg.topic_zipf
        topic_w.append(wt / wt.sum())

    def near(base: np.ndarray, cos: float) -> np.ndarray:
        noise = rng.normal(size=d)
        noise -= noise @ base * base
        return cos * base + math.sqrt(max(0.0, 1 - cos * cos)) * _unit(noise)

    contacts: list[list[int]] = []  # per contact: [base id, variant ids...]
    extra_vecs = []
    nxt = n_base
    for c in range(n_contacts):
        base = _unit(rng.normal(size=d))
        ids = [nxt]
        tokens.append(f"ct{c:02d}")
        extra_vecs.append(base)
        nxt += 1
        for v in range(cfg.variants_per_token):
            extra_vecs.append(near(base, cfg.variant_cosine))
            tokens.append(f"ct{c:02d}v{v}")
            ids.append(nxt)
            nxt += 1
        contacts.append(ids)

    # coupon templates: a few common words of one topic; every coupon respells
    # them afresh, so the spellings are rare and never repeat, yet embed almost
    # like the originals
    coupon_topic, coupon_tpl = [], []
    for k in range(campaigns_c):
        t = int(rng.integers(cfg.n_topics))
        common = topic_tokens[t][: cfg.template_size]
        coupon_topic.append(t)
        coupon_tpl.append(rng.choice(common, size=min(cfg.template_size, len(common)), replace=False))
    base_vecs = vectors[0]

    def respell(w: int) -> int:
        nonlocal nxt
        extra_vecs.append(near(base_vecs[w], cfg.coupon_variant_cosine))
        tokens.append(f"{tokens[w]}r{nxt}")
        nxt += 1
        return nxt - 1

    lo, hi = cfg.length_range

    def benign_tokens(topic: int) -> list[int]:
        n = int(rng.integers(lo, hi + 1))
        use_generic = rng.random(n) < cfg.generic_share
        out = np.where(
            use_generic,
            rng.choice(generic, size=n, p=generic_w),
            rng.choice(topic_tokens[topic], size=n, p=topic_w[topic]),
        )
        return out.tolist()

    def contact_token(c: int) -> int:
        ids = contacts[c % n_contacts]
        if rng.random() < cfg.deformation_rate and len(ids) > 1:
            return int(rng.choice(ids[1:]))
        return ids[0]

    # ad campaigns have a body template of arbitrary words and share the contact handles
    pool = np.arange(n_generic, n_base)
    n_ads = n_campaigns - campaigns_c
    templates = [rng.choice(pool, size=cfg.template_size, replace=False) for _ in range(n_ads)] + coupon_tpl
    template_topic = [-1] * n_ads + coupon_topic
    off_c = n_ads

    def template_tokens(c: int, contact_prob: float) -> list[int]:
        tpl = templates[c]
        t = template_topic[c]
        if t >= 0:
            # an ordinary comment on the topic with some words respelled
            body = benign_tokens(t)
            topical = np.isin(body, generic, invert=True)
            swap = topical & (rng.random(len(body)) < cfg.coupon_template_share)
            body = [respell(int(rng.choice(tpl))) if sw else w for w, sw in zip(body, swap)]
        else:
            keep = tpl[rng.random(len(tpl)) >= cfg.deformation_rate * 0.5]
            body = rng.permutation(keep).tolist()
            body += rng.choice(generic, size=int(rng.integers(1, 3)), p=generic_w).tolist()
            body = rng.permutation(body).tolist()
        if rng.random() < contact_prob:
            body.insert(int(rng.integers(0, len(body) + 1)), contact_token(c))
        return body

    # ---- users and items
    users = [f"u{k:04d}" for k in range(cfg.n_users)]
    items = [f"i{k:04d}" for k in range(cfg.n_items)]
    perm = rng.permutation(cfg.n_users)
    ad_accounts = [users[k] for k in perm[:spammers]]
    ordinary = [users[k] for k in perm[spammers:]]
    user_topic = {u: int(rng.integers(cfg.n_topics)) for u in users}
    item_topic_arr = rng.integers(0, cfg.n_topics, size=cfg.n_items)
    item_topic = dict(zip(items, item_topic_arr.tolist()))
    activity = rng.pareto(3.0, size=len(ordinary)) + 1.0
    activity /= activity.sum()
    item_pop = rng.pareto(1.2, size=cfg.n_items) + 1.0
    item_pop /= item_pop.sum()

    rows: list[tuple] = []  # (user, item, tokens, time, label, kind)

    def when(center=None, spread=None):
        if center is None:
            return int(rng.integers(0, cfg.time_span))
        return int(np.clip(round(rng.normal(center, spread)), 0, cfg.time_span - 1))

    for k in range(n_benign):
        u = ordinary[int(rng.choice(len(ordinary), p=activity))]
        i = items[int(rng.choice(cfg.n_items, p=item_pop))]
        topic = item_topic[i] if rng.random() < 0.5 else user_topic[u]
        rows.append((u, i, benign_tokens(topic), when(), 0, "benign"))

    # (a) dedicated accounts, one ad per distinct item
    if spammers:
        c = 0
        per = np.full(spammers, n_a // spammers)
        per[: n_a % spammers] += 1
        for s, u in enumerate(ad_accounts):
            chosen = rng.choice(cfg.n_items, size=int(per[s]), replace=False)
            center = rng.integers(0, cfg.time_span)
            for k in chosen:
                if rng.random() < cfg.teaser_share:
                    toks, kind = benign_tokens(item_topic[items[k]]), "teaser"
                else:
                    toks, kind = template_tokens(c, 1.0), "a"
                rows.append((u, items[int(k)], toks, when(center, cfg.time_span / 10), 1, kind))

    # (b) cross-user reposts by ordinary users
    off_b = 1 if spammers else 0
    for k in range(n_b):
        c = off_b + k % campaigns_b
        u = ordinary[int(rng.integers(len(ordinary)))]
        i = items[int(rng.choice(cfg.n_items, p=item_pop))]
        rows.append((u, i, template_tokens(c, 1.0), when(), 1, "b"))

    # (c) coupons from ordinary users, placed under items of the coupon's topic;
    # posters are drawn from a flattened activity profile, so quiet accounts are
    # over-represented relative to benign traffic
    quiet = np.sqrt(activity)
    quiet /= quiet.sum()
    posters = rng.choice(len(ordinary), size=n_c, p=quiet)
    for k in range(n_c):
        c = off_c + k % campaigns_c
        u = ordinary[int(posters[k])]
        on_topic = np.flatnonzero(item_topic_arr == template_topic[c])
        if len(on_topic) == 0:
            on_topic = np.arange(cfg.n_items)
        w = item_pop[on_topic] / item_pop[on_topic].sum()
        i = items[int(on_topic[rng.choice(len(on_topic), p=w)])]
        rows.append((u, i, template_tokens(c, cfg.coupon_contact_prob), when(), 1, "c"))

    if extra_vecs:
        vectors.append(np.vstack(extra_vecs))
    vectors = np.vstack(vectors)

    # ---- shuffle into comment ids ordered by time
    order = sorted(range(len(rows)), key=lambda r: (rows[r][3], r))
    records = []
    campaign = {}
    width = max(5, len(str(len(rows))))
    for n, r in enumerate(order):
        u, i, toks, t, y, kind = rows[r]
        cid = f"c{n:0{width}d}"
        records.append(CommentRecord(cid, u, i, tuple(tokens[x] for x in toks), t, y))
        campaign[cid] = kind

    # ---- node feature sidecars: weak, noisy signals only
    fd = cfg.feature_dim
    degree = {}
    for r in records:
        degree[r.user_id] = degree.get(r.user_id, 0) + 1
    spam_users = set(ad_accounts)
    user_features = {}
    for u in users:
        f = rng.normal(size=fd)
        if fd:
            f[0] = math.log1p(degree.get(u, 0)) - 1.0
        if fd > 1 and u in spam_users:
            f[1] += cfg.feature_signal
        user_features[u] = f
    item_features = {}
    for i in items:
        f = rng.normal(size=fd)
        if fd:
            f[0] = 0.5 * topic_centers[item_topic[i]][0] * math.sqrt(d) + 0.5 * f[0]
        item_features[i] = f
    return SynthCorpus(records, tokens, vectors, user_features, item_features, campaign)
