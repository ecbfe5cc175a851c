import filecmp

import numpy as np
import pytest

from gasspam.graph import build_graph
from gasspam.synth import SynthConfig, SynthConfigError, synth_corpus

SMALL = dict(n_users=60, n_items=150, n_comments=600, vocab_size=500)


def test_zero_spam_fraction_all_normal():
    c = synth_corpus(SynthConfig(spam_fraction=0.0, **SMALL), seed=0)
    assert all(r.label == 0 for r in c.records)
    assert len(c.records) == 600


def test_spam_fraction_respected():
    c = synth_corpus(SynthConfig(**SMALL), seed=1)
    assert sum(r.label for r in c.records) == 60


def test_same_seed_byte_identical(tmp_path):
    a = synth_corpus(SynthConfig(**SMALL), seed=3).write(tmp_path / "a")
    b = synth_corpus(SynthConfig(**SMALL), seed=3).write(tmp_path / "b")
    for k in a:
        assert filecmp.cmp(a[k], b[k], shallow=False), k
    c = synth_corpus(SynthConfig(**SMALL), seed=4).write(tmp_path / "c")
    assert not filecmp.cmp(a["records"], c["records"], shallow=False)


def test_single_spammer_twenty_items():
    cfg = SynthConfig(n_comments=200, spam_fraction=0.1, campaign_mix=(1, 0, 0), spammers_a=1, n_users=30, n_items=80, vocab_size=400)
    c = synth_corpus(cfg, seed=5)
    spam = [r for r in c.records if r.label == 1]
    assert len(spam) == 20
    owners = {r.user_id for r in spam}
    assert len(owners) == 1
    g = build_graph(c.records)
    u = owners.pop()
    assert g.degree("user", g.user_index[u]) == 20
    assert len({r.item_id for r in spam}) == 20


def test_deformed_contacts_embed_close_to_base():
    c = synth_corpus(SynthConfig(**SMALL), seed=2)
    idx = {t: k for k, t in enumerate(c.tokens)}
    base = c.vectors[idx["ct00"]]
    for v in range(4):
        var = c.vectors[idx[f"ct00v{v}"]]
        cos = var @ base / (np.linalg.norm(var) * np.linalg.norm(base))
        assert cos == pytest.approx(0.9, abs=1e-9)


def test_coupons_never_reuse_respelled_tokens():
    c = synth_corpus(SynthConfig(**SMALL), seed=6)
    seen = {}
    for r in c.records:
        if c.campaign[r.comment_id] == "c":
            for t in r.tokens:
                if "r" in t[1:]:
                    assert t not in seen
                    seen[t] = r.comment_id
    assert seen


@pytest.mark.parametrize(
    "kw",
    [
        dict(spam_fraction=1.5),
        dict(n_users=0),
        dict(campaign_mix=(0, 0, 0)),
        dict(length_range=(5, 2)),
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(SynthConfigError):
        synth_corpus(SynthConfig(**{**SMALL, **kw}), seed=0)


def test_more_campaigns_than_users_is_infeasible():
    with pytest.raises(SynthConfigError):
        synth_corpus(SynthConfig(n_users=5, spammers_a=5, n_items=50, n_comments=100, vocab_size=300), seed=0)
