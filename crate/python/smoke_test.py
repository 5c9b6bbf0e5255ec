"""Smoke test for the Python extension.

Build and install first:
    maturin develop --release -m crates/python/Cargo.toml
"""
import math

import diversirec as dr


def main():
    assert dr.auc([0.9, 0.1, 0.5], [1, 0, 0]) == 1.0
    assert dr.mrr([0.1, 0.9], [1, 0]) == 0.5
    assert dr.ndcg([0.3, 0.2], [1, 0], 5) == 1.0
    assert dr.auc([0.5, 0.5], [1, 1]) is None

    t, df, p = dr.welch_t_test([1.0, 2.0, 3.0, 4.0], [2.0, 3.5, 4.0, 6.0])
    assert 0.0 < p < 1.0 and df > 0 and t < 0

    cfg = dr.SynthConfig(n_users=60, delta=2.0, k_true=3, seed=5)
    news, behaviors = cfg.generate()
    assert news.count("\n") > 0 and behaviors.count("\n") > 0
    again, _ = dr.SynthConfig(n_users=60, delta=2.0, k_true=3, seed=5).generate()
    assert again == news

    corpus = dr.Corpus.from_tsv(news, behaviors)
    assert corpus.n_users == 60 and corpus.warnings == 0
    summary = corpus.summary()
    assert summary["impressions"] == len(corpus)
    adj = corpus.adjacency_ratio("adjacent_category")
    rnd = corpus.adjacency_ratio("random_category", seed=1)
    assert adj < rnd, (adj, rnd)

    tc = dr.TrainConfig(variant="temprec", epochs=1, d_model=16, heads=4, word_dim=16, batch=32)
    assert tc.get("variant") == "temprec"
    try:
        dr.TrainConfig(variant="nope")
    except ValueError:
        pass
    else:
        raise AssertionError("bad variant accepted")

    out = dr.train_and_test(corpus, tc, "2019-11-16", "2019-11-17")
    assert 0.0 <= out["auc"] <= 1.0 and out["impressions"] > 0
    assert len(out["losses"]) == 1 and math.isfinite(out["losses"][0])
    assert out["w"] is not None

    print("smoke test ok: auc %.4f w %.4f" % (out["auc"], out["w"]))


if __name__ == "__main__":
    main()
