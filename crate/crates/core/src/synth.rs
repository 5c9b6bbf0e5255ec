//! Synthetic MIND-layout click logs with a controllable preference for
//! temporal diversity.
//!
//! Every user clicks one candidate per impression. The click probability is
//! a softmax over the candidates of `affinity[topic] - delta * recent`,
//! where `recent` is 1 when the candidate's topic appears among the user's
//! last `k_true` clicks.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::format_time;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_news: usize,
    pub n_topics: usize,
    /// Words reserved for each topic.
    pub words_per_topic: usize,
    /// Words shared by all topics.
    pub shared_words: usize,
    /// Probability that a title word comes from its topic's pool.
    pub topic_word_prob: f64,
    pub title_len: (usize, usize),
    /// Length range of the history that precedes a user's first impression.
    pub history_len: (usize, usize),
    pub impressions_per_user: usize,
    pub candidates: usize,
    /// Spread of per-user topic affinities.
    pub preference_sigma: f64,
    pub delta: f64,
    pub k_true: usize,
    /// Impressions are spread evenly over this many days.
    pub days: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_news: 600,
            n_topics: 10,
            words_per_topic: 12,
            shared_words: 40,
            topic_word_prob: 0.7,
            title_len: (4, 8),
            history_len: (5, 20),
            impressions_per_user: 9,
            candidates: 8,
            preference_sigma: 0.25,
            delta: 2.0,
            k_true: 3,
            days: 9,
            seed: 7,
        }
    }
}

/// Generated `news.tsv` and `behaviors.tsv` contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthCorpus {
    pub news_tsv: String,
    pub behaviors_tsv: String,
}

/// Midnight of the first simulated day.
pub fn synth_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2019, 11, 9)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// Start of simulated day `d`.
pub fn synth_day(d: usize) -> NaiveDateTime {
    synth_epoch() + Duration::days(d as i64)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_news", self.n_news),
            ("n_topics", self.n_topics),
            ("words_per_topic", self.words_per_topic),
            ("impressions_per_user", self.impressions_per_user),
            ("candidates", self.candidates),
            ("k_true", self.k_true),
            ("days", self.days),
            ("title_len", self.title_len.0),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.title_len.0 > self.title_len.1 || self.history_len.0 > self.history_len.1 {
            return Err(Error::Config("length ranges must have min <= max".into()));
        }
        if self.candidates > self.n_news {
            return Err(Error::Config(format!(
                "{} candidates per impression but only {} news",
                self.candidates, self.n_news
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.topic_word_prob) || !(self.preference_sigma >= 0.0) {
            return Err(Error::Config("topic_word_prob must be in [0, 1] and preference_sigma >= 0".into()));
        }
        if self.shared_words == 0 && self.topic_word_prob < 1.0 {
            return Err(Error::Config("shared_words is 0 but titles draw shared words".into()));
        }
        Ok(())
    }
}

fn topic_word(t: usize, j: usize) -> String {
    format!("t{t}w{j}")
}

fn entity_json(t: usize, surface: &str) -> String {
    serde_json::json!([{
        "Label": format!("Topic {t}"),
        "Type": "O",
        "WikidataId": format!("Q{}", 90000 + t),
        "Confidence": 1.0,
        "OccurrenceOffsets": [0],
        "SurfaceForms": [surface],
    }])
    .to_string()
}

/// Samples an index with probability proportional to `exp(logits)`.
fn sample_softmax<R: Rng>(rng: &mut R, logits: &[f64]) -> usize {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let mut u = rng.gen::<f64>() * w.iter().sum::<f64>();
    for (i, x) in w.iter().enumerate() {
        if u < *x {
            return i;
        }
        u -= x;
    }
    w.len() - 1
}

struct User {
    affinity: Vec<f64>,
    clicks: Vec<usize>,
}

impl User {
    /// Draws `m` distinct candidates and the one the user clicks.
    fn impression<R: Rng>(&self, rng: &mut R, topics: &[usize], cfg: &SynthConfig) -> (Vec<usize>, usize) {
        let cands = sample(rng, topics.len(), cfg.candidates).into_vec();
        let recent: Vec<usize> = self.clicks[self.clicks.len().saturating_sub(cfg.k_true)..]
            .iter()
            .map(|&n| topics[n])
            .collect();
        let logits: Vec<f64> = cands
            .iter()
            .map(|&c| {
                let t = topics[c];
                self.affinity[t] - if recent.contains(&t) { cfg.delta } else { 0.0 }
            })
            .collect();
        let pick = sample_softmax(rng, &logits);
        (cands, pick)
    }
}

/// Builds a corpus; output depends only on `cfg`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut topics = Vec::with_capacity(cfg.n_news);
    let mut news_tsv = String::new();
    for i in 0..cfg.n_news {
        let t = rng.gen_range(0..cfg.n_topics);
        topics.push(t);
        let len = rng.gen_range(cfg.title_len.0..=cfg.title_len.1);
        let words: Vec<String> = (0..len)
            .map(|_| {
                if rng.gen::<f64>() < cfg.topic_word_prob {
                    topic_word(t, rng.gen_range(0..cfg.words_per_topic))
                } else {
                    format!("w{}", rng.gen_range(0..cfg.shared_words))
                }
            })
            .collect();
        let title = words.join(" ");
        let url = format!("https://example.org/news/{}", i + 1);
        news_tsv.push_str(&format!(
            "N{}\ttopic{t}\tsub{t}\t{title}\t\t{url}\t{}\t[]\n",
            i + 1,
            entity_json(t, &words[0])
        ));
    }

    let normal = Normal::new(0.0, cfg.preference_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let step = Duration::seconds((cfg.days as i64 * 86_400) / cfg.impressions_per_user as i64);
    let mut rows: Vec<(NaiveDateTime, usize, String)> = Vec::new();
    for u in 0..cfg.n_users {
        let mut user = User {
            affinity: (0..cfg.n_topics).map(|_| normal.sample(&mut rng)).collect(),
            clicks: Vec::new(),
        };
        let hist_len = rng.gen_range(cfg.history_len.0..=cfg.history_len.1);
        for _ in 0..hist_len {
            let (cands, pick) = user.impression(&mut rng, &topics, cfg);
            user.clicks.push(cands[pick]);
        }
        for j in 0..cfg.impressions_per_user {
            let jitter = Duration::seconds(rng.gen_range(0..step.num_seconds().max(2) / 2));
            let time = synth_epoch() + step * j as i32 + jitter;
            let (cands, pick) = user.impression(&mut rng, &topics, cfg);
            let history: Vec<String> = user.clicks.iter().map(|n| format!("N{}", n + 1)).collect();
            let impressions: Vec<String> = cands
                .iter()
                .enumerate()
                .map(|(k, n)| format!("N{}-{}", n + 1, u8::from(k == pick)))
                .collect();
            rows.push((
                time,
                u,
                format!("U{}\t{}\t{}\t{}", u + 1, format_time(&time), history.join(" "), impressions.join(" ")),
            ));
            user.clicks.push(cands[pick]);
        }
    }
    rows.sort_by_key(|a| (a.0, a.1));
    let behaviors_tsv = rows
        .iter()
        .enumerate()
        .map(|(i, (_, _, rest))| format!("{}\t{rest}\n", i + 1))
        .collect();
    Ok(SynthCorpus { news_tsv, behaviors_tsv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{adjacency_stats, AdjacencyMode, Corpus};

    fn small(delta: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n_users: 60,
            n_news: 200,
            delta,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_corpus(&small(1.0, 3)).unwrap();
        assert_eq!(a, generate_corpus(&small(1.0, 3)).unwrap());
        assert_ne!(a, generate_corpus(&small(1.0, 4)).unwrap());
    }

    #[test]
    fn parses_without_warnings() {
        let g = generate_corpus(&small(2.0, 1)).unwrap();
        let c = Corpus::from_tsv(&g.news_tsv, &g.behaviors_tsv).unwrap();
        assert_eq!(c.warnings.total(), 0);
        assert_eq!(c.news.len(), 200);
        assert_eq!(c.impressions.len(), 60 * 9);
        for imp in &c.impressions {
            assert_eq!(imp.candidates.len(), 8);
            assert_eq!(imp.clicked().count(), 1);
            assert!(imp.time.is_some());
        }
        assert!(c.news.iter().all(|n| n.entities.len() == 1));
        // re-serialising reproduces the generated lines exactly
        let lines: Vec<String> = c.impressions.iter().map(|i| i.to_tsv_line()).collect();
        assert_eq!(lines.join("\n") + "\n", g.behaviors_tsv);
    }

    #[test]
    fn history_grows_by_previous_click() {
        let g = generate_corpus(&small(0.5, 2)).unwrap();
        let c = Corpus::from_tsv(&g.news_tsv, &g.behaviors_tsv).unwrap();
        let mine: Vec<_> = c.impressions.iter().filter(|i| i.user_id == "U5").collect();
        for w in mine.windows(2) {
            let mut expect = w[0].history.clone();
            expect.extend(w[0].clicked().map(str::to_string));
            assert_eq!(w[1].history, expect);
            assert!(w[0].time < w[1].time);
        }
    }

    #[test]
    fn diversity_lowers_adjacent_ratio() {
        let ratio = |delta| {
            let g = generate_corpus(&small(delta, 9)).unwrap();
            let c = Corpus::from_tsv(&g.news_tsv, &g.behaviors_tsv).unwrap();
            (
                adjacency_stats(&c, AdjacencyMode::AdjacentCategory, 0, 0).unwrap(),
                adjacency_stats(&c, AdjacencyMode::RandomCategory, 20_000, 1).unwrap(),
            )
        };
        let (adj, rnd) = ratio(2.0);
        assert!(adj + 0.05 < rnd, "{adj} {rnd}");
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            SynthConfig { n_users: 0, ..SynthConfig::default() },
            SynthConfig { delta: -1.0, ..SynthConfig::default() },
            SynthConfig { k_true: 0, ..SynthConfig::default() },
            SynthConfig { candidates: 700, ..SynthConfig::default() },
        ] {
            assert!(matches!(generate_corpus(&bad), Err(Error::Config(_))));
        }
    }
}
