//! Corpus statistics: the dataset summary table and same-topic /
//! same-entity ratios for adjacent versus random click pairs.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::Corpus;
use super::news::NewsRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdjacencyMode {
    AdjacentCategory,
    RandomCategory,
    AdjacentEntity,
    RandomEntity,
}

impl AdjacencyMode {
    pub const ALL: [AdjacencyMode; 4] = [
        AdjacencyMode::AdjacentCategory,
        AdjacencyMode::RandomCategory,
        AdjacencyMode::AdjacentEntity,
        AdjacencyMode::RandomEntity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyMode::AdjacentCategory => "adjacent_category",
            AdjacencyMode::RandomCategory => "random_category",
            AdjacencyMode::AdjacentEntity => "adjacent_entity",
            AdjacencyMode::RandomEntity => "random_entity",
        }
    }

    fn is_random(self) -> bool {
        matches!(self, AdjacencyMode::RandomCategory | AdjacencyMode::RandomEntity)
    }

    fn matches(self, a: &NewsRecord, b: &NewsRecord) -> bool {
        match self {
            AdjacencyMode::AdjacentCategory | AdjacencyMode::RandomCategory => a.category == b.category,
            AdjacencyMode::AdjacentEntity | AdjacencyMode::RandomEntity => {
                let set: HashSet<&String> = a.entities.iter().collect();
                b.entities.iter().any(|e| set.contains(e))
            }
        }
    }
}

impl fmt::Display for AdjacencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdjacencyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdjacencyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown adjacency mode {s:?}")))
    }
}

/// Fraction of click pairs sharing a category (or an entity).
///
/// Adjacent modes walk consecutive clicks in every user's chronological
/// sequence. Random modes draw `n_pairs` pairs of distinct click events
/// uniformly from the whole corpus.
pub fn adjacency_stats(corpus: &Corpus, mode: AdjacencyMode, n_pairs: usize, seed: u64) -> Result<f64> {
    let sequences = corpus.user_click_sequences();
    if mode.is_random() {
        if n_pairs == 0 {
            return Err(Error::Parameter("random pair sampling needs n_pairs >= 1".into()));
        }
        let events: Vec<usize> = sequences.into_iter().flatten().collect();
        if events.len() < 2 {
            return Err(Error::UndefinedRatio("fewer than two click events"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..n_pairs {
            let i = rng.gen_range(0..events.len());
            let mut j = rng.gen_range(0..events.len() - 1);
            if j >= i {
                j += 1;
            }
            if mode.matches(&corpus.news[events[i]], &corpus.news[events[j]]) {
                hits += 1;
            }
        }
        Ok(hits as f64 / n_pairs as f64)
    } else {
        let (mut hits, mut pairs) = (0usize, 0usize);
        for seq in &sequences {
            for w in seq.windows(2) {
                pairs += 1;
                if mode.matches(&corpus.news[w[0]], &corpus.news[w[1]]) {
                    hits += 1;
                }
            }
        }
        if pairs == 0 {
            return Err(Error::UndefinedRatio("no adjacent click pairs"));
        }
        Ok(hits as f64 / pairs as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusSummary {
    pub users: usize,
    pub news: usize,
    pub impressions: usize,
    pub positive_clicks: usize,
    pub history_clicks: usize,
    pub avg_title_len: f64,
    pub avg_click_seq_len: f64,
}

impl CorpusSummary {
    /// Positive candidate labels plus history clicks.
    pub fn click_behaviors(&self) -> usize {
        self.positive_clicks + self.history_clicks
    }

    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("#users", self.users.to_string()),
            ("#news", self.news.to_string()),
            ("#impressions", self.impressions.to_string()),
            ("#click behaviors", self.click_behaviors().to_string()),
            ("#positive candidate clicks", self.positive_clicks.to_string()),
            ("#history clicks", self.history_clicks.to_string()),
            ("avg. title len.", format!("{:.2}", self.avg_title_len)),
            ("avg. click seq. len.", format!("{:.2}", self.avg_click_seq_len)),
        ]
    }
}

/// Table-style corpus summary over the untruncated data. The click
/// sequence length is averaged over impressions.
pub fn corpus_summary(corpus: &Corpus) -> CorpusSummary {
    let mean = |total: usize, n: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    let title_tokens: usize = corpus.news.iter().map(|n| n.tokens.len()).sum();
    let history_clicks: usize = corpus.impressions.iter().map(|i| i.history.len()).sum();
    CorpusSummary {
        users: corpus.user_count(),
        news: corpus.news.len(),
        impressions: corpus.impressions.len(),
        positive_clicks: corpus.impressions.iter().map(|i| i.clicked().count()).sum(),
        history_clicks,
        avg_title_len: mean(title_tokens, corpus.news.len()),
        avg_click_seq_len: mean(history_clicks, corpus.impressions.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(cats: &[&str], history: &str, cands: &str) -> Corpus {
        let news: String = cats
            .iter()
            .enumerate()
            .map(|(i, c)| format!("N{i}\t{c}\ts\ttitle {i}\t\t\t[{{\"WikidataId\":\"Q{c}\"}}]\t\n"))
            .collect();
        Corpus::from_tsv(&news, &format!("1\tU1\t11/11/2019 9:00:00 AM\t{history}\t{cands}\n")).unwrap()
    }

    #[test]
    fn adjacent_hand_enumeration() {
        let c = corpus(&["A", "A", "B"], "N0 N1 N2", "N0-0");
        assert_eq!(adjacency_stats(&c, AdjacencyMode::AdjacentCategory, 1, 0).unwrap(), 0.5);
        assert_eq!(adjacency_stats(&c, AdjacencyMode::AdjacentEntity, 1, 0).unwrap(), 0.5);
    }

    #[test]
    fn single_category_everywhere_one() {
        let c = corpus(&["A", "A", "A"], "N0 N1", "N2-1");
        for m in AdjacencyMode::ALL {
            assert_eq!(adjacency_stats(&c, m, 100, 3).unwrap(), 1.0, "{m}");
        }
    }

    #[test]
    fn no_pairs_is_undefined() {
        let c = corpus(&["A"], "", "N0-1");
        assert!(matches!(
            adjacency_stats(&c, AdjacencyMode::AdjacentCategory, 1, 0),
            Err(Error::UndefinedRatio(_))
        ));
        assert!(adjacency_stats(&c, AdjacencyMode::RandomCategory, 0, 0).is_err());
    }

    #[test]
    fn random_modes_are_seeded() {
        let c = corpus(&["A", "B", "A", "C"], "N0 N1 N2 N3", "N1-1");
        let a = adjacency_stats(&c, AdjacencyMode::RandomCategory, 500, 7).unwrap();
        assert_eq!(a, adjacency_stats(&c, AdjacencyMode::RandomCategory, 500, 7).unwrap());
    }

    #[test]
    fn summary_hand_computed() {
        let news = "N0\tc\ts\tab cd\t\t\t[]\t[]\nN1\tc\ts\ta b c d\t\t\t[]\t[]\n";
        let c = Corpus::from_tsv(news, "1\tU\t11/11/2019 9:00:00 AM\tN0 N1 N0\tN1-1 N0-0\n").unwrap();
        let s = corpus_summary(&c);
        assert_eq!(s.avg_click_seq_len, 3.0);
        assert_eq!(s.avg_title_len, 3.0);
        assert_eq!((s.users, s.news, s.impressions, s.click_behaviors()), (1, 2, 1, 4));
        assert_eq!(corpus_summary(&Corpus::default()), CorpusSummary::default());
    }
}
