use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use super::behaviors::{parse_behaviors_line, ImpressionRecord};
use super::news::{parse_news_line, NewsRecord};
use crate::error::{Error, Result};

/// Counts of records or ids dropped while building a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Warnings {
    pub duplicate_news: usize,
    pub unresolved_history: usize,
    pub unresolved_candidates: usize,
    pub unparseable_time: usize,
}

impl Warnings {
    pub fn total(&self) -> usize {
        self.duplicate_news + self.unresolved_history + self.unresolved_candidates + self.unparseable_time
    }
}

/// Parsed news table plus impressions whose ids all resolve against it.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub news: Vec<NewsRecord>,
    pub news_index: HashMap<String, usize>,
    pub impressions: Vec<ImpressionRecord>,
    pub warnings: Warnings,
}

impl Corpus {
    pub fn from_tsv(news_tsv: &str, behaviors_tsv: &str) -> Result<Self> {
        Self::build(news_tsv, behaviors_tsv, None)
    }

    fn build(news_tsv: &str, behaviors_tsv: &str, paths: Option<(&Path, &Path)>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (i, line) in news_tsv.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = parse_news_line(line, i + 1).map_err(|e| match paths {
                Some((p, _)) => e.in_file(p),
                None => e,
            })?;
            if corpus.news_index.contains_key(&rec.id) {
                corpus.warnings.duplicate_news += 1;
                continue;
            }
            corpus.news_index.insert(rec.id.clone(), corpus.news.len());
            corpus.news.push(rec);
        }
        for (i, line) in behaviors_tsv.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut imp = parse_behaviors_line(line, i + 1).map_err(|e| match paths {
                Some((_, p)) => e.in_file(p),
                None => e,
            })?;
            if imp.time.is_none() {
                corpus.warnings.unparseable_time += 1;
            }
            let before = imp.history.len();
            imp.history.retain(|id| corpus.news_index.contains_key(id));
            corpus.warnings.unresolved_history += before - imp.history.len();
            let before = imp.candidates.len();
            imp.candidates.retain(|(id, _)| corpus.news_index.contains_key(id));
            corpus.warnings.unresolved_candidates += before - imp.candidates.len();
            corpus.impressions.push(imp);
        }
        Ok(corpus)
    }

    pub fn from_files(news: &Path, behaviors: &Path) -> Result<Self> {
        let n = std::fs::read_to_string(news).map_err(|e| Error::io(news, e))?;
        let b = std::fs::read_to_string(behaviors).map_err(|e| Error::io(behaviors, e))?;
        Self::build(&n, &b, Some((news, behaviors)))
    }

    pub fn news_by_id(&self, id: &str) -> Option<&NewsRecord> {
        self.news_index.get(id).map(|&i| &self.news[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.news_index.get(id).copied()
    }

    pub fn user_count(&self) -> usize {
        self.impressions.iter().map(|i| i.user_id.as_str()).collect::<HashSet<_>>().len()
    }

    /// Each user's chronological click sequence as news indices: the
    /// history of the user's earliest impression followed by the clicked
    /// candidates of every impression in time order. Users are ordered by
    /// id.
    pub fn user_click_sequences(&self) -> Vec<Vec<usize>> {
        let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, imp) in self.impressions.iter().enumerate() {
            by_user.entry(&imp.user_id).or_default().push(i);
        }
        by_user
            .into_values()
            .map(|mut idx| {
                // untimed impressions go last, in file order
                idx.sort_by_key(|&i| (self.impressions[i].time.is_none(), self.impressions[i].time, i));
                let mut seq: Vec<usize> = self.impressions[idx[0]]
                    .history
                    .iter()
                    .filter_map(|id| self.index_of(id))
                    .collect();
                for &i in &idx {
                    seq.extend(self.impressions[i].clicked().filter_map(|id| self.index_of(id)));
                }
                seq
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEWS: &str = "N1\ta\ts\tt one\t\t\t[]\t[]\nN2\tb\ts\tt two\t\t\t[]\t[]\nN1\ta\ts\tdup\t\t\t[]\t[]\n";

    #[test]
    fn unresolved_ids_dropped_and_counted() {
        let beh = "1\tU1\t11/11/2019 9:05:58 AM\tN1 N9\tN2-1 N8-0\n2\tU2\tbad time\t\tN1-1\n";
        let c = Corpus::from_tsv(NEWS, beh).unwrap();
        assert_eq!(c.news.len(), 2);
        assert_eq!(c.warnings.duplicate_news, 1);
        assert_eq!(c.warnings.unresolved_history, 1);
        assert_eq!(c.warnings.unresolved_candidates, 1);
        assert_eq!(c.warnings.unparseable_time, 1);
        assert_eq!(c.impressions[0].history, ["N1"]);
    }

    #[test]
    fn click_sequences_follow_time() {
        let beh = "2\tU1\t11/12/2019 9:00:00 AM\tN1\tN1-1 N2-0\n1\tU1\t11/11/2019 9:00:00 AM\tN1\tN2-1\n";
        let c = Corpus::from_tsv(NEWS, beh).unwrap();
        assert_eq!(c.user_click_sequences(), vec![vec![0, 1, 0]]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Corpus::from_tsv(NEWS, "1\tU1\tx\t\tN1-1\n2\tU1\tx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
