//! MIND-layout ingestion, vocabulary, chronological splits and corpus
//! statistics.

pub mod behaviors;
pub mod corpus;
pub mod embeddings;
pub mod news;
pub mod split;
pub mod stats;
pub mod vocab;

pub use behaviors::{format_time, parse_behaviors_line, parse_time, ImpressionRecord};
pub use corpus::{Corpus, Warnings};
pub use embeddings::read_pretrained;
pub use news::{parse_news_line, tokenize, NewsRecord};
pub use split::{chronological_split, default_boundaries, Splits};
pub use stats::{adjacency_stats, corpus_summary, AdjacencyMode, CorpusSummary};
pub use vocab::{build_vocab, Vocab};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn behaviors_round_trip(
            hist in proptest::collection::vec("N[0-9]{1,4}", 0..6),
            cands in proptest::collection::vec(("N[0-9]{1,4}", 0u8..2), 1..6),
            user in "U[0-9]{1,5}",
        ) {
            let c: Vec<String> = cands.iter().map(|(id, l)| format!("{id}-{l}")).collect();
            let line = format!("7\t{user}\t11/13/2019 10:01:02 PM\t{}\t{}", hist.join(" "), c.join(" "));
            let rec = parse_behaviors_line(&line, 1).unwrap();
            prop_assert_eq!(rec.to_tsv_line(), line.clone());
            prop_assert_eq!(parse_behaviors_line(&rec.to_tsv_line(), 1).unwrap(), rec);
        }

        #[test]
        fn news_round_trip(title in "[A-Za-z ,.']{0,40}", cat in "[a-z]{1,8}", q in 1u32..99999) {
            let line = format!("N1\t{cat}\tsub\t{title}\tabstract\thttps://x/y\t[{{\"WikidataId\": \"Q{q}\"}}]\t[]");
            let rec = parse_news_line(&line, 1).unwrap();
            prop_assert_eq!(rec.to_tsv_line(), line.clone());
            prop_assert_eq!(parse_news_line(&rec.to_tsv_line(), 1).unwrap(), rec);
        }
    }
}
