use std::io::BufRead;

use super::vocab::Vocab;
use crate::error::{Error, Result};

/// Reads `word v1 v2 ... vD` lines and keeps vectors for words in `vocab`,
/// returned as `(vocab index, vector)` in file order.
pub fn read_pretrained<R: BufRead>(reader: R, vocab: &Vocab, dim: usize) -> Result<Vec<(usize, Vec<f32>)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let mut parts = line.split(' ');
        let Some(word) = parts.next().filter(|w| !w.is_empty()) else {
            continue;
        };
        let Some(idx) = vocab.get(word) else { continue };
        let vec = parts
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f32>().map_err(|_| Error::parse(i + 1, format!("bad float {p:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vec.len() != dim {
            return Err(Error::parse(i + 1, format!("vector has {} values, expected {dim}", vec.len())));
        }
        out.push((idx, vec));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::news::parse_news_line;
    use crate::data::vocab::build_vocab;

    #[test]
    fn keeps_vocab_words_only() {
        let news = vec![parse_news_line("N1\tc\ts\tcat dog\t\t\t[]\t[]", 1).unwrap()];
        let vocab = build_vocab(&news, 1);
        let text = "cat 0.5 1\nfish 1 2\ndog -1 0.25\n";
        let got = read_pretrained(text.as_bytes(), &vocab, 2).unwrap();
        assert_eq!(got, vec![(vocab.id("cat"), vec![0.5, 1.0]), (vocab.id("dog"), vec![-1.0, 0.25])]);
        assert!(read_pretrained("cat 1 2 3\n".as_bytes(), &vocab, 2).is_err());
    }
}
