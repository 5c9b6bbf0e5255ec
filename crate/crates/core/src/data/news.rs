use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// One row of a MIND-layout `news.tsv`. The raw text fields are kept so a
/// record serializes back to the exact line it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewsRecord {
    pub id: String,
    pub category: String,
    pub subcategory: String,
    pub title: String,
    pub abstract_text: String,
    pub url: String,
    pub title_entities_raw: String,
    pub abstract_entities_raw: String,
    pub extra: Vec<String>,
    /// Lowercased title tokens.
    pub tokens: Vec<String>,
    /// `WikidataId`s mentioned in the title.
    pub entities: Vec<String>,
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").expect("valid pattern"))
}

/// Lowercases and splits on whitespace and punctuation boundaries;
/// punctuation characters become their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_re().find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

pub fn parse_entity_ids(raw: &str, line: usize) -> Result<Vec<String>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    let json: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| Error::parse(line, format!("malformed entity JSON: {e}")))?;
    let items = json
        .as_array()
        .ok_or_else(|| Error::parse(line, "entity field is not a JSON array"))?;
    Ok(items
        .iter()
        .filter_map(|item| item.get("WikidataId").and_then(|v| v.as_str()))
        .map(str::to_string)
        .collect())
}

/// Parses one `news.tsv` line; `line` is the 1-based line number used in
/// error messages.
pub fn parse_news_line(tsv_line: &str, line: usize) -> Result<NewsRecord> {
    let fields: Vec<&str> = tsv_line.split('\t').collect();
    if fields.len() < 8 {
        return Err(Error::parse(
            line,
            format!("news record has {} tab-separated fields, expected 8", fields.len()),
        ));
    }
    if fields[0].is_empty() {
        return Err(Error::parse(line, "empty news id"));
    }
    Ok(NewsRecord {
        id: fields[0].to_string(),
        category: fields[1].to_string(),
        subcategory: fields[2].to_string(),
        title: fields[3].to_string(),
        abstract_text: fields[4].to_string(),
        url: fields[5].to_string(),
        title_entities_raw: fields[6].to_string(),
        abstract_entities_raw: fields[7].to_string(),
        extra: fields[8..].iter().map(|s| s.to_string()).collect(),
        tokens: tokenize(fields[3]),
        entities: parse_entity_ids(fields[6], line)?,
    })
}

impl NewsRecord {
    pub fn to_tsv_line(&self) -> String {
        let mut fields = vec![
            self.id.as_str(),
            &self.category,
            &self.subcategory,
            &self.title,
            &self.abstract_text,
            &self.url,
            &self.title_entities_raw,
            &self.abstract_entities_raw,
        ];
        fields.extend(self.extra.iter().map(String::as_str));
        fields.join("\t")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conforming_record() {
        let r = parse_news_line("N1\tsports\tsoccer\tTeam wins final\tabs\thttp://x\t[]\t[]", 1).unwrap();
        assert_eq!(r.category, "sports");
        assert_eq!(r.tokens, ["team", "wins", "final"]);
        assert!(r.entities.is_empty());
    }

    #[test]
    fn entities_extracted() {
        let line = "N2\tnews\tus\tA b\t\t\t[{\"Label\": \"X\", \"WikidataId\":\"Q123\"}]\t";
        let r = parse_news_line(line, 4).unwrap();
        assert_eq!(r.entities, ["Q123"]);
        assert_eq!(r.to_tsv_line(), line);
    }

    #[test]
    fn too_few_fields() {
        let err = parse_news_line("N1\ta\tb\tc\td", 7).unwrap_err().to_string();
        assert!(err.contains("line 7") && err.contains("5"), "{err}");
    }

    #[test]
    fn malformed_json() {
        let r = parse_news_line("N1\ta\tb\tc\t\t\t[{oops\t[]", 2);
        assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(tokenize("Hello, World's end!"), ["hello", ",", "world", "'", "s", "end", "!"]);
    }
}
