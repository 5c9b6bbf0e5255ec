use chrono::NaiveDateTime;

use crate::error::{Error, Result};

pub const TIME_FORMAT: &str = "%m/%d/%Y %I:%M:%S %p";
/// Format used when writing timestamps (unpadded hour, as in the MIND files).
pub const TIME_WRITE_FORMAT: &str = "%m/%d/%Y %-I:%M:%S %p";

/// One row of a MIND-layout `behaviors.tsv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImpressionRecord {
    pub impression_id: String,
    pub user_id: String,
    pub time_raw: String,
    /// `None` when `time_raw` does not parse.
    pub time: Option<NaiveDateTime>,
    /// Clicked news ids, oldest first.
    pub history: Vec<String>,
    pub candidates: Vec<(String, u8)>,
}

pub fn parse_time(raw: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(raw.trim(), TIME_FORMAT).ok()
}

pub fn format_time(t: &NaiveDateTime) -> String {
    t.format(TIME_WRITE_FORMAT).to_string()
}

pub fn parse_behaviors_line(tsv_line: &str, line: usize) -> Result<ImpressionRecord> {
    let fields: Vec<&str> = tsv_line.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            line,
            format!("behaviors record has {} tab-separated fields, expected 5", fields.len()),
        ));
    }
    let history = fields[3].split_whitespace().map(str::to_string).collect();
    let candidates = fields[4]
        .split_whitespace()
        .map(|tok| {
            let (id, label) = tok
                .rsplit_once('-')
                .ok_or_else(|| Error::parse(line, format!("candidate {tok:?} has no label")))?;
            let label = match label {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(line, format!("candidate label {other:?} is not 0 or 1"))),
            };
            Ok((id.to_string(), label))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpressionRecord {
        impression_id: fields[0].to_string(),
        user_id: fields[1].to_string(),
        time_raw: fields[2].to_string(),
        time: parse_time(fields[2]),
        history,
        candidates,
    })
}

impl ImpressionRecord {
    pub fn to_tsv_line(&self) -> String {
        let cands: Vec<String> = self.candidates.iter().map(|(id, l)| format!("{id}-{l}")).collect();
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.impression_id,
            self.user_id,
            self.time_raw,
            self.history.join(" "),
            cands.join(" ")
        )
    }

    pub fn clicked(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().filter(|(_, l)| *l == 1).map(|(id, _)| id.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDate, Timelike};

    #[test]
    fn conforming_record() {
        let r = parse_behaviors_line("1\tU10\t11/11/2019 9:05:58 AM\tN1 N2\tN3-1 N4-0", 1).unwrap();
        assert_eq!(r.history, ["N1", "N2"]);
        assert_eq!(r.candidates, [("N3".to_string(), 1), ("N4".to_string(), 0)]);
        let t = r.time.unwrap();
        assert_eq!(t.date(), NaiveDate::from_ymd_opt(2019, 11, 11).unwrap());
        assert_eq!(t.hour(), 9);
        assert_eq!(format_time(&t), "11/11/2019 9:05:58 AM");
    }

    #[test]
    fn empty_history() {
        let r = parse_behaviors_line("2\tU1\t11/11/2019 1:00:00 PM\t\tN3-1", 1).unwrap();
        assert!(r.history.is_empty());
        assert_eq!(r.time.unwrap().hour(), 13);
    }

    #[test]
    fn bad_label_and_missing_fields() {
        assert!(parse_behaviors_line("1\tU\t11/11/2019 9:05:58 AM\t\tN5-2", 3).is_err());
        assert!(parse_behaviors_line("1\tU\t11/11/2019 9:05:58 AM", 3).is_err());
    }

    #[test]
    fn ids_may_contain_dashes() {
        let r = parse_behaviors_line("1\tU\tx\t\tN-7-1", 1).unwrap();
        assert_eq!(r.candidates, [("N-7".to_string(), 1)]);
        assert!(r.time.is_none());
    }
}
