use chrono::NaiveDateTime;

use super::behaviors::ImpressionRecord;
use crate::error::{Error, Result};

/// Indices into the impression list for each split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    /// Impressions without a parseable timestamp.
    pub skipped: usize,
}

/// Half-open time intervals: train `t < valid_start`, valid
/// `valid_start <= t < test_start`, test `t >= test_start`.
pub fn chronological_split(
    impressions: &[ImpressionRecord],
    valid_start: NaiveDateTime,
    test_start: NaiveDateTime,
) -> Result<Splits> {
    if valid_start >= test_start {
        return Err(Error::Config(format!(
            "validation start {valid_start} must precede test start {test_start}"
        )));
    }
    let mut s = Splits::default();
    for (i, imp) in impressions.iter().enumerate() {
        match imp.time {
            None => s.skipped += 1,
            Some(t) if t < valid_start => s.train.push(i),
            Some(t) if t < test_start => s.valid.push(i),
            Some(_) => s.test.push(i),
        }
    }
    Ok(s)
}

/// Default boundaries: the last 7 days are test and the day before them is
/// validation, measured back from the latest timestamp.
pub fn default_boundaries(impressions: &[ImpressionRecord]) -> Option<(NaiveDateTime, NaiveDateTime)> {
    let last = impressions.iter().filter_map(|i| i.time).max()?;
    let test_start = last - chrono::Duration::days(7);
    Some((test_start - chrono::Duration::days(1), test_start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(day: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 11, day).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn imp(t: Option<NaiveDateTime>) -> ImpressionRecord {
        ImpressionRecord {
            impression_id: "1".into(),
            user_id: "U".into(),
            time_raw: String::new(),
            time: t,
            history: vec![],
            candidates: vec![],
        }
    }

    #[test]
    fn boundary_oracle() {
        let imps = vec![imp(Some(at(1))), imp(Some(at(8))), imp(Some(at(9))), imp(None)];
        let s = chronological_split(&imps, at(8), at(9)).unwrap();
        assert_eq!((s.train, s.valid, s.test, s.skipped), (vec![0], vec![1], vec![2], 1));
    }

    #[test]
    fn everything_before_validation() {
        let imps = vec![imp(Some(at(1))), imp(Some(at(2)))];
        let s = chronological_split(&imps, at(8), at(9)).unwrap();
        assert_eq!(s.train.len(), 2);
        assert!(s.valid.is_empty() && s.test.is_empty());
    }

    #[test]
    fn inverted_boundaries_rejected() {
        assert!(chronological_split(&[], at(9), at(8)).is_err());
    }
}
