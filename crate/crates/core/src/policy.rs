//! OxCGRT-style composite stringency indices.
//!
//! Per-indicator maxima and the flagged/unflagged split are data, shipped in
//! `data/indicators.csv`; the Seoul timeline is in `data/policy_records.csv`.

use crate::series::Day;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

/// Identifier recorded in output metadata for the scoring formula.
pub const FORMULA_VERSION: &str = "oxcgrt-legacy-additive-flag/1";

pub const GOVERNMENT_SET: [&str; 13] =
    ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "H1", "H2", "H3", "E1", "E2"];
pub const MOBILITY_SET: [&str; 3] = ["C5", "C6", "C7"];

const SHIPPED_INDICATORS: &str = include_str!("../data/indicators.csv");
const SHIPPED_RECORDS: &str = include_str!("../data/policy_records.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown indicator {0}")]
    UnknownIndicator(String),
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    #[serde(rename = "indicator")]
    pub code: String,
    pub name: String,
    pub max_score: u32,
    #[serde(with = "bool_as_int")]
    pub flagged: bool,
}

mod bool_as_int {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

/// Indicator definitions keyed by code.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    indicators: BTreeMap<String, Indicator>,
}

impl IndicatorTable {
    pub fn parse<R: Read>(reader: R) -> Result<Self, PolicyError> {
        let mut rdr = csv::Reader::from_reader(reader);
        check_header(&mut rdr, &["indicator", "name", "max_score", "flagged"])?;
        let mut indicators = BTreeMap::new();
        for row in rdr.deserialize::<Indicator>() {
            let ind = row.map_err(schema_error)?;
            if ind.max_score == 0 {
                return Err(PolicyError::InvalidRecord(format!("{}: max_score must be positive", ind.code)));
            }
            if indicators.insert(ind.code.clone(), ind.clone()).is_some() {
                return Err(PolicyError::InvalidRecord(format!("duplicate indicator {}", ind.code)));
            }
        }
        Ok(Self { indicators })
    }

    /// The shipped 13-indicator table.
    pub fn oxcgrt() -> Self {
        Self::parse(SHIPPED_INDICATORS.as_bytes()).expect("shipped indicator table parses")
    }

    pub fn get(&self, code: &str) -> Result<&Indicator, PolicyError> {
        self.indicators.get(code).ok_or_else(|| PolicyError::UnknownIndicator(code.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Indicator> {
        self.indicators.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub indicator: String,
    pub start_day: Day,
    pub end_day: Day,
    pub score: u32,
    pub flag: Option<u8>,
}

/// Sub-index in `[0, 100]` for one indicator-day.
///
/// Flagged: `100 (score + flag) / (max + 1)`. Unflagged: `100 score / max`.
/// A score of 0 is 0 whatever the flag. A missing flag counts as 0.
pub fn sub_index(score: u32, flag: Option<u8>, max_score: u32, flagged: bool) -> Result<f64, PolicyError> {
    if max_score == 0 {
        return Err(PolicyError::InvalidRecord("max_score must be positive".into()));
    }
    if score > max_score {
        return Err(PolicyError::InvalidRecord(format!("score {score} exceeds max {max_score}")));
    }
    if let Some(f) = flag {
        if f > 1 {
            return Err(PolicyError::InvalidRecord(format!("flag {f} is not 0 or 1")));
        }
    }
    if score == 0 {
        return Ok(0.0);
    }
    Ok(if flagged {
        100.0 * f64::from(score + u32::from(flag.unwrap_or(0))) / f64::from(max_score + 1)
    } else {
        100.0 * f64::from(score) / f64::from(max_score)
    })
}

/// Validated records with overlap resolution precomputed per indicator.
#[derive(Debug, Clone)]
pub struct PolicyTimeline {
    table: IndicatorTable,
    horizon: Day,
    by_indicator: BTreeMap<String, Vec<PolicyRecord>>,
}

impl PolicyTimeline {
    pub fn new(table: IndicatorTable, records: Vec<PolicyRecord>, horizon: Day) -> Result<Self, PolicyError> {
        if horizon < 1 {
            return Err(PolicyError::InvalidArgument("horizon must be positive".into()));
        }
        let mut by_indicator: BTreeMap<String, Vec<PolicyRecord>> = BTreeMap::new();
        for r in records {
            let ind = table.get(&r.indicator)?;
            if r.start_day < 1 || r.end_day > horizon || r.start_day > r.end_day {
                return Err(PolicyError::InvalidRecord(format!(
                    "{} days {}..{} outside 1..{horizon}",
                    r.indicator, r.start_day, r.end_day
                )));
            }
            if !ind.flagged && r.flag.is_some() {
                return Err(PolicyError::InvalidRecord(format!("{} is unflagged but has a flag", r.indicator)));
            }
            sub_index(r.score, r.flag, ind.max_score, ind.flagged)
                .map_err(|e| PolicyError::InvalidRecord(format!("{} day {}: {e}", r.indicator, r.start_day)))?;
            by_indicator.entry(r.indicator.clone()).or_default().push(r);
        }
        for (code, recs) in by_indicator.iter_mut() {
            recs.sort_by_key(|r| r.start_day);
            for w in recs.windows(2) {
                if w[0].start_day == w[1].start_day {
                    return Err(PolicyError::InvalidRecord(format!(
                        "{code}: two records start on day {}",
                        w[0].start_day
                    )));
                }
                if w[1].start_day <= w[0].end_day {
                    log::debug!("{code}: record starting day {} overrides the one starting day {}", w[1].start_day, w[0].start_day);
                }
            }
        }
        Ok(Self { table, horizon, by_indicator })
    }

    /// The shipped Seoul 2020 timeline over days 1..=189.
    pub fn seoul_2020() -> Self {
        let records = parse_records(SHIPPED_RECORDS.as_bytes()).expect("shipped records parse");
        Self::new(IndicatorTable::oxcgrt(), records, 189).expect("shipped records are valid")
    }

    pub fn horizon(&self) -> Day {
        self.horizon
    }

    pub fn table(&self) -> &IndicatorTable {
        &self.table
    }

    pub fn records(&self) -> impl Iterator<Item = &PolicyRecord> {
        self.by_indicator.values().flatten()
    }

    /// The record in force for `code` on `day`: the covering record with the
    /// latest start.
    pub fn active(&self, code: &str, day: Day) -> Option<&PolicyRecord> {
        self.by_indicator
            .get(code)?
            .iter()
            .rev()
            .find(|r| r.start_day <= day && day <= r.end_day)
    }

    pub fn sub_index_on(&self, code: &str, day: Day) -> Result<f64, PolicyError> {
        let ind = self.table.get(code)?;
        match self.active(code, day) {
            Some(r) => sub_index(r.score, r.flag, ind.max_score, ind.flagged),
            None => Ok(0.0),
        }
    }

    /// Mean sub-index over `set` on `day`; indicators without an active record score 0.
    pub fn composite_index(&self, set: &[&str], day: Day) -> Result<f64, PolicyError> {
        if set.is_empty() {
            return Err(PolicyError::InvalidArgument("indicator set is empty".into()));
        }
        let mut total = 0.0;
        for code in set {
            total += self.sub_index_on(code, day)?;
        }
        Ok(total / set.len() as f64)
    }

    pub fn index_series(&self) -> Result<IndexSeries, PolicyError> {
        let mut out = IndexSeries::default();
        for day in 1..=self.horizon {
            out.days.push(day);
            out.government_response.push(self.composite_index(&GOVERNMENT_SET, day)?);
            out.mobility_restriction.push(self.composite_index(&MOBILITY_SET, day)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    pub days: Vec<Day>,
    pub government_response: Vec<f64>,
    pub mobility_restriction: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct IndexRow {
    day: Day,
    government_response_index: f64,
    mobility_restriction_index: f64,
}

impl IndexSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        for (k, &day) in self.days.iter().enumerate() {
            wtr.serialize(IndexRow {
                day,
                government_response_index: self.government_response[k],
                mobility_restriction_index: self.mobility_restriction[k],
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, PolicyError> {
        let mut rdr = csv::Reader::from_reader(r);
        check_header(&mut rdr, &["day", "government_response_index", "mobility_restriction_index"])?;
        let mut out = Self::default();
        for row in rdr.deserialize::<IndexRow>() {
            let row = row.map_err(schema_error)?;
            out.days.push(row.day);
            out.government_response.push(row.government_response_index);
            out.mobility_restriction.push(row.mobility_restriction_index);
        }
        Ok(out)
    }
}

/// Reads `indicator,start_day,end_day,score,flag` rows; an empty flag is absent.
pub fn parse_records<R: Read>(reader: R) -> Result<Vec<PolicyRecord>, PolicyError> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &["indicator", "start_day", "end_day", "score", "flag"])?;
    rdr.deserialize::<PolicyRecord>().map(|r| r.map_err(schema_error)).collect()
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), PolicyError> {
    let header = rdr.headers().map_err(schema_error)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(PolicyError::Schema {
            line: 1,
            message: format!("expected header {}, got {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn schema_error(e: csv::Error) -> PolicyError {
    let line = e.position().map_or(0, |p| p.line());
    PolicyError::Schema { line, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sub_index_examples() {
        assert_eq!(sub_index(0, Some(1), 3, true).unwrap(), 0.0);
        assert_eq!(sub_index(0, None, 4, false).unwrap(), 0.0);
        assert_eq!(sub_index(3, Some(1), 3, true).unwrap(), 100.0);
        assert_eq!(sub_index(4, None, 4, false).unwrap(), 100.0);
        assert_eq!(sub_index(1, Some(0), 3, true).unwrap(), 25.0);
        assert!(matches!(sub_index(4, Some(1), 3, true), Err(PolicyError::InvalidRecord(_))));
        assert!(sub_index(1, Some(2), 3, true).is_err());
    }

    #[test]
    fn shipped_table_shape() {
        let t = IndicatorTable::oxcgrt();
        assert_eq!(t.iter().count(), 13);
        for code in GOVERNMENT_SET {
            t.get(code).unwrap();
        }
        assert_eq!(t.get("C4").unwrap().max_score, 4);
        assert!(!t.get("C8").unwrap().flagged);
    }

    #[test]
    fn mobility_index_day_40() {
        let tl = PolicyTimeline::seoul_2020();
        let v = tl.composite_index(&MOBILITY_SET, 40).unwrap();
        assert_abs_diff_eq!(v, (0.0 + 25.0 + 100.0 / 3.0) / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 19.44, epsilon = 0.005);
    }

    #[test]
    fn empty_and_ceiling_composites() {
        let table = IndicatorTable::oxcgrt();
        let tl = PolicyTimeline::new(table.clone(), vec![], 10).unwrap();
        assert_eq!(tl.composite_index(&GOVERNMENT_SET, 5).unwrap(), 0.0);
        let full: Vec<PolicyRecord> = table
            .iter()
            .map(|i| PolicyRecord {
                indicator: i.code.clone(),
                start_day: 1,
                end_day: 10,
                score: i.max_score,
                flag: i.flagged.then_some(1),
            })
            .collect();
        let tl = PolicyTimeline::new(table, full, 10).unwrap();
        assert_abs_diff_eq!(tl.composite_index(&GOVERNMENT_SET, 5).unwrap(), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tl.composite_index(&MOBILITY_SET, 5).unwrap(), 100.0, epsilon = 1e-12);
        assert!(matches!(tl.composite_index(&["X9"], 5), Err(PolicyError::UnknownIndicator(_))));
        assert!(tl.composite_index(&[], 5).is_err());
    }

    #[test]
    fn later_start_overrides() {
        let table = IndicatorTable::oxcgrt();
        let recs = vec![
            PolicyRecord { indicator: "C8".into(), start_day: 1, end_day: 20, score: 3, flag: None },
            PolicyRecord { indicator: "C8".into(), start_day: 10, end_day: 20, score: 1, flag: None },
        ];
        let tl = PolicyTimeline::new(table.clone(), recs.clone(), 20).unwrap();
        assert_eq!(tl.active("C8", 9).unwrap().score, 3);
        assert_eq!(tl.active("C8", 10).unwrap().score, 1);
        let mut clash = recs;
        clash[1].start_day = 1;
        assert!(PolicyTimeline::new(table, clash, 20).is_err());
    }

    #[test]
    fn record_validation() {
        let table = IndicatorTable::oxcgrt();
        let bad = |r: PolicyRecord| PolicyTimeline::new(table.clone(), vec![r], 189).is_err();
        let base = PolicyRecord { indicator: "C1".into(), start_day: 1, end_day: 5, score: 1, flag: Some(1) };
        assert!(bad(PolicyRecord { indicator: "Z1".into(), ..base.clone() }));
        assert!(bad(PolicyRecord { end_day: 190, ..base.clone() }));
        assert!(bad(PolicyRecord { score: 4, ..base.clone() }));
        assert!(bad(PolicyRecord { indicator: "C8".into(), ..base.clone() }));
        assert!(!bad(base));
    }

    #[test]
    fn parse_reports_line() {
        let text = "indicator,start_day,end_day,score,flag\nC1,1,5,1,1\nC2,x,5,1,\n";
        match parse_records(text.as_bytes()) {
            Err(PolicyError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let recs = parse_records("indicator,start_day,end_day,score,flag\nC8,1,5,2,\n".as_bytes()).unwrap();
        assert_eq!(recs[0].flag, None);
        assert!(parse_records("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn index_csv_round_trip() {
        let series = PolicyTimeline::seoul_2020().index_series().unwrap();
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        assert_eq!(IndexSeries::read_csv(buf.as_slice()).unwrap(), series);
    }

    fn perturbable() -> (IndicatorTable, Vec<PolicyRecord>) {
        let tl = PolicyTimeline::seoul_2020();
        (tl.table().clone(), tl.records().cloned().collect())
    }

    proptest! {
        #[test]
        fn raising_a_score_never_lowers_an_index(k in 0usize..64, bump in 1u32..4, day in 1i64..=189) {
            let (table, recs) = perturbable();
            let k = k % recs.len();
            let max = table.get(&recs[k].indicator).unwrap().max_score;
            prop_assume!(recs[k].score < max);
            let mut raised = recs.clone();
            raised[k].score = (raised[k].score + bump).min(max);
            let before = PolicyTimeline::new(table.clone(), recs, 189).unwrap();
            let after = PolicyTimeline::new(table, raised, 189).unwrap();
            for set in [&GOVERNMENT_SET[..], &MOBILITY_SET[..]] {
                prop_assert!(after.composite_index(set, day).unwrap() >= before.composite_index(set, day).unwrap());
            }
        }
    }
}
