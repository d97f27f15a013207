//! Check-in traces and their country- and AS-level movement sequences.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::topology::AsId;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("country `{0}` has no AS mapping")]
    Unmapped(String),
}

/// Days since 1970-01-01.
pub fn day_index(date: NaiveDate) -> i64 {
    (date.num_days_from_ce() - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap().num_days_from_ce()) as i64
}

pub fn date_of_day(day: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Days::new(day as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckIn {
    pub user: String,
    pub day: i64,
    pub country: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobilityTrace {
    pub user: String,
    checkins: Vec<CheckIn>,
}

impl MobilityTrace {
    /// Sorts by day; check-ins on the same day keep their input order.
    pub fn new(user: impl Into<String>, mut checkins: Vec<CheckIn>) -> Self {
        checkins.sort_by_key(|c| c.day);
        MobilityTrace { user: user.into(), checkins }
    }

    pub fn checkins(&self) -> &[CheckIn] {
        &self.checkins
    }

    pub fn n_points(&self) -> usize {
        self.checkins.len()
    }

    /// Country of the last check-in on each day that has one.
    pub fn daily_country(&self) -> BTreeMap<i64, &str> {
        self.checkins.iter().map(|c| (c.day, c.country.as_str())).collect()
    }
}

/// Parses `user,date,country` CSV. Users are returned in order of first
/// appearance.
pub fn parse_checkins(text: &str) -> Result<Vec<MobilityTrace>, MobilityError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_user: HashMap<String, Vec<CheckIn>> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r').trim();
        if raw.is_empty() {
            continue;
        }
        if line == 1 {
            if raw != "user,date,country" {
                return Err(MobilityError::Parse { line, reason: "expected header `user,date,country`".into() });
            }
            continue;
        }
        let err = |reason: String| MobilityError::Parse { line, reason };
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", f.len())));
        }
        if f[0].is_empty() || f[2].is_empty() {
            return Err(err("empty user or country".into()));
        }
        let date = NaiveDate::parse_from_str(f[1], "%Y-%m-%d").map_err(|e| err(format!("bad date `{}`: {e}", f[1])))?;
        let user = f[0].to_string();
        if !by_user.contains_key(&user) {
            order.push(user.clone());
        }
        by_user.entry(user.clone()).or_default().push(CheckIn { user, day: day_index(date), country: f[2].to_string() });
    }
    Ok(order
        .into_iter()
        .map(|u| {
            let c = by_user.remove(&u).unwrap_or_default();
            MobilityTrace::new(u, c)
        })
        .collect())
}

pub fn traces_to_csv(traces: &[MobilityTrace]) -> String {
    let mut out = String::from("user,date,country\n");
    for t in traces {
        for c in t.checkins() {
            out.push_str(&format!("{},{},{}\n", c.user, date_of_day(c.day).format("%Y-%m-%d"), c.country));
        }
    }
    out
}

/// Countries in order of first visit; returns do not recount.
pub fn country_sequence(trace: &MobilityTrace) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    trace
        .checkins()
        .iter()
        .filter(|c| seen.insert(c.country.as_str()))
        .map(|c| c.country.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountryAsMap {
    mapping: BTreeMap<String, AsId>,
}

impl CountryAsMap {
    pub fn new(mapping: BTreeMap<String, AsId>) -> Self {
        CountryAsMap { mapping }
    }

    pub fn get(&self, country: &str) -> Option<AsId> {
        self.mapping.get(country).copied()
    }

    pub fn lookup(&self, country: &str) -> Result<AsId, MobilityError> {
        self.get(country).ok_or_else(|| MobilityError::Unmapped(country.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, AsId)> {
        self.mapping.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

pub fn country_map_to_csv(map: &CountryAsMap) -> String {
    let mut out = String::from("country,asn\n");
    for (c, a) in map.iter() {
        out.push_str(&format!("{c},{a}\n"));
    }
    out
}

/// Parses `country,asn` CSV.
pub fn parse_country_map(text: &str) -> Result<CountryAsMap, MobilityError> {
    let mut mapping = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r').trim();
        if raw.is_empty() || (line == 1 && raw == "country,asn") {
            continue;
        }
        let err = |reason: String| MobilityError::Parse { line, reason };
        let (c, a) = raw.split_once(',').ok_or_else(|| err("expected `country,asn`".into()))?;
        let a: AsId = a.parse().map_err(err)?;
        if c.trim().is_empty() {
            return Err(err("empty country code".into()));
        }
        mapping.insert(c.trim().to_string(), a);
    }
    Ok(CountryAsMap { mapping })
}

/// Country sequence mapped to ASes with consecutive repeats collapsed.
pub fn as_sequence(trace: &MobilityTrace, map: &CountryAsMap) -> Result<Vec<AsId>, MobilityError> {
    let mut out: Vec<AsId> = Vec::new();
    for c in country_sequence(trace) {
        let a = map.lookup(&c)?;
        if out.last() != Some(&a) {
            out.push(a);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::asn;

    fn trace(countries: &[&str]) -> MobilityTrace {
        let c = countries
            .iter()
            .enumerate()
            .map(|(d, c)| CheckIn { user: "u".into(), day: d as i64, country: c.to_string() })
            .collect();
        MobilityTrace::new("u", c)
    }

    fn map(pairs: &[(&str, u32)]) -> CountryAsMap {
        CountryAsMap::new(pairs.iter().map(|&(c, a)| (c.to_string(), asn(a))).collect())
    }

    #[test]
    fn parse_groups_and_sorts() {
        let t = parse_checkins("user,date,country\nu1,2016-03-02,FR\nu2,2016-01-01,US\nu1,2016-03-01,US\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].user, "u1");
        assert_eq!(t[0].n_points(), 2);
        assert_eq!(t[0].checkins()[0].country, "US");
        assert!(parse_checkins("").unwrap().is_empty());
        assert!(parse_checkins("user,date,country\n").unwrap().is_empty());
        assert!(matches!(
            parse_checkins("user,date,country\nu1,2016-13-01,US\n"),
            Err(MobilityError::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_checkins("user,date,country\nu1,2016-01-01\n"), Err(MobilityError::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_roundtrip() {
        let text = "user,date,country\nu1,2016-03-01,US\nu1,2016-03-02,FR\n";
        let t = parse_checkins(text).unwrap();
        assert_eq!(traces_to_csv(&t), text);
    }

    #[test]
    fn country_sequence_first_appearance() {
        assert_eq!(country_sequence(&trace(&["US", "FR", "US", "DE"])), vec!["US", "FR", "DE"]);
        assert_eq!(country_sequence(&trace(&["US"])), vec!["US"]);
        assert!(country_sequence(&trace(&[])).is_empty());
    }

    #[test]
    fn as_sequence_collapses() {
        assert_eq!(as_sequence(&trace(&["US", "FR"]), &map(&[("US", 6), ("FR", 4)])).unwrap(), vec![asn(6), asn(4)]);
        assert_eq!(as_sequence(&trace(&["US", "CA"]), &map(&[("US", 6), ("CA", 6)])).unwrap(), vec![asn(6)]);
        assert_eq!(
            as_sequence(&trace(&["US", "XX"]), &map(&[("US", 6)])),
            Err(MobilityError::Unmapped("XX".into()))
        );
    }

    #[test]
    fn daily_country_keeps_last_of_day() {
        let t = MobilityTrace::new(
            "u",
            vec![
                CheckIn { user: "u".into(), day: 1, country: "US".into() },
                CheckIn { user: "u".into(), day: 1, country: "FR".into() },
                CheckIn { user: "u".into(), day: 0, country: "DE".into() },
            ],
        );
        let d = t.daily_country();
        assert_eq!(d[&0], "DE");
        assert_eq!(d[&1], "FR");
    }

    #[test]
    fn country_map_parse() {
        let m = parse_country_map("country,asn\nUS,6\nFR,4\r\n").unwrap();
        assert_eq!(m.get("FR"), Some(asn(4)));
        assert!(parse_country_map("country,asn\nUS,x\n").is_err());
        assert_eq!(parse_country_map(&country_map_to_csv(&m)).unwrap(), m);
    }
}
