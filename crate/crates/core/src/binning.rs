//! Hourly-bin aggregation of stop sequences and per-day visit fractions.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;

use crate::error::{HowdeError, Result};
use crate::model::{
    date_of_day, day_of, day_of_date, HowdeParams, Scope, StopRecord, HOURS_PER_DAY,
    SECONDS_PER_HOUR,
};

pub(crate) const EMPTY: u32 = u32::MAX;

/// One user-day as 24 hourly slots holding the dominant location, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HourlyDay {
    pub user_id: String,
    pub date: NaiveDate,
    pub slots: [Option<String>; HOURS_PER_DAY],
}

/// Per-day visit fractions over the scope's bin set.
#[derive(Debug, Clone, PartialEq)]
pub struct DayFeature {
    pub user_id: String,
    pub date: NaiveDate,
    pub scope: Scope,
    pub bins_with_data: u32,
    /// Number of scope bins occupied by each location.
    pub bins_by_loc: BTreeMap<String, u32>,
    /// `bins_by_loc / bins_with_data`.
    pub frac_by_loc: BTreeMap<String, f64>,
    pub coverage_ok: bool,
}

/// Daily coverage filter: enough scope bins carry data.
pub fn coverage_ok(bins_with_data: u32, scope_bins: usize, c_hours: f64) -> bool {
    bins_with_data > 0 && bins_with_data as f64 / scope_bins as f64 >= c_hours
}

/// Splits `[start, end)` at hour boundaries, yielding `(absolute hour index, seconds)`.
pub(crate) fn hour_pieces(start: i64, end: i64) -> impl Iterator<Item = (i64, i64)> {
    let first = start.div_euclid(SECONDS_PER_HOUR);
    let last = (end - 1).div_euclid(SECONDS_PER_HOUR);
    (first..=last).map(move |hour| {
        let lo = start.max(hour * SECONDS_PER_HOUR);
        let hi = end.min((hour + 1) * SECONDS_PER_HOUR);
        (hour, hi - lo)
    })
}

/// Validates a single user's stops and returns them ordered by `(start, end, loc_id)`.
pub(crate) fn sorted_stops(stops: &[StopRecord]) -> Result<Cow<'_, [StopRecord]>> {
    let key = |s: &StopRecord| (s.start, s.end);
    let mut cow: Cow<'_, [StopRecord]> = Cow::Borrowed(stops);
    let ordered = stops
        .windows(2)
        .all(|w| (key(&w[0]), &w[0].loc_id) <= (key(&w[1]), &w[1].loc_id));
    if !ordered {
        let mut owned = stops.to_vec();
        owned.sort_by(|a, b| (key(a), &a.loc_id).cmp(&(key(b), &b.loc_id)));
        cow = Cow::Owned(owned);
    }
    if let Some(first) = cow.first() {
        let user = &first.user_id;
        for s in cow.iter() {
            if &s.user_id != user {
                return Err(HowdeError::InvalidArgument(format!(
                    "stops of users {user} and {} mixed in one sequence",
                    s.user_id
                )));
            }
            if s.end <= s.start {
                return Err(HowdeError::EmptyStop {
                    user: s.user_id.clone(),
                    loc: s.loc_id.clone(),
                    start: s.start,
                    end: s.end,
                });
            }
        }
    }
    for w in cow.windows(2) {
        if w[1].start < w[0].end {
            return Err(HowdeError::OverlappingStops {
                user: w[0].user_id.clone(),
                first: describe(&w[0]),
                second: describe(&w[1]),
            });
        }
    }
    Ok(cow)
}

fn describe(s: &StopRecord) -> String {
    format!("{}@[{},{})", s.loc_id, s.start, s.end)
}

/// Per-hour dwell seconds by location, for every hour touched by a stop.
pub fn hourly_dwell(stops: &[StopRecord]) -> Result<BTreeMap<i64, BTreeMap<String, i64>>> {
    let stops = sorted_stops(stops)?;
    let mut out: BTreeMap<i64, BTreeMap<String, i64>> = BTreeMap::new();
    for s in stops.iter() {
        for (hour, secs) in hour_pieces(s.start, s.end) {
            *out.entry(hour)
                .or_default()
                .entry(s.loc_id.clone())
                .or_default() += secs;
        }
    }
    Ok(out)
}

/// Binned history of one user over the full day span of its stops.
///
/// Location indices follow lexicographic order of the location ids, so
/// comparing indices is the same as comparing ids.
#[derive(Debug, Clone)]
pub(crate) struct BinnedUser {
    pub user_id: String,
    pub locs: Vec<String>,
    pub first_day: i64,
    pub slots: Vec<[u32; HOURS_PER_DAY]>,
    pub touched: Vec<bool>,
}

impl BinnedUser {
    pub fn n_days(&self) -> usize {
        self.slots.len()
    }

    pub fn build(stops: &[StopRecord]) -> Result<Self> {
        let stops = sorted_stops(stops)?;
        let Some(first) = stops.first() else {
            return Ok(BinnedUser {
                user_id: String::new(),
                locs: Vec::new(),
                first_day: 0,
                slots: Vec::new(),
                touched: Vec::new(),
            });
        };
        let user_id = first.user_id.clone();

        let mut locs: Vec<&str> = stops.iter().map(|s| s.loc_id.as_str()).collect();
        locs.sort_unstable();
        locs.dedup();
        let index: HashMap<&str, u32> = locs
            .iter()
            .enumerate()
            .map(|(i, l)| (*l, i as u32))
            .collect();

        let first_day = day_of(first.start);
        // non-overlapping and sorted, so the last stop ends last
        let last_day = day_of(stops.last().map(|s| s.end).unwrap_or(first.end) - 1);
        let n_days = (last_day - first_day + 1) as usize;
        let mut slots = vec![[EMPTY; HOURS_PER_DAY]; n_days];
        let mut touched = vec![false; n_days];

        let base_hour = first_day * HOURS_PER_DAY as i64;
        let mut current: Option<i64> = None;
        let mut acc: Vec<(u32, i64)> = Vec::with_capacity(4);
        let mut flush = |hour: i64, acc: &mut Vec<(u32, i64)>| {
            // largest dwell, then smallest location
            if let Some(&(loc, _)) = acc.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))) {
                let rel = (hour - base_hour) as usize;
                slots[rel / HOURS_PER_DAY][rel % HOURS_PER_DAY] = loc;
            }
            acc.clear();
        };
        for s in stops.iter() {
            let loc = index[s.loc_id.as_str()];
            for d in day_of(s.start)..=day_of(s.end - 1) {
                touched[(d - first_day) as usize] = true;
            }
            for (hour, secs) in hour_pieces(s.start, s.end) {
                if current != Some(hour) {
                    if let Some(h) = current {
                        flush(h, &mut acc);
                    }
                    current = Some(hour);
                }
                match acc.iter_mut().find(|(l, _)| *l == loc) {
                    Some(entry) => entry.1 += secs,
                    None => acc.push((loc, secs)),
                }
            }
        }
        if let Some(h) = current {
            flush(h, &mut acc);
        }

        Ok(BinnedUser {
            user_id,
            locs: locs.into_iter().map(str::to_owned).collect(),
            first_day,
            slots,
            touched,
        })
    }

    pub fn hourly_days(&self) -> Vec<HourlyDay> {
        self.slots
            .iter()
            .zip(&self.touched)
            .enumerate()
            .filter(|(_, (_, touched))| **touched)
            .map(|(i, (slots, _))| HourlyDay {
                user_id: self.user_id.clone(),
                date: date_of_day(self.first_day + i as i64),
                slots: std::array::from_fn(|h| {
                    (slots[h] != EMPTY).then(|| self.locs[slots[h] as usize].clone())
                }),
            })
            .collect()
    }
}

/// Aggregates one user's stops into hourly bins.
///
/// Each slot keeps the location with the largest dwell inside that hour,
/// ties going to the smallest location id. Stops crossing hour or day
/// boundaries are split. One [`HourlyDay`] is emitted per date touched by a stop.
pub fn bin_hours(stops: &[StopRecord]) -> Result<Vec<HourlyDay>> {
    Ok(BinnedUser::build(stops)?.hourly_days())
}

/// Computes per-day location fractions over the scope's bins.
///
/// Work features are only emitted for business days.
pub fn day_features(days: &[HourlyDay], scope: Scope, params: &HowdeParams) -> Vec<DayFeature> {
    let bins = params.windows.bins(scope);
    days.iter()
        .filter(|d| params.windows.day_in_scope(scope, day_of_date(d.date)))
        .map(|d| {
            let mut bins_by_loc: BTreeMap<String, u32> = BTreeMap::new();
            for h in bins.iter() {
                if let Some(loc) = &d.slots[h] {
                    *bins_by_loc.entry(loc.clone()).or_default() += 1;
                }
            }
            let bins_with_data: u32 = bins_by_loc.values().sum();
            let frac_by_loc = bins_by_loc
                .iter()
                .map(|(l, &n)| (l.clone(), n as f64 / bins_with_data as f64))
                .collect();
            DayFeature {
                user_id: d.user_id.clone(),
                date: d.date,
                scope,
                bins_with_data,
                bins_by_loc,
                frac_by_loc,
                coverage_ok: coverage_ok(bins_with_data, bins.len(), params.c_hours),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{day_of_date, SECONDS_PER_DAY};

    fn ts(date: &str, hh: i64, mm: i64) -> i64 {
        let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap();
        day_of_date(d) * SECONDS_PER_DAY + hh * 3600 + mm * 60
    }

    fn stop(loc: &str, from: (i64, i64), to: (i64, i64)) -> StopRecord {
        StopRecord::new(
            "u1",
            loc,
            ts("2019-01-01", from.0, from.1),
            ts("2019-01-01", to.0, to.1),
        )
    }

    fn slot(day: &HourlyDay, h: usize) -> Option<&str> {
        day.slots[h].as_deref()
    }

    #[test]
    fn dominant_location_by_dwell() {
        let days = bin_hours(&[stop("A", (1, 0), (4, 40)), stop("B", (4, 40), (5, 0))]).unwrap();
        assert_eq!(days.len(), 1);
        let d = &days[0];
        for h in 1..=4 {
            assert_eq!(slot(d, h), Some("A"));
        }
        assert_eq!(slot(d, 5), None);
        assert_eq!(slot(d, 13), None);
        assert_eq!(slot(d, 0), None);
    }

    #[test]
    fn boundary_split() {
        let days = bin_hours(&[stop("A", (3, 30), (4, 0)), stop("B", (4, 0), (4, 30))]).unwrap();
        assert_eq!(slot(&days[0], 3), Some("A"));
        assert_eq!(slot(&days[0], 4), Some("B"));
    }

    #[test]
    fn tie_goes_to_smallest_id_regardless_of_order() {
        let a = stop("B", (4, 0), (4, 30));
        let b = stop("A", (4, 30), (5, 0));
        let days = bin_hours(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(slot(&days[0], 4), Some("A"));
        let days = bin_hours(&[b, a]).unwrap();
        assert_eq!(slot(&days[0], 4), Some("A"));
    }

    #[test]
    fn midnight_stop_is_split_across_days() {
        let s = StopRecord::new("u1", "H", ts("2019-01-01", 22, 0), ts("2019-01-02", 7, 0));
        let days = bin_hours(&[s]).unwrap();
        assert_eq!(days.len(), 2);
        assert_eq!(slot(&days[0], 23), Some("H"));
        assert_eq!(slot(&days[0], 21), None);
        assert_eq!(slot(&days[1], 0), Some("H"));
        assert_eq!(slot(&days[1], 6), Some("H"));
        assert_eq!(slot(&days[1], 7), None);
    }

    #[test]
    fn stop_ending_at_midnight_does_not_touch_next_day() {
        let s = StopRecord::new("u1", "H", ts("2019-01-01", 22, 0), ts("2019-01-02", 0, 0));
        assert_eq!(bin_hours(&[s]).unwrap().len(), 1);
    }

    #[test]
    fn overlapping_stops_are_rejected() {
        let err = bin_hours(&[stop("A", (1, 0), (3, 0)), stop("B", (2, 0), (4, 0))]).unwrap_err();
        match err {
            HowdeError::OverlappingStops {
                user,
                first,
                second,
            } => {
                assert_eq!(user, "u1");
                assert!(first.starts_with("A@"));
                assert!(second.starts_with("B@"));
            }
            other => panic!("unexpected {other:?}"),
        }
        // touching is fine
        assert!(bin_hours(&[stop("A", (1, 0), (3, 0)), stop("B", (3, 0), (4, 0))]).is_ok());
    }

    #[test]
    fn empty_input() {
        assert!(bin_hours(&[]).unwrap().is_empty());
        assert!(day_features(&[], Scope::Home, &HowdeParams::default()).is_empty());
    }

    fn day_with(date: &str, fill: &[(usize, &str)]) -> HourlyDay {
        let mut slots: [Option<String>; 24] = Default::default();
        for &(h, l) in fill {
            slots[h] = Some(l.to_string());
        }
        HourlyDay {
            user_id: "u1".into(),
            date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            slots,
        }
    }

    #[test]
    fn home_fractions_and_coverage() {
        let params = HowdeParams::default();
        // 2019-01-01 is a Tuesday
        let d = day_with(
            "2019-01-01",
            &[(0, "A"), (1, "A"), (2, "A"), (3, "B"), (12, "W")],
        );
        let f = &day_features(&[d], Scope::Home, &params)[0];
        assert_eq!(f.bins_with_data, 4);
        assert_eq!(f.frac_by_loc["A"], 0.75);
        assert_eq!(f.frac_by_loc["B"], 0.25);
        assert!(f.coverage_ok);

        let sparse = day_with("2019-01-01", &[(2, "A")]);
        let f = &day_features(&[sparse], Scope::Home, &params)[0];
        assert!(!f.coverage_ok);
    }

    #[test]
    fn work_features_skip_weekends() {
        let params = HowdeParams::default();
        let sat = day_with("2019-01-05", &[(10, "W")]);
        let mon = day_with("2019-01-07", &[(10, "W")]);
        let out = day_features(&[sat, mon], Scope::Work, &params);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].date, NaiveDate::from_ymd_opt(2019, 1, 7).unwrap());
        assert!(!out[0].coverage_ok);
    }

    #[test]
    fn zero_data_day_never_passes_coverage() {
        assert!(!coverage_ok(0, 6, 0.0));
        assert!(coverage_ok(1, 6, 0.0));
    }
}
