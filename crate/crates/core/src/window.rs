//! Sliding-window aggregation and home/work selection rules.
//!
//! Window averages are accumulated exactly: each day's fraction
//! `bins / bins_with_data` is scaled by [`FRAC_DENOM`], the least common
//! multiple of 1..=24, so it becomes an integer. The final average is a single
//! correctly rounded division, which makes the result independent of the order
//! in which days enter or leave the window.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::binning::DayFeature;
use crate::model::{day_of_date, Detection, HowdeParams, Scope, UndetectedReason, WindowMode};

/// lcm(1, 2, ..., 24).
pub(crate) const FRAC_DENOM: u64 = 5_354_228_880;

/// Scaled integer numerator of `bins / bins_with_data`.
pub(crate) fn scaled_frac(bins: u32, bins_with_data: u32) -> u64 {
    u64::from(bins) * (FRAC_DENOM / u64::from(bins_with_data))
}

pub(crate) fn mean_of_scaled(sum: u64, days: u32) -> f64 {
    sum as f64 / (FRAC_DENOM * u64::from(days)) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowAggregate {
    pub user_id: String,
    /// Anchor date `t`.
    pub date: NaiveDate,
    pub scope: Scope,
    pub days_in_window_with_data: u32,
    /// Scope-relevant calendar days in the window.
    pub window_span_days: u32,
    pub avg_frac_by_loc: BTreeMap<String, f64>,
    pub frac_days_visited_by_loc: BTreeMap<String, f64>,
}

/// Inclusive day-index range of the window anchored at `anchor`.
///
/// `period` is the user's observed span, used only by [`WindowMode::FullPeriod`].
pub fn window_range(
    anchor: i64,
    scope: Scope,
    params: &HowdeParams,
    period: (i64, i64),
) -> (i64, i64) {
    let delta = i64::from(params.delta_t(scope));
    match params.window_mode {
        WindowMode::Centered => (anchor - delta / 2, anchor + delta / 2),
        WindowMode::PastOnly => (anchor - delta, anchor),
        WindowMode::FullPeriod => period,
    }
}

pub(crate) fn span_days(scope: Scope, params: &HowdeParams, lo: i64, hi: i64) -> u32 {
    match scope {
        Scope::Home => (hi - lo + 1).max(0) as u32,
        Scope::Work => params.windows.business_days.count_in(lo, hi),
    }
}

/// Aggregates one user's day features over the window anchored at `anchor`.
///
/// Only days that passed the daily coverage filter contribute. `period` is the
/// user's observed date span (first and last date with stops).
pub fn build_window(
    features: &[DayFeature],
    anchor: NaiveDate,
    scope: Scope,
    period: (NaiveDate, NaiveDate),
    params: &HowdeParams,
) -> WindowAggregate {
    let period = (day_of_date(period.0), day_of_date(period.1));
    let (lo, hi) = window_range(day_of_date(anchor), scope, params, period);

    let mut days_with_data = 0u32;
    let mut sums: BTreeMap<&str, u64> = BTreeMap::new();
    let mut visits: BTreeMap<&str, u32> = BTreeMap::new();
    for f in features {
        let day = day_of_date(f.date);
        if f.scope != scope || !f.coverage_ok || day < lo || day > hi {
            continue;
        }
        days_with_data += 1;
        for (loc, &bins) in &f.bins_by_loc {
            *sums.entry(loc).or_default() += scaled_frac(bins, f.bins_with_data);
            *visits.entry(loc).or_default() += 1;
        }
    }

    WindowAggregate {
        user_id: features
            .first()
            .map(|f| f.user_id.clone())
            .unwrap_or_default(),
        date: anchor,
        scope,
        days_in_window_with_data: days_with_data,
        window_span_days: span_days(scope, params, lo, hi),
        avg_frac_by_loc: sums
            .iter()
            .map(|(l, &s)| (l.to_string(), mean_of_scaled(s, days_with_data)))
            .collect(),
        frac_days_visited_by_loc: visits
            .iter()
            .map(|(l, &v)| (l.to_string(), v as f64 / days_with_data as f64))
            .collect(),
    }
}

/// A location's window statistics, keyed by anything ordered like its id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate<K> {
    pub key: K,
    pub avg_frac: f64,
    pub frac_days: f64,
}

pub(crate) fn coverage_gate(
    days_with_data: u32,
    span: u32,
    c_days: f64,
) -> Result<(), UndetectedReason> {
    if days_with_data == 0 || span == 0 {
        return Err(UndetectedReason::DayCoverage);
    }
    if (days_with_data as f64 / span as f64) < c_days {
        return Err(UndetectedReason::WindowCoverage);
    }
    Ok(())
}

fn by_hours<K: Ord>(a: &Candidate<K>, b: &Candidate<K>) -> Ordering {
    a.avg_frac
        .total_cmp(&b.avg_frac)
        .then(a.frac_days.total_cmp(&b.frac_days))
        .then_with(|| b.key.cmp(&a.key))
}

fn by_days<K: Ord>(a: &Candidate<K>, b: &Candidate<K>) -> Ordering {
    a.frac_days
        .total_cmp(&b.frac_days)
        .then(a.avg_frac.total_cmp(&b.avg_frac))
        .then_with(|| b.key.cmp(&a.key))
}

/// Highest average night fraction among locations at or above `f_hours_h`.
pub(crate) fn select_home<K: Ord>(
    candidates: impl IntoIterator<Item = Candidate<K>>,
    f_hours_h: f64,
) -> Option<K> {
    candidates
        .into_iter()
        .filter(|c| c.avg_frac >= f_hours_h)
        .max_by(by_hours)
        .map(|c| c.key)
}

/// Work ranking: among locations at or above `f_hours_w`, prefer those
/// visited on at least `f_days_w` of the window days, ranked by that
/// fraction; otherwise fall back to ranking by hours.
pub(crate) fn select_work<K: Ord>(
    candidates: impl IntoIterator<Item = Candidate<K>>,
    f_hours_w: f64,
    f_days_w: f64,
) -> Option<K> {
    let mut base: Vec<Candidate<K>> = candidates
        .into_iter()
        .filter(|c| c.avg_frac >= f_hours_w)
        .collect();
    let best = base
        .iter()
        .enumerate()
        .filter(|(_, c)| c.frac_days >= f_days_w)
        .max_by(|a, b| by_days(a.1, b.1))
        .or_else(|| base.iter().enumerate().max_by(|a, b| by_hours(a.1, b.1)))
        .map(|(i, _)| i)?;
    Some(base.swap_remove(best).key)
}

fn candidates(agg: &WindowAggregate) -> impl Iterator<Item = Candidate<&str>> {
    agg.avg_frac_by_loc.iter().map(|(loc, &avg)| Candidate {
        key: loc.as_str(),
        avg_frac: avg,
        frac_days: agg
            .frac_days_visited_by_loc
            .get(loc)
            .copied()
            .unwrap_or(0.0),
    })
}

pub fn detect_home(agg: &WindowAggregate, params: &HowdeParams) -> Detection {
    debug_assert_eq!(agg.scope, Scope::Home);
    if let Err(reason) = coverage_gate(
        agg.days_in_window_with_data,
        agg.window_span_days,
        params.c_days_h,
    ) {
        return Detection::Undetected(reason);
    }
    match select_home(candidates(agg), params.f_hours_h) {
        Some(loc) => Detection::Detected(loc.to_string()),
        None => Detection::Undetected(UndetectedReason::NoCandidate),
    }
}

pub fn detect_work(agg: &WindowAggregate, params: &HowdeParams) -> Detection {
    debug_assert_eq!(agg.scope, Scope::Work);
    if !params
        .windows
        .business_days
        .contains_day(day_of_date(agg.date))
    {
        return Detection::Undetected(UndetectedReason::NonBusinessDay);
    }
    if let Err(reason) = coverage_gate(
        agg.days_in_window_with_data,
        agg.window_span_days,
        params.c_days_w,
    ) {
        return Detection::Undetected(reason);
    }
    match select_work(candidates(agg), params.f_hours_w, params.f_days_w) {
        Some(loc) => Detection::Detected(loc.to_string()),
        None => Detection::Undetected(UndetectedReason::NoCandidate),
    }
}
