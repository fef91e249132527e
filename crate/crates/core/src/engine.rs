//! Incremental sliding-window detector.
//!
//! Per user and scope, day contributions are added to and removed from running
//! sums as the window slides, so each anchor costs time proportional to the
//! number of locations currently in the window rather than the window length.

use crate::binning::{coverage_ok, BinnedUser, EMPTY};
use crate::error::Result;
use crate::model::{
    date_of_day, Detection, DetectionLabel, HowdeParams, Scope, StopRecord, UndetectedReason,
    UserStops, WindowMode,
};
use crate::parallel::par_map;
use crate::window::{
    coverage_gate, mean_of_scaled, scaled_frac, select_home, select_work, span_days, window_range,
    Candidate,
};

/// Coverage-filtered day contributions of one scope, stored flat.
struct ScopeSeries {
    /// `offsets[d]..offsets[d + 1]` indexes `entries` for day `d`; empty when the
    /// day is out of scope or failed the coverage filter.
    offsets: Vec<usize>,
    entries: Vec<(u32, u64)>,
    has_data: Vec<bool>,
}

impl ScopeSeries {
    fn build(user: &BinnedUser, scope: Scope, params: &HowdeParams) -> Self {
        let bins = params.windows.bins(scope);
        let n_locs = user.locs.len();
        let mut counts = vec![0u32; n_locs];
        let mut touched: Vec<u32> = Vec::with_capacity(8);

        let mut offsets = Vec::with_capacity(user.n_days() + 1);
        let mut entries = Vec::new();
        let mut has_data = Vec::with_capacity(user.n_days());
        offsets.push(0);
        for (d, slots) in user.slots.iter().enumerate() {
            let day = user.first_day + d as i64;
            let mut ok = false;
            if params.windows.day_in_scope(scope, day) {
                let mut with_data = 0u32;
                for h in bins.iter() {
                    let loc = slots[h];
                    if loc != EMPTY {
                        if counts[loc as usize] == 0 {
                            touched.push(loc);
                        }
                        counts[loc as usize] += 1;
                        with_data += 1;
                    }
                }
                ok = coverage_ok(with_data, bins.len(), params.c_hours);
                if ok {
                    touched.sort_unstable();
                    for &loc in &touched {
                        entries.push((loc, scaled_frac(counts[loc as usize], with_data)));
                    }
                }
                for &loc in &touched {
                    counts[loc as usize] = 0;
                }
                touched.clear();
            }
            has_data.push(ok);
            offsets.push(entries.len());
        }
        ScopeSeries {
            offsets,
            entries,
            has_data,
        }
    }

    fn day(&self, d: usize) -> &[(u32, u64)] {
        &self.entries[self.offsets[d]..self.offsets[d + 1]]
    }
}

/// Running window sums over location indices.
struct Rolling {
    sums: Vec<u64>,
    visits: Vec<u32>,
    days: u32,
    active: Vec<u32>,
    position: Vec<usize>,
}

impl Rolling {
    fn new(n_locs: usize) -> Self {
        Rolling {
            sums: vec![0; n_locs],
            visits: vec![0; n_locs],
            days: 0,
            active: Vec::new(),
            position: vec![usize::MAX; n_locs],
        }
    }

    fn add(&mut self, series: &ScopeSeries, d: usize) {
        if !series.has_data[d] {
            return;
        }
        self.days += 1;
        for &(loc, frac) in series.day(d) {
            let l = loc as usize;
            if self.visits[l] == 0 {
                self.position[l] = self.active.len();
                self.active.push(loc);
            }
            self.sums[l] += frac;
            self.visits[l] += 1;
        }
    }

    fn remove(&mut self, series: &ScopeSeries, d: usize) {
        if !series.has_data[d] {
            return;
        }
        self.days -= 1;
        for &(loc, frac) in series.day(d) {
            let l = loc as usize;
            self.sums[l] -= frac;
            self.visits[l] -= 1;
            if self.visits[l] == 0 {
                let at = self.position[l];
                self.active.swap_remove(at);
                if let Some(&moved) = self.active.get(at) {
                    self.position[moved as usize] = at;
                }
                self.position[l] = usize::MAX;
            }
        }
    }

    fn candidates(&self) -> impl Iterator<Item = Candidate<u32>> + '_ {
        let days = self.days;
        self.active.iter().map(move |&loc| Candidate {
            key: loc,
            avg_frac: mean_of_scaled(self.sums[loc as usize], days),
            frac_days: self.visits[loc as usize] as f64 / days as f64,
        })
    }
}

fn decide(
    rolling: &Rolling,
    scope: Scope,
    span: u32,
    params: &HowdeParams,
    locs: &[String],
) -> Detection {
    if let Err(reason) = coverage_gate(rolling.days, span, params.c_days(scope)) {
        return Detection::Undetected(reason);
    }
    let chosen = match scope {
        Scope::Home => select_home(rolling.candidates(), params.f_hours_h),
        Scope::Work => select_work(rolling.candidates(), params.f_hours_w, params.f_days_w),
    };
    match chosen {
        Some(loc) => Detection::Detected(locs[loc as usize].clone()),
        None => Detection::Undetected(UndetectedReason::NoCandidate),
    }
}

fn detect_scope(user: &BinnedUser, scope: Scope, params: &HowdeParams) -> Vec<Detection> {
    let n = user.n_days();
    let series = ScopeSeries::build(user, scope, params);
    let mut rolling = Rolling::new(user.locs.len());
    let first = user.first_day;
    let period = (first, first + n as i64 - 1);
    let is_anchor_valid =
        |day: i64| scope == Scope::Home || params.windows.business_days.contains_day(day);

    if params.window_mode == WindowMode::FullPeriod {
        for d in 0..n {
            rolling.add(&series, d);
        }
        let span = span_days(scope, params, period.0, period.1);
        let shared = decide(&rolling, scope, span, params, &user.locs);
        return (0..n)
            .map(|d| {
                if is_anchor_valid(first + d as i64) {
                    shared.clone()
                } else {
                    Detection::Undetected(UndetectedReason::NonBusinessDay)
                }
            })
            .collect();
    }

    let mut out = Vec::with_capacity(n);
    // days [in_lo, in_hi) are currently inside `rolling`
    let (mut in_lo, mut in_hi) = (0usize, 0usize);
    for d in 0..n {
        let anchor = first + d as i64;
        let (lo, hi) = window_range(anchor, scope, params, period);
        let target_lo = (lo - first).max(0) as usize;
        let target_hi = ((hi - first).min(n as i64 - 1) + 1) as usize;
        while in_hi < target_hi {
            rolling.add(&series, in_hi);
            in_hi += 1;
        }
        while in_lo < target_lo {
            rolling.remove(&series, in_lo);
            in_lo += 1;
        }
        if !is_anchor_valid(anchor) {
            out.push(Detection::Undetected(UndetectedReason::NonBusinessDay));
            continue;
        }
        out.push(decide(
            &rolling,
            scope,
            span_days(scope, params, lo, hi),
            params,
            &user.locs,
        ));
    }
    out
}

/// Runs the full detector on one user's stops.
///
/// Emits one label per calendar date from the user's first to last date with
/// stops, including dates without data.
pub fn run_howde(stops: &[StopRecord], params: &HowdeParams) -> Result<Vec<DetectionLabel>> {
    params.validate()?;
    let user = BinnedUser::build(stops)?;
    Ok(labels_for(&user, params))
}

fn labels_for(user: &BinnedUser, params: &HowdeParams) -> Vec<DetectionLabel> {
    let homes = detect_scope(user, Scope::Home, params);
    let works = detect_scope(user, Scope::Work, params);
    homes
        .into_iter()
        .zip(works)
        .enumerate()
        .map(|(d, (home, work))| DetectionLabel {
            user_id: user.user_id.clone(),
            date: date_of_day(user.first_day + d as i64),
            home,
            work,
        })
        .collect()
}

/// Runs the detector over many users in parallel; output is ordered as the input.
pub fn run_howde_all(users: &[UserStops], params: &HowdeParams) -> Result<Vec<DetectionLabel>> {
    params.validate()?;
    let per_user = par_map(users, |u| {
        BinnedUser::build(&u.stops).map(|binned| labels_for(&binned, params))
    });
    let mut out = Vec::new();
    for labels in per_user {
        out.extend(labels?);
    }
    Ok(out)
}
