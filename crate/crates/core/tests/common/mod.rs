#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use howde::baselines::observed_period;
use howde::model::{date_of_day, day_of_date, SECONDS_PER_DAY};
use howde::synth::{DayProfile, PopulationSpec, ProfileMix, Routine};
use howde::{
    bin_hours, build_window, day_features, detect_home, detect_work, DetectionLabel, HowdeParams,
    Scope, StopRecord,
};

/// Reference detector: every anchor's window is rebuilt from scratch with the
/// public per-step functions.
pub fn naive_labels(stops: &[StopRecord], params: &HowdeParams) -> Vec<DetectionLabel> {
    let Some(period) = observed_period(stops) else {
        return Vec::new();
    };
    let days = bin_hours(stops).expect("valid stops");
    let home = day_features(&days, Scope::Home, params);
    let work = day_features(&days, Scope::Work, params);
    (day_of_date(period.0)..=day_of_date(period.1))
        .map(|d| {
            let date = date_of_day(d);
            DetectionLabel {
                user_id: stops[0].user_id.clone(),
                date,
                home: detect_home(
                    &build_window(&home, date, Scope::Home, period, params),
                    params,
                ),
                work: detect_work(
                    &build_window(&work, date, Scope::Work, period, params),
                    params,
                ),
            }
        })
        .collect()
}

/// Brute-force hourly binning: dwell per (hour, location) by scanning every
/// stop for every hour, then the largest dwell with ties to the smallest id.
pub fn brute_force_slots(stops: &[StopRecord]) -> BTreeMap<NaiveDate, [Option<String>; 24]> {
    let first = stops
        .iter()
        .map(|s| s.start)
        .min()
        .unwrap()
        .div_euclid(3600);
    let last = stops
        .iter()
        .map(|s| s.end - 1)
        .max()
        .unwrap()
        .div_euclid(3600);
    let mut out: BTreeMap<NaiveDate, [Option<String>; 24]> = BTreeMap::new();
    for hour in first..=last {
        let (h0, h1) = (hour * 3600, hour * 3600 + 3600);
        let mut dwell: BTreeMap<&str, i64> = BTreeMap::new();
        for s in stops {
            let overlap = s.end.min(h1) - s.start.max(h0);
            if overlap > 0 {
                *dwell.entry(&s.loc_id).or_default() += overlap;
            }
        }
        let date = date_of_day(hour.div_euclid(24));
        let best = dwell
            .iter()
            .fold(None::<(&str, i64)>, |acc, (&l, &d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((l, d)),
            });
        if let Some((loc, _)) = best {
            out.entry(date)
                .or_insert_with(|| std::array::from_fn(|_| None))[hour.rem_euclid(24) as usize] =
                Some(loc.to_string());
        }
    }
    out
}

pub fn ts(date: NaiveDate, hour: i64, minute: i64) -> i64 {
    day_of_date(date) * SECONDS_PER_DAY + hour * 3600 + minute * 60
}

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// A population of plain commuters: no moves, job changes, errands, second
/// homes or gaps.
pub fn noiseless_population(n_agents: usize, n_days: u32, seed: u64) -> PopulationSpec {
    PopulationSpec {
        n_agents,
        n_days,
        missing_rate: (0.0, 0.0),
        movers: 0.0,
        job_changers: 0.0,
        unemployed: 0.0,
        near_work: 0.0,
        errands: 0.0,
        partners: 0.0,
        weekday_mix: ProfileMix::only(DayProfile::Commuter),
        weekend_mix: ProfileMix::only(DayProfile::AtHome),
        routine: Routine {
            lunch_prob: 0.0,
            outing_prob: 0.0,
        },
        seed,
        ..Default::default()
    }
}

/// Days whose centered window of `delta` lies inside `[first, last]`.
pub fn interior(first: NaiveDate, last: NaiveDate, delta: u32) -> (NaiveDate, NaiveDate) {
    let half = i64::from(delta / 2);
    (
        date_of_day(day_of_date(first) + half),
        date_of_day(day_of_date(last) - half),
    )
}
