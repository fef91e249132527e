//! Static baselines: dwell-based (Atlas) and visit-count-based (TimeGeo)
//! home/work assignment, one label per user for the whole period.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;

use crate::apps::{haversine, LocationCoords};
use crate::binning::{hour_pieces, sorted_stops};
use crate::error::Result;
use crate::model::{
    date_of_day, day_of_date, Detection, DetectionLabel, HourSet, StopRecord, TimeWindows,
    UndetectedReason, UserStops, HOURS_PER_DAY,
};
use crate::parallel::par_map;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOptions {
    pub windows: TimeWindows,
    /// Use the shared night/business windows instead of each method's own.
    pub harmonized: bool,
    pub atlas_min_nights: usize,
    pub timegeo_min_stops: usize,
    pub timegeo_min_home_stays: usize,
    pub timegeo_min_work_visits: usize,
    pub timegeo_min_distance_km: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            windows: TimeWindows::default(),
            harmonized: false,
            atlas_min_nights: 10,
            timegeo_min_stops: 50,
            timegeo_min_home_stays: 10,
            timegeo_min_work_visits: 3,
            timegeo_min_distance_km: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub user_id: String,
    pub home: Option<String>,
    pub work: Option<String>,
    /// Whether the user passed the method's own data-quality filter.
    pub qualifies: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Atlas,
    TimeGeo,
}

impl std::str::FromStr for Method {
    type Err = crate::HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "atlas" => Ok(Method::Atlas),
            "timegeo" => Ok(Method::TimeGeo),
            _ => Err(crate::HowdeError::InvalidArgument(format!(
                "unknown baseline {s:?}"
            ))),
        }
    }
}

/// Cumulative dwell seconds per location over hours accepted by `in_window(day, hour)`.
fn dwell_by_loc(
    stops: &[StopRecord],
    in_window: impl Fn(i64, usize) -> bool,
) -> BTreeMap<&str, i64> {
    let mut out: BTreeMap<&str, i64> = BTreeMap::new();
    for s in stops {
        for (hour, secs) in hour_pieces(s.start, s.end) {
            let day = hour.div_euclid(HOURS_PER_DAY as i64);
            if in_window(day, hour.rem_euclid(HOURS_PER_DAY as i64) as usize) {
                *out.entry(s.loc_id.as_str()).or_default() += secs;
            }
        }
    }
    out
}

/// Number of stops per location touching at least one accepted hour.
fn visits_by_loc(
    stops: &[StopRecord],
    in_window: impl Fn(i64, usize) -> bool,
) -> BTreeMap<&str, usize> {
    let mut out: BTreeMap<&str, usize> = BTreeMap::new();
    for s in stops {
        let hit = hour_pieces(s.start, s.end).any(|(hour, _)| {
            in_window(
                hour.div_euclid(HOURS_PER_DAY as i64),
                hour.rem_euclid(HOURS_PER_DAY as i64) as usize,
            )
        });
        if hit {
            *out.entry(s.loc_id.as_str()).or_default() += 1;
        }
    }
    out
}

/// Largest value, ties to the smallest location id.
fn argmax<V: Ord + Copy>(scores: &BTreeMap<&str, V>) -> Option<String> {
    scores
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
}

fn atlas_night(opts: &BaselineOptions) -> HourSet {
    if opts.harmonized {
        opts.windows.night_bins
    } else {
        // 10 p.m. to 6 a.m.
        (22..24).chain(0..6).collect()
    }
}

/// Location with the most nighttime dwell over the whole period.
pub fn atlas_home(stops: &[StopRecord], opts: &BaselineOptions) -> Result<Option<String>> {
    let stops = sorted_stops(stops)?;
    let night = atlas_night(opts);
    Ok(argmax(&dwell_by_loc(&stops, |_, h| night.contains(h))))
}

/// Location with the most business-hour dwell on business days.
pub fn atlas_work(stops: &[StopRecord], opts: &BaselineOptions) -> Result<Option<String>> {
    let stops = sorted_stops(stops)?;
    let w = &opts.windows;
    Ok(argmax(&dwell_by_loc(&stops, |day, h| {
        w.business_days.contains_day(day) && w.business_bins.contains(h)
    })))
}

pub fn atlas(stops: &[StopRecord], opts: &BaselineOptions) -> Result<BaselineResult> {
    let home = atlas_home(stops, opts)?;
    let work = atlas_work(stops, opts)?;
    let night = atlas_night(opts);
    // nights (attributed to the calendar day of the night hour) spent at home
    let nights = match &home {
        Some(h) => {
            let mut days: Vec<i64> = Vec::new();
            for s in stops.iter().filter(|s| &s.loc_id == h) {
                for (hour, _) in hour_pieces(s.start, s.end) {
                    if night.contains(hour.rem_euclid(24) as usize) {
                        days.push(hour.div_euclid(24));
                    }
                }
            }
            days.sort_unstable();
            days.dedup();
            days.len()
        }
        None => 0,
    };
    Ok(BaselineResult {
        user_id: stops.first().map(|s| s.user_id.clone()).unwrap_or_default(),
        home,
        work,
        qualifies: nights >= opts.atlas_min_nights,
        warnings: Vec::new(),
    })
}

fn timegeo_home_window(opts: &BaselineOptions) -> impl Fn(i64, usize) -> bool + '_ {
    let w = &opts.windows;
    move |day, hour| {
        let weekend = !w.business_days.contains_day(day);
        if weekend {
            return true;
        }
        if opts.harmonized {
            w.night_bins.contains(hour)
        } else {
            // weekday nights 7 p.m. to 8 a.m., attributed to the day the night starts
            hour >= 19 || (hour < 8 && w.business_days.contains_day(day - 1))
        }
    }
}

/// Most-visited location during weekday nights and weekends, subject to the
/// minimum total-stop and home-stay filters.
pub fn timegeo_home(stops: &[StopRecord], opts: &BaselineOptions) -> Result<Option<String>> {
    let stops = sorted_stops(stops)?;
    if stops.len() < opts.timegeo_min_stops {
        return Ok(None);
    }
    let visits = visits_by_loc(&stops, timegeo_home_window(opts));
    let best = argmax(&visits);
    Ok(best.filter(|h| visits[h.as_str()] >= opts.timegeo_min_home_stays))
}

/// Most-visited weekday daytime location with enough visits and far enough from home.
///
/// Candidates without coordinates (or a home without coordinates) are skipped
/// and reported in the returned warnings.
pub fn timegeo_work(
    stops: &[StopRecord],
    home: &str,
    coords: &HashMap<String, LocationCoords>,
    opts: &BaselineOptions,
) -> Result<(Option<String>, Vec<String>)> {
    let stops = sorted_stops(stops)?;
    let w = &opts.windows;
    let visits = visits_by_loc(&stops, |day, hour| {
        w.business_days.contains_day(day)
            && if opts.harmonized {
                w.business_bins.contains(hour)
            } else {
                (8..19).contains(&hour)
            }
    });
    let mut ranked: Vec<(&str, usize)> = visits
        .into_iter()
        .filter(|&(_, n)| n >= opts.timegeo_min_work_visits)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut warnings = Vec::new();
    let home_coords = coords.get(home);
    for (loc, _) in ranked {
        let (Some(h), Some(c)) = (home_coords, coords.get(loc)) else {
            warnings.push(format!(
                "missing coordinates for {} or home {home}; candidate skipped",
                loc
            ));
            continue;
        };
        if haversine(h, c) > opts.timegeo_min_distance_km {
            return Ok((Some(loc.to_string()), warnings));
        }
    }
    Ok((None, warnings))
}

pub fn timegeo(
    stops: &[StopRecord],
    coords: &HashMap<String, LocationCoords>,
    opts: &BaselineOptions,
) -> Result<BaselineResult> {
    let home = timegeo_home(stops, opts)?;
    let (work, warnings) = match &home {
        Some(h) => timegeo_work(stops, h, coords, opts)?,
        None => (None, Vec::new()),
    };
    Ok(BaselineResult {
        user_id: stops.first().map(|s| s.user_id.clone()).unwrap_or_default(),
        qualifies: home.is_some(),
        home,
        work,
        warnings,
    })
}

impl BaselineResult {
    /// Expands the static result into one label per date of `period` so it can
    /// be evaluated like the sliding-window detector.
    pub fn daily_labels(
        &self,
        period: (NaiveDate, NaiveDate),
        windows: &TimeWindows,
    ) -> Vec<DetectionLabel> {
        let to_detection = |loc: &Option<String>| match loc {
            Some(l) => Detection::Detected(l.clone()),
            None => Detection::Undetected(UndetectedReason::NoCandidate),
        };
        (day_of_date(period.0)..=day_of_date(period.1))
            .map(|day| DetectionLabel {
                user_id: self.user_id.clone(),
                date: date_of_day(day),
                home: to_detection(&self.home),
                work: if windows.business_days.contains_day(day) {
                    to_detection(&self.work)
                } else {
                    Detection::Undetected(UndetectedReason::NonBusinessDay)
                },
            })
            .collect()
    }
}

/// Runs `method` for every user and expands each result over the user's
/// observed period.
pub fn run_baseline_all(
    users: &[UserStops],
    method: Method,
    coords: &HashMap<String, LocationCoords>,
    opts: &BaselineOptions,
) -> Result<(Vec<BaselineResult>, Vec<DetectionLabel>)> {
    let per_user = par_map(users, |u| -> Result<_> {
        let mut result = match method {
            Method::Atlas => atlas(&u.stops, opts)?,
            Method::TimeGeo => timegeo(&u.stops, coords, opts)?,
        };
        result.user_id = u.user_id.clone();
        let labels = observed_period(&u.stops)
            .map(|p| result.daily_labels(p, &opts.windows))
            .unwrap_or_default();
        Ok((result, labels))
    });
    let mut results = Vec::with_capacity(users.len());
    let mut labels = Vec::new();
    for r in per_user {
        let (result, l) = r?;
        results.push(result);
        labels.extend(l);
    }
    Ok((results, labels))
}

/// First and last date touched by a user's stops.
pub fn observed_period(stops: &[StopRecord]) -> Option<(NaiveDate, NaiveDate)> {
    let first = stops.iter().map(|s| s.start).min()?;
    let last = stops.iter().map(|s| s.end).max()?;
    Some((
        date_of_day(crate::model::day_of(first)),
        date_of_day(crate::model::day_of(last - 1)),
    ))
}
