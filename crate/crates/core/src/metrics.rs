//! Evaluation against ground truth: detected accuracy, fraction not detected,
//! and bootstrap errors over evaluation keys.
//!
//! Two protocols are supported. With [`Granularity::UserWeek`] every
//! (user, ISO week) is a key and daily labels are reduced to one weekly label.
//! With [`Granularity::User`] every user is a key and a detection matches if
//! any detected label over the period is among the user's truth locations.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binning::sorted_stops;
use crate::error::{HowdeError, Result};
use crate::model::{day_of, Detection, DetectionLabel, IsoWeek, Scope, UserStops};
use crate::parallel::par_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    UserWeek,
    User,
}

/// Ground-truth locations for one scope at one granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub scope: Scope,
    pub granularity: Granularity,
    /// `(user, week)`; the week is `None` exactly when granularity is `User`.
    pub entries: BTreeMap<(String, Option<IsoWeek>), BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new(scope: Scope, granularity: Granularity) -> Self {
        Self {
            scope,
            granularity,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, user: &str, week: Option<IsoWeek>, loc: &str) -> Result<()> {
        let expected = self.granularity == Granularity::UserWeek;
        if week.is_some() != expected {
            return Err(HowdeError::ProtocolMismatch(format!(
                "truth row for {user} does not match {:?} granularity",
                self.granularity
            )));
        }
        self.entries
            .entry((user.to_string(), week))
            .or_default()
            .insert(loc.to_string());
        Ok(())
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(u, _)| u.as_str()).collect()
    }

    /// Keeps only keys accepted by `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&str, Option<IsoWeek>) -> bool) {
        self.entries.retain(|(u, w), _| keep(u, *w));
    }
}

/// Modal detected location among a week's days; ties go to the smallest id.
pub fn weekly_label<'a>(days: impl IntoIterator<Item = &'a Detection>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in days {
        if let Some(loc) = d.loc() {
            *counts.entry(loc).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyOutcome {
    pub detected: bool,
    pub matched: bool,
}

/// Per-key outcomes in key order.
pub fn key_outcomes(labels: &[DetectionLabel], truth: &GroundTruth) -> Result<Vec<KeyOutcome>> {
    let mut by_user: BTreeMap<&str, Vec<&DetectionLabel>> = BTreeMap::new();
    for l in labels {
        by_user.entry(l.user_id.as_str()).or_default().push(l);
    }
    let truth_users = truth.users();
    if !truth_users.is_empty() && !truth_users.iter().any(|u| by_user.contains_key(u)) {
        return Err(HowdeError::ProtocolMismatch(
            "no user in the labels appears in the ground truth".into(),
        ));
    }

    let scope = truth.scope;
    let mut weekly: BTreeMap<(&str, IsoWeek), Vec<&Detection>> = BTreeMap::new();
    if truth.granularity == Granularity::UserWeek {
        for (user, days) in &by_user {
            for l in days {
                weekly
                    .entry((*user, IsoWeek::of(l.date)))
                    .or_default()
                    .push(l.get(scope));
            }
        }
    }

    let outcomes = truth
        .entries
        .iter()
        .map(|((user, week), truth_locs)| match week {
            Some(week) => {
                let label = weekly
                    .get(&(user.as_str(), *week))
                    .and_then(|days| weekly_label(days.iter().copied()));
                KeyOutcome {
                    detected: label.is_some(),
                    matched: label.is_some_and(|l| truth_locs.contains(&l)),
                }
            }
            None => {
                let detections: Vec<&str> = by_user
                    .get(user.as_str())
                    .into_iter()
                    .flatten()
                    .filter_map(|l| l.get(scope).loc())
                    .collect();
                KeyOutcome {
                    detected: !detections.is_empty(),
                    matched: detections.iter().any(|d| truth_locs.contains(*d)),
                }
            }
        })
        .collect();
    Ok(outcomes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub n_truth: usize,
    pub n_detected: usize,
    pub n_matched: usize,
    /// `n_matched / n_detected`; NaN when nothing was detected.
    pub detected_accuracy: f64,
    /// `1 - n_detected / n_truth`.
    pub frac_not_detected: f64,
}

/// Point estimate over the outcomes selected by `indices` (repeats allowed).
pub fn summarize(
    outcomes: &[KeyOutcome],
    indices: impl IntoIterator<Item = usize>,
) -> PointEstimate {
    let (mut n_truth, mut n_detected, mut n_matched) = (0, 0, 0);
    for i in indices {
        let o = outcomes[i];
        n_truth += 1;
        n_detected += usize::from(o.detected);
        n_matched += usize::from(o.detected && o.matched);
    }
    PointEstimate {
        n_truth,
        n_detected,
        n_matched,
        detected_accuracy: if n_detected == 0 {
            f64::NAN
        } else {
            n_matched as f64 / n_detected as f64
        },
        frac_not_detected: if n_truth == 0 {
            f64::NAN
        } else {
            1.0 - n_detected as f64 / n_truth as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub detected_accuracy: f64,
    pub frac_not_detected: f64,
    pub n_truth: usize,
    pub n_detected: usize,
    pub n_matched: usize,
    /// Bootstrap standard deviations.
    pub acc_stderr: f64,
    pub fnd_stderr: f64,
    /// Bootstrap 2.5% / 97.5% percentiles.
    pub acc_interval: (f64, f64),
    pub fnd_interval: (f64, f64),
}

/// Bootstrap resample `iteration` of `n` keys. Each iteration has its own
/// ChaCha stream, so results do not depend on scheduling.
pub fn resample(n: usize, seed: u64, iteration: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn spread(mut values: Vec<f64>) -> (f64, (f64, f64)) {
    values.retain(|v| !v.is_nan());
    if values.is_empty() {
        return (f64::NAN, (f64::NAN, f64::NAN));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    values.sort_by(f64::total_cmp);
    let pct = |p: f64| values[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
    (sd, (pct(0.025), pct(0.975)))
}

/// Bootstrap over precomputed outcomes using `draw(iteration)` resamples.
pub fn bootstrap_with(
    outcomes: &[KeyOutcome],
    iterations: u64,
    draw: impl Fn(u64) -> Vec<usize> + Sync + Send,
) -> EvalReport {
    let point = summarize(outcomes, 0..outcomes.len());
    let iters: Vec<u64> = (0..iterations).collect();
    let samples: Vec<PointEstimate> = par_map(&iters, |&b| summarize(outcomes, draw(b)));
    let (acc_stderr, acc_interval) = spread(samples.iter().map(|s| s.detected_accuracy).collect());
    let (fnd_stderr, fnd_interval) = spread(samples.iter().map(|s| s.frac_not_detected).collect());
    EvalReport {
        detected_accuracy: point.detected_accuracy,
        frac_not_detected: point.frac_not_detected,
        n_truth: point.n_truth,
        n_detected: point.n_detected,
        n_matched: point.n_matched,
        acc_stderr,
        fnd_stderr,
        acc_interval,
        fnd_interval,
    }
}

/// Compares labels against ground truth with `bootstrap_b` resamples of the keys.
pub fn evaluate(
    labels: &[DetectionLabel],
    truth: &GroundTruth,
    bootstrap_b: u64,
    seed: u64,
) -> Result<EvalReport> {
    let outcomes = key_outcomes(labels, truth)?;
    let n = outcomes.len();
    Ok(bootstrap_with(&outcomes, bootstrap_b, |b| {
        resample(n, seed, b)
    }))
}

/// Users with at least `min_days_with_data` calendar days touched by a stop.
pub fn prefilter_users(users: &[UserStops], min_days_with_data: usize) -> Result<BTreeSet<String>> {
    let mut keep = BTreeSet::new();
    for u in users {
        let stops = sorted_stops(&u.stops)?;
        let mut days: Vec<i64> = Vec::new();
        for s in stops.iter() {
            days.extend(day_of(s.start)..=day_of(s.end - 1));
        }
        days.sort_unstable();
        days.dedup();
        if days.len() >= min_days_with_data {
            keep.insert(u.user_id.clone());
        }
    }
    Ok(keep)
}
