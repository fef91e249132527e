//! Privacy-preserving transformation of stop sequences.
//!
//! Applied per user, in order:
//! 1. start and end are floored to a 10-minute grid (stops that become empty are dropped);
//! 2. the whole sequence is shifted by a multiple of 7 days so that the first
//!    stop falls in ISO week 1970-W01, keeping its weekday and time of day;
//! 3. stops are split at midnight;
//! 4. within each ISO week, weekday dates are permuted among weekdays and
//!    weekend dates among weekend days.
//!
//! The permutation depends only on the seed, the user id and the week.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{day_of, weekday_of_day, StopRecord, UserStops, SECONDS_PER_DAY};
use crate::parallel::par_map;

pub const GRID_SECONDS: i64 = 600;

/// Monday 1969-12-29, the first day of ISO week 1970-W01.
pub const EPOCH_WEEK_MONDAY: i64 = -3;

fn floor_to_grid(ts: i64) -> i64 {
    ts.div_euclid(GRID_SECONDS) * GRID_SECONDS
}

pub fn floor_stops(stops: &[StopRecord]) -> Vec<StopRecord> {
    stops
        .iter()
        .filter_map(|s| {
            let (start, end) = (floor_to_grid(s.start), floor_to_grid(s.end));
            (end > start).then(|| StopRecord {
                start,
                end,
                ..s.clone()
            })
        })
        .collect()
}

/// Shift (a multiple of 7 days, in seconds) that moves `first_start` into 1970-W01.
pub fn epoch_week_shift(first_start: i64) -> i64 {
    let day = day_of(first_start);
    let target = EPOCH_WEEK_MONDAY + i64::from(weekday_of_day(day));
    (target - day) * SECONDS_PER_DAY
}

pub fn split_at_midnight(stops: &[StopRecord]) -> Vec<StopRecord> {
    let mut out = Vec::with_capacity(stops.len());
    for s in stops {
        let mut t = s.start;
        while t < s.end {
            let cut = s.end.min((day_of(t) + 1) * SECONDS_PER_DAY);
            out.push(StopRecord {
                start: t,
                end: cut,
                ..s.clone()
            });
            t = cut;
        }
    }
    out
}

/// 64-bit FNV-1a, used to derive a stable per-user stream.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Target weekday (Monday = 0) for each weekday of `week` (index of its Monday / 7).
pub fn week_permutation(seed: u64, user_id: &str, week: i64) -> [u8; 7] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(user_id.as_bytes()));
    rng.set_stream(week as u64);
    let mut weekdays = [0u8, 1, 2, 3, 4];
    let mut weekend = [5u8, 6];
    weekdays.shuffle(&mut rng);
    weekend.shuffle(&mut rng);
    let mut out = [0; 7];
    out[..5].copy_from_slice(&weekdays);
    out[5..].copy_from_slice(&weekend);
    out
}

/// Permutes the dates of day-split stops within each ISO week.
pub fn shuffle_weeks(stops: &[StopRecord], seed: u64) -> Vec<StopRecord> {
    let mut out: Vec<StopRecord> = stops
        .iter()
        .map(|s| {
            let day = day_of(s.start);
            let monday = day - i64::from(weekday_of_day(day));
            let perm = week_permutation(seed, &s.user_id, monday.div_euclid(7));
            let shift =
                (monday + i64::from(perm[weekday_of_day(day) as usize]) - day) * SECONDS_PER_DAY;
            StopRecord {
                start: s.start + shift,
                end: s.end + shift,
                ..s.clone()
            }
        })
        .collect();
    out.sort_by(|a, b| (a.start, &a.loc_id).cmp(&(b.start, &b.loc_id)));
    out
}

/// Anonymizes one user's stops (sorted by start).
pub fn anonymize_user(stops: &[StopRecord], seed: u64) -> Vec<StopRecord> {
    let floored = floor_stops(stops);
    let Some(first) = floored.iter().map(|s| s.start).min() else {
        return Vec::new();
    };
    let shift = epoch_week_shift(first);
    let shifted: Vec<StopRecord> = floored
        .into_iter()
        .map(|s| StopRecord {
            start: s.start + shift,
            end: s.end + shift,
            ..s
        })
        .collect();
    shuffle_weeks(&split_at_midnight(&shifted), seed)
}

pub fn anonymize(users: &[UserStops], seed: u64) -> Vec<UserStops> {
    par_map(users, |u| UserStops {
        user_id: u.user_id.clone(),
        stops: anonymize_user(&u.stops, seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::day_of_date;
    use chrono::NaiveDate;

    fn at(date: &str, h: i64, m: i64) -> i64 {
        day_of_date(date.parse::<NaiveDate>().unwrap()) * SECONDS_PER_DAY + h * 3600 + m * 60
    }

    #[test]
    fn epoch_monday() {
        assert_eq!(
            day_of_date(NaiveDate::from_ymd_opt(1969, 12, 29).unwrap()),
            EPOCH_WEEK_MONDAY
        );
        assert_eq!(weekday_of_day(EPOCH_WEEK_MONDAY), 0);
    }

    #[test]
    fn floors_to_ten_minutes() {
        let s = StopRecord::new("u", "A", at("2019-01-01", 1, 7), at("2019-01-01", 1, 23));
        let f = floor_stops(&[s]);
        assert_eq!(
            (f[0].start, f[0].end),
            (at("2019-01-01", 1, 0), at("2019-01-01", 1, 20))
        );
        let tiny = StopRecord::new("u", "A", at("2019-01-01", 1, 1), at("2019-01-01", 1, 9));
        assert!(floor_stops(&[tiny]).is_empty());
    }

    #[test]
    fn shift_keeps_weekday_and_time() {
        // Tuesday 2019-01-01 10:30
        let t = at("2019-01-01", 10, 30);
        let shifted = t + epoch_week_shift(t);
        assert_eq!(shifted, at("1969-12-30", 10, 30));
        assert_eq!(epoch_week_shift(t) % (7 * SECONDS_PER_DAY), 0);
    }

    #[test]
    fn splits_at_midnight() {
        let s = StopRecord::new("u", "H", at("2019-01-01", 22, 0), at("2019-01-03", 7, 0));
        let parts = split_at_midnight(&[s]);
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[1].start, at("2019-01-02", 0, 0));
        assert_eq!(parts[1].duration(), SECONDS_PER_DAY);
    }

    #[test]
    fn permutation_respects_day_classes() {
        for week in -5..50 {
            let p = week_permutation(9, "user", week);
            let mut weekdays = p[..5].to_vec();
            weekdays.sort();
            assert_eq!(weekdays, [0, 1, 2, 3, 4]);
            let mut weekend = p[5..].to_vec();
            weekend.sort();
            assert_eq!(weekend, [5, 6]);
        }
        assert_eq!(week_permutation(1, "a", 3), week_permutation(1, "a", 3));
    }

    #[test]
    fn first_activity_lands_in_first_week_of_1970() {
        let stops = vec![
            StopRecord::new("u", "H", at("2019-03-06", 0, 0), at("2019-03-06", 8, 0)),
            StopRecord::new("u", "W", at("2019-03-06", 9, 0), at("2019-03-06", 17, 0)),
            StopRecord::new("u", "H", at("2019-03-09", 0, 0), at("2019-03-10", 8, 0)),
        ];
        let out = anonymize_user(&stops, 4);
        let first = out.iter().map(|s| s.start).min().unwrap();
        let day = day_of(first);
        assert!((EPOCH_WEEK_MONDAY..EPOCH_WEEK_MONDAY + 7).contains(&day));
        let total: i64 = out.iter().map(StopRecord::duration).sum();
        assert_eq!(total, stops.iter().map(StopRecord::duration).sum::<i64>());
        assert!(out.windows(2).all(|w| w[0].end <= w[1].start));
    }
}
