//! Domain types shared by every detector.
//!
//! Timestamps are naive local seconds since 1970-01-01T00:00:00. Day indices
//! count whole days from the same origin, so `day_of(ts) = ts.div_euclid(86400)`.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use crate::error::{HowdeError, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;
pub const HOURS_PER_DAY: usize = 24;

/// Days between 0001-01-01 (CE day 1) and 1970-01-01.
const UNIX_EPOCH_CE_DAYS: i32 = 719_163;

/// One contiguous stay of one user at one location, `[start, end)` in local seconds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StopRecord {
    pub user_id: String,
    pub loc_id: String,
    pub start: i64,
    pub end: i64,
}

impl StopRecord {
    pub fn new(
        user_id: impl Into<String>,
        loc_id: impl Into<String>,
        start: i64,
        end: i64,
    ) -> Self {
        Self {
            user_id: user_id.into(),
            loc_id: loc_id.into(),
            start,
            end,
        }
    }

    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

/// All stops of one user, sorted by start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserStops {
    pub user_id: String,
    pub stops: Vec<StopRecord>,
}

pub fn day_of(ts: i64) -> i64 {
    ts.div_euclid(SECONDS_PER_DAY)
}

pub fn date_of_day(day: i64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(day as i32 + UNIX_EPOCH_CE_DAYS)
        .expect("day index within chrono range")
}

pub fn day_of_date(date: NaiveDate) -> i64 {
    i64::from(date.num_days_from_ce() - UNIX_EPOCH_CE_DAYS)
}

/// Weekday of a day index, Monday = 0.
pub fn weekday_of_day(day: i64) -> u8 {
    // 1970-01-01 was a Thursday.
    (day + 3).rem_euclid(7) as u8
}

/// Set of hour-of-day indices (0..24) stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HourSet(u32);

impl HourSet {
    /// Half-open hour range `[from, to)`.
    pub fn range(from: u8, to: u8) -> Self {
        (from..to).collect()
    }

    pub fn contains(self, hour: usize) -> bool {
        hour < HOURS_PER_DAY && self.0 & (1 << hour) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..HOURS_PER_DAY).filter(move |&h| self.contains(h))
    }
}

impl FromIterator<u8> for HourSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut mask = 0u32;
        for h in iter {
            assert!((h as usize) < HOURS_PER_DAY, "hour {h} out of range");
            mask |= 1 << h;
        }
        HourSet(mask)
    }
}

impl fmt::Debug for HourSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Compact list syntax: `0-5`, `9,10,11`, `22-23,0-5`. Ranges are inclusive.
impl FromStr for HourSet {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        let values = parse_index_list(s, 23)?;
        Ok(values.into_iter().collect())
    }
}

impl fmt::Display for HourSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_index_list(f, self.iter().map(|h| h as u8))
    }
}

/// Set of weekdays (Monday = 0) stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct WeekdaySet(u8);

const WEEKDAY_NAMES: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

impl WeekdaySet {
    pub const MON_FRI: WeekdaySet = WeekdaySet(0b0001_1111);

    pub fn contains(self, weekday: u8) -> bool {
        weekday < 7 && self.0 & (1 << weekday) != 0
    }

    pub fn contains_day(self, day: i64) -> bool {
        self.contains(weekday_of_day(day))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..7).filter(move |&d| self.contains(d))
    }

    /// Number of days in the inclusive day-index range `[lo, hi]` whose weekday is in the set.
    pub fn count_in(self, lo: i64, hi: i64) -> u32 {
        if hi < lo {
            return 0;
        }
        let total = hi - lo + 1;
        let full_weeks = total / 7;
        let mut count = full_weeks * self.len() as i64;
        let mut day = lo + full_weeks * 7;
        while day <= hi {
            if self.contains_day(day) {
                count += 1;
            }
            day += 1;
        }
        count as u32
    }
}

impl FromIterator<u8> for WeekdaySet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut mask = 0u8;
        for d in iter {
            assert!(d < 7, "weekday {d} out of range");
            mask |= 1 << d;
        }
        WeekdaySet(mask)
    }
}

impl fmt::Debug for WeekdaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set()
            .entries(self.iter().map(|d| WEEKDAY_NAMES[d as usize]))
            .finish()
    }
}

/// Accepts names (`Mon-Fri`, `Sat,Sun`) or indices with Monday = 0 (`0-4`).
impl FromStr for WeekdaySet {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        let normalized: String = s
            .split(',')
            .map(|part| {
                part.split('-')
                    .map(|tok| {
                        let tok = tok.trim();
                        WEEKDAY_NAMES
                            .iter()
                            .position(|n| n.eq_ignore_ascii_case(tok))
                            .map(|i| i.to_string())
                            .unwrap_or_else(|| tok.to_string())
                    })
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect::<Vec<_>>()
            .join(",");
        Ok(parse_index_list(&normalized, 6)?.into_iter().collect())
    }
}

impl fmt::Display for WeekdaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(|d| WEEKDAY_NAMES[d as usize]).collect();
        f.write_str(&names.join(","))
    }
}

fn parse_index_list(s: &str, max: u8) -> Result<Vec<u8>> {
    let bad = |what: &str| HowdeError::Config(format!("bad index list {s:?}: {what}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: u8 = lo.parse().map_err(|_| bad(part))?;
        let hi: u8 = hi.parse().map_err(|_| bad(part))?;
        if lo > max || hi > max {
            return Err(bad("index out of range"));
        }
        if lo <= hi {
            out.extend(lo..=hi);
        } else {
            // wrap-around, e.g. 22-5
            out.extend(lo..=max);
            out.extend(0..=hi);
        }
    }
    if out.is_empty() {
        return Err(bad("empty"));
    }
    Ok(out)
}

fn write_index_list(f: &mut fmt::Formatter<'_>, values: impl Iterator<Item = u8>) -> fmt::Result {
    let values: Vec<u8> = values.collect();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let mut j = i;
        while j + 1 < values.len() && values[j + 1] == values[j] + 1 {
            j += 1;
        }
        if i == j {
            parts.push(values[i].to_string());
        } else {
            parts.push(format!("{}-{}", values[i], values[j]));
        }
        i = j + 1;
    }
    f.write_str(&parts.join(","))
}

/// Hour and weekday windows used to score home (night) and work (business hours).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindows {
    pub night_bins: HourSet,
    pub business_bins: HourSet,
    pub business_days: WeekdaySet,
}

impl Default for TimeWindows {
    fn default() -> Self {
        Self {
            night_bins: HourSet::range(0, 6),
            business_bins: HourSet::range(9, 16),
            business_days: WeekdaySet::MON_FRI,
        }
    }
}

impl TimeWindows {
    pub fn bins(&self, scope: Scope) -> HourSet {
        match scope {
            Scope::Home => self.night_bins,
            Scope::Work => self.business_bins,
        }
    }

    /// Whether a day index is relevant for `scope` (all days for home, business days for work).
    pub fn day_in_scope(&self, scope: Scope, day: i64) -> bool {
        match scope {
            Scope::Home => true,
            Scope::Work => self.business_days.contains_day(day),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.night_bins.is_empty() {
            return Err(HowdeError::Config("night_bins must not be empty".into()));
        }
        if self.business_bins.is_empty() {
            return Err(HowdeError::Config("business_bins must not be empty".into()));
        }
        if self.business_days.is_empty() {
            return Err(HowdeError::Config("business_days must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Home,
    Work,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Home => "HOME",
            Scope::Work => "WORK",
        })
    }
}

impl FromStr for Scope {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HOME" => Ok(Scope::Home),
            "WORK" => Ok(Scope::Work),
            _ => Err(HowdeError::InvalidArgument(format!("unknown scope {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WindowMode {
    #[default]
    Centered,
    PastOnly,
    FullPeriod,
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Centered => "CENTERED",
            WindowMode::PastOnly => "PAST_ONLY",
            WindowMode::FullPeriod => "FULL_PERIOD",
        })
    }
}

impl FromStr for WindowMode {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "CENTERED" => Ok(WindowMode::Centered),
            "PAST_ONLY" => Ok(WindowMode::PastOnly),
            "FULL_PERIOD" => Ok(WindowMode::FullPeriod),
            _ => Err(HowdeError::Config(format!("unknown window_mode {s:?}"))),
        }
    }
}

/// Tunable detector parameters. Field names follow the configuration keys
/// (`delta_T_H` → `delta_t_h`, `C_hours` → `c_hours`, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HowdeParams {
    /// Home window size in days.
    pub delta_t_h: u32,
    /// Work window size in days.
    pub delta_t_w: u32,
    /// Minimum fraction of scope bins with data for a day to count.
    pub c_hours: f64,
    /// Minimum fraction of window days with data (home).
    pub c_days_h: f64,
    /// Minimum fraction of window days with data (work).
    pub c_days_w: f64,
    /// Minimum average fraction of night bins at a home candidate.
    pub f_hours_h: f64,
    /// Minimum average fraction of business bins at a work candidate.
    pub f_hours_w: f64,
    /// Minimum fraction of window days on which a work candidate is visited.
    pub f_days_w: f64,
    pub window_mode: WindowMode,
    pub windows: TimeWindows,
}

impl Default for HowdeParams {
    fn default() -> Self {
        Self {
            delta_t_h: 28,
            delta_t_w: 42,
            c_hours: 0.4,
            c_days_h: 0.4,
            c_days_w: 0.5,
            f_hours_h: 0.7,
            f_hours_w: 0.4,
            f_days_w: 0.6,
            window_mode: WindowMode::Centered,
            windows: TimeWindows::default(),
        }
    }
}

impl HowdeParams {
    pub fn delta_t(&self, scope: Scope) -> u32 {
        match scope {
            Scope::Home => self.delta_t_h,
            Scope::Work => self.delta_t_w,
        }
    }

    pub fn c_days(&self, scope: Scope) -> f64 {
        match scope {
            Scope::Home => self.c_days_h,
            Scope::Work => self.c_days_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("C_hours", self.c_hours),
            ("C_days_H", self.c_days_h),
            ("C_days_W", self.c_days_w),
            ("f_hours_H", self.f_hours_h),
            ("f_hours_W", self.f_hours_w),
            ("f_days_W", self.f_days_w),
        ];
        for (name, value) in fractions {
            if !(0.0..=1.0).contains(&value) {
                return Err(HowdeError::Config(format!(
                    "{name} = {value} is outside [0, 1]"
                )));
            }
        }
        if self.window_mode == WindowMode::Centered {
            for (name, delta) in [("delta_T_H", self.delta_t_h), ("delta_T_W", self.delta_t_w)] {
                if delta % 2 != 0 {
                    return Err(HowdeError::Config(format!(
                        "{name} = {delta} must be even in CENTERED mode"
                    )));
                }
            }
        }
        self.windows.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UndetectedReason {
    /// No day in the window passed the daily coverage filter.
    DayCoverage,
    /// Too small a fraction of window days had data.
    WindowCoverage,
    /// No location met the selection thresholds.
    NoCandidate,
    /// Work is only assigned on business days.
    NonBusinessDay,
}

impl UndetectedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UndetectedReason::DayCoverage => "DAY_COVERAGE",
            UndetectedReason::WindowCoverage => "WINDOW_COVERAGE",
            UndetectedReason::NoCandidate => "NO_CANDIDATE",
            UndetectedReason::NonBusinessDay => "NON_BUSINESS_DAY",
        }
    }
}

/// Outcome of one scope on one day.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Detection {
    Detected(String),
    Undetected(UndetectedReason),
}

impl Detection {
    pub fn loc(&self) -> Option<&str> {
        match self {
            Detection::Detected(loc) => Some(loc),
            Detection::Undetected(_) => None,
        }
    }

    pub fn is_detected(&self) -> bool {
        matches!(self, Detection::Detected(_))
    }

    pub fn status(&self) -> &'static str {
        match self {
            Detection::Detected(_) => "DETECTED",
            Detection::Undetected(reason) => reason.as_str(),
        }
    }

    pub fn from_status(loc: &str, status: &str) -> Result<Self> {
        let reason = match status {
            "DETECTED" => {
                if loc.is_empty() {
                    return Err(HowdeError::InvalidArgument(
                        "DETECTED status with empty location".into(),
                    ));
                }
                return Ok(Detection::Detected(loc.to_string()));
            }
            "DAY_COVERAGE" => UndetectedReason::DayCoverage,
            "WINDOW_COVERAGE" => UndetectedReason::WindowCoverage,
            "NO_CANDIDATE" => UndetectedReason::NoCandidate,
            "NON_BUSINESS_DAY" => UndetectedReason::NonBusinessDay,
            other => {
                return Err(HowdeError::InvalidArgument(format!(
                    "unknown status {other:?}"
                )))
            }
        };
        Ok(Detection::Undetected(reason))
    }
}

/// Per user-day detector output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetectionLabel {
    pub user_id: String,
    pub date: NaiveDate,
    pub home: Detection,
    pub work: Detection,
}

impl DetectionLabel {
    pub fn get(&self, scope: Scope) -> &Detection {
        match scope {
            Scope::Home => &self.home,
            Scope::Work => &self.work,
        }
    }
}

/// ISO-8601 week key, e.g. `2019-W05`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IsoWeek {
    pub year: i32,
    pub week: u32,
}

impl IsoWeek {
    pub fn of(date: NaiveDate) -> Self {
        let w = date.iso_week();
        IsoWeek {
            year: w.year(),
            week: w.week(),
        }
    }

    pub fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, chrono::Weekday::Mon)
            .expect("valid ISO week")
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

impl FromStr for IsoWeek {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HowdeError::InvalidArgument(format!("bad ISO week {s:?}"));
        let (year, week) = s.trim().split_once("-W").ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        let week: u32 = week.parse().map_err(|_| bad())?;
        NaiveDate::from_isoywd_opt(year, week, chrono::Weekday::Mon).ok_or_else(bad)?;
        Ok(IsoWeek { year, week })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn day_helpers_roundtrip() {
        let date = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let day = day_of_date(date);
        assert_eq!(date_of_day(day), date);
        // 2019-01-01 was a Tuesday
        assert_eq!(weekday_of_day(day), 1);
        assert_eq!(weekday_of_day(0), 3);
        assert_eq!(day_of(-1), -1);
        assert_eq!(
            date_of_day(-3),
            NaiveDate::from_ymd_opt(1969, 12, 29).unwrap()
        );
    }

    #[test]
    fn default_windows_are_half_open() {
        let w = TimeWindows::default();
        assert_eq!(w.night_bins.len(), 6);
        assert_eq!(w.business_bins.len(), 7);
        assert!(w.business_bins.contains(15));
        assert!(!w.business_bins.contains(16));
        assert!(!w.night_bins.contains(6));
        assert_eq!(w.business_days.len(), 5);
    }

    #[test]
    fn index_list_syntax() {
        let s: HourSet = "22-5".parse().unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5, 22, 23]);
        assert_eq!(s.to_string(), "0-5,22-23");
        let d: WeekdaySet = "Mon-Fri".parse().unwrap();
        assert_eq!(d, WeekdaySet::MON_FRI);
        let d: WeekdaySet = "sat,Sun".parse().unwrap();
        assert_eq!(d.iter().collect::<Vec<_>>(), vec![5, 6]);
        assert!("24".parse::<HourSet>().is_err());
        assert!("".parse::<HourSet>().is_err());
    }

    #[test]
    fn count_business_days_matches_enumeration() {
        let set = WeekdaySet::MON_FRI;
        for lo in -20..20 {
            for hi in lo - 1..lo + 30 {
                let brute = (lo..=hi).filter(|&d| set.contains_day(d)).count() as u32;
                assert_eq!(set.count_in(lo, hi), brute);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(HowdeParams::default().validate().is_ok());
        let odd = HowdeParams {
            delta_t_h: 27,
            ..Default::default()
        };
        assert!(odd.validate().is_err());
        let odd_past = HowdeParams {
            delta_t_h: 27,
            window_mode: WindowMode::PastOnly,
            ..Default::default()
        };
        assert!(odd_past.validate().is_ok());
        let bad = HowdeParams {
            f_days_w: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn iso_week_parse_display() {
        let w: IsoWeek = "2019-W05".parse().unwrap();
        assert_eq!(w.to_string(), "2019-W05");
        assert_eq!(w.monday(), NaiveDate::from_ymd_opt(2019, 1, 28).unwrap());
        assert_eq!(
            IsoWeek::of(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).to_string(),
            "1970-W01"
        );
    }
}
