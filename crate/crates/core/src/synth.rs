//! Synthetic agents with known home and work schedules.
//!
//! Each day of an agent is drawn from a profile mix and laid out as a list of
//! stays. Missing data is injected per hourly bin: every hour of the timeline is
//! dropped independently with the agent's missing rate, and the surviving
//! pieces are stitched back into stops.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::apps::LocationCoords;
use crate::error::{HowdeError, Result};
use crate::metrics::{Granularity, GroundTruth};
use crate::model::{
    date_of_day, day_of_date, weekday_of_day, IsoWeek, Scope, StopRecord, UserStops,
    SECONDS_PER_DAY,
};
use crate::parallel::par_map;

const MINUTE: i64 = 60;
const DAY_MINUTES: i64 = 1440;

/// A location held over an inclusive date range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub loc_id: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl Assignment {
    pub fn new(loc_id: impl Into<String>, from: NaiveDate, to: NaiveDate) -> Self {
        Assignment {
            loc_id: loc_id.into(),
            from,
            to,
        }
    }

    fn covers(&self, date: NaiveDate) -> bool {
        self.from <= date && date <= self.to
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DayProfile {
    /// At home nearly all day, with at most one short outing.
    AtHome,
    /// The whole day, night included, at some other place.
    Away,
    /// Home at night, at work during business hours.
    Commuter,
    /// Home at night, out at other places during the day, not at work.
    Absent,
    /// At work from midnight to early morning, home during the day.
    NightShift,
}

impl FromStr for DayProfile {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(
            match s
                .trim()
                .to_ascii_lowercase()
                .replace(['-', '_'], "")
                .as_str()
            {
                "athome" | "home" => DayProfile::AtHome,
                "away" => DayProfile::Away,
                "commuter" | "atwork" => DayProfile::Commuter,
                "absent" => DayProfile::Absent,
                "nightshift" => DayProfile::NightShift,
                _ => {
                    return Err(HowdeError::InvalidArgument(format!(
                        "unknown day profile {s:?}"
                    )))
                }
            },
        )
    }
}

/// Weighted distribution over day profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMix(pub Vec<(DayProfile, f64)>);

impl ProfileMix {
    pub fn only(profile: DayProfile) -> Self {
        ProfileMix(vec![(profile, 1.0)])
    }

    pub fn default_weekday() -> Self {
        ProfileMix(vec![
            (DayProfile::Commuter, 0.85),
            (DayProfile::AtHome, 0.06),
            (DayProfile::Absent, 0.06),
            (DayProfile::Away, 0.03),
        ])
    }

    pub fn default_weekend() -> Self {
        ProfileMix(vec![
            (DayProfile::AtHome, 0.55),
            (DayProfile::Absent, 0.35),
            (DayProfile::Away, 0.10),
        ])
    }

    fn sampler(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(self.0.iter().map(|(_, w)| *w))
            .map_err(|e| HowdeError::InvalidArgument(format!("bad profile mix: {e}")))
    }
}

/// Parses `commuter:0.8,athome:0.2`.
impl FromStr for ProfileMix {
    type Err = HowdeError;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, weight) = part.split_once(':').ok_or_else(|| {
                HowdeError::InvalidArgument(format!("expected profile:weight, got {part:?}"))
            })?;
            let weight: f64 = weight
                .trim()
                .parse()
                .map_err(|_| HowdeError::InvalidArgument(format!("bad weight in {part:?}")))?;
            out.push((name.parse()?, weight));
        }
        let mix = ProfileMix(out);
        mix.sampler()?;
        Ok(mix)
    }
}

/// Small behavioral details of commuter and home days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Routine {
    /// Probability of lunch 12:00-12:45 away from work.
    pub lunch_prob: f64,
    /// Probability of an evening outing 19:00-21:00.
    pub outing_prob: f64,
}

impl Default for Routine {
    fn default() -> Self {
        Routine {
            lunch_prob: 0.5,
            outing_prob: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub user_id: String,
    pub start: NaiveDate,
    pub n_days: u32,
    pub homes: Vec<Assignment>,
    pub works: Vec<Assignment>,
    /// Places for outings, lunches and away days. At least one is required.
    pub others: Vec<String>,
    /// Short stop visited on the way to and from work on commuter days.
    pub errand: Option<String>,
    /// Second place (a partner's home, say) where a night is spent with the
    /// given probability. Only the hours before the first departure move there.
    pub partner: Option<(String, f64)>,
    pub weekday_mix: ProfileMix,
    pub weekend_mix: ProfileMix,
    pub routine: Routine,
    /// Probability that an hourly bin is dropped.
    pub missing_rate: f64,
    pub seed: u64,
}

impl AgentSpec {
    /// A commuter with one home and one job over the whole period.
    pub fn commuter(user_id: &str, start: NaiveDate, n_days: u32, seed: u64) -> Self {
        let end = start + Days::new(u64::from(n_days.max(1)) - 1);
        AgentSpec {
            user_id: user_id.to_string(),
            start,
            n_days,
            homes: vec![Assignment::new(format!("{user_id}-h0"), start, end)],
            works: vec![Assignment::new(format!("{user_id}-w0"), start, end)],
            others: (0..4).map(|i| format!("{user_id}-o{i}")).collect(),
            errand: None,
            partner: None,
            weekday_mix: ProfileMix::default_weekday(),
            weekend_mix: ProfileMix::default_weekend(),
            routine: Routine::default(),
            missing_rate: 0.0,
            seed,
        }
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Days::new(u64::from(self.n_days.max(1)) - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| {
            Err(HowdeError::InvalidArgument(format!(
                "agent {}: {m}",
                self.user_id
            )))
        };
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing rate {} not in [0, 1)", self.missing_rate));
        }
        if self.others.is_empty() {
            return bad("needs at least one other location".into());
        }
        if let Some((_, p)) = &self.partner {
            if !(0.0..=1.0).contains(p) {
                return bad(format!("partner night probability {p} not in [0, 1]"));
            }
        }
        for (name, schedule) in [("home", &self.homes), ("work", &self.works)] {
            let mut sorted: Vec<&Assignment> = schedule.iter().collect();
            sorted.sort_by_key(|a| a.from);
            for a in &sorted {
                if a.to < a.from {
                    return bad(format!("{name} range {}..{} is reversed", a.from, a.to));
                }
            }
            for pair in sorted.windows(2) {
                if pair[1].from <= pair[0].to {
                    return bad(format!("{name} ranges overlap at {}", pair[1].from));
                }
            }
        }
        self.weekday_mix.sampler()?;
        self.weekend_mix.sampler()?;
        Ok(())
    }

    fn active(schedule: &[Assignment], date: NaiveDate) -> Option<&str> {
        schedule
            .iter()
            .find(|a| a.covers(date))
            .map(|a| a.loc_id.as_str())
    }

    pub fn home_on(&self, date: NaiveDate) -> Option<&str> {
        Self::active(&self.homes, date)
    }

    pub fn work_on(&self, date: NaiveDate) -> Option<&str> {
        Self::active(&self.works, date)
    }
}

fn is_weekend(day: i64) -> bool {
    weekday_of_day(day) >= 5
}

struct DayPlan<'a> {
    stays: Vec<(&'a str, i64, i64)>,
}

impl<'a> DayPlan<'a> {
    fn push(&mut self, loc: &'a str, from: i64, to: i64) {
        let from = from.max(self.stays.last().map_or(0, |s| s.2));
        let to = to.min(DAY_MINUTES);
        if to > from {
            self.stays.push((loc, from, to));
        }
    }
}

fn plan_day<'a>(
    spec: &'a AgentSpec,
    date: NaiveDate,
    profile: DayProfile,
    rng: &mut ChaCha8Rng,
) -> Vec<(&'a str, i64, i64)> {
    let other = |rng: &mut ChaCha8Rng| spec.others[rng.gen_range(0..spec.others.len())].as_str();
    let mut plan = DayPlan { stays: Vec::new() };
    let Some(home) = spec.home_on(date) else {
        plan.push(other(rng), 0, DAY_MINUTES);
        return plan.stays;
    };
    let work = spec.work_on(date);
    let profile = match (profile, work) {
        (DayProfile::Commuter | DayProfile::NightShift, None) if rng.gen_bool(0.5) => {
            DayProfile::AtHome
        }
        (DayProfile::Commuter | DayProfile::NightShift, None) => DayProfile::Absent,
        (p, _) => p,
    };
    match profile {
        DayProfile::AtHome => {
            if rng.gen_bool(0.5) {
                let out = 600 + rng.gen_range(0..240);
                let back = out + 60 + rng.gen_range(0..60);
                plan.push(home, 0, out);
                plan.push(other(rng), out + 10, back);
                plan.push(home, back + 10, DAY_MINUTES);
            } else {
                plan.push(home, 0, DAY_MINUTES);
            }
        }
        DayProfile::Away => plan.push(other(rng), 0, DAY_MINUTES),
        DayProfile::Absent => {
            let out = 570 + rng.gen_range(0..60);
            let mid = 720 + rng.gen_range(0..120);
            let back = 960 + rng.gen_range(0..60);
            plan.push(home, 0, out);
            plan.push(other(rng), out + 20, mid);
            plan.push(other(rng), mid + 15, back);
            plan.push(home, back + 20, DAY_MINUTES);
        }
        DayProfile::Commuter => {
            let work = work.expect("commuter day has a job");
            let leave = 420 + rng.gen_range(0..=60);
            plan.push(home, 0, leave);
            if let Some(errand) = &spec.errand {
                plan.push(errand, leave + 10, leave + 25);
            }
            let arrive = leave + 40;
            let end = 990 + rng.gen_range(0..=90);
            if rng.gen_bool(spec.routine.lunch_prob) {
                plan.push(work, arrive, 720);
                plan.push(other(rng), 720, 765);
                plan.push(work, 765, end);
            } else {
                plan.push(work, arrive, end);
            }
            if let Some(errand) = &spec.errand {
                plan.push(errand, end + 10, end + 25);
            }
            let back = end + 40;
            if rng.gen_bool(spec.routine.outing_prob) && back < 1140 {
                plan.push(home, back, 1140);
                plan.push(other(rng), 1150, 1260);
                plan.push(home, 1270, DAY_MINUTES);
            } else {
                plan.push(home, back, DAY_MINUTES);
            }
        }
        DayProfile::NightShift => {
            let work = work.expect("night shift has a job");
            plan.push(work, 0, 420);
            plan.push(home, 450, DAY_MINUTES - 120);
            plan.push(work, DAY_MINUTES - 90, DAY_MINUTES);
        }
    }
    let mut stays = plan.stays;
    if let Some((partner, p)) = &spec.partner {
        if stays.first().is_some_and(|s| s.0 == home) && rng.gen_bool(*p) {
            let (_, _, end) = stays[0];
            let cut = end.min(420 + rng.gen_range(0..=60));
            stays[0] = (partner.as_str(), 0, cut);
            if end > cut + 20 {
                stays.insert(1, (home, cut + 20, end));
            }
        }
    }
    stays
}

/// Generates the stops of one agent, ordered by start.
pub fn generate_stops(spec: &AgentSpec) -> Result<Vec<StopRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weekday = spec.weekday_mix.sampler()?;
    let weekend = spec.weekend_mix.sampler()?;
    let first = day_of_date(spec.start);

    // Full timeline in absolute seconds, adjacent same-place stays merged.
    let mut timeline: Vec<(&str, i64, i64)> = Vec::new();
    for d in 0..i64::from(spec.n_days) {
        let day = first + d;
        let (mix, sampler) = if is_weekend(day) {
            (&spec.weekend_mix, &weekend)
        } else {
            (&spec.weekday_mix, &weekday)
        };
        let profile = mix.0[sampler.sample(&mut rng)].0;
        for (loc, from, to) in plan_day(spec, date_of_day(day), profile, &mut rng) {
            let (start, end) = (
                day * SECONDS_PER_DAY + from * MINUTE,
                day * SECONDS_PER_DAY + to * MINUTE,
            );
            match timeline.last_mut() {
                Some(last) if last.0 == loc && last.2 == start => last.2 = end,
                _ => timeline.push((loc, start, end)),
            }
        }
    }

    let n_hours = spec.n_days as usize * 24;
    let kept: Vec<bool> = (0..n_hours)
        .map(|_| spec.missing_rate == 0.0 || !rng.gen_bool(spec.missing_rate))
        .collect();
    let origin = first * SECONDS_PER_DAY;
    let mut stops: Vec<StopRecord> = Vec::new();
    let mut open: Option<(&str, i64, i64)> = None;
    let flush = |open: &mut Option<(&str, i64, i64)>, stops: &mut Vec<StopRecord>| {
        if let Some((loc, s, e)) = open.take() {
            stops.push(StopRecord::new(spec.user_id.clone(), loc, s, e));
        }
    };
    for &(loc, start, end) in &timeline {
        let mut t = start;
        while t < end {
            let hour = (t - origin).div_euclid(3600);
            let piece_end = end.min(origin + (hour + 1) * 3600);
            if kept[hour as usize] {
                match &mut open {
                    Some(o) if o.0 == loc && o.2 == t => o.2 = piece_end,
                    _ => {
                        flush(&mut open, &mut stops);
                        open = Some((loc, t, piece_end));
                    }
                }
            }
            t = piece_end;
        }
    }
    flush(&mut open, &mut stops);
    Ok(stops)
}

/// Ground truth of a set of agents at both granularities and both scopes.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSet {
    pub home_week: GroundTruth,
    pub home_user: GroundTruth,
    pub work_week: GroundTruth,
    pub work_user: GroundTruth,
}

impl Default for TruthSet {
    fn default() -> Self {
        TruthSet {
            home_week: GroundTruth::new(Scope::Home, Granularity::UserWeek),
            home_user: GroundTruth::new(Scope::Home, Granularity::User),
            work_week: GroundTruth::new(Scope::Work, Granularity::UserWeek),
            work_user: GroundTruth::new(Scope::Work, Granularity::User),
        }
    }
}

impl TruthSet {
    pub fn get(&self, scope: Scope, granularity: Granularity) -> &GroundTruth {
        match (scope, granularity) {
            (Scope::Home, Granularity::UserWeek) => &self.home_week,
            (Scope::Home, Granularity::User) => &self.home_user,
            (Scope::Work, Granularity::UserWeek) => &self.work_week,
            (Scope::Work, Granularity::User) => &self.work_user,
        }
    }

    pub fn all(&self) -> [&GroundTruth; 4] {
        [
            &self.home_week,
            &self.home_user,
            &self.work_week,
            &self.work_user,
        ]
    }

    pub fn all_mut(&mut self) -> [&mut GroundTruth; 4] {
        [
            &mut self.home_week,
            &mut self.home_user,
            &mut self.work_week,
            &mut self.work_user,
        ]
    }

    pub fn extend(&mut self, other: TruthSet) {
        for (mine, theirs) in self.all_mut().into_iter().zip([
            other.home_week,
            other.home_user,
            other.work_week,
            other.work_user,
        ]) {
            for ((user, week), locs) in theirs.entries {
                mine.entries.entry((user, week)).or_default().extend(locs);
            }
        }
    }

    /// Truth derived from an agent's schedules. Per ISO week, the location(s)
    /// active on the most days of the week (business days only for work).
    pub fn of_agent(spec: &AgentSpec) -> TruthSet {
        let mut truth = TruthSet::default();
        let first = day_of_date(spec.start);
        let mut home_days: BTreeMap<IsoWeek, BTreeMap<&str, u32>> = BTreeMap::new();
        let mut work_days: BTreeMap<IsoWeek, BTreeMap<&str, u32>> = BTreeMap::new();
        for day in first..first + i64::from(spec.n_days) {
            let date = date_of_day(day);
            let week = IsoWeek::of(date);
            if let Some(h) = spec.home_on(date) {
                *home_days.entry(week).or_default().entry(h).or_default() += 1;
            }
            if !is_weekend(day) {
                if let Some(w) = spec.work_on(date) {
                    *work_days.entry(week).or_default().entry(w).or_default() += 1;
                }
            }
        }
        for (weekly, by_week, by_user) in [
            (&home_days, &mut truth.home_week, &mut truth.home_user),
            (&work_days, &mut truth.work_week, &mut truth.work_user),
        ] {
            for (week, counts) in weekly {
                let best = counts.values().copied().max().unwrap_or(0);
                for (loc, &n) in counts {
                    by_user
                        .insert(&spec.user_id, None, loc)
                        .expect("user granularity");
                    if n == best {
                        by_week
                            .insert(&spec.user_id, Some(*week), loc)
                            .expect("week granularity");
                    }
                }
            }
        }
        truth
    }
}

/// Generates stops and truth for one agent.
pub fn generate(spec: &AgentSpec) -> Result<(Vec<StopRecord>, TruthSet)> {
    Ok((generate_stops(spec)?, TruthSet::of_agent(spec)))
}

/// Parameters of a synthetic population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub n_agents: usize,
    pub start: NaiveDate,
    pub n_days: u32,
    /// Per-agent missing rate drawn uniformly from this inclusive range.
    pub missing_rate: (f64, f64),
    /// Share of agents who move home once.
    pub movers: f64,
    /// Share of employed agents who change job once.
    pub job_changers: f64,
    /// Share of agents without a job.
    pub unemployed: f64,
    /// Share of employed agents working within 500 m of home.
    pub near_work: f64,
    /// Share of commuters with a short errand stop on the way to and from work.
    pub errands: f64,
    /// Share of agents spending some nights at a second place.
    pub partners: f64,
    /// Nightly probability of staying there, drawn per agent from this range.
    pub partner_nights: (f64, f64),
    pub weekday_mix: ProfileMix,
    pub weekend_mix: ProfileMix,
    pub routine: Routine,
    pub n_regions: usize,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_agents: 100,
            start: NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date"),
            n_days: 120,
            missing_rate: (0.0, 0.0),
            movers: 0.3,
            job_changers: 0.3,
            unemployed: 0.1,
            near_work: 0.2,
            errands: 0.3,
            partners: 0.1,
            partner_nights: (0.25, 0.5),
            weekday_mix: ProfileMix::default_weekday(),
            weekend_mix: ProfileMix::default_weekend(),
            routine: Routine::default(),
            n_regions: 5,
            seed: 0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.missing_rate;
        if !(0.0..1.0).contains(&lo) || !(0.0..1.0).contains(&hi) || lo > hi {
            return Err(HowdeError::InvalidArgument(format!(
                "missing rate range {lo}..{hi} must lie in [0, 1)"
            )));
        }
        for (name, p) in [
            ("movers", self.movers),
            ("job_changers", self.job_changers),
            ("unemployed", self.unemployed),
            ("near_work", self.near_work),
            ("errands", self.errands),
            ("partners", self.partners),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HowdeError::InvalidArgument(format!(
                    "{name} = {p} not in [0, 1]"
                )));
            }
        }
        let (lo, hi) = self.partner_nights;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(HowdeError::InvalidArgument(format!(
                "partner night range {lo}..{hi} must lie in [0, 1]"
            )));
        }
        if self.n_days == 0 || self.n_regions == 0 {
            return Err(HowdeError::InvalidArgument(
                "n_days and n_regions must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl PopulationSpec {
    /// Sets one field from a `key = value` pair of a population spec file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| HowdeError::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "agents" => self.n_agents = num(key, value)?,
            "days" => self.n_days = num(key, value)?,
            "start" => self.start = num(key, value)?,
            "missing_min" => self.missing_rate.0 = num(key, value)?,
            "missing_max" => self.missing_rate.1 = num(key, value)?,
            "movers" => self.movers = num(key, value)?,
            "job_changers" => self.job_changers = num(key, value)?,
            "unemployed" => self.unemployed = num(key, value)?,
            "near_work" => self.near_work = num(key, value)?,
            "errands" => self.errands = num(key, value)?,
            "partners" => self.partners = num(key, value)?,
            "partner_nights_min" => self.partner_nights.0 = num(key, value)?,
            "partner_nights_max" => self.partner_nights.1 = num(key, value)?,
            "regions" => self.n_regions = num(key, value)?,
            "weekday_mix" => self.weekday_mix = value.parse()?,
            "weekend_mix" => self.weekend_mix = value.parse()?,
            "lunch_prob" => self.routine.lunch_prob = num(key, value)?,
            "outing_prob" => self.routine.outing_prob = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => {
                return Err(HowdeError::Config(format!(
                    "unknown population key {key:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<PopulationSpec> {
        let mut spec = PopulationSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HowdeError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            spec.set(key.trim(), value.trim())
                .map_err(|e| HowdeError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub agents: Vec<AgentSpec>,
    pub coords: Vec<LocationCoords>,
}

const CENTER: (f64, f64) = (45.0, 9.0);
const KM_PER_DEG_LAT: f64 = 111.195;

fn offset(from: (f64, f64), north_km: f64, east_km: f64) -> (f64, f64) {
    let lat = from.0 + north_km / KM_PER_DEG_LAT;
    let lon = from.1 + east_km / (KM_PER_DEG_LAT * from.0.to_radians().cos());
    (lat, lon)
}

/// Point at a uniformly random bearing and a distance drawn from `km`.
fn scatter(rng: &mut ChaCha8Rng, from: (f64, f64), km: std::ops::Range<f64>) -> (f64, f64) {
    let r = rng.gen_range(km);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    offset(from, r * theta.cos(), r * theta.sin())
}

fn region_center(i: usize, n: usize) -> (f64, f64) {
    if n == 1 {
        return CENTER;
    }
    let theta = std::f64::consts::TAU * i as f64 / n as f64;
    offset(CENTER, 12.0 * theta.cos(), 12.0 * theta.sin())
}

impl Population {
    pub fn new(spec: &PopulationSpec) -> Result<Population> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let end = spec.start + Days::new(u64::from(spec.n_days) - 1);
        let mut agents = Vec::with_capacity(spec.n_agents);
        let mut coords = Vec::new();
        let switch_date = |rng: &mut ChaCha8Rng| {
            let q = u64::from(spec.n_days / 4);
            spec.start + Days::new(rng.gen_range(q..=3 * q.max(1)))
        };
        let mut place = |loc: &str, at: (f64, f64), region: usize| {
            let mut c = LocationCoords::new(loc, at.0, at.1).expect("coordinates in range");
            c.region_id = Some(format!("R{region}"));
            coords.push(c);
        };
        for i in 0..spec.n_agents {
            let user = format!("u{i:05}");
            let mut agent = AgentSpec::commuter(&user, spec.start, spec.n_days, rng.gen());
            agent.weekday_mix = spec.weekday_mix.clone();
            agent.weekend_mix = spec.weekend_mix.clone();
            agent.routine = spec.routine;
            let (lo, hi) = spec.missing_rate;
            agent.missing_rate = if hi > lo { rng.gen_range(lo..=hi) } else { lo };

            let region = rng.gen_range(0..spec.n_regions);
            let home_at = scatter(&mut rng, region_center(region, spec.n_regions), 0.0..3.0);
            place(&agent.homes[0].loc_id, home_at, region);
            if rng.gen_bool(spec.movers) {
                let moved = switch_date(&mut rng);
                agent.homes[0].to = moved - Days::new(1);
                let h1 = format!("{user}-h1");
                let region1 = rng.gen_range(0..spec.n_regions);
                place(
                    &h1,
                    scatter(&mut rng, region_center(region1, spec.n_regions), 0.0..3.0),
                    region1,
                );
                agent.homes.push(Assignment::new(h1, moved, end));
            }

            if rng.gen_bool(spec.unemployed) {
                agent.works.clear();
            } else {
                let near = rng.gen_bool(spec.near_work);
                let work_at = |rng: &mut ChaCha8Rng| {
                    if near {
                        scatter(rng, home_at, 0.1..0.45)
                    } else {
                        scatter(rng, CENTER, 1.0..10.0)
                    }
                };
                let w0 = work_at(&mut rng);
                place(&agent.works[0].loc_id, w0, region);
                if rng.gen_bool(spec.job_changers) {
                    // a short gap between jobs
                    let change = switch_date(&mut rng);
                    agent.works[0].to = change - Days::new(rng.gen_range(1..=10));
                    let w1 = format!("{user}-w1");
                    let at = work_at(&mut rng);
                    place(&w1, at, region);
                    agent.works.push(Assignment::new(w1, change, end));
                }
                if rng.gen_bool(spec.errands) {
                    let e = format!("{user}-e0");
                    place(&e, scatter(&mut rng, home_at, 0.8..2.0), region);
                    agent.errand = Some(e);
                }
            }
            if rng.gen_bool(spec.partners) {
                let p = format!("{user}-p0");
                place(&p, scatter(&mut rng, home_at, 1.0..8.0), region);
                let (lo, hi) = spec.partner_nights;
                agent.partner = Some((p, if hi > lo { rng.gen_range(lo..=hi) } else { lo }));
            }
            for o in &agent.others {
                place(o, scatter(&mut rng, home_at, 0.5..6.0), region);
            }
            agents.push(agent);
        }
        Ok(Population { agents, coords })
    }

    /// Stops of every agent (in agent order) and the merged ground truth.
    pub fn generate(&self) -> Result<(Vec<UserStops>, TruthSet)> {
        let generated = par_map(&self.agents, generate);
        let mut users = Vec::with_capacity(self.agents.len());
        let mut truth = TruthSet::default();
        for (agent, result) in self.agents.iter().zip(generated) {
            let (stops, t) = result?;
            users.push(UserStops {
                user_id: agent.user_id.clone(),
                stops,
            });
            truth.extend(t);
        }
        Ok((users, truth))
    }

    pub fn coords_by_loc(&self) -> std::collections::HashMap<String, LocationCoords> {
        self.coords
            .iter()
            .map(|c| (c.loc_id.clone(), c.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::bin_hours;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn noiseless(user: &str) -> AgentSpec {
        let mut a = AgentSpec::commuter(user, date("2019-01-07"), 28, 1);
        a.weekday_mix = ProfileMix::only(DayProfile::Commuter);
        a.weekend_mix = ProfileMix::only(DayProfile::AtHome);
        a.routine = Routine {
            lunch_prob: 0.0,
            outing_prob: 0.0,
        };
        a
    }

    #[test]
    fn commuter_days_fill_night_and_business_bins() {
        let spec = noiseless("u");
        let stops = generate_stops(&spec).unwrap();
        assert!(stops.windows(2).all(|w| w[0].end <= w[1].start));
        let days = bin_hours(&stops).unwrap();
        assert_eq!(days.len(), 28);
        for d in &days {
            for h in 0..6 {
                assert_eq!(d.slots[h].as_deref(), Some("u-h0"));
            }
            if weekday_of_day(day_of_date(d.date)) < 5 {
                for h in 9..16 {
                    assert_eq!(d.slots[h].as_deref(), Some("u-w0"), "{} {h}", d.date);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut spec = noiseless("u");
        spec.weekday_mix = ProfileMix::default_weekday();
        spec.missing_rate = 0.4;
        assert_eq!(
            generate_stops(&spec).unwrap(),
            generate_stops(&spec).unwrap()
        );
        let mut other = spec.clone();
        other.seed = 2;
        assert_ne!(
            generate_stops(&spec).unwrap(),
            generate_stops(&other).unwrap()
        );
    }

    #[test]
    fn missing_rate_drops_whole_bins() {
        let mut spec = noiseless("u");
        spec.n_days = 200;
        spec.missing_rate = 0.5;
        let days = bin_hours(&generate_stops(&spec).unwrap()).unwrap();
        let filled: usize = days.iter().map(|d| d.slots.iter().flatten().count()).sum();
        // commuter days leave a few travel hours partly empty; the rate is near 0.5
        let frac = filled as f64 / (200.0 * 24.0);
        assert!((0.45..0.52).contains(&frac), "{frac}");
    }

    #[test]
    fn truth_tracks_moves_per_week() {
        let mut spec = noiseless("u");
        spec.homes = vec![
            Assignment::new("A", date("2019-01-07"), date("2019-01-16")),
            Assignment::new("B", date("2019-01-17"), date("2019-02-03")),
        ];
        let truth = TruthSet::of_agent(&spec);
        let wk = |s: &str| Some(s.parse::<IsoWeek>().unwrap());
        let get = |w: &str| truth.home_week.entries[&("u".to_string(), wk(w))].clone();
        assert_eq!(get("2019-W02").into_iter().collect::<Vec<_>>(), ["A"]);
        // W03: A Mon-Wed (3 days), B Thu-Sun (4 days)
        assert_eq!(get("2019-W03").into_iter().collect::<Vec<_>>(), ["B"]);
        assert_eq!(truth.home_user.entries[&("u".to_string(), None)].len(), 2);
        assert_eq!(truth.work_week.entries.len(), 4);
    }

    #[test]
    fn truth_locations_appear_in_stops() {
        let pop = Population::new(&PopulationSpec {
            n_agents: 20,
            missing_rate: (0.0, 0.3),
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let (users, truth) = pop.generate().unwrap();
        for ((user, _), locs) in &truth.home_user.entries {
            let u = users.iter().find(|u| &u.user_id == user).unwrap();
            for loc in locs {
                assert!(u.stops.iter().any(|s| &s.loc_id == loc), "{user} {loc}");
            }
        }
        let known: std::collections::HashSet<&str> =
            pop.coords.iter().map(|c| c.loc_id.as_str()).collect();
        for u in &users {
            assert!(u.stops.iter().all(|s| known.contains(s.loc_id.as_str())));
        }
    }

    #[test]
    fn population_spec_file() {
        let spec =
            PopulationSpec::parse_str("agents = 7\nmissing_max = 0.5\nweekend_mix = athome:1\n")
                .unwrap();
        assert_eq!(spec.n_agents, 7);
        assert_eq!(spec.missing_rate, (0.0, 0.5));
        assert_eq!(spec.weekend_mix, ProfileMix::only(DayProfile::AtHome));
        assert!(PopulationSpec::parse_str("colour = red\n").is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = noiseless("u");
        spec.missing_rate = 1.0;
        assert!(generate_stops(&spec).is_err());
        let mut spec = noiseless("u");
        spec.homes
            .push(Assignment::new("X", date("2019-01-10"), date("2019-01-12")));
        assert!(spec.validate().is_err());
        assert!("commuter:x".parse::<ProfileMix>().is_err());
        assert_eq!(
            "commuter:0.8, athome:0.2".parse::<ProfileMix>().unwrap().0[1],
            (DayProfile::AtHome, 0.2)
        );
    }
}
