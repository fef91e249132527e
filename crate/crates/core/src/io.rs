//! CSV readers and writers for stops, labels, ground truth, coordinates,
//! reference statistics and user groups.
//!
//! Timestamps in stop files are either integer epoch seconds or ISO-8601.
//! Epoch values are UTC and are shifted by the optional `utc_offset_minutes`
//! column. Naive ISO values are already local. ISO values with a zone are
//! converted to the wall clock of their own offset unless the row carries an
//! explicit `utc_offset_minutes`, which then wins.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::apps::LocationCoords;
use crate::binning::sorted_stops;
use crate::error::{HowdeError, Result};
use crate::metrics::Granularity;
use crate::model::{Detection, DetectionLabel, IsoWeek, Scope, StopRecord, UserStops};
use crate::profiles::UserAssignments;
use crate::synth::TruthSet;

/// A CSV reader that resolves columns by header name and reports line numbers.
struct Table<R: Read> {
    reader: csv::Reader<R>,
    label: String,
    columns: HashMap<String, usize>,
}

impl<R: Read> Table<R> {
    fn new(input: R, label: &str, required: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(input);
        let columns: HashMap<String, usize> = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for name in required {
            if !columns.contains_key(*name) {
                return Err(HowdeError::Parse {
                    path: label.to_string(),
                    line: 1,
                    message: format!("missing column {name:?}"),
                });
            }
        }
        Ok(Table {
            reader,
            label: label.to_string(),
            columns,
        })
    }

    fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// Calls `f` on every row; errors from `f` become parse errors at that row.
    fn for_each(
        mut self,
        mut f: impl FnMut(&Row<'_>) -> std::result::Result<(), String>,
    ) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self
                .reader
                .read_record(&mut record)
                .map_err(|e| HowdeError::Parse {
                    path: self.label.clone(),
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line());
            let row = Row {
                record: &record,
                columns: &self.columns,
            };
            f(&row).map_err(|message| HowdeError::Parse {
                path: self.label.clone(),
                line,
                message,
            })?;
        }
    }
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    columns: &'a HashMap<String, usize>,
}

impl Row<'_> {
    fn get(&self, name: &str) -> &str {
        self.columns
            .get(name)
            .and_then(|&i| self.record.get(i))
            .unwrap_or("")
    }

    fn required(&self, name: &str) -> std::result::Result<&str, String> {
        match self.get(name) {
            "" => Err(format!("empty {name}")),
            v => Ok(v),
        }
    }

    fn parse<T: std::str::FromStr>(&self, name: &str) -> std::result::Result<T, String> {
        let v = self.required(name)?;
        v.parse().map_err(|_| format!("bad {name} {v:?}"))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| HowdeError::InvalidArgument(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HowdeError::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Parses a stop timestamp into local seconds.
pub fn parse_timestamp(s: &str, offset_minutes: Option<i64>) -> std::result::Result<i64, String> {
    let shift = offset_minutes.unwrap_or(0) * 60;
    if let Ok(epoch) = s.parse::<i64>() {
        return Ok(epoch + shift);
    }
    if let Ok(zoned) = DateTime::parse_from_rfc3339(s) {
        let utc = zoned.timestamp();
        return Ok(match offset_minutes {
            Some(_) => utc + shift,
            None => utc + i64::from(zoned.offset().local_minus_utc()),
        });
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc().timestamp());
        }
    }
    Err(format!("unparseable timestamp {s:?}"))
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|t| t.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Reads stops grouped per user (users sorted by id, stops by start).
///
/// Columns: `user_id,loc_id,start,end[,utc_offset_minutes]`.
pub fn read_stops_from<R: Read>(input: R, label: &str) -> Result<Vec<UserStops>> {
    let table = Table::new(input, label, &["user_id", "loc_id", "start", "end"])?;
    let with_offset = table.has("utc_offset_minutes");
    let mut by_user: BTreeMap<String, Vec<StopRecord>> = BTreeMap::new();
    table.for_each(|row| {
        let offset = match (with_offset, row.get("utc_offset_minutes")) {
            (true, v) if !v.is_empty() => Some(row.parse::<i64>("utc_offset_minutes")?),
            _ => None,
        };
        let start = parse_timestamp(row.required("start")?, offset)?;
        let end = parse_timestamp(row.required("end")?, offset)?;
        if end <= start {
            return Err(format!("end {end} <= start {start}"));
        }
        let user = row.required("user_id")?;
        let stop = StopRecord::new(user, row.required("loc_id")?, start, end);
        match by_user.get_mut(user) {
            Some(v) => v.push(stop),
            None => {
                by_user.insert(user.to_string(), vec![stop]);
            }
        }
        Ok(())
    })?;
    by_user
        .into_iter()
        .map(|(user_id, stops)| {
            let stops = sorted_stops(&stops)?.into_owned();
            Ok(UserStops { user_id, stops })
        })
        .collect()
}

pub fn read_stops(path: &Path) -> Result<Vec<UserStops>> {
    read_stops_from(open(path)?, &path.display().to_string())
}

/// Writes stops with naive ISO-8601 local timestamps.
pub fn write_stops<W: Write>(users: &[UserStops], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "loc_id", "start", "end"])?;
    for u in users {
        for s in &u.stops {
            w.write_record([
                s.user_id.as_str(),
                s.loc_id.as_str(),
                &format_timestamp(s.start),
                &format_timestamp(s.end),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const LABEL_HEADER: [&str; 6] = [
    "user_id",
    "date",
    "home_loc",
    "home_status",
    "work_loc",
    "work_status",
];

/// Writes labels sorted by (user, date); undetected rows leave the location empty.
pub fn write_labels<W: Write>(labels: &[DetectionLabel], out: W) -> Result<()> {
    let mut sorted: Vec<&DetectionLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| (&a.user_id, a.date).cmp(&(&b.user_id, b.date)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABEL_HEADER)?;
    for l in sorted {
        let date = l.date.to_string();
        w.write_record([
            l.user_id.as_str(),
            &date,
            l.home.loc().unwrap_or(""),
            l.home.status(),
            l.work.loc().unwrap_or(""),
            l.work.status(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_from<R: Read>(input: R, label: &str) -> Result<Vec<DetectionLabel>> {
    let table = Table::new(input, label, &LABEL_HEADER)?;
    let mut out = Vec::new();
    table.for_each(|row| {
        let detection = |scope: &str| {
            Detection::from_status(
                row.get(&format!("{scope}_loc")),
                row.get(&format!("{scope}_status")),
            )
            .map_err(|e| e.to_string())
        };
        out.push(DetectionLabel {
            user_id: row.required("user_id")?.to_string(),
            date: row.parse::<NaiveDate>("date")?,
            home: detection("home")?,
            work: detection("work")?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<DetectionLabel>> {
    read_labels_from(open(path)?, &path.display().to_string())
}

/// Columns `user_id,scope,week,loc_id`; an empty week means user granularity.
pub fn write_truth<W: Write>(truth: &TruthSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "scope", "week", "loc_id"])?;
    for gt in truth.all() {
        let scope = gt.scope.to_string();
        for ((user, week), locs) in &gt.entries {
            let week = week.map(|w| w.to_string()).unwrap_or_default();
            for loc in locs {
                w.write_record([user.as_str(), &scope, &week, loc.as_str()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_from<R: Read>(input: R, label: &str) -> Result<TruthSet> {
    let table = Table::new(input, label, &["user_id", "scope", "week", "loc_id"])?;
    let mut truth = TruthSet::default();
    table.for_each(|row| {
        let scope = match row.required("scope")? {
            "HOME" => Scope::Home,
            "WORK" => Scope::Work,
            other => return Err(format!("bad scope {other:?}")),
        };
        let week = match row.get("week") {
            "" => None,
            w => Some(w.parse::<IsoWeek>().map_err(|e| e.to_string())?),
        };
        let granularity = if week.is_some() {
            Granularity::UserWeek
        } else {
            Granularity::User
        };
        let gt = match (scope, granularity) {
            (Scope::Home, Granularity::UserWeek) => &mut truth.home_week,
            (Scope::Home, Granularity::User) => &mut truth.home_user,
            (Scope::Work, Granularity::UserWeek) => &mut truth.work_week,
            (Scope::Work, Granularity::User) => &mut truth.work_user,
        };
        gt.insert(row.required("user_id")?, week, row.required("loc_id")?)
            .map_err(|e| e.to_string())
    })?;
    Ok(truth)
}

pub fn read_truth(path: &Path) -> Result<TruthSet> {
    read_truth_from(open(path)?, &path.display().to_string())
}

/// Columns `loc_id,lat,lon[,region_id]`.
pub fn write_coords<W: Write>(coords: &[LocationCoords], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["loc_id", "lat", "lon", "region_id"])?;
    for c in coords {
        w.write_record([
            c.loc_id.as_str(),
            &c.lat.to_string(),
            &c.lon.to_string(),
            c.region_id.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coords_from<R: Read>(input: R, label: &str) -> Result<HashMap<String, LocationCoords>> {
    let table = Table::new(input, label, &["loc_id", "lat", "lon"])?;
    let mut out = HashMap::new();
    table.for_each(|row| {
        let mut c = LocationCoords::new(
            row.required("loc_id")?,
            row.parse("lat")?,
            row.parse("lon")?,
        )
        .map_err(|e| e.to_string())?;
        c.region_id = Some(row.get("region_id"))
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        if out.insert(c.loc_id.clone(), c).is_some() {
            return Err("duplicate loc_id".into());
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn read_coords(path: &Path) -> Result<HashMap<String, LocationCoords>> {
    read_coords_from(open(path)?, &path.display().to_string())
}

/// Columns `region_id,value`.
pub fn read_reference_from<R: Read>(input: R, label: &str) -> Result<BTreeMap<String, f64>> {
    let table = Table::new(input, label, &["region_id", "value"])?;
    let mut out = BTreeMap::new();
    table.for_each(|row| {
        out.insert(row.required("region_id")?.to_string(), row.parse("value")?);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_reference(path: &Path) -> Result<BTreeMap<String, f64>> {
    read_reference_from(open(path)?, &path.display().to_string())
}

/// Columns `user_id,group`.
pub fn read_groups_from<R: Read>(input: R, label: &str) -> Result<HashMap<String, String>> {
    let table = Table::new(input, label, &["user_id", "group"])?;
    let mut out = HashMap::new();
    table.for_each(|row| {
        out.insert(
            row.required("user_id")?.to_string(),
            row.required("group")?.to_string(),
        );
        Ok(())
    })?;
    Ok(out)
}

pub fn read_groups(path: &Path) -> Result<HashMap<String, String>> {
    read_groups_from(open(path)?, &path.display().to_string())
}

/// Columns `user_id,date,cluster`.
pub fn write_assignments<W: Write>(rows: &[(String, NaiveDate, usize)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "date", "cluster"])?;
    for (user, date, cluster) in rows {
        w.write_record([user.as_str(), &date.to_string(), &cluster.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-user cluster labels ordered by date.
pub fn read_assignments_from<R: Read>(input: R, label: &str) -> Result<UserAssignments> {
    let table = Table::new(input, label, &["user_id", "date", "cluster"])?;
    let mut rows: BTreeMap<String, Vec<(NaiveDate, usize)>> = BTreeMap::new();
    table.for_each(|row| {
        rows.entry(row.required("user_id")?.to_string())
            .or_default()
            .push((row.parse("date")?, row.parse("cluster")?));
        Ok(())
    })?;
    Ok(rows
        .into_iter()
        .map(|(user, mut days)| {
            days.sort_unstable();
            (user, days.into_iter().map(|(_, c)| c).collect())
        })
        .collect())
}

pub fn read_assignments(path: &Path) -> Result<UserAssignments> {
    read_assignments_from(open(path)?, &path.display().to_string())
}
