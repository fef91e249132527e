//! Downstream applications: regional employment rates and home-work commuting distances.

use std::collections::{BTreeMap, HashMap};

use crate::error::{HowdeError, Result};
use crate::model::{day_of_date, DetectionLabel, Scope};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, PartialEq)]
pub struct LocationCoords {
    pub loc_id: String,
    pub lat: f64,
    pub lon: f64,
    pub region_id: Option<String>,
}

impl LocationCoords {
    pub fn new(loc_id: impl Into<String>, lat: f64, lon: f64) -> Result<Self> {
        let loc_id = loc_id.into();
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(HowdeError::InvalidArgument(format!(
                "coordinates out of range for {loc_id}: ({lat}, {lon})"
            )));
        }
        Ok(Self {
            loc_id,
            lat,
            lon,
            region_id: None,
        })
    }
}

/// Great-circle distance in km on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine(a: &LocationCoords, b: &LocationCoords) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Labels grouped per user, each group sorted by date.
fn by_user(labels: &[DetectionLabel]) -> BTreeMap<&str, Vec<&DetectionLabel>> {
    let mut out: BTreeMap<&str, Vec<&DetectionLabel>> = BTreeMap::new();
    for l in labels {
        out.entry(l.user_id.as_str()).or_default().push(l);
    }
    for v in out.values_mut() {
        v.sort_by_key(|l| l.date);
    }
    out
}

/// Whether the user's detected work location stays constant over a calendar
/// span of at least `min_stable_days`, ignoring undetected days inside it.
pub fn has_stable_work(labels: &[&DetectionLabel], min_stable_days: u32) -> bool {
    let mut run: Option<(&str, i64, i64)> = None;
    for l in labels {
        let Some(loc) = l.work.loc() else { continue };
        let day = day_of_date(l.date);
        run = match run {
            Some((cur, first, _)) if cur == loc => Some((cur, first, day)),
            _ => Some((loc, day, day)),
        };
        if let Some((_, first, last)) = run {
            if last - first + 1 >= i64::from(min_stable_days) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmploymentReport {
    /// region -> (employed users, users in region)
    pub counts: BTreeMap<String, (usize, usize)>,
    pub users_without_region: usize,
}

impl EmploymentReport {
    pub fn rates(&self, min_users: usize) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .filter(|(_, &(_, n))| n >= min_users.max(1))
            .map(|(r, &(e, n))| (r.clone(), e as f64 / n as f64))
            .collect()
    }
}

/// Fraction of users per region with a stable detected work location.
pub fn employment_rate(
    labels: &[DetectionLabel],
    regions: &HashMap<String, String>,
    min_stable_days: u32,
) -> EmploymentReport {
    let mut report = EmploymentReport::default();
    for (user, days) in by_user(labels) {
        let Some(region) = regions.get(user) else {
            report.users_without_region += 1;
            continue;
        };
        let entry = report.counts.entry(region.clone()).or_default();
        entry.1 += 1;
        if has_stable_work(&days, min_stable_days) {
            entry.0 += 1;
        }
    }
    report
}

/// Assigns each user the region of their most frequently detected home.
pub fn home_regions(
    labels: &[DetectionLabel],
    coords: &HashMap<String, LocationCoords>,
) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for (user, days) in by_user(labels) {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &days {
            if let Some(h) = l.get(Scope::Home).loc() {
                *counts.entry(h).or_default() += 1;
            }
        }
        let top = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(l, _)| *l);
        if let Some(region) = top
            .and_then(|h| coords.get(h))
            .and_then(|c| c.region_id.clone())
        {
            out.insert(user.to_string(), region);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStat {
    pub mean_km: f64,
    pub stderr_km: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommuteReport {
    pub groups: BTreeMap<String, GroupStat>,
    /// Days with both labels detected but a location lacking coordinates.
    pub skipped_days: usize,
}

/// Mean and standard error of `values` (sample standard deviation).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-group home-work distance: per-day distances averaged per user, then
/// mean and standard error across the group's users.
pub fn commute_stats(
    labels: &[DetectionLabel],
    coords: &HashMap<String, LocationCoords>,
    grouping: &HashMap<String, String>,
) -> CommuteReport {
    let mut report = CommuteReport::default();
    let mut per_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (user, days) in by_user(labels) {
        let Some(group) = grouping.get(user) else {
            continue;
        };
        let mut dists = Vec::new();
        for l in days {
            let (Some(h), Some(w)) = (l.home.loc(), l.work.loc()) else {
                continue;
            };
            match (coords.get(h), coords.get(w)) {
                (Some(a), Some(b)) => dists.push(haversine(a, b)),
                _ => report.skipped_days += 1,
            }
        }
        if !dists.is_empty() {
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            per_group.entry(group.as_str()).or_default().push(mean);
        }
    }
    for (group, values) in per_group {
        let (mean_km, stderr_km) = mean_stderr(&values);
        report.groups.insert(
            group.to_string(),
            GroupStat {
                mean_km,
                stderr_km,
                n_users: values.len(),
            },
        );
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub pearson_r: f64,
    pub mean_relative_error: f64,
    pub n_regions: usize,
    /// Regions left out of the relative error because the reference is zero.
    pub zero_reference: usize,
}

/// Pearson correlation and mean relative error over the regions present in both maps.
pub fn compare_to_reference(
    estimates: &BTreeMap<String, f64>,
    reference: &BTreeMap<String, f64>,
) -> Result<Comparison> {
    let pairs: Vec<(f64, f64)> = estimates
        .iter()
        .filter_map(|(r, &e)| reference.get(r).map(|&v| (e, v)))
        .collect();
    if pairs.len() < 2 {
        return Err(HowdeError::InvalidArgument(format!(
            "need at least 2 overlapping regions, found {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(HowdeError::InvalidArgument(
            "correlation undefined for constant values".into(),
        ));
    }
    let rel: Vec<f64> = pairs
        .iter()
        .filter(|p| p.1 != 0.0)
        .map(|&(e, r)| ((e - r) / r).abs())
        .collect();
    Ok(Comparison {
        pearson_r: sxy / (sxx * syy).sqrt(),
        mean_relative_error: if rel.is_empty() {
            f64::NAN
        } else {
            rel.iter().sum::<f64>() / rel.len() as f64
        },
        n_regions: pairs.len(),
        zero_reference: pairs.len() - rel.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{date_of_day, Detection, UndetectedReason};
    use approx_eq::assert_close;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= $tol, "{a} != {b} (tol {})", $tol);
            }};
        }
        pub(crate) use assert_close;
    }

    fn c(lat: f64, lon: f64) -> LocationCoords {
        LocationCoords::new("x", lat, lon).unwrap()
    }

    #[test]
    fn haversine_identity_and_antipode() {
        assert_eq!(haversine(&c(10.0, 20.0), &c(10.0, 20.0)), 0.0);
        assert_close!(haversine(&c(0.0, 0.0), &c(0.0, 180.0)), 20015.1, 0.1);
    }

    #[test]
    fn haversine_paris_london() {
        // independent vector (dot-product) computation, R = 6371.0088 km
        let paris = c(48.8566, 2.3522);
        let london = c(51.5074, -0.1278);
        assert_close!(haversine(&paris, &london), 343.556_535, 1e-6);
    }

    #[test]
    fn coords_validated() {
        assert!(LocationCoords::new("x", 91.0, 0.0).is_err());
        assert!(LocationCoords::new("x", 0.0, -181.0).is_err());
    }

    fn work_labels(user: &str, spans: &[(i64, i64, &str)]) -> Vec<DetectionLabel> {
        let last = spans.iter().map(|s| s.1).max().unwrap();
        (1..=last)
            .map(|d| {
                let work = spans
                    .iter()
                    .find(|s| d >= s.0 && d <= s.1)
                    .map(|s| Detection::Detected(s.2.to_string()))
                    .unwrap_or(Detection::Undetected(UndetectedReason::NoCandidate));
                DetectionLabel {
                    user_id: user.into(),
                    date: date_of_day(d),
                    home: Detection::Detected("H".into()),
                    work,
                }
            })
            .collect()
    }

    fn stable(labels: &[DetectionLabel], min: u32) -> bool {
        let refs: Vec<&DetectionLabel> = labels.iter().collect();
        has_stable_work(&refs, min)
    }

    #[test]
    fn stable_work_spans() {
        assert!(stable(&work_labels("u", &[(1, 40, "W")]), 30));
        assert!(!stable(
            &work_labels("u", &[(1, 20, "W1"), (21, 40, "W2")]),
            30
        ));
        assert!(stable(
            &work_labels("u", &[(1, 15, "W"), (20, 35, "W")]),
            30
        ));
        assert!(!stable(
            &work_labels("u", &[(1, 15, "W"), (16, 17, "X"), (18, 35, "W")]),
            30
        ));
    }

    #[test]
    fn stable_work_matches_run_length_oracle() {
        // brute force: any pair of detected days i <= j with the same label,
        // no different label in between, and j - i + 1 >= min
        let cases: &[&[(i64, i64, &str)]] = &[
            &[(1, 15, "W"), (20, 35, "W")],
            &[(1, 10, "A"), (12, 25, "B"), (27, 50, "A")],
            &[(3, 31, "A")],
            &[(3, 32, "A")],
        ];
        for spans in cases {
            let labels = work_labels("u", spans);
            let det: Vec<(i64, &str)> = labels
                .iter()
                .filter_map(|l| l.work.loc().map(|w| (day_of_date(l.date), w)))
                .collect();
            for min in [10u32, 29, 30, 31] {
                let mut brute = false;
                for i in 0..det.len() {
                    for j in i..det.len() {
                        if det[i..=j].iter().all(|x| x.1 == det[i].1)
                            && det[j].0 - det[i].0 + 1 >= i64::from(min)
                        {
                            brute = true;
                        }
                    }
                }
                assert_eq!(stable(&labels, min), brute, "{spans:?} min={min}");
            }
        }
    }

    #[test]
    fn employment_rate_by_region() {
        let mut labels = work_labels("a", &[(1, 40, "W")]);
        labels.extend(work_labels("b", &[(1, 20, "W1"), (21, 40, "W2")]));
        labels.extend(work_labels("c", &[(1, 40, "W")]));
        let regions: HashMap<String, String> = [("a", "R1"), ("b", "R1")]
            .iter()
            .map(|(u, r)| (u.to_string(), r.to_string()))
            .collect();
        let report = employment_rate(&labels, &regions, 30);
        assert_eq!(report.counts["R1"], (1, 2));
        assert_eq!(report.users_without_region, 1);
        assert_eq!(report.rates(1)["R1"], 0.5);
        assert!(report.rates(3).is_empty());
    }

    #[test]
    fn compare_identity_shift_and_anti() {
        let m = |v: &[(&str, f64)]| -> BTreeMap<String, f64> {
            v.iter().map(|(k, x)| (k.to_string(), *x)).collect()
        };
        let reference = m(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]);
        let same = compare_to_reference(&reference, &reference).unwrap();
        assert_close!(same.pearson_r, 1.0, 1e-12);
        assert_eq!(same.mean_relative_error, 0.0);

        let shifted = m(&[("a", 2.0), ("b", 3.0), ("c", 4.0)]);
        let cmp = compare_to_reference(&shifted, &reference).unwrap();
        assert_close!(cmp.pearson_r, 1.0, 1e-12);
        assert!(cmp.mean_relative_error > 0.0);

        let anti = m(&[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        assert_close!(
            compare_to_reference(&anti, &reference).unwrap().pearson_r,
            -1.0,
            1e-12
        );

        let zero_ref = m(&[("a", 0.0), ("b", 2.0), ("c", 3.0)]);
        assert_eq!(
            compare_to_reference(&shifted, &zero_ref)
                .unwrap()
                .zero_reference,
            1
        );

        assert!(compare_to_reference(&m(&[("a", 1.0)]), &reference).is_err());
    }

    #[test]
    fn commute_groups() {
        let mut coords = HashMap::new();
        for (id, lat) in [
            ("H1", 45.0),
            ("W1", 45.0),
            ("H2", 45.0),
            ("W2", 45.0 + 2.0 / 111.2),
            ("W3", 45.0 + 6.0 / 111.2),
        ] {
            coords.insert(id.to_string(), LocationCoords::new(id, lat, 9.0).unwrap());
        }
        let lab = |u: &str, h: &str, w: &str| DetectionLabel {
            user_id: u.into(),
            date: date_of_day(1),
            home: Detection::Detected(h.into()),
            work: Detection::Detected(w.into()),
        };
        let labels = vec![
            lab("same", "H1", "W1"),
            lab("near", "H2", "W2"),
            lab("far", "H2", "W3"),
            lab("lost", "H1", "NOPE"),
        ];
        let grouping: HashMap<String, String> = [
            ("same", "z"),
            ("near", "urban"),
            ("far", "rural"),
            ("lost", "z"),
        ]
        .iter()
        .map(|(u, g)| (u.to_string(), g.to_string()))
        .collect();
        let report = commute_stats(&labels, &coords, &grouping);
        assert_eq!(report.groups["z"].mean_km, 0.0);
        assert_eq!(report.skipped_days, 1);
        let diff = report.groups["rural"].mean_km - report.groups["urban"].mean_km;
        assert_close!(diff, 4.0, 0.01);
    }
}
