//! Behavioral day profiles: categorical encoding of hourly days, K-Modes
//! clustering, elbow selection of k, and normalized profile entropy.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binning::HourlyDay;
use crate::error::{HowdeError, Result};
use crate::model::{Scope, HOURS_PER_DAY};
use crate::parallel::par_map;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Target,
    Other,
    Missing,
}

impl Symbol {
    pub fn as_char(self) -> char {
        match self {
            Symbol::Target => 'T',
            Symbol::Other => 'O',
            Symbol::Missing => 'M',
        }
    }

    const ALL: [Symbol; 3] = [Symbol::Target, Symbol::Other, Symbol::Missing];
}

pub type Codes = [Symbol; HOURS_PER_DAY];

pub fn codes_to_string(codes: &Codes) -> String {
    codes.iter().map(|s| s.as_char()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaySequence {
    pub user_id: String,
    pub date: NaiveDate,
    pub scope: Scope,
    pub codes: Codes,
}

impl fmt::Display for DaySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&codes_to_string(&self.codes))
    }
}

/// Encodes each hour as the target location, another location, or missing.
///
/// Hours at home are ordinary `Other` hours when the target is a workplace.
pub fn encode_days(days: &[HourlyDay], target: &str, scope: Scope) -> Vec<DaySequence> {
    days.iter()
        .map(|d| DaySequence {
            user_id: d.user_id.clone(),
            date: d.date,
            scope,
            codes: std::array::from_fn(|h| match d.slots[h].as_deref() {
                None => Symbol::Missing,
                Some(loc) if loc == target => Symbol::Target,
                Some(_) => Symbol::Other,
            }),
        })
        .collect()
}

/// Encodes every day that has a target location; `target` supplies it per
/// (user, date) and days without one are skipped.
pub fn encode_with_targets(
    days: &[HourlyDay],
    scope: Scope,
    target: impl Fn(&str, NaiveDate) -> Option<String>,
) -> Vec<DaySequence> {
    days.iter()
        .filter_map(|d| {
            let t = target(&d.user_id, d.date)?;
            encode_days(std::slice::from_ref(d), &t, scope).pop()
        })
        .collect()
}

pub fn hamming(a: &Codes, b: &Codes) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub modes: Vec<Codes>,
    /// Cluster index of each input sequence, in input order.
    pub assignment: Vec<usize>,
    pub cost: usize,
    pub iterations: usize,
    /// Cost after each assignment step.
    pub cost_history: Vec<usize>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Rows of `(cluster id, size fraction, mode string)`.
    pub fn report(&self) -> Vec<(usize, f64, String)> {
        let n = self.assignment.len().max(1) as f64;
        self.sizes()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (i, s as f64 / n, codes_to_string(&self.modes[i])))
            .collect()
    }
}

fn nearest(modes: &[Codes], x: &Codes) -> (usize, usize) {
    modes
        .iter()
        .enumerate()
        .map(|(i, m)| (i, hamming(m, x)))
        .min_by_key(|&(i, d)| (d, i))
        .expect("at least one mode")
}

/// Column-wise most frequent symbol among members; on ties the current mode
/// symbol is kept when it is among the most frequent, else the first in
/// `Target < Other < Missing` order.
fn update_mode(current: &Codes, members: &[&Codes]) -> Codes {
    if members.is_empty() {
        return *current;
    }
    std::array::from_fn(|h| {
        let mut counts = [0usize; 3];
        for m in members {
            counts[m[h] as usize] += 1;
        }
        let best = *counts.iter().max().unwrap();
        if counts[current[h] as usize] == best {
            current[h]
        } else {
            Symbol::ALL[counts.iter().position(|&c| c == best).unwrap()]
        }
    })
}

/// Density-based initialization (Cao et al.): first the densest sequence, then
/// repeatedly the sequence maximizing `min over chosen modes of density * distance`.
/// `seed` only permutes the candidate order, which decides exact ties.
pub fn cao_init(sequences: &[Codes], k: usize, seed: u64) -> Vec<Codes> {
    let mut distinct: Vec<Codes> = sequences.to_vec();
    distinct.sort();
    distinct.dedup();
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = sequences.len() as f64;
    let mut freq = vec![[0usize; 3]; HOURS_PER_DAY];
    for s in sequences {
        for (h, sym) in s.iter().enumerate() {
            freq[h][*sym as usize] += 1;
        }
    }
    let density: Vec<f64> = distinct
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(h, sym)| freq[h][*sym as usize] as f64)
                .sum::<f64>()
                / (HOURS_PER_DAY as f64 * n)
        })
        .collect();

    let first = (0..distinct.len())
        .max_by(|&a, &b| density[a].total_cmp(&density[b]).then(b.cmp(&a)))
        .expect("non-empty input");
    let mut chosen = vec![first];
    while chosen.len() < k {
        let next = (0..distinct.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let score = chosen
                    .iter()
                    .map(|&c| density[i] * hamming(&distinct[i], &distinct[c]) as f64)
                    .fold(f64::INFINITY, f64::min);
                (i, score)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("k <= distinct sequences");
        chosen.push(next);
    }
    chosen.into_iter().map(|i| distinct[i]).collect()
}

/// Lloyd-style K-Modes with Hamming dissimilarity.
///
/// Stops when an assignment step changes nothing or after [`MAX_ITERATIONS`].
pub fn kmodes(sequences: &[Codes], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(HowdeError::InvalidArgument("k must be at least 1".into()));
    }
    let mut distinct = sequences.to_vec();
    distinct.sort();
    distinct.dedup();
    if k > distinct.len() {
        return Err(HowdeError::InvalidArgument(format!(
            "k = {k} exceeds the {} distinct sequences",
            distinct.len()
        )));
    }

    let mut modes = cao_init(sequences, k, seed);
    let assign = |modes: &[Codes]| -> (Vec<usize>, usize) {
        let mut cost = 0;
        let assignment = sequences
            .iter()
            .map(|s| {
                let (c, d) = nearest(modes, s);
                cost += d;
                c
            })
            .collect();
        (assignment, cost)
    };
    let (mut assignment, mut cost) = assign(&modes);
    let mut cost_history = vec![cost];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut members: Vec<Vec<&Codes>> = vec![Vec::new(); k];
        for (s, &c) in sequences.iter().zip(&assignment) {
            members[c].push(s);
        }
        modes = modes
            .iter()
            .zip(&members)
            .map(|(m, mem)| update_mode(m, mem))
            .collect();
        let (next, next_cost) = assign(&modes);
        cost_history.push(next_cost);
        let unchanged = next == assignment;
        assignment = next;
        cost = next_cost;
        if unchanged {
            break;
        }
    }
    Ok(ClusterModel {
        k,
        modes,
        assignment,
        cost,
        iterations,
        cost_history,
    })
}

/// Index of the elbow: the point farthest from the chord joining the first and
/// last points of the normalized cost curve. Returns 0 when the curve has no
/// interior point strictly off the chord.
pub fn elbow_index(costs: &[f64]) -> usize {
    let n = costs.len();
    if n < 3 {
        return 0;
    }
    let (lo, hi) = costs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            (lo.min(c), hi.max(c))
        });
    if hi - lo == 0.0 {
        return 0;
    }
    let pts: Vec<(f64, f64)> = costs
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as f64 / (n - 1) as f64, (c - lo) / (hi - lo)))
        .collect();
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[n - 1];
    let norm = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = (0, 1e-9);
    for (i, &(x, y)) in pts.iter().enumerate().take(n - 1).skip(1) {
        let d = ((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0).abs() / norm;
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Mean K-Modes cost for each k in `ks` over `seeds`, computed in parallel.
pub fn cost_curve(sequences: &[Codes], ks: &[usize], seeds: &[u64]) -> Result<Vec<f64>> {
    let jobs: Vec<(usize, u64)> = ks
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let costs = par_map(&jobs, |&(k, s)| kmodes(sequences, k, s).map(|m| m.cost));
    let mut out = Vec::with_capacity(ks.len());
    let mut it = costs.into_iter();
    for _ in ks {
        let mut sum = 0.0;
        for _ in seeds {
            sum += it.next().expect("one cost per job")? as f64;
        }
        out.push(sum / seeds.len() as f64);
    }
    Ok(out)
}

/// Picks k by the elbow rule on costs averaged over `seeds` (at least 3).
pub fn elbow_k(
    sequences: &[Codes],
    k_range: std::ops::RangeInclusive<usize>,
    seeds: &[u64],
) -> Result<usize> {
    if seeds.len() < 3 {
        return Err(HowdeError::InvalidArgument(
            "elbow needs at least 3 seeds".into(),
        ));
    }
    let mut distinct = sequences.to_vec();
    distinct.sort();
    distinct.dedup();
    let ks: Vec<usize> = k_range.filter(|&k| k >= 1 && k <= distinct.len()).collect();
    if ks.len() < 2 {
        return Err(HowdeError::InvalidArgument("k range is degenerate".into()));
    }
    let costs = cost_curve(sequences, &ks, seeds)?;
    Ok(ks[elbow_index(&costs)])
}

/// Normalized Shannon entropy of cluster counts, natural log, divided by `ln k`.
pub fn profile_entropy(counts: &[usize], k: usize) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h / (k as f64).ln()
}

/// Per-user cluster labels, one entry per user-day.
pub type UserAssignments = BTreeMap<String, Vec<usize>>;

fn counts_of(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &c in labels {
        counts[c] += 1;
    }
    counts
}

/// Mean normalized entropy across users.
pub fn mean_entropy(assignments: &UserAssignments, k: usize) -> f64 {
    if assignments.is_empty() {
        return 0.0;
    }
    assignments
        .values()
        .map(|labels| profile_entropy(&counts_of(labels, k), k))
        .sum::<f64>()
        / assignments.len() as f64
}

/// Mean entropy after redistributing the pooled day labels according to
/// `permutation` (pool position `i` receives the label at `permutation[i]`).
pub fn permuted_mean_entropy(
    assignments: &UserAssignments,
    k: usize,
    permutation: &[usize],
) -> f64 {
    let pool: Vec<usize> = assignments.values().flatten().copied().collect();
    let mut offset = 0;
    let mut shuffled = UserAssignments::new();
    for (user, labels) in assignments {
        let mine = (offset..offset + labels.len())
            .map(|i| pool[permutation[i]])
            .collect();
        offset += labels.len();
        shuffled.insert(user.clone(), mine);
    }
    mean_entropy(&shuffled, k)
}

/// Null-model entropy: labels shuffled across the pooled user-days (global
/// cluster frequencies preserved), averaged over `repetitions`.
pub fn entropy_null(assignments: &UserAssignments, k: usize, seed: u64, repetitions: usize) -> f64 {
    let n: usize = assignments.values().map(Vec::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..repetitions.max(1) {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        total += permuted_mean_entropy(assignments, k, &perm);
    }
    total / repetitions.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seq(pattern: &str) -> Codes {
        let chars: Vec<char> = pattern.chars().collect();
        assert_eq!(chars.len(), 24);
        std::array::from_fn(|i| match chars[i] {
            'T' => Symbol::Target,
            'O' => Symbol::Other,
            _ => Symbol::Missing,
        })
    }

    fn day(slots: [Option<&str>; 24]) -> HourlyDay {
        HourlyDay {
            user_id: "u".into(),
            date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            slots: slots.map(|s| s.map(str::to_string)),
        }
    }

    #[test]
    fn encode_cases() {
        let all_target = encode_days(&[day([Some("H"); 24])], "H", Scope::Home);
        assert_eq!(all_target[0].to_string(), "T".repeat(24));
        let empty = encode_days(&[day([None; 24])], "H", Scope::Home);
        assert_eq!(empty[0].to_string(), "M".repeat(24));
        let mut slots = [Some("H"); 24];
        for s in slots.iter_mut().take(17).skip(9) {
            *s = Some("W");
        }
        let mixed = encode_days(&[day(slots)], "H", Scope::Home);
        assert_eq!(mixed[0].to_string(), "TTTTTTTTTOOOOOOOOTTTTTTT");
        let as_work = encode_days(&[day(slots)], "W", Scope::Work);
        assert_eq!(as_work[0].to_string(), "OOOOOOOOOTTTTTTTTOOOOOOO");
    }

    #[test]
    fn kmodes_identical_sequences() {
        let s = seq("TTTTTTTOOOOOOOOOOTTTTTTT");
        let m = kmodes(&[s; 10], 1, 0).unwrap();
        assert_eq!(m.cost, 0);
        assert!(kmodes(&[s; 10], 2, 0).is_err());
        assert!(kmodes(&[s; 10], 0, 0).is_err());
    }

    #[test]
    fn kmodes_separates_planted_groups() {
        let a = seq("TTTTTTTTTTTTTTTTTTTTTTTT");
        let b = seq("OOOOOOOOOOOOOTTTTTTTTTTT");
        let data: Vec<Codes> = (0..10).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let m = kmodes(&data, 2, 7).unwrap();
        assert_eq!(m.cost, 0);
        assert_ne!(m.assignment[0], m.assignment[1]);
        assert!(m
            .assignment
            .iter()
            .step_by(2)
            .all(|&c| c == m.assignment[0]));
    }

    fn random_codes(n: usize, seed: u64) -> Vec<Codes> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| Symbol::ALL[rng.gen_range(0..3)]))
            .collect()
    }

    #[test]
    fn kmodes_fixpoint_oracle() {
        let data = random_codes(20, 11);
        let m = kmodes(&data, 3, 5).unwrap();
        // independent re-check: nearest-mode assignment is a fixpoint
        let mut cost = 0;
        for (x, &c) in data.iter().zip(&m.assignment) {
            let dists: Vec<usize> = m
                .modes
                .iter()
                .map(|mode| mode.iter().zip(x.iter()).filter(|(p, q)| p != q).count())
                .collect();
            let best = *dists.iter().min().unwrap();
            let first_best = dists.iter().position(|&d| d == best).unwrap();
            assert_eq!(c, first_best);
            cost += best;
        }
        assert_eq!(cost, m.cost);
        // each mode is a column mode of its members
        for (ci, mode) in m.modes.iter().enumerate() {
            let members: Vec<&Codes> = data
                .iter()
                .zip(&m.assignment)
                .filter(|(_, &c)| c == ci)
                .map(|(x, _)| x)
                .collect();
            if members.is_empty() {
                continue;
            }
            for h in 0..24 {
                let count = |s: Symbol| members.iter().filter(|x| x[h] == s).count();
                let best = Symbol::ALL.iter().map(|&s| count(s)).max().unwrap();
                assert_eq!(count(mode[h]), best);
            }
        }
    }

    #[test]
    fn kmodes_cost_non_increasing_and_deterministic() {
        let data = random_codes(60, 3);
        for k in 1..6 {
            let m = kmodes(&data, k, 42).unwrap();
            assert!(
                m.cost_history.windows(2).all(|w| w[1] <= w[0]),
                "{:?}",
                m.cost_history
            );
            assert_eq!(m, kmodes(&data, k, 42).unwrap());
        }
    }

    #[test]
    fn elbow_from_costs() {
        // normalized chord distances peak at k = 2
        assert_eq!(elbow_index(&[100.0, 40.0, 35.0, 33.0, 32.0]), 1);
        assert_eq!(elbow_index(&[50.0, 40.0, 30.0, 20.0, 10.0]), 0);
        assert_eq!(elbow_index(&[5.0, 5.0, 5.0]), 0);
    }

    #[test]
    fn elbow_finds_planted_clusters() {
        let a = seq("TTTTTTTTTTTTTTTTTTTTTTTT");
        let b = seq("OOOOOOOOOOOOOOOOOOOOOOOO");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<Codes> = (0..80)
            .map(|i| {
                let mut x = if i % 2 == 0 { a } else { b };
                // light noise: two random flips to MISSING
                for _ in 0..2 {
                    x[rng.gen_range(0..24)] = Symbol::Missing;
                }
                x
            })
            .collect();
        assert_eq!(elbow_k(&data, 1..=6, &[1, 2, 3]).unwrap(), 2);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(profile_entropy(&[10, 0, 0], 3), 0.0);
        assert!((profile_entropy(&[4, 4, 4], 3) - 1.0).abs() < 1e-12);
        let expected = 2f64.ln() / 3f64.ln();
        assert!((profile_entropy(&[5, 5, 0], 3) - expected).abs() < 1e-12);
        assert_eq!(profile_entropy(&[7], 1), 0.0);
        // label permutation invariance
        assert_eq!(
            profile_entropy(&[1, 2, 3], 3),
            profile_entropy(&[3, 1, 2], 3)
        );
    }

    #[test]
    fn null_entropy_cases() {
        let mut single = UserAssignments::new();
        single.insert("a".into(), vec![0; 10]);
        single.insert("b".into(), vec![0; 5]);
        assert_eq!(entropy_null(&single, 3, 1, 5), 0.0);

        let mut mixed = UserAssignments::new();
        mixed.insert("a".into(), vec![0, 0, 0, 1]);
        mixed.insert("b".into(), vec![2, 2, 1]);
        let identity: Vec<usize> = (0..7).collect();
        assert_eq!(
            permuted_mean_entropy(&mixed, 3, &identity),
            mean_entropy(&mixed, 3)
        );
    }

    #[test]
    fn null_entropy_approaches_one_for_uniform_labels() {
        let mut prev = 0.0;
        for days in [6usize, 60, 600] {
            let mut a = UserAssignments::new();
            for u in 0..20 {
                a.insert(format!("u{u}"), (0..days).map(|d| (d + u) % 3).collect());
            }
            let null = entropy_null(&a, 3, 4, 3);
            assert!(null > prev);
            prev = null;
        }
        assert!(prev > 0.99);
    }
}
