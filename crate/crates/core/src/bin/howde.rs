use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use howde::anonymize::anonymize;
use howde::apps::{
    commute_stats, compare_to_reference, employment_rate, home_regions, LocationCoords,
};
use howde::baselines::{run_baseline_all, BaselineOptions, Method};
use howde::config::{set_param, Config, PARAM_KEYS};
use howde::io;
use howde::metrics::{evaluate, prefilter_users, EvalReport, Granularity, GroundTruth};
use howde::model::IsoWeek;
use howde::parallel::with_pool;
use howde::profiles::{
    elbow_k, encode_with_targets, entropy_null, kmodes, mean_entropy, profile_entropy, ClusterModel,
};
use howde::synth::{Population, PopulationSpec};
use howde::{bin_hours, run_howde_all, DetectionLabel, HowdeError, Result, Scope};

#[derive(Parser)]
#[command(
    name = "howde",
    version,
    about = "Home and work location detection from stop sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect daily home and work locations with the sliding-window detector.
    Detect(DetectArgs),
    /// Run a static baseline (Atlas or TimeGeo).
    Baseline(BaselineArgs),
    /// Compare labels with ground truth.
    Evaluate(EvaluateArgs),
    /// Evaluate the detector over a grid of parameter values.
    Sweep(SweepArgs),
    /// Cluster day profiles with K-Modes.
    Profiles(ProfilesArgs),
    /// Per-user normalized entropy of cluster assignments.
    Entropy(EntropyArgs),
    /// Generate a synthetic population with ground truth.
    Synth(SynthArgs),
    /// Discretize, shift and shuffle stops for sharing.
    Anonymize(AnonymizeArgs),
    /// Downstream applications.
    #[command(subcommand)]
    Apps(AppsCommand),
}

/// Settings shared with the configuration file; flags override file values.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long = "delta-T-H", value_name = "DAYS")]
    delta_t_h: Option<String>,
    #[arg(long = "delta-T-W", value_name = "DAYS")]
    delta_t_w: Option<String>,
    #[arg(long = "C-hours", value_name = "FRAC")]
    c_hours: Option<String>,
    #[arg(long = "C-days-H", value_name = "FRAC")]
    c_days_h: Option<String>,
    #[arg(long = "C-days-W", value_name = "FRAC")]
    c_days_w: Option<String>,
    #[arg(long = "f-hours-H", value_name = "FRAC")]
    f_hours_h: Option<String>,
    #[arg(long = "f-hours-W", value_name = "FRAC")]
    f_hours_w: Option<String>,
    #[arg(long = "f-days-W", value_name = "FRAC")]
    f_days_w: Option<String>,
    /// CENTERED, PAST_ONLY or FULL_PERIOD.
    #[arg(long = "window-mode")]
    window_mode: Option<String>,
    /// Hours such as `0-5`.
    #[arg(long = "night-bins")]
    night_bins: Option<String>,
    #[arg(long = "business-bins")]
    business_bins: Option<String>,
    /// Days such as `Mon-Fri`.
    #[arg(long = "business-days")]
    business_days: Option<String>,
    /// USER_WEEK or USER.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long = "bootstrap-B", value_name = "N")]
    bootstrap_b: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "prefilter-min-days", value_name = "DAYS")]
    prefilter_min_days: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let overrides = [
            ("delta_T_H", &self.delta_t_h),
            ("delta_T_W", &self.delta_t_w),
            ("C_hours", &self.c_hours),
            ("C_days_H", &self.c_days_h),
            ("C_days_W", &self.c_days_w),
            ("f_hours_H", &self.f_hours_h),
            ("f_hours_W", &self.f_hours_w),
            ("f_days_W", &self.f_days_w),
            ("window_mode", &self.window_mode),
            ("night_bins", &self.night_bins),
            ("business_bins", &self.business_bins),
            ("business_days", &self.business_days),
            ("protocol", &self.protocol),
            ("bootstrap_B", &self.bootstrap_b),
            ("seed", &self.seed),
            ("prefilter_min_days", &self.prefilter_min_days),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(p) = &self.output {
            cfg.output = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required_input(cfg: &Config) -> Result<&Path> {
    cfg.input.as_deref().ok_or_else(|| {
        HowdeError::InvalidArgument("no input: pass --input or set input in the config".into())
    })
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(io::create(p)?),
        _ => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Atlas,
    Timegeo,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Location coordinates (`loc_id,lat,lon`), needed by TimeGeo's distance rule.
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Use the detector's night and business windows instead of each method's own.
    #[arg(long)]
    harmonized: bool,
    /// Per-user summary `user_id,home,work,qualifies`.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    Home,
    Work,
    Both,
}

impl ScopeArg {
    fn scopes(self) -> Vec<Scope> {
        match self {
            ScopeArg::Home => vec![Scope::Home],
            ScopeArg::Work => vec![Scope::Work],
            ScopeArg::Both => vec![Scope::Home, Scope::Work],
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Ground truth `user_id,scope,week,loc_id`.
    #[arg(long)]
    truth: PathBuf,
    /// Stops, needed only for the prefilter.
    #[arg(long)]
    stops: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    scope: ScopeArg,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    truth: PathBuf,
    /// `KEY=v1,v2,...`; repeat for a cartesian grid.
    #[arg(long, required = true)]
    grid: Vec<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("targets").required(true).args(["labels", "truth"])))]
struct ProfilesArgs {
    #[arg(long)]
    input: PathBuf,
    /// Use detected labels as the target location.
    #[arg(long, conflicts_with = "truth")]
    labels: Option<PathBuf>,
    /// Use ground-truth locations as the target location.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "home")]
    scope: ScopeArg,
    /// Number of clusters; chosen by the elbow rule when omitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "k-max", default_value_t = 8)]
    k_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cluster table `cluster,size_frac,mode`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-day assignments `user_id,date,cluster`.
    #[arg(long)]
    assignments: Option<PathBuf>,
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long)]
    assignments: PathBuf,
    /// Number of clusters; defaults to the largest cluster id + 1.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "null-reps", default_value_t = 10)]
    null_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-user table `user_id,n_days,entropy`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Population spec file (key = value).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long = "missing-min")]
    missing_min: Option<f64>,
    #[arg(long = "missing-max")]
    missing_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stops output.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    coords: Option<PathBuf>,
}

#[derive(Args)]
struct AnonymizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum AppsCommand {
    /// Share of users with a stable detected workplace, per home region.
    Employment(EmploymentArgs),
    /// Home-work distance per group of users.
    Commute(CommuteArgs),
}

#[derive(Args)]
struct EmploymentArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Coordinates with a `region_id` column.
    #[arg(long)]
    coords: PathBuf,
    #[arg(long = "min-stable-days", default_value_t = 30)]
    min_stable_days: u32,
    #[arg(long = "min-users-per-region", default_value_t = 1)]
    min_users_per_region: usize,
    /// Official rates `region_id,value` to compare against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CommuteArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    coords: PathBuf,
    /// `user_id,group`; users are grouped by home region otherwise.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.6}")
    }
}

fn report_fields(r: &EvalReport) -> Vec<String> {
    vec![
        r.n_truth.to_string(),
        r.n_detected.to_string(),
        r.n_matched.to_string(),
        fmt_f(r.detected_accuracy),
        fmt_f(r.acc_stderr),
        fmt_f(r.acc_interval.0),
        fmt_f(r.acc_interval.1),
        fmt_f(r.frac_not_detected),
        fmt_f(r.fnd_stderr),
        fmt_f(r.fnd_interval.0),
        fmt_f(r.fnd_interval.1),
    ]
}

const REPORT_HEADER: [&str; 11] = [
    "n_truth",
    "n_detected",
    "n_matched",
    "acc",
    "acc_std",
    "acc_lo",
    "acc_hi",
    "f_nd",
    "f_nd_std",
    "f_nd_lo",
    "f_nd_hi",
];

fn truth_for(
    truth: &howde::synth::TruthSet,
    scope: Scope,
    protocol: Granularity,
) -> Result<&GroundTruth> {
    let gt = truth.get(scope, protocol);
    if gt.entries.is_empty() {
        return Err(HowdeError::ProtocolMismatch(format!(
            "truth file has no {scope} rows at {protocol} granularity"
        )));
    }
    Ok(gt)
}

fn detect(args: DetectArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let users = io::read_stops(required_input(&cfg)?)?;
    let labels = run_howde_all(&users, &cfg.params)?;
    io::write_labels(&labels, sink(cfg.output.as_deref())?)
}

fn baseline(args: BaselineArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let users = io::read_stops(required_input(&cfg)?)?;
    let coords = match &args.coords {
        Some(p) => io::read_coords(p)?,
        None => HashMap::new(),
    };
    let method = match args.method {
        MethodArg::Atlas => Method::Atlas,
        MethodArg::Timegeo => Method::TimeGeo,
    };
    let opts = BaselineOptions {
        windows: cfg.params.windows,
        harmonized: args.harmonized,
        ..Default::default()
    };
    let (results, labels) = run_baseline_all(&users, method, &coords, &opts)?;
    let warnings: usize = results.iter().map(|r| r.warnings.len()).sum();
    if warnings > 0 {
        eprintln!("warning: {warnings} work candidates skipped for missing coordinates");
    }
    if let Some(path) = &args.summary {
        let mut w = csv::Writer::from_writer(io::create(path)?);
        w.write_record(["user_id", "home", "work", "qualifies"])?;
        for r in &results {
            w.write_record([
                r.user_id.as_str(),
                r.home.as_deref().unwrap_or(""),
                r.work.as_deref().unwrap_or(""),
                if r.qualifies { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
    }
    io::write_labels(&labels, sink(cfg.output.as_deref())?)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let mut labels = io::read_labels(&args.labels)?;
    let mut truth = io::read_truth(&args.truth)?;
    if cfg.prefilter_min_days > 0 {
        let stops = args
            .stops
            .as_deref()
            .or(cfg.input.as_deref())
            .ok_or_else(|| {
                HowdeError::InvalidArgument("prefilter_min_days needs --stops".into())
            })?;
        let keep = prefilter_users(&io::read_stops(stops)?, cfg.prefilter_min_days)?;
        labels.retain(|l| keep.contains(&l.user_id));
        for gt in truth.all_mut() {
            gt.retain(|u, _| keep.contains(u));
        }
    }
    let mut w = csv::Writer::from_writer(sink(cfg.output.as_deref())?);
    let mut header = vec!["scope", "protocol"];
    header.extend(REPORT_HEADER);
    w.write_record(&header)?;
    for scope in args.scope.scopes() {
        let gt = truth_for(&truth, scope, cfg.protocol)?;
        let report = evaluate(&labels, gt, cfg.bootstrap_b as u64, cfg.seed)?;
        let mut row = vec![scope.to_string(), cfg.protocol.to_string()];
        row.extend(report_fields(&report));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_grid(specs: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    let mut grid: Vec<(String, Vec<String>)> = Vec::new();
    for spec in specs {
        let (key, values) = spec.split_once('=').ok_or_else(|| {
            HowdeError::InvalidArgument(format!("grid entry {spec:?} is not KEY=v1,v2"))
        })?;
        let key = key.trim();
        if !PARAM_KEYS.contains(&key) {
            return Err(HowdeError::InvalidArgument(format!(
                "{key:?} is not a detector parameter"
            )));
        }
        if grid.iter().any(|(k, _)| k == key) {
            return Err(HowdeError::InvalidArgument(format!(
                "{key} appears twice in the grid"
            )));
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(HowdeError::InvalidArgument(format!("no values for {key}")));
        }
        grid.push((key.to_string(), values));
    }
    Ok(grid)
}

fn cartesian(grid: &[(String, Vec<String>)]) -> Vec<Vec<&str>> {
    grid.iter().fold(vec![Vec::new()], |acc, (_, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push(v.as_str());
                    row
                })
            })
            .collect()
    })
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let grid = parse_grid(&args.grid)?;
    let users = io::read_stops(required_input(&cfg)?)?;
    let truth = io::read_truth(&args.truth)?;
    let home = truth_for(&truth, Scope::Home, cfg.protocol)?;
    let work = truth_for(&truth, Scope::Work, cfg.protocol)?;

    let mut w = csv::Writer::from_writer(sink(cfg.output.as_deref())?);
    let mut header: Vec<String> = grid.iter().map(|(k, _)| k.clone()).collect();
    for scope in ["home", "work"] {
        for col in [
            "acc",
            "acc_std",
            "f_nd",
            "f_nd_std",
            "n_truth",
            "n_detected",
        ] {
            header.push(format!("{scope}_{col}"));
        }
    }
    w.write_record(&header)?;
    for combo in cartesian(&grid) {
        let mut params = cfg.params;
        for ((key, _), value) in grid.iter().zip(&combo) {
            set_param(&mut params, key, value)?;
        }
        params.validate()?;
        let labels = run_howde_all(&users, &params)?;
        let mut row: Vec<String> = combo.iter().map(|v| v.to_string()).collect();
        for gt in [home, work] {
            let r = evaluate(&labels, gt, cfg.bootstrap_b as u64, cfg.seed)?;
            row.extend([
                fmt_f(r.detected_accuracy),
                fmt_f(r.acc_stderr),
                fmt_f(r.frac_not_detected),
                fmt_f(r.fnd_stderr),
                r.n_truth.to_string(),
                r.n_detected.to_string(),
            ]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn single_scope(arg: ScopeArg) -> Result<Scope> {
    match arg {
        ScopeArg::Home => Ok(Scope::Home),
        ScopeArg::Work => Ok(Scope::Work),
        ScopeArg::Both => Err(HowdeError::InvalidArgument(
            "profiles need --scope home or work".into(),
        )),
    }
}

fn profiles_cmd(args: ProfilesArgs) -> Result<()> {
    let scope = single_scope(args.scope)?;
    let users = io::read_stops(&args.input)?;
    let mut days = Vec::new();
    for u in &users {
        days.extend(bin_hours(&u.stops)?);
    }
    let sequences = if let Some(path) = &args.labels {
        let labels = io::read_labels(path)?;
        let targets: HashMap<(String, NaiveDate), String> = labels
            .iter()
            .filter_map(|l: &DetectionLabel| {
                l.get(scope)
                    .loc()
                    .map(|loc| ((l.user_id.clone(), l.date), loc.to_string()))
            })
            .collect();
        encode_with_targets(&days, scope, |u, d| {
            targets.get(&(u.to_string(), d)).cloned()
        })
    } else {
        let truth = io::read_truth(
            args.truth
                .as_deref()
                .expect("group requires labels or truth"),
        )?;
        let weekly = truth.get(scope, Granularity::UserWeek);
        let overall = truth.get(scope, Granularity::User);
        encode_with_targets(&days, scope, |u, d| {
            weekly
                .entries
                .get(&(u.to_string(), Some(IsoWeek::of(d))))
                .or_else(|| overall.entries.get(&(u.to_string(), None)))
                .and_then(|locs| locs.iter().next().cloned())
        })
    };
    if sequences.is_empty() {
        return Err(HowdeError::InvalidArgument(
            "no user-days with a target location".into(),
        ));
    }
    let codes: Vec<_> = sequences.iter().map(|s| s.codes).collect();
    let k = match args.k {
        Some(k) => k,
        None => {
            let seeds = [args.seed, args.seed + 1, args.seed + 2];
            let k = elbow_k(&codes, 1..=args.k_max, &seeds)?;
            eprintln!("elbow: k = {k}");
            k
        }
    };
    let model: ClusterModel = kmodes(&codes, k, args.seed)?;
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    w.write_record(["cluster", "size_frac", "mode"])?;
    for (id, frac, mode) in model.report() {
        w.write_record([id.to_string(), fmt_f(frac), mode])?;
    }
    w.flush()?;
    if let Some(path) = &args.assignments {
        let rows: Vec<(String, NaiveDate, usize)> = sequences
            .iter()
            .zip(&model.assignment)
            .map(|(s, &c)| (s.user_id.clone(), s.date, c))
            .collect();
        io::write_assignments(&rows, io::create(path)?)?;
    }
    Ok(())
}

fn entropy_cmd(args: EntropyArgs) -> Result<()> {
    let assignments = io::read_assignments(&args.assignments)?;
    let k = args
        .k
        .unwrap_or_else(|| assignments.values().flatten().max().map_or(1, |m| m + 1));
    if let Some(bad) = assignments.values().flatten().find(|&&c| c >= k) {
        return Err(HowdeError::InvalidArgument(format!(
            "cluster {bad} out of range for k = {k}"
        )));
    }
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    w.write_record(["user_id", "n_days", "entropy"])?;
    for (user, labels) in &assignments {
        let mut counts = vec![0; k];
        for &c in labels {
            counts[c] += 1;
        }
        w.write_record([
            user.clone(),
            labels.len().to_string(),
            fmt_f(profile_entropy(&counts, k)),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "mean_entropy={} null_entropy={}",
        fmt_f(mean_entropy(&assignments, k)),
        fmt_f(entropy_null(&assignments, k, args.seed, args.null_reps))
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => PopulationSpec::parse_str(
            &std::fs::read_to_string(p)
                .map_err(|e| HowdeError::Config(format!("{}: {e}", p.display())))?,
        )?,
        None => PopulationSpec::default(),
    };
    if let Some(v) = args.agents {
        spec.n_agents = v;
    }
    if let Some(v) = args.days {
        spec.n_days = v;
    }
    if let Some(v) = args.start {
        spec.start = v;
    }
    if let Some(v) = args.missing_min {
        spec.missing_rate.0 = v;
        spec.missing_rate.1 = spec.missing_rate.1.max(v);
    }
    if let Some(v) = args.missing_max {
        spec.missing_rate.1 = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    let population = Population::new(&spec)?;
    let (users, truth) = population.generate()?;
    io::write_stops(&users, io::create(&args.output)?)?;
    if let Some(p) = &args.truth {
        io::write_truth(&truth, io::create(p)?)?;
    }
    if let Some(p) = &args.coords {
        io::write_coords(&population.coords, io::create(p)?)?;
    }
    Ok(())
}

fn anonymize_cmd(args: AnonymizeArgs) -> Result<()> {
    let users = io::read_stops(&args.input)?;
    io::write_stops(&anonymize(&users, args.seed), sink(args.output.as_deref())?)
}

fn employment(args: EmploymentArgs) -> Result<()> {
    let labels = io::read_labels(&args.labels)?;
    let coords: HashMap<String, LocationCoords> = io::read_coords(&args.coords)?;
    let regions = home_regions(&labels, &coords);
    let report = employment_rate(&labels, &regions, args.min_stable_days);
    let rates = report.rates(args.min_users_per_region);
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    w.write_record(["region_id", "employed", "users", "rate"])?;
    for (region, rate) in &rates {
        let (employed, total) = report.counts[region];
        w.write_record([
            region.clone(),
            employed.to_string(),
            total.to_string(),
            fmt_f(*rate),
        ])?;
    }
    w.flush()?;
    if report.users_without_region > 0 {
        eprintln!(
            "warning: {} users without a home region",
            report.users_without_region
        );
    }
    if let Some(path) = &args.reference {
        let reference: BTreeMap<String, f64> = io::read_reference(path)?;
        let c = compare_to_reference(&rates, &reference)?;
        eprintln!(
            "pearson_r={} mean_relative_error={} regions={}",
            fmt_f(c.pearson_r),
            fmt_f(c.mean_relative_error),
            c.n_regions
        );
    }
    Ok(())
}

fn commute(args: CommuteArgs) -> Result<()> {
    let labels = io::read_labels(&args.labels)?;
    let coords = io::read_coords(&args.coords)?;
    let groups = match &args.groups {
        Some(p) => io::read_groups(p)?,
        None => home_regions(&labels, &coords),
    };
    let report = commute_stats(&labels, &coords, &groups);
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    w.write_record(["group", "n_users", "mean_km", "stderr_km"])?;
    for (group, s) in &report.groups {
        w.write_record([
            group.clone(),
            s.n_users.to_string(),
            fmt_f(s.mean_km),
            fmt_f(s.stderr_km),
        ])?;
    }
    w.flush()?;
    if report.skipped_days > 0 {
        eprintln!(
            "warning: {} days skipped for missing coordinates",
            report.skipped_days
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::Baseline(a) => baseline(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Profiles(a) => profiles_cmd(a),
        Command::Entropy(a) => entropy_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Anonymize(a) => anonymize_cmd(a),
        Command::Apps(AppsCommand::Employment(a)) => employment(a),
        Command::Apps(AppsCommand::Commute(a)) => commute(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_pool(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
