//! Browser demo: a few detector operations exported through wasm-bindgen.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and are plain Rust so they can be tested natively.

use chrono::{Days, NaiveDate};
use howde::anonymize::anonymize_user;
use howde::metrics::evaluate;
use howde::model::{date_of_day, day_of, weekday_of_day, SECONDS_PER_DAY};
use howde::synth::{generate, AgentSpec, Assignment, Population, PopulationSpec};
use howde::{run_howde, run_howde_all, HowdeError, HowdeParams, Result, StopRecord};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const START: (i32, u32, u32) = (2019, 1, 7);

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(START.0, START.1, START.2).expect("valid date")
}

/// An agent who moves home on day 56 and changes job after a short gap.
fn demo_agent(seed: u64, missing_rate: f64) -> AgentSpec {
    let first = start();
    let mut spec = AgentSpec::commuter("demo", first, 112, seed);
    let at = |d: u64| first + Days::new(d);
    spec.homes = vec![
        Assignment::new("home A", first, at(55)),
        Assignment::new("home B", at(56), at(111)),
    ];
    spec.works = vec![
        Assignment::new("office 1", first, at(69)),
        Assignment::new("office 2", at(77), at(111)),
    ];
    spec.missing_rate = missing_rate;
    spec
}

fn params(f_hours_h: f64, delta_t: u32) -> Result<HowdeParams> {
    let p = HowdeParams {
        f_hours_h,
        delta_t_h: delta_t,
        delta_t_w: delta_t,
        ..Default::default()
    };
    p.validate()?;
    Ok(p)
}

/// Day-by-day detected and planted home/work for one synthetic agent.
pub fn timeline_json(seed: u64, missing_rate: f64, f_hours_h: f64, delta_t: u32) -> Result<Value> {
    let spec = demo_agent(seed, missing_rate);
    let (stops, _) = generate(&spec)?;
    let labels = run_howde(&stops, &params(f_hours_h, delta_t)?)?;
    let days: Vec<Value> = labels
        .iter()
        .map(|l| {
            json!({
                "date": l.date.to_string(),
                "home": l.home.loc(),
                "home_status": l.home.status(),
                "work": l.work.loc(),
                "work_status": l.work.status(),
                "true_home": spec.home_on(l.date),
                "true_work": spec.work_on(l.date),
            })
        })
        .collect();
    Ok(json!({ "stops": stops.len(), "days": days }))
}

/// Weekly home accuracy and share not detected as the home threshold grows.
pub fn sweep_json(seed: u64, agents: usize, missing_max: f64) -> Result<Value> {
    let spec = PopulationSpec {
        n_agents: agents,
        n_days: 84,
        missing_rate: (0.0, missing_max),
        seed,
        ..Default::default()
    };
    let (users, truth) = Population::new(&spec)?.generate()?;
    let mut points = Vec::new();
    for step in 0..=8 {
        let f = 0.5 + 0.05 * f64::from(step);
        let labels = run_howde_all(&users, &params(f, 28)?)?;
        let r = evaluate(&labels, &truth.home_week, 0, 0)?;
        points.push(json!({
            "f_hours_H": f,
            "acc": if r.detected_accuracy.is_nan() { None } else { Some(r.detected_accuracy) },
            "f_nd": r.frac_not_detected,
        }));
    }
    Ok(Value::Array(points))
}

/// The demo agent's first two weeks before and after anonymization.
pub fn anonymize_json(seed: u64) -> Result<Value> {
    let mut spec = demo_agent(seed, 0.1);
    spec.n_days = 14;
    let (stops, _) = generate(&spec)?;
    let out = anonymize_user(&stops, seed);
    let rows = |stops: &[StopRecord]| -> Vec<Value> {
        stops
            .iter()
            .map(|s| {
                let day = day_of(s.start);
                json!({
                    "loc": s.loc_id,
                    "date": date_of_day(day).to_string(),
                    "weekday": weekday_of_day(day),
                    "start_min": (s.start - day * SECONDS_PER_DAY) / 60,
                    "end_min": (s.end - day * SECONDS_PER_DAY) / 60,
                })
            })
            .collect()
    };
    Ok(json!({ "before": rows(&stops), "after": rows(&out) }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsValue> {
    r.map(|v| v.to_string())
        .map_err(|e: HowdeError| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn timeline(
    seed: u32,
    missing_rate: f64,
    f_hours_h: f64,
    delta_t: u32,
) -> std::result::Result<String, JsValue> {
    to_js(timeline_json(
        u64::from(seed),
        missing_rate,
        f_hours_h,
        delta_t,
    ))
}

#[wasm_bindgen]
pub fn sweep(seed: u32, agents: u32, missing_max: f64) -> std::result::Result<String, JsValue> {
    to_js(sweep_json(u64::from(seed), agents as usize, missing_max))
}

#[wasm_bindgen]
pub fn anonymize(seed: u32) -> std::result::Result<String, JsValue> {
    to_js(anonymize_json(u64::from(seed)))
}
