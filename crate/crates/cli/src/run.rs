//! Command execution.

use std::path::{Path, PathBuf};

use nlwave_core::ftls::{oscillatory_car_count, oscillatory_ic, phi_diagnostic, simulate};
use nlwave_core::micromacro::run_study;
use nlwave_core::model::Kernel;
use nlwave_core::pde::{instability_metric, oscillatory_field_ic, simulate_field};
use nlwave_core::profile_macro::{default_q_domain, solve_asymptotic_with};
use nlwave_core::profile_micro::{generate_cars, solve_p_asymptotic_with};
use nlwave_core::rates::{continuous_rate, discrete_rate, symmetric_rate_check, RateResult, Side, SymmetricDiagnosis};
use nlwave_core::{CarState, EndpointPair, FieldState, ModelConfig64, Profile64};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{from_value, set_path, Command, Format, InitialData, RunConfig};
use crate::error::CliError;
use crate::output::{emit_csv, emit_json, Cell, Table};

/// Files written by a run, relative to its output directory, and text for stdout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutcome {
    pub files: Vec<String>,
    pub stdout: Option<String>,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg, dir: PathBuf::from(&cfg.output.directory), files: Vec::new() }
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        if self.cfg.output.wants(Format::Csv) {
            emit_csv(table, &self.dir.join(name))?;
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        if self.cfg.output.wants(Format::Json) {
            emit_json(value, &self.dir.join(name))?;
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn finish(mut self, stdout: Option<String>) -> Result<RunOutcome, CliError> {
        self.json("config.json", self.cfg)?;
        Ok(RunOutcome { files: self.files, stdout })
    }
}

/// Runs a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    match cfg.command {
        Command::Rates => rates(cfg),
        Command::ProfileQ => profile_q(cfg),
        Command::ProfileP => profile_p(cfg),
        Command::FtlsSim => ftls_sim(cfg),
        Command::PdeSim => pde_sim(cfg),
        Command::MicroMacro => micro_macro(cfg),
        Command::Sweep => sweep(cfg),
    }
}

fn setup(cfg: &RunConfig) -> Result<(ModelConfig64, EndpointPair<f64>), CliError> {
    let model = cfg.model_config()?;
    let pair = cfg.endpoint_pair(&model)?;
    Ok((model, pair))
}

fn domain(cfg: &RunConfig) -> (f64, f64) {
    let d = cfg.numerics.domain.expect("domain is filled for this command");
    (d[0], d[1])
}

fn profile_table(p: &Profile64, column: &str, dom: (f64, f64)) -> Table {
    let mut t = Table::new(&["x", column]);
    for (x, v) in p.restricted(dom.0, dom.1).points() {
        t.push(vec![x.into(), v.into()]);
    }
    t
}

#[derive(Serialize)]
struct RateRecord {
    lambda_plus: f64,
    lambda_minus: f64,
    lower_bounds: [f64; 2],
    brackets: [[f64; 2]; 2],
    residuals: [f64; 2],
}

impl RateRecord {
    fn new(plus: &RateResult<f64>, minus: &RateResult<f64>) -> Self {
        Self {
            lambda_plus: plus.lambda,
            lambda_minus: minus.lambda,
            lower_bounds: [plus.lower_bound, minus.lower_bound],
            brackets: [[plus.bracket.0, plus.bracket.1], [minus.bracket.0, minus.bracket.1]],
            residuals: [plus.residual, minus.residual],
        }
    }
}

fn symmetric_record(k: &Kernel<f64>, model: &ModelConfig64, pair: &EndpointPair<f64>) -> Result<Value, CliError> {
    let d = |rho| -> Result<SymmetricDiagnosis<f64>, CliError> {
        Ok(symmetric_rate_check(k, &model.velocity, rho, model.sigma)?)
    };
    Ok(json!({ "symmetric": { "plus": d(pair.rho_plus)?, "minus": d(pair.rho_minus)? } }))
}

fn rates(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (model, pair) = setup(cfg)?;
    let mut record = json!({
        "rho_minus": pair.rho_minus,
        "rho_plus": pair.rho_plus,
        "ell": model.ell,
        "sigma": model.sigma,
    });
    let extra = if model.kernel.is_symmetric() {
        symmetric_record(&model.kernel, &model, &pair)?
    } else {
        let cont = RateRecord::new(
            &continuous_rate(&model, pair.rho_plus, Side::PlusInfinity)?,
            &continuous_rate(&model, pair.rho_minus, Side::MinusInfinity)?,
        );
        let disc = RateRecord::new(
            &discrete_rate(&model, pair.rho_plus, Side::PlusInfinity)?,
            &discrete_rate(&model, pair.rho_minus, Side::MinusInfinity)?,
        );
        let mut v = serde_json::to_value(cont).expect("plain record");
        v["discrete"] = serde_json::to_value(disc).expect("plain record");
        v
    };
    if let (Value::Object(r), Value::Object(e)) = (&mut record, extra) {
        r.extend(e);
    }
    let mut w = Writer::new(cfg);
    w.json("rates.json", &record)?;
    let text = serde_json::to_string_pretty(&record).expect("plain record");
    w.finish(Some(text))
}

fn profile_q(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (model, pair) = setup(cfg)?;
    let dom = domain(cfg);
    let dx = cfg.numerics.dx.expect("dx is filled");
    let opts = cfg.numerics.tolerances.clone().unwrap_or_default().options();
    let lp = continuous_rate(&model, pair.rho_plus, Side::PlusInfinity)?.lambda;
    let lm = continuous_rate(&model, pair.rho_minus, Side::MinusInfinity)?.lambda;
    if dom.0 > -10.0 / lm || dom.1 < 10.0 / lp {
        eprintln!(
            "warning: domain [{}, {}] is shorter than [-10/lambda_minus, 10/lambda_plus] = [{}, {}]; clamped tails may exceed tolerance",
            dom.0,
            dom.1,
            -10.0 / lm,
            10.0 / lp
        );
    }
    let q = solve_asymptotic_with(&model, &pair, dom, dx, &opts)?;
    let mut w = Writer::new(cfg);
    w.csv("profile_q.csv", &profile_table(&q, "Q", dom))?;
    w.json(
        "profile_q.json",
        &json!({
            "rho_minus": pair.rho_minus,
            "rho_plus": pair.rho_plus,
            "fbar": pair.fbar,
            "lambda_plus": lp,
            "lambda_minus": lm,
            "dx": dx,
            "variant": model.variant,
            "sigma": model.sigma,
            "outer_iterations": q.meta.outer_iterations,
        }),
    )?;
    w.finish(None)
}

fn solve_p(cfg: &RunConfig, model: &ModelConfig64, pair: &EndpointPair<f64>) -> Result<Profile64, CliError> {
    let steps = cfg.numerics.steps_per_car.expect("steps are filled");
    let opts = cfg.numerics.tolerances.clone().unwrap_or_default().options();
    Ok(solve_p_asymptotic_with(model, pair, domain(cfg), steps, &opts)?)
}

fn profile_p(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (model, pair) = setup(cfg)?;
    let p = solve_p(cfg, &model, &pair)?;
    let lp = discrete_rate(&model, pair.rho_plus, Side::PlusInfinity)?.lambda;
    let lm = discrete_rate(&model, pair.rho_minus, Side::MinusInfinity)?.lambda;
    let mut w = Writer::new(cfg);
    w.csv("profile_p.csv", &profile_table(&p, "P", domain(cfg)))?;
    w.json(
        "profile_p.json",
        &json!({
            "ell": model.ell,
            "rho_minus": pair.rho_minus,
            "rho_plus": pair.rho_plus,
            "t_p": model.ell / pair.fbar,
            "lambda_plus_ell": lp,
            "lambda_minus_ell": lm,
            "variant": model.variant,
            "sigma": model.sigma,
        }),
    )?;
    w.finish(None)
}

fn ftls_sim(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (model, pair) = setup(cfg)?;
    let n = &cfg.numerics;
    let p = solve_p(cfg, &model, &pair)?;
    let ell = model.ell;
    let state = match n.initial.expect("initial data are filled") {
        InitialData::Oscillatory => oscillatory_ic(&model, oscillatory_car_count(ell))?,
        InitialData::Profile => {
            let [left, right] = n.cars.expect("car counts are filled");
            let cars = generate_cars(&p, ell, 0.0, left, right)?;
            CarState::new(0.0, cars.positions, (pair.rho_minus, pair.rho_plus), ell)?
        }
        InitialData::Step => unreachable!("rejected during validation"),
    };
    let times = n.snapshot_times.clone().expect("snapshot times are filled");
    let snaps = simulate(&state, &model, n.dt.expect("dt is filled"), &times)?;
    let margin = n.phi_margin.expect("margin is filled");

    let mut table = Table::new(&["t", "i", "z", "rho", "phi"]);
    let mut ranges = Vec::new();
    let mut excluded = Vec::new();
    let mut last_phi = Vec::new();
    for s in &snaps {
        let rho = s.rho(ell);
        let d = phi_diagnostic(s, &p, ell, margin);
        for i in 0..s.len() {
            // the head car follows the virtual leaders at density rho_plus
            let r = rho.get(i).copied().unwrap_or(s.boundary_rho.1);
            let phi = d.values.get(i).copied().flatten();
            table.push(vec![s.t.into(), i.into(), s.z[i].into(), r.into(), Cell::from(phi)]);
        }
        ranges.push(d.range);
        excluded.push(d.excluded);
        last_phi = d.values.iter().flatten().copied().collect();
    }
    let shift = if last_phi.is_empty() {
        None
    } else {
        let mean = last_phi.iter().sum::<f64>() / last_phi.len() as f64;
        p.inverse(mean).ok()
    };
    let mut w = Writer::new(cfg);
    w.csv("ftls.csv", &table)?;
    w.json(
        "ftls_summary.json",
        &json!({
            "times": times,
            "phi_range_series": ranges,
            "excluded_series": excluded,
            "final_shift_estimate": shift,
            "cars": state.len(),
        }),
    )?;
    w.finish(None)
}

fn pde_sim(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (model, pair) = setup(cfg)?;
    let n = &cfg.numerics;
    let dom = domain(cfg);
    let dx = n.dx.expect("dx is filled");
    let opts = n.tolerances.clone().unwrap_or_default().options();
    // the reference keeps the default profile resolution
    let q_dom = default_q_domain(&model, &pair)?;
    let q = solve_asymptotic_with(&model, &pair, q_dom, model.h() / 64.0, &opts)?;
    let bounds = (pair.rho_minus, pair.rho_plus);
    let state = match n.initial.expect("initial data are filled") {
        InitialData::Oscillatory => oscillatory_field_ic(dom, dx)?,
        InitialData::Step => FieldState::from_fn(dom, dx, bounds, |x| if x < 0.0 { bounds.0 } else { bounds.1 })?,
        InitialData::Profile => FieldState::from_fn(dom, dx, bounds, |x| q.eval(x))?,
    };
    let times = n.snapshot_times.clone().expect("snapshot times are filled");
    let scheme = n.scheme.expect("scheme is filled");
    let snaps = simulate_field(&state, &model, scheme, n.dt.expect("dt is filled"), &times)?;
    let window = n.window.expect("window is filled");
    let metric = if snaps.len() >= 2 { Some(instability_metric(&snaps, Some(&q), (window[0], window[1]))?) } else { None };

    let mut table = Table::new(&["t", "x", "rho"]);
    for s in &snaps {
        for j in 0..s.len() {
            table.push(vec![s.t.into(), s.x(j).into(), s.rho[j].into()]);
        }
    }
    let mut w = Writer::new(cfg);
    w.csv("pde.csv", &table)?;
    let tv: Vec<f64> = snaps.iter().map(|s| s.total_variation()).collect();
    w.json(
        "pde_summary.json",
        &json!({
            "times": times,
            "scheme": scheme,
            "tv_series": tv,
            "sup_dist_to_Q_series": metric.as_ref().map(|m| m.sup_dist.clone()),
            "shifts": metric.as_ref().map(|m| m.shifts.clone()),
            "classification": metric.as_ref().map(|m| m.classification),
        }),
    )?;
    w.finish(None)
}

fn micro_macro(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (model, pair) = setup(cfg)?;
    let n = &cfg.numerics;
    let ells = n.ells.clone().expect("ells are filled");
    let report = run_study(&model, &ells, (pair.rho_minus, pair.rho_plus), domain(cfg), n.dx.expect("dx is filled"))?;
    let mut table = Table::new(&["ell", "sup_error", "rate_error_plus", "rate_error_minus", "ratio"]);
    let mut prev: Option<f64> = None;
    for e in &report.entries {
        let ratio = prev.map(|p| e.rate_error_plus / p);
        table.push(vec![e.ell.into(), e.sup_error.into(), e.rate_error_plus.into(), e.rate_error_minus.into(), ratio.into()]);
        prev = Some(e.rate_error_plus);
    }
    let mut w = Writer::new(cfg);
    w.csv("micro_macro.csv", &table)?;
    w.json("micro_macro.json", &report)?;
    let outcome = w.finish(None)?;
    if let Some((ell, msg)) = report.failures.first() {
        return Err(CliError::Numerical(format!(
            "{} of {} car lengths failed; first at ell = {}: {}",
            report.failures.len(),
            ells.len(),
            ell,
            msg
        )));
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
struct IndexEntry {
    run: usize,
    directory: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<i32>,
    files: Vec<String>,
}

/// Resolves run `k` of a sweep: the sweep file with its command replaced,
/// the run's keys applied and its own output directory.
fn sweep_run(cfg: &RunConfig, k: usize) -> Result<RunConfig, CliError> {
    let plan = cfg.sweep.as_ref().expect("checked during resolve");
    let mut v = serde_json::to_value(cfg).expect("config serialises");
    if let Value::Object(map) = &mut v {
        map.remove("sweep");
    }
    set_path(&mut v, "command", json!(plan.command))?;
    for (key, value) in &plan.runs[k] {
        set_path(&mut v, key, value.clone())?;
    }
    let dir = Path::new(&cfg.output.directory).join(run_dir(k));
    set_path(&mut v, "output.directory", json!(dir.to_string_lossy()))?;
    from_value(v)
}

fn run_dir(k: usize) -> String {
    format!("run_{:03}", k)
}

fn sweep(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let plan = cfg.sweep.as_ref().expect("checked during resolve");
    let results: Vec<Result<RunOutcome, CliError>> =
        (0..plan.runs.len()).into_par_iter().map(|k| sweep_run(cfg, k).and_then(|c| execute(&c))).collect();
    let mut entries = Vec::new();
    let mut first_error = None;
    for (k, r) in results.into_iter().enumerate() {
        let directory = run_dir(k);
        let entry = match r {
            Ok(o) => IndexEntry {
                run: k,
                files: o.files.iter().map(|f| format!("{}/{}", directory, f)).collect(),
                directory,
                status: "ok",
                error: None,
                exit_code: None,
            },
            Err(e) => {
                let entry = IndexEntry {
                    run: k,
                    directory,
                    status: "failed",
                    error: Some(e.to_string()),
                    exit_code: Some(e.exit_code()),
                    files: Vec::new(),
                };
                first_error.get_or_insert(e);
                entry
            }
        };
        entries.push(entry);
    }
    let failed = entries.iter().filter(|e| e.status == "failed").count();
    let index = json!({ "command": plan.command, "runs": entries, "failed": failed });
    emit_json(&index, &Path::new(&cfg.output.directory).join("index.json"))?;
    if let Some(e) = first_error {
        let summary = format!("{} of {} sweep runs failed; first: {}", failed, plan.runs.len(), e);
        return Err(match e {
            CliError::Validation(_) => CliError::Validation(summary),
            CliError::Numerical(_) => CliError::Numerical(summary),
            CliError::Io(_) => CliError::Io(summary),
        });
    }
    Ok(RunOutcome { files: vec!["index.json".into()], stdout: None })
}
