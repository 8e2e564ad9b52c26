//! Runs a scenario command and collects its artifacts and exit status.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    attractor_estimate, persistence_floor, verify_cone_entry, verify_monotone, verify_part_metric,
    verify_sublinear_random, AnalysisError, PartMetricTrace, Sampling, VerificationReport,
};
use crate::cone::ConeSpec;
use crate::integrator::{default_step, integrate, IntegrateError};
use crate::nicholson::{
    check_monotone, check_relaxed, cone_from_model, special_solution_conditions,
    superequilibrium_radius, transform_mean, validate_model, ConditionReport, NicholsonModel,
    Verdict, DEFAULT_RADIUS_CAP,
};
use crate::scenario::{Claim, Format, Policy, Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Simulate,
    Verify,
    Attractor,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Attractor => "attractor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Indeterminate,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Indeterminate => 3,
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::HoldsStrict | Verdict::HoldsNonStrict => Status::Pass,
            Verdict::IndeterminateWithinScan => Status::Indeterminate,
            Verdict::Fails => Status::Fail,
        }
    }
}

/// Exit code for unreadable, malformed or invalid input.
pub const USAGE_EXIT: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("scenario has no [{0}] section")]
    MissingSection(&'static str),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub policy: Option<Policy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// File name, `<stem>.<command>.<claim>.<ext>`.
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn format(&self) -> Format {
        if self.name.ends_with(".csv") {
            Format::Csv
        } else {
            Format::Json
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub artifacts: Vec<Artifact>,
    /// Human-readable summary, one line per item.
    pub lines: Vec<String>,
}

struct Builder<'a> {
    stem: &'a str,
    command: Command,
    artifacts: Vec<Artifact>,
    lines: Vec<String>,
}

impl Builder<'_> {
    fn json(&mut self, claim: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("report types serialize");
        self.push(
            claim,
            "json",
            format!("{}\n", serde_json::to_string_pretty(&value).unwrap()),
        );
    }

    fn push(&mut self, claim: &str, ext: &str, contents: String) {
        self.artifacts.push(Artifact {
            name: format!("{}.{}.{claim}.{ext}", self.stem, self.command.name()),
            contents,
        });
    }

    fn line(&mut self, text: String) {
        self.lines.push(text);
    }

    fn finish(self, status: Status) -> RunOutcome {
        let mut lines = self.lines;
        lines.push(format!("status: {}", status_name(status)));
        RunOutcome {
            status,
            artifacts: self.artifacts,
            lines,
        }
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Indeterminate => "indeterminate",
    }
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v)
        .unwrap()
        .as_str()
        .unwrap()
        .to_string()
}

/// Runs `command` on `scenario`; `stem` prefixes artifact names.
pub fn run(
    scenario: &Scenario,
    stem: &str,
    command: Command,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let model = scenario.build_model()?;
    let mut b = Builder {
        stem,
        command,
        artifacts: Vec::new(),
        lines: Vec::new(),
    };
    let status = match command {
        Command::Check => run_check(scenario, &model, opts, &mut b),
        Command::Simulate => run_simulate(scenario, &model, &mut b)?,
        Command::Verify => run_verify(scenario, &model, opts, &mut b)?,
        Command::Attractor => run_attractor(scenario, &model, opts, &mut b)?,
    };
    Ok(b.finish(status))
}

fn condition_line(rep: &ConditionReport) -> String {
    let mut s = format!("{}: {}", rep.condition, verdict_name(rep.verdict));
    for c in rep.checks.iter().filter(|c| c.gating) {
        let _ = write!(
            s,
            "; {}{} bound {:.4} scan {:.4} threshold {:.4}",
            c.label,
            c.patch.map_or(String::new(), |p| format!("[{p}]")),
            c.bound,
            c.estimate,
            c.threshold
        );
    }
    s
}

/// The more favourable of two verdicts.
fn better(a: Verdict, b: Verdict) -> Verdict {
    if a.and(b) == a {
        b
    } else {
        a
    }
}

fn run_check(
    scenario: &Scenario,
    model: &NicholsonModel,
    opts: &RunOptions,
    b: &mut Builder,
) -> Status {
    let policy = opts
        .policy
        .or(scenario.check.as_ref().and_then(|c| c.policy))
        .unwrap_or(Policy::Strict);
    let window = scenario.scan_window(model);
    let hypotheses = validate_model(model, Some(window));
    let monotone = check_monotone(model, Some(window));
    let relaxed = check_relaxed(model, Some(window));
    let t = transform_mean(model);
    let t_window = scenario.scan_window(&t.model);
    let t_hypotheses = validate_model(&t.model, Some(t_window));
    let t_monotone = check_monotone(&t.model, Some(t_window));
    let (hyp_gate, condition) = match policy {
        Policy::Strict => (hypotheses.verdict, monotone.verdict),
        Policy::Relaxed => (
            better(hypotheses.verdict, t_hypotheses.verdict),
            better(monotone.verdict, relaxed.verdict),
        ),
    };
    let gate = hyp_gate.and(condition);
    let status = Status::from_verdict(gate);

    for rep in [&hypotheses, &monotone, &relaxed] {
        b.line(condition_line(rep));
        b.json(&rep.condition, rep);
    }

    let cone = match cone_from_model(model) {
        Ok(c) => {
            b.line(format!("cone: mu = {:?}", c.mu));
            serde_json::to_value(&c).unwrap()
        }
        Err(e) => {
            b.line(format!("cone: {e}"));
            json!({ "error": e.to_string() })
        }
    };
    b.json("cone", cone);

    b.line(format!("transformed {}", condition_line(&t_hypotheses)));
    b.line(format!("transformed {}", condition_line(&t_monotone)));
    b.json(
        "transformed",
        json!({
            "hypotheses": t_hypotheses,
            "monotone": t_monotone,
            "cone": t.cone,
            "factor_bounds": t.factor_bounds,
            "mean_decay": t.model.decay().iter().map(|d| d.constant_term()).collect::<Vec<_>>(),
        }),
    );

    let cap = scenario
        .check
        .as_ref()
        .and_then(|c| c.radius_cap)
        .unwrap_or(DEFAULT_RADIUS_CAP);
    match superequilibrium_radius(model, cap) {
        Ok(r) => {
            b.line(format!(
                "radius: {:.6} (patch {})",
                r.radius, r.binding_patch
            ));
            b.json("radius", r);
        }
        Err(e) => {
            b.line(format!("radius: {e}"));
            b.json("radius", json!({ "error": e.to_string(), "cap": cap }));
        }
    }

    if let Ok(special) = special_solution_conditions(model, Some(window)) {
        b.line(condition_line(&special));
        b.json("special-solutions", &special);
    }

    b.json(
        "summary",
        json!({
            "policy": policy,
            "hypotheses": hypotheses.verdict,
            "monotone": monotone.verdict,
            "relaxed": relaxed.verdict,
            "transformed_hypotheses": t_hypotheses.verdict,
            "transformed_monotone": t_monotone.verdict,
            "gate": gate,
            "status": status,
        }),
    );
    status
}

fn run_simulate(
    scenario: &Scenario,
    model: &NicholsonModel,
    b: &mut Builder,
) -> Result<Status, RunError> {
    let sim = scenario
        .simulate
        .as_ref()
        .ok_or(RunError::MissingSection("simulate"))?;
    let step = sim.step.unwrap_or_else(|| default_step(model));
    let histories = scenario.histories(model, step)?;
    let mut runs = Vec::new();
    let mut status = Status::Pass;
    for (k, phi) in histories.iter().enumerate() {
        let claim = format!("trajectory-{}", k + 1);
        match integrate(model, phi, sim.horizon, step) {
            Ok(traj) => {
                let mut csv = Vec::new();
                traj.write_csv(&mut csv).expect("writing to memory");
                b.push(&claim, "csv", String::from_utf8(csv).expect("csv is ascii"));
                let last = traj.state(traj.len() - 1).to_vec();
                let (mut lo, mut hi) = (
                    vec![f64::INFINITY; traj.dim()],
                    vec![f64::NEG_INFINITY; traj.dim()],
                );
                for k in 0..traj.len() {
                    for (i, &v) in traj.state(k).iter().enumerate() {
                        lo[i] = lo[i].min(v);
                        hi[i] = hi[i].max(v);
                    }
                }
                b.line(format!("{claim}: y(T) = {last:?}"));
                runs.push(json!({
                    "trajectory": k + 1,
                    "final_state": last,
                    "min": lo,
                    "max": hi,
                    "nodes": traj.len(),
                }));
            }
            Err(e) => {
                status = Status::Fail;
                b.line(format!("{claim}: {e}"));
                runs.push(json!({ "trajectory": k + 1, "error": e.to_string() }));
            }
        }
    }
    b.json(
        "summary",
        json!({ "horizon": sim.horizon, "step": step, "trajectories": runs, "status": status }),
    );
    Ok(status)
}

fn part_metric_csv(traces: &[PartMetricTrace]) -> String {
    let mut s = String::from("sample,t,p\n");
    for (k, tr) in traces.iter().enumerate() {
        for (t, p) in tr.times.iter().zip(&tr.values) {
            let _ = writeln!(s, "{},{t},{p}", k + 1);
        }
    }
    s
}

fn run_verify(
    scenario: &Scenario,
    model: &NicholsonModel,
    opts: &RunOptions,
    b: &mut Builder,
) -> Result<Status, RunError> {
    let ver = scenario
        .verify
        .as_ref()
        .ok_or(RunError::MissingSection("verify"))?;
    let sampling = ver.sampling(opts.seed);
    let condition = check_monotone(model, Some(scenario.scan_window(model)));
    let exploratory = !condition.verdict.holds_strict();
    let cone: Result<ConeSpec, String> = match scenario.cone_override()? {
        Some(c) => Ok(c),
        None => cone_from_model(model)
            .map(|c| c.cone())
            .map_err(|e| e.to_string()),
    };
    let mut claims = Vec::new();
    let mut status = Status::Pass;
    for &claim in &ver.claims {
        let name = claim.name();
        let result: Result<VerificationReport, String> = match &cone {
            Err(e) => Err(format!("no cone: {e}")),
            Ok(cone) => {
                verify_claim(model, cone, claim, ver, &sampling, b).map_err(|e| e.to_string())
            }
        };
        match result {
            Ok(mut rep) => {
                if exploratory {
                    rep.notes.push(format!(
                        "monotone condition verdict is {}; results are exploratory",
                        verdict_name(condition.verdict)
                    ));
                }
                b.line(format!(
                    "{name}: {} (worst margin {:.3e}, {} samples)",
                    if rep.passed { "pass" } else { "fail" },
                    rep.worst_margin,
                    rep.samples
                ));
                if !rep.passed {
                    status = Status::Fail;
                }
                claims.push(json!({ "claim": name, "passed": rep.passed, "worst_margin": rep.worst_margin }));
                if claim != Claim::Persistence {
                    b.json(name, &rep);
                }
            }
            Err(e) => {
                status = Status::Fail;
                b.line(format!("{name}: error: {e}"));
                claims.push(json!({ "claim": name, "passed": false, "error": e }));
                b.json(name, json!({ "claim": name, "error": e }));
            }
        }
    }
    b.json(
        "summary",
        json!({
            "claims": claims,
            "seed": sampling.seed,
            "samples": sampling.samples,
            "horizon": sampling.horizon,
            "monotone_condition": condition.verdict,
            "exploratory": exploratory,
            "cone": cone.as_ref().map(|c| c.mu().to_vec()).ok(),
            "status": status,
        }),
    );
    Ok(status)
}

fn verify_claim(
    model: &NicholsonModel,
    cone: &ConeSpec,
    claim: Claim,
    ver: &crate::scenario::VerifySection,
    sampling: &Sampling,
    b: &mut Builder,
) -> Result<VerificationReport, AnalysisError> {
    match claim {
        Claim::Monotone => verify_monotone(model, cone, sampling),
        Claim::ConeEntry => verify_cone_entry(model, cone, sampling),
        Claim::Sublinear => verify_sublinear_random(model, cone, &ver.lambdas, sampling),
        Claim::PartMetric => {
            let (rep, traces) = verify_part_metric(model, cone, sampling, ver.metric_tol)?;
            b.push(claim.name(), "csv", part_metric_csv(&traces));
            Ok(rep)
        }
        Claim::Persistence => {
            let transient = ver.transient.unwrap_or(0.6 * ver.horizon);
            let rep = persistence_floor(model, sampling, transient, ver.floor_tol)?;
            b.json(claim.name(), &rep);
            Ok(rep.report)
        }
    }
}

fn run_attractor(
    scenario: &Scenario,
    model: &NicholsonModel,
    opts: &RunOptions,
    b: &mut Builder,
) -> Result<Status, RunError> {
    let att = scenario
        .attractor
        .as_ref()
        .ok_or(RunError::MissingSection("attractor"))?;
    let sampling = Sampling {
        samples: att.initials,
        horizon: att.horizon,
        step: att.step,
        seed: opts.seed.unwrap_or(att.seed),
        tolerance: 0.0,
    };
    let transient = att.transient.unwrap_or(0.6 * att.horizon);
    match attractor_estimate(model, &sampling, transient, att.spread_tol) {
        Ok(est) => {
            let mut csv = Vec::new();
            est.write_csv(&mut csv).expect("writing to memory");
            b.push(
                "estimate",
                "csv",
                String::from_utf8(csv).expect("csv is ascii"),
            );
            let status = if est.copy_of_base && est.floor > 0.0 {
                Status::Pass
            } else {
                Status::Fail
            };
            b.line(format!(
                "attractor: tail spread {:.3e} (tolerance {:.1e}), floor {:.6}",
                est.tail_spread, est.spread_tol, est.floor
            ));
            b.json("estimate", &est);
            Ok(status)
        }
        Err(e) => {
            b.line(format!("attractor: error: {e}"));
            b.json("estimate", json!({ "error": e.to_string() }));
            Ok(Status::Fail)
        }
    }
}

/// Output directory: the override, else `[output] dir` relative to the
/// scenario file, else the current directory.
pub fn output_dir(scenario: &Scenario, scenario_path: &Path, out: Option<&Path>) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    match scenario.output.as_ref().and_then(|o| o.dir.as_ref()) {
        Some(d) => scenario_path.parent().unwrap_or(Path::new("")).join(d),
        None => PathBuf::from("."),
    }
}

/// Writes the artifacts whose format `[output] formats` selects.
pub fn write_artifacts(
    scenario: &Scenario,
    outcome: &RunOutcome,
    dir: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let formats = scenario
        .output
        .as_ref()
        .and_then(|o| o.formats.clone())
        .unwrap_or_else(|| vec![Format::Json, Format::Csv]);
    fs::create_dir_all(dir).map_err(|source| RunError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for a in outcome
        .artifacts
        .iter()
        .filter(|a| formats.contains(&a.format()))
    {
        let path = dir.join(&a.name);
        fs::write(&path, &a.contents).map_err(|source| RunError::Write {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Reads, runs and writes; returns the outcome and the written paths.
pub fn run_file(
    path: &Path,
    command: Command,
    opts: &RunOptions,
    out: Option<&Path>,
) -> Result<(RunOutcome, Vec<PathBuf>), RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = Scenario::parse(&text).map_err(|e| match e {
        ScenarioError::Parse(p) => {
            RunError::Scenario(ScenarioError::Invalid(format!("{}: {p}", path.display())))
        }
        other => RunError::Scenario(other),
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario")
        .to_string();
    let outcome = run(&scenario, &stem, command, opts)?;
    let written = write_artifacts(&scenario, &outcome, &output_dir(&scenario, path, out))?;
    Ok((outcome, written))
}

impl From<IntegrateError> for RunError {
    fn from(e: IntegrateError) -> Self {
        RunError::Scenario(ScenarioError::Invalid(e.to_string()))
    }
}
