//! Empirical checks of the dynamical claims along simulated trajectories:
//! order preservation, cone entry, sublinearity, part-metric contraction,
//! persistence and convergence to a single almost periodic solution.
//!
//! Claims stated for all `t >= 0` are tested on `{r, 2r, ..., T}` with `r`
//! the largest delay. Limits become tail criteria on `[T_transient, T]`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coeffs::{window_inf, ScanWindow};
use crate::cone::{
    cone_contains, in_interior, leq_b, part_metric, ConeError, ConeSpec, PartMetricOptions,
};
use crate::fnspace::{HistorySegment, SegmentError, SegmentGrid};
use crate::integrator::{default_step, integrate, IntegrateError, Trajectory};
use crate::nicholson::NicholsonModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("cone has dimension {cone}, model has {model}")]
    DimensionMismatch { cone: usize, model: usize },
    #[error("segment is not strictly inside the cone (margin {0:e})")]
    NotInterior(f64),
    #[error("sublinearity parameter {0} outside [0, 1]")]
    BadLambda(f64),
    #[error("no random cone element passed certification after {0} draws")]
    Sampling(usize),
}

/// Sampling and integration settings shared by the randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    pub samples: usize,
    pub horizon: f64,
    /// Integration step; the model default when `None`.
    pub step: Option<f64>,
    pub seed: u64,
    /// Allowed negative slack in non-strict order relations.
    pub tolerance: f64,
}

impl Sampling {
    pub fn new(samples: usize, horizon: f64, seed: u64) -> Self {
        Self {
            samples,
            horizon,
            step: None,
            seed,
            tolerance: 1e-9,
        }
    }

    fn step_for(&self, model: &NicholsonModel) -> f64 {
        self.step.unwrap_or_else(|| default_step(model))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub index: usize,
    pub seed: Option<u64>,
    pub passed: bool,
    /// Smallest slack of the non-strict relation over the sampled times.
    pub margin: f64,
    /// Time at which `margin` was attained.
    pub at: f64,
    /// Smallest margin of the strict relation, where it was asserted.
    pub strict_margin: Option<f64>,
    /// First sampled time of strict membership, where recorded.
    pub entry_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub claim: String,
    pub samples: usize,
    pub horizon: f64,
    pub worst_margin: f64,
    pub passed: bool,
    pub outcomes: Vec<SampleOutcome>,
    pub parameters: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn new(claim: &str, horizon: f64, seed: Option<u64>, outcomes: Vec<SampleOutcome>) -> Self {
        let worst_margin = outcomes
            .iter()
            .map(|o| o.margin)
            .fold(f64::INFINITY, f64::min);
        Self {
            claim: claim.to_string(),
            samples: outcomes.len(),
            horizon,
            worst_margin,
            passed: outcomes.iter().all(|o| o.passed),
            outcomes,
            parameters: BTreeMap::new(),
            seed,
            notes: Vec::new(),
        }
    }

    fn param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }
}

/// Per-sample seeds drawn from the master seed.
fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Sample times `{r, 2r, ...}` up to `horizon`, `r` the largest delay.
pub fn delay_times(model: &NicholsonModel, horizon: f64, from: usize) -> Vec<f64> {
    let r = model.max_delay();
    let n = (horizon / r + 1e-9).floor() as usize;
    (from..=n).map(|k| k as f64 * r).collect()
}

fn history_grid(model: &NicholsonModel, step: f64) -> Result<SegmentGrid, SegmentError> {
    SegmentGrid::with_max_step(model.delays(), step)
}

fn check_cone(model: &NicholsonModel, cone: &ConeSpec) -> Result<(), AnalysisError> {
    if model.dim() == cone.dim() {
        Ok(())
    } else {
        Err(AnalysisError::DimensionMismatch {
            cone: cone.dim(),
            model: model.dim(),
        })
    }
}

/// Nonnegative history `c + a sin^2(w s + p)` per component. With
/// `zero_head` the constant vanishes and the phase is zero, so `phi(0) = 0`.
pub fn random_history(grid: &SegmentGrid, rng: &mut impl Rng, zero_head: bool) -> HistorySegment {
    let params: Vec<(f64, f64, f64, f64)> = (0..grid.dim())
        .map(|_| {
            let c = if zero_head {
                0.0
            } else {
                rng.gen_range(0.05..2.0)
            };
            let a = rng.gen_range(0.1..2.0);
            let w = rng.gen_range(0.5..10.0);
            let p = if zero_head {
                0.0
            } else {
                rng.gen_range(0.0..std::f64::consts::PI)
            };
            (c, a, w, p)
        })
        .collect();
    HistorySegment::sample(
        grid,
        |i, s| {
            let (c, a, w, p) = params[i];
            c + a * (w * s + p).sin().powi(2)
        },
        |i, s| {
            let (_, a, w, p) = params[i];
            a * w * (2.0 * (w * s + p)).sin()
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeElementKind {
    /// `q e^{-mu s}`: on the boundary of the cone.
    Boundary,
    /// Exponential times a nondecreasing profile plus a constant; interior
    /// when the constant or the ramp is positive.
    General,
    /// Like `General` with a positive constant and ramp.
    Interior,
}

/// Random element `q e^{-mu s} (1 + a1 (s + r)/r + a2 (1 + tanh(k (s - c)))/2) + c0`
/// of the cone, certified by [`cone_contains`] before it is returned.
pub fn random_cone_element(
    grid: &SegmentGrid,
    cone: &ConeSpec,
    rng: &mut impl Rng,
    kind: ConeElementKind,
) -> Result<HistorySegment, AnalysisError> {
    const DRAWS: usize = 16;
    for _ in 0..DRAWS {
        let params: Vec<[f64; 7]> = (0..grid.dim())
            .map(|i| {
                let r = grid.delays()[i];
                let q = rng.gen_range(0.1..1.0);
                let (a1, a2, c0) = match kind {
                    ConeElementKind::Boundary => (0.0, 0.0, 0.0),
                    ConeElementKind::General => (
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0.0..0.5),
                    ),
                    ConeElementKind::Interior => (
                        rng.gen_range(0.1..1.0),
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0.05..0.5),
                    ),
                };
                let k = rng.gen_range(1.0..20.0);
                let centre = rng.gen_range(-r..0.0);
                [q, a1, a2, c0, k, centre, r]
            })
            .collect();
        let value = |i: usize, s: f64| {
            let [q, a1, a2, c0, k, centre, r] = params[i];
            let mu = cone.mu()[i];
            let profile = 1.0 + a1 * (s + r) / r + a2 * 0.5 * (1.0 + (k * (s - centre)).tanh());
            q * (-mu * s).exp() * profile + c0
        };
        let deriv = |i: usize, s: f64| {
            let [q, a1, a2, _, k, centre, r] = params[i];
            let mu = cone.mu()[i];
            let th = (k * (s - centre)).tanh();
            let profile = 1.0 + a1 * (s + r) / r + a2 * 0.5 * (1.0 + th);
            let slope = a1 / r + a2 * 0.5 * k * (1.0 - th * th);
            q * (-mu * s).exp() * (slope - mu * profile)
        };
        let seg = HistorySegment::sample(grid, value, deriv);
        if cone_contains(&seg, cone, 0.0)?.holds {
            return Ok(seg);
        }
    }
    Err(AnalysisError::Sampling(DRAWS))
}

/// Order preservation: pairs `phi <=_B psi` with `psi = phi + k`, `k` a
/// random cone element, stay ordered at every sampled time. When `k` is
/// interior the difference of the solutions must stay interior too.
pub fn verify_monotone(
    model: &NicholsonModel,
    cone: &ConeSpec,
    sampling: &Sampling,
) -> Result<VerificationReport, AnalysisError> {
    check_cone(model, cone)?;
    let step = sampling.step_for(model);
    let grid = history_grid(model, step)?;
    let times = delay_times(model, sampling.horizon, 1);
    let seeds = sample_seeds(sampling.seed, sampling.samples);
    let outcomes = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = random_history(&grid, &mut rng, false);
            let kind = if index % 3 == 0 {
                ConeElementKind::Boundary
            } else {
                ConeElementKind::General
            };
            let gap = random_cone_element(&grid, cone, &mut rng, kind)?;
            let psi = phi.axpy(1.0, Some(&gap))?;
            let strict = in_interior(&gap, cone, 0.0)?.margin > 0.0;
            let a = integrate(model, &phi, sampling.horizon, step)?;
            let b = integrate(model, &psi, sampling.horizon, step)?;
            pair_outcome(
                index,
                Some(seed),
                &a,
                &b,
                cone,
                &times,
                strict,
                1.0,
                sampling.tolerance,
            )
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(
        VerificationReport::new("monotone", sampling.horizon, Some(sampling.seed), outcomes)
            .param("step", step)
            .param("tolerance", sampling.tolerance)
            .param("first_time", times.first().copied().unwrap_or(f64::NAN)),
    )
}

/// Checks `scale * y_t(lower) <=_B y_t(upper)` on `times`, and strict
/// interior membership of the difference when `strict`.
#[allow(clippy::too_many_arguments)]
fn pair_outcome(
    index: usize,
    seed: Option<u64>,
    lower: &Trajectory,
    upper: &Trajectory,
    cone: &ConeSpec,
    times: &[f64],
    strict: bool,
    scale: f64,
    tol: f64,
) -> Result<SampleOutcome, AnalysisError> {
    let mut margin = f64::INFINITY;
    let mut at = f64::NAN;
    let mut strict_margin: Option<f64> = None;
    for &t in times {
        let lo = lower.segment_at(t)?.scaled(scale);
        let hi = upper.segment_at(t)?;
        let rep = leq_b(&lo, &hi, cone, tol)?;
        if rep.margin < margin {
            margin = rep.margin;
            at = t;
        }
        if strict {
            let m = in_interior(&hi.sub(&lo)?, cone, 0.0)?.margin;
            strict_margin = Some(strict_margin.map_or(m, |s: f64| s.min(m)));
        }
    }
    let passed = margin >= -tol && strict_margin.is_none_or(|m| m > 0.0);
    Ok(SampleOutcome {
        index,
        seed,
        passed,
        margin,
        at,
        strict_margin,
        entry_time: None,
    })
}

/// Cone entry: nonnegative histories give segments in the cone for `t >= r`
/// and, when `phi(0) >> 0`, in its interior for `t >= 2r`. Every fourth
/// history vanishes at `s = 0`.
pub fn verify_cone_entry(
    model: &NicholsonModel,
    cone: &ConeSpec,
    sampling: &Sampling,
) -> Result<VerificationReport, AnalysisError> {
    check_cone(model, cone)?;
    let step = sampling.step_for(model);
    let grid = history_grid(model, step)?;
    let seeds = sample_seeds(sampling.seed, sampling.samples);
    let outcomes = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = random_history(&grid, &mut rng, index % 4 == 3);
            cone_entry_outcome(
                model,
                cone,
                &phi,
                index,
                Some(seed),
                sampling.horizon,
                step,
                sampling.tolerance,
            )
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(VerificationReport::new(
        "cone-entry",
        sampling.horizon,
        Some(sampling.seed),
        outcomes,
    )
    .param("step", step)
    .param("tolerance", sampling.tolerance))
}

/// Cone entry for one given nonnegative history.
#[allow(clippy::too_many_arguments)]
pub fn cone_entry_outcome(
    model: &NicholsonModel,
    cone: &ConeSpec,
    phi: &HistorySegment,
    index: usize,
    seed: Option<u64>,
    horizon: f64,
    step: f64,
    tol: f64,
) -> Result<SampleOutcome, AnalysisError> {
    let r = model.max_delay();
    let positive_head = phi.head().iter().all(|&v| v > 0.0);
    let traj = integrate(model, phi, horizon, step)?;
    let mut margin = f64::INFINITY;
    let mut at = f64::NAN;
    let mut strict_margin: Option<f64> = None;
    let mut entry_time = None;
    for t in delay_times(model, horizon, 1) {
        let seg = traj.segment_at(t)?;
        let rep = cone_contains(&seg, cone, tol)?;
        if rep.margin < margin {
            margin = rep.margin;
            at = t;
        }
        let inner = in_interior(&seg, cone, 0.0)?.margin;
        if inner > 0.0 && entry_time.is_none() {
            entry_time = Some(t);
        }
        if positive_head && t >= 2.0 * r - 1e-9 * r {
            strict_margin = Some(strict_margin.map_or(inner, |s: f64| s.min(inner)));
        }
    }
    Ok(SampleOutcome {
        index,
        seed,
        passed: margin >= -tol && strict_margin.is_none_or(|m| m > 0.0),
        margin,
        at,
        strict_margin,
        entry_time,
    })
}

/// Sublinearity: `lambda y_t(psi) <=_B y_t(lambda psi)` at sampled times,
/// strictly (interior difference) for `t > r` when `0 < lambda < 1`.
pub fn verify_sublinear(
    model: &NicholsonModel,
    cone: &ConeSpec,
    psi: &HistorySegment,
    lambdas: &[f64],
    horizon: f64,
    step: Option<f64>,
    tol: f64,
) -> Result<VerificationReport, AnalysisError> {
    check_cone(model, cone)?;
    let inner = in_interior(psi, cone, 0.0)?.margin;
    if !(inner > 0.0) {
        return Err(AnalysisError::NotInterior(inner));
    }
    for &l in lambdas {
        if !(0.0..=1.0).contains(&l) {
            return Err(AnalysisError::BadLambda(l));
        }
    }
    let step = step.unwrap_or_else(|| default_step(model));
    let r = model.max_delay();
    let base = integrate(model, psi, horizon, step)?;
    let times = delay_times(model, horizon, 1);
    let outcomes = lambdas
        .par_iter()
        .enumerate()
        .map(|(index, &lambda)| {
            let scaled = integrate(model, &psi.scaled(lambda), horizon, step)?;
            let mut margin = f64::INFINITY;
            let mut at = f64::NAN;
            let mut strict_margin: Option<f64> = None;
            let strict = lambda > 0.0 && lambda < 1.0;
            for &t in &times {
                let lo = base.segment_at(t)?.scaled(lambda);
                let hi = scaled.segment_at(t)?;
                let rep = leq_b(&lo, &hi, cone, tol)?;
                if rep.margin < margin {
                    margin = rep.margin;
                    at = t;
                }
                if strict && t > r * (1.0 + 1e-9) {
                    let m = in_interior(&hi.sub(&lo)?, cone, 0.0)?.margin;
                    strict_margin = Some(strict_margin.map_or(m, |s: f64| s.min(m)));
                }
            }
            Ok(SampleOutcome {
                index,
                seed: None,
                passed: margin >= -tol && strict_margin.is_none_or(|m| m > 0.0),
                margin,
                at,
                strict_margin,
                entry_time: None,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let mut report = VerificationReport::new("sublinear", horizon, None, outcomes)
        .param("step", step)
        .param("tolerance", tol);
    for (k, l) in lambdas.iter().enumerate() {
        report = report.param(&format!("lambda_{}", k + 1), *l);
    }
    Ok(report)
}

/// Sublinearity for a random interior `psi` drawn from `seed`.
pub fn verify_sublinear_random(
    model: &NicholsonModel,
    cone: &ConeSpec,
    lambdas: &[f64],
    sampling: &Sampling,
) -> Result<VerificationReport, AnalysisError> {
    check_cone(model, cone)?;
    let step = sampling.step_for(model);
    let grid = history_grid(model, step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let psi = random_cone_element(&grid, cone, &mut rng, ConeElementKind::Interior)?;
    let mut rep = verify_sublinear(
        model,
        cone,
        &psi,
        lambdas,
        sampling.horizon,
        Some(step),
        sampling.tolerance,
    )?;
    rep.seed = Some(sampling.seed);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartMetricTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest increase between consecutive samples (negative when strictly
    /// decreasing).
    pub worst_increase: f64,
    pub nonincreasing: bool,
    pub metric_tol: f64,
    /// Set when a segment left the cone interior and the trace stopped.
    pub aborted_at: Option<f64>,
}

/// Part metric between the two solutions on `{0, r, 2r, ..., T}`, checked to
/// be nonincreasing up to twice the bisection tolerance.
pub fn part_metric_trace(
    model: &NicholsonModel,
    cone: &ConeSpec,
    phi: &HistorySegment,
    psi: &HistorySegment,
    horizon: f64,
    step: Option<f64>,
    metric_tol: f64,
) -> Result<PartMetricTrace, AnalysisError> {
    check_cone(model, cone)?;
    let step = step.unwrap_or_else(|| default_step(model));
    let opts = PartMetricOptions {
        tol: metric_tol,
        ..PartMetricOptions::default()
    };
    let a = integrate(model, phi, horizon, step)?;
    let b = integrate(model, psi, horizon, step)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut aborted_at = None;
    for t in delay_times(model, horizon, 0) {
        match part_metric(&a.segment_at(t)?, &b.segment_at(t)?, cone, &opts) {
            Ok(p) => {
                times.push(t);
                values.push(p);
            }
            Err(ConeError::NotInterior(..)) | Err(ConeError::InfiniteDistance(_)) => {
                aborted_at = Some(t);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let worst_increase = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PartMetricTrace {
        nonincreasing: aborted_at.is_none() && !(worst_increase > 2.0 * metric_tol),
        times,
        values,
        worst_increase,
        metric_tol,
        aborted_at,
    })
}

/// Part-metric traces for random interior pairs.
pub fn verify_part_metric(
    model: &NicholsonModel,
    cone: &ConeSpec,
    sampling: &Sampling,
    metric_tol: f64,
) -> Result<(VerificationReport, Vec<PartMetricTrace>), AnalysisError> {
    check_cone(model, cone)?;
    let step = sampling.step_for(model);
    let grid = history_grid(model, step)?;
    let seeds = sample_seeds(sampling.seed, sampling.samples);
    let results = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = random_cone_element(&grid, cone, &mut rng, ConeElementKind::Interior)?;
            let psi = random_cone_element(&grid, cone, &mut rng, ConeElementKind::Interior)?;
            let trace = part_metric_trace(
                model,
                cone,
                &phi,
                &psi,
                sampling.horizon,
                Some(step),
                metric_tol,
            )?;
            let outcome = SampleOutcome {
                index,
                seed: Some(seed),
                passed: trace.nonincreasing,
                margin: 2.0 * metric_tol - trace.worst_increase.max(0.0),
                at: trace.aborted_at.unwrap_or(f64::NAN),
                strict_margin: None,
                entry_time: None,
            };
            Ok((outcome, trace))
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let (outcomes, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = VerificationReport::new(
        "part-metric",
        sampling.horizon,
        Some(sampling.seed),
        outcomes,
    )
    .param("step", step)
    .param("metric_tol", metric_tol)
    .note("margin is twice the metric tolerance minus the largest increase");
    Ok((report, traces))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceReport {
    /// Smallest state value over histories, patches and tail times.
    pub floor: f64,
    pub persistent: bool,
    pub floor_tol: f64,
    pub transient: f64,
    pub report: VerificationReport,
}

/// Persistence floor over the given histories.
pub fn persistence_floor_of(
    model: &NicholsonModel,
    histories: &[HistorySegment],
    transient: f64,
    horizon: f64,
    step: Option<f64>,
    floor_tol: f64,
) -> Result<PersistenceReport, AnalysisError> {
    let step = step.unwrap_or_else(|| default_step(model));
    let outcomes = histories
        .par_iter()
        .enumerate()
        .map(|(index, phi)| {
            let traj = integrate(model, phi, horizon, step)?;
            let (floor, at) = tail_min(&traj, transient);
            Ok(SampleOutcome {
                index,
                seed: None,
                passed: floor > floor_tol,
                margin: floor,
                at,
                strict_margin: None,
                entry_time: None,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let report = VerificationReport::new("persistence", horizon, None, outcomes)
        .param("step", step)
        .param("transient", transient)
        .param("floor_tol", floor_tol);
    let floor = report.worst_margin;
    Ok(PersistenceReport {
        persistent: floor > floor_tol,
        floor,
        floor_tol,
        transient,
        report,
    })
}

/// Persistence floor over random histories with `phi(0) >> 0`.
pub fn persistence_floor(
    model: &NicholsonModel,
    sampling: &Sampling,
    transient: f64,
    floor_tol: f64,
) -> Result<PersistenceReport, AnalysisError> {
    let step = sampling.step_for(model);
    let grid = history_grid(model, step)?;
    let histories: Vec<HistorySegment> = sample_seeds(sampling.seed, sampling.samples)
        .into_iter()
        .map(|s| random_history(&grid, &mut ChaCha8Rng::seed_from_u64(s), false))
        .collect();
    let mut rep = persistence_floor_of(
        model,
        &histories,
        transient,
        sampling.horizon,
        Some(step),
        floor_tol,
    )?;
    rep.report.seed = Some(sampling.seed);
    for (o, s) in rep
        .report
        .outcomes
        .iter_mut()
        .zip(sample_seeds(sampling.seed, sampling.samples))
    {
        o.seed = Some(s);
    }
    Ok(rep)
}

fn first_tail_node(traj: &Trajectory, from: f64) -> usize {
    ((from / traj.step()) - 1e-9).ceil().max(0.0) as usize
}

fn tail_min(traj: &Trajectory, transient: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for k in first_tail_node(traj, transient)..traj.len() {
        for &v in traj.state(k) {
            if v < best.0 {
                best = (v, traj.time(k));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorEstimate {
    pub times: Vec<f64>,
    /// `mean[i][k]`: estimate of the attracting solution for patch `i + 1`
    /// at `times[k]`, the pointwise mean over the trajectories.
    pub mean: Vec<Vec<f64>>,
    /// Largest difference between any two trajectories at `times[k]`.
    pub spread: Vec<f64>,
    /// Largest spread over every stored node of the tail.
    pub tail_spread: f64,
    pub floor: f64,
    pub spread_tol: f64,
    pub copy_of_base: bool,
    pub transient: f64,
    pub horizon: f64,
    pub step: f64,
    pub seeds: Vec<u64>,
}

impl AttractorEstimate {
    /// Writes `t,b_1..b_m,spread` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.mean.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("b_{i}")));
        header.push("spread".to_string());
        writeln!(out, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            write!(out, "{t}")?;
            for row in &self.mean {
                write!(out, ",{}", row[k])?;
            }
            writeln!(out, ",{}", self.spread[k])?;
        }
        Ok(())
    }
}

/// Most samples kept in the recorded series.
const MAX_RECORDED: usize = 2000;

/// Integrates random strictly positive histories and estimates the common
/// attracting solution on the tail `[transient, T]`.
pub fn attractor_estimate(
    model: &NicholsonModel,
    sampling: &Sampling,
    transient: f64,
    spread_tol: f64,
) -> Result<AttractorEstimate, AnalysisError> {
    let step = sampling.step_for(model);
    let grid = history_grid(model, step)?;
    let seeds = sample_seeds(sampling.seed, sampling.samples);
    let histories: Vec<HistorySegment> = seeds
        .iter()
        .map(|&s| random_history(&grid, &mut ChaCha8Rng::seed_from_u64(s), false))
        .collect();
    let mut est = attractor_from(
        model,
        &histories,
        transient,
        sampling.horizon,
        step,
        spread_tol,
    )?;
    est.seeds = seeds;
    Ok(est)
}

/// [`attractor_estimate`] for given histories.
pub fn attractor_from(
    model: &NicholsonModel,
    histories: &[HistorySegment],
    transient: f64,
    horizon: f64,
    step: f64,
    spread_tol: f64,
) -> Result<AttractorEstimate, AnalysisError> {
    let trajs = histories
        .par_iter()
        .map(|phi| integrate(model, phi, horizon, step))
        .collect::<Result<Vec<_>, _>>()?;
    let m = model.dim();
    let first = trajs.first().map_or(0, |t| first_tail_node(t, transient));
    let len = trajs.first().map_or(0, |t| t.len());
    let stride = ((len.saturating_sub(first)) / MAX_RECORDED).max(1);
    let spread_at = |k: usize| -> f64 {
        (0..m)
            .map(|i| {
                let (lo, hi) =
                    trajs
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                            let v = t.state(k)[i];
                            (lo.min(v), hi.max(v))
                        });
                hi - lo
            })
            .fold(0.0, f64::max)
    };
    let mut times = Vec::new();
    let mut mean = vec![Vec::new(); m];
    let mut spread = Vec::new();
    let mut tail_spread: f64 = 0.0;
    let mut floor = f64::INFINITY;
    for k in first..len {
        let s = spread_at(k);
        tail_spread = tail_spread.max(s);
        for t in &trajs {
            floor = t.state(k).iter().copied().fold(floor, f64::min);
        }
        if (k - first) % stride == 0 {
            times.push(k as f64 * step);
            for (i, row) in mean.iter_mut().enumerate() {
                row.push(trajs.iter().map(|t| t.state(k)[i]).sum::<f64>() / trajs.len() as f64);
            }
            spread.push(s);
        }
    }
    Ok(AttractorEstimate {
        times,
        mean,
        spread,
        tail_spread,
        floor,
        spread_tol,
        copy_of_base: tail_spread < spread_tol,
        transient,
        horizon,
        step,
        seeds: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumSide {
    Sub,
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCertificate {
    pub side: EquilibriumSide,
    pub state: Vec<f64>,
    /// Smallest value of `F_i(t, v)` (sub) or `-F_i(t, v)` (super) over the
    /// scanned times and patches.
    pub margin: f64,
    pub patch: usize,
    pub at: f64,
    pub holds: bool,
    pub strict: bool,
    pub window: ScanWindow,
}

/// Sign test of the right-hand side on the constant segment `v`.
pub fn check_subequilibrium(
    model: &NicholsonModel,
    v: &[f64],
    side: EquilibriumSide,
    window: Option<ScanWindow>,
    tol: f64,
) -> EquilibriumCertificate {
    let window = window.unwrap_or_else(|| model.default_window());
    let sign = match side {
        EquilibriumSide::Sub => 1.0,
        EquilibriumSide::Super => -1.0,
    };
    let mut best = (f64::INFINITY, 0, 0.0);
    for i in 0..model.dim() {
        let g = |t: f64| {
            let mut f = vec![0.0; v.len()];
            model.rhs_point(t - model.offset(), v, v, &mut f);
            sign * f[i]
        };
        let est = window_inf(g, window);
        if est.sup < best.0 {
            best = (est.sup, i, est.argmax);
        }
    }
    EquilibriumCertificate {
        side,
        state: v.to_vec(),
        margin: best.0,
        patch: best.1 + 1,
        at: best.2,
        holds: best.0 >= -tol,
        strict: best.0 > 0.0,
        window,
    }
}
