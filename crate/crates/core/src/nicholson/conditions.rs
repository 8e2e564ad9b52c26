//! Hypothesis validation, the exponential cone for the model, and the
//! monotonicity and special-solution conditions.

use std::f64::consts::E;

use serde::Serialize;

use super::{ModelError, NicholsonModel};
use crate::coeffs::{window_inf, window_sup, Modulated, QuasiPeriodic, ScanWindow};
use crate::cone::ConeSpec;

pub const DEFAULT_RADIUS_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsStrict,
    HoldsNonStrict,
    IndeterminateWithinScan,
    Fails,
}

impl Verdict {
    fn severity(self) -> u8 {
        match self {
            Verdict::HoldsStrict => 0,
            Verdict::HoldsNonStrict => 1,
            Verdict::IndeterminateWithinScan => 2,
            Verdict::Fails => 3,
        }
    }

    /// The weaker of the two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }

    pub fn holds(self) -> bool {
        matches!(self, Verdict::HoldsStrict | Verdict::HoldsNonStrict)
    }

    pub fn holds_strict(self) -> bool {
        self == Verdict::HoldsStrict
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "<=")]
    LessEq,
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = ">=")]
    GreaterEq,
    #[serde(rename = "==")]
    Equal,
}

/// One inequality evaluated for one patch.
///
/// For upper-type relations (`<`, `<=`) `estimate` is a scan value that
/// bounds the true supremum from below and `bound` is a certified upper
/// bound. For lower-type relations the roles flip: `estimate` is a scan
/// minimum and `bound` a certified lower bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub label: String,
    pub patch: Option<usize>,
    pub estimate: f64,
    pub bound: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub verdict: Verdict,
    /// Whether the check enters the overall verdict.
    pub gating: bool,
}

impl ConditionCheck {
    fn new(
        label: &str,
        patch: Option<usize>,
        estimate: f64,
        bound: f64,
        threshold: f64,
        relation: Relation,
    ) -> Self {
        let verdict = match relation {
            Relation::Less | Relation::LessEq => {
                upper_verdict(estimate, bound, threshold, relation == Relation::Less)
            }
            Relation::Greater | Relation::GreaterEq => {
                lower_verdict(estimate, bound, threshold, relation == Relation::Greater)
            }
            Relation::Equal => {
                if estimate == threshold && bound == threshold {
                    Verdict::HoldsStrict
                } else {
                    Verdict::Fails
                }
            }
        };
        Self {
            label: label.to_string(),
            patch,
            estimate,
            bound,
            threshold,
            relation,
            verdict,
            gating: true,
        }
    }

    fn informational(mut self) -> Self {
        self.gating = false;
        self
    }

    /// Certified distance to the threshold, negative when violated.
    pub fn slack(&self) -> f64 {
        match self.relation {
            Relation::Less | Relation::LessEq => self.threshold - self.bound,
            Relation::Greater | Relation::GreaterEq => self.bound - self.threshold,
            Relation::Equal => -(self.bound - self.threshold).abs(),
        }
    }
}

fn upper_verdict(scan: f64, bound: f64, threshold: f64, strict: bool) -> Verdict {
    if bound < threshold {
        Verdict::HoldsStrict
    } else if !strict && bound <= threshold {
        Verdict::HoldsNonStrict
    } else if (strict && scan >= threshold) || (!strict && scan > threshold) {
        Verdict::Fails
    } else {
        Verdict::IndeterminateWithinScan
    }
}

fn lower_verdict(scan: f64, bound: f64, threshold: f64, strict: bool) -> Verdict {
    if bound > threshold {
        Verdict::HoldsStrict
    } else if !strict && bound >= threshold {
        Verdict::HoldsNonStrict
    } else if (strict && scan <= threshold) || (!strict && scan < threshold) {
        Verdict::Fails
    } else {
        Verdict::IndeterminateWithinScan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub checks: Vec<ConditionCheck>,
    pub verdict: Verdict,
    /// Patch (1-based) with the smallest certified slack among gating checks.
    pub binding_patch: Option<usize>,
    pub window: Option<ScanWindow>,
}

impl ConditionReport {
    fn from_checks(
        condition: &str,
        checks: Vec<ConditionCheck>,
        window: Option<ScanWindow>,
    ) -> Self {
        let verdict = checks
            .iter()
            .filter(|c| c.gating)
            .fold(Verdict::HoldsStrict, |v, c| v.and(c.verdict));
        Self::with_verdict(condition, checks, window, verdict)
    }

    fn with_verdict(
        condition: &str,
        checks: Vec<ConditionCheck>,
        window: Option<ScanWindow>,
        verdict: Verdict,
    ) -> Self {
        let binding_patch = checks
            .iter()
            .filter(|c| c.gating && c.patch.is_some())
            .min_by(|a, b| a.slack().total_cmp(&b.slack()))
            .and_then(|c| c.patch);
        Self {
            condition: condition.to_string(),
            checks,
            verdict,
            binding_patch,
            window,
        }
    }

    pub fn check(&self, label: &str, patch: usize) -> Option<&ConditionCheck> {
        self.checks
            .iter()
            .find(|c| c.label == label && c.patch == Some(patch))
    }
}

fn scan_min_modulated(c: &Modulated, window: ScanWindow) -> f64 {
    match c.as_plain() {
        Some(q) if q.is_constant() => q.constant_term(),
        _ => window_inf(|t| c.eval(t), window).sup,
    }
}

fn scan_max_modulated(c: &Modulated, window: ScanWindow) -> f64 {
    match c.as_plain() {
        Some(q) if q.is_constant() => q.constant_term(),
        _ => window_sup(|t| c.eval(t), window).sup,
    }
}

fn scan_min(c: &QuasiPeriodic, window: ScanWindow) -> f64 {
    if c.is_constant() {
        c.constant_term()
    } else {
        window_inf(|t| c.eval(t), window).sup
    }
}

fn scan_max(c: &QuasiPeriodic, window: ScanWindow) -> f64 {
    if c.is_constant() {
        c.constant_term()
    } else {
        window_sup(|t| c.eval(t), window).sup
    }
}

/// Certified lower bound of `d_i - sum_j a_ji` (column sums of migration out
/// of patch `i`).
fn outflow_margin_bound(model: &NicholsonModel, i: usize) -> f64 {
    let mut plain = model.decay()[i].clone();
    let mut extra = 0.0;
    for (j, row) in model.migration().iter().enumerate() {
        if j == i {
            continue;
        }
        let a = &row[i];
        match a.as_plain() {
            Some(q) => plain = plain.sub(q),
            None => extra += a.upper_bound(),
        }
    }
    plain.lower_bound() - extra
}

/// Checks the positivity and structural hypotheses on the coefficients.
/// Bounds come from the coefficient algebra; scans over `window` supply the
/// estimates that decide failures.
pub fn validate_model(model: &NicholsonModel, window: Option<ScanWindow>) -> ConditionReport {
    let window = window.unwrap_or_else(|| model.default_window());
    let m = model.dim();
    let mut checks = Vec::new();
    for i in 0..m {
        let p = Some(i + 1);
        let d = &model.decay()[i];
        checks.push(ConditionCheck::new(
            "decay-positive",
            p,
            scan_min(d, window),
            d.lower_bound(),
            0.0,
            Relation::Greater,
        ));
        for j in 0..m {
            let a = &model.migration()[i][j];
            if i == j {
                let size = a
                    .base()
                    .lower_bound()
                    .abs()
                    .max(a.base().upper_bound().abs());
                checks.push(ConditionCheck::new(
                    "migration-diagonal-zero",
                    p,
                    size,
                    size,
                    0.0,
                    Relation::Equal,
                ));
            } else if !a.is_zero() {
                checks.push(ConditionCheck::new(
                    &format!("migration-nonnegative-from-{}", j + 1),
                    p,
                    scan_min_modulated(a, window),
                    a.lower_bound(),
                    0.0,
                    Relation::GreaterEq,
                ));
            }
        }
        let b = &model.birth()[i];
        checks.push(ConditionCheck::new(
            "birth-positive",
            p,
            scan_min_modulated(b, window),
            b.lower_bound(),
            0.0,
            Relation::Greater,
        ));
        let c = &model.crowding()[i];
        checks.push(ConditionCheck::new(
            "crowding-positive",
            p,
            scan_min_modulated(c, window),
            c.lower_bound(),
            0.0,
            Relation::Greater,
        ));
        let net = |t: f64| {
            let out: f64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| model.migration()[j][i].eval(t))
                .sum();
            d.eval(t) - out
        };
        let bound = outflow_margin_bound(model, i);
        let scan = window_inf(net, window).sup;
        checks.push(ConditionCheck::new(
            "decay-exceeds-outflow",
            p,
            scan,
            bound,
            0.0,
            Relation::Greater,
        ));
    }
    ConditionReport::from_checks("hypotheses", checks, Some(window))
}

/// The model's exponential cone and the per-patch maximum of the auxiliary
/// map `f(mu) = -d+ + mu - (beta+/e^2) e^{mu r}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeConstruction {
    pub mu: Vec<f64>,
    pub peak: Vec<f64>,
    pub birth_sup: Vec<f64>,
    pub decay_sup: Vec<f64>,
}

impl ConeConstruction {
    pub fn cone(&self) -> ConeSpec {
        ConeSpec::new(self.mu.clone()).expect("rates are validated on construction")
    }
}

/// Rate maximising the auxiliary map for delay `r` and birth bound `b`.
pub(crate) fn optimal_rate(r: f64, b: f64) -> f64 {
    (E * E / (r * b)).ln() / r
}

pub(crate) fn auxiliary(mu: f64, r: f64, d: f64, b: f64) -> f64 {
    -d + mu - b / (E * E) * (mu * r).exp()
}

pub fn cone_from_model(model: &NicholsonModel) -> Result<ConeConstruction, ModelError> {
    let m = model.dim();
    let mut out = ConeConstruction {
        mu: Vec::with_capacity(m),
        peak: Vec::with_capacity(m),
        birth_sup: Vec::with_capacity(m),
        decay_sup: Vec::with_capacity(m),
    };
    for i in 0..m {
        let r = model.delays()[i];
        let b = model.birth()[i].upper_bound();
        let d = model.decay()[i].upper_bound();
        if !(b > 0.0) {
            return Err(ModelError::NonPositiveBirth {
                patch: i + 1,
                bound: b,
            });
        }
        let mu = optimal_rate(r, b);
        if mu < 0.0 {
            return Err(ModelError::NegativeRate {
                patch: i + 1,
                product: r * b,
                mu,
            });
        }
        out.mu.push(mu);
        out.peak.push(auxiliary(mu, r, d, b));
        out.birth_sup.push(b);
        out.decay_sup.push(d);
    }
    Ok(out)
}

/// Monotonicity of the induced skew-product semiflow for the exponential
/// ordering: `r beta+ e^{d+ r}` against `e`, strict and non-strict, plus a
/// direct scan of the pointwise sufficient inequality with the cone's rates.
///
/// The overall verdict is strict when every patch passes the strict test,
/// non-strict when every patch passes at least the non-strict one.
pub fn check_monotone(model: &NicholsonModel, window: Option<ScanWindow>) -> ConditionReport {
    let window = window.unwrap_or_else(|| model.default_window());
    let cone = cone_from_model(model).ok();
    let mut checks = Vec::new();
    let mut verdict = Verdict::HoldsStrict;
    for i in 0..model.dim() {
        let p = Some(i + 1);
        let r = model.delays()[i];
        let (d, b) = (&model.decay()[i], &model.birth()[i]);
        let bound = r * b.upper_bound() * (d.upper_bound() * r).exp();
        let scan = r * scan_max_modulated(b, window) * (scan_max(d, window) * r).exp();
        let weak = ConditionCheck::new("monotone", p, scan, bound, E, Relation::LessEq);
        let strict = ConditionCheck::new("monotone-strict", p, scan, bound, E, Relation::Less);
        let patch = if strict.verdict.holds() {
            Verdict::HoldsStrict
        } else if weak.verdict.holds() {
            Verdict::HoldsNonStrict
        } else if weak.verdict == Verdict::Fails {
            Verdict::Fails
        } else {
            Verdict::IndeterminateWithinScan
        };
        verdict = verdict.and(patch);
        checks.push(weak);
        checks.push(strict.informational());
        if let Some(cone) = &cone {
            let mu = cone.mu[i];
            let k = (2.0 - mu * r).exp();
            let slack = |t: f64| (mu - d.eval(t)) * k - b.eval(t);
            let scan = window_inf(slack, window).sup;
            let lb = cone.peak[i] * k;
            checks.push(
                ConditionCheck::new(
                    "pointwise-sufficient",
                    p,
                    scan,
                    lb,
                    0.0,
                    Relation::GreaterEq,
                )
                .informational(),
            );
        }
    }
    ConditionReport::with_verdict("monotone", checks, Some(window), verdict)
}

/// `r sup_t beta(t) e^{int_{t-r}^t d}` against `e`.
pub fn check_relaxed(model: &NicholsonModel, window: Option<ScanWindow>) -> ConditionReport {
    let window = window.unwrap_or_else(|| model.default_window());
    let mut checks = Vec::new();
    for i in 0..model.dim() {
        let r = model.delays()[i];
        let (scan, bound) = birth_times_survival(model, i, 0.0, window);
        checks.push(ConditionCheck::new(
            "relaxed",
            Some(i + 1),
            r * scan,
            r * bound,
            E,
            Relation::Less,
        ));
    }
    ConditionReport::from_checks("relaxed", checks, Some(window))
}

/// Scan and certified upper bound of `sup_t beta(t) e^{int_{t-r}^t d - shift}`.
fn birth_times_survival(
    model: &NicholsonModel,
    i: usize,
    shift: f64,
    window: ScanWindow,
) -> (f64, f64) {
    let r = model.delays()[i];
    let (d, b) = (&model.decay()[i], &model.birth()[i]);
    let integral = d
        .moving_integral_fn(r)
        .expect("delays are positive by construction");
    let bound = b.upper_bound() * (integral.upper_bound() - shift).exp();
    let f = |t: f64| b.eval(t) * (integral.eval(t) - shift).exp();
    let scan = if integral.is_constant() && b.as_plain().is_some_and(|q| q.is_constant()) {
        f(0.0)
    } else {
        window_sup(f, window).sup
    };
    (scan, bound)
}

/// Delay conditions for the existence of special solutions of the scalar
/// equation: the classic and the Pituk-type bounds, and their sharper
/// integral forms.
pub fn special_solution_conditions(
    model: &NicholsonModel,
    window: Option<ScanWindow>,
) -> Result<ConditionReport, ModelError> {
    if model.dim() != 1 {
        return Err(ModelError::NotScalar(model.dim()));
    }
    let window = window.unwrap_or_else(|| model.default_window());
    let r = model.delays()[0];
    let (d, b) = (&model.decay()[0], &model.birth()[0]);
    let (d_scan, d_ub) = (scan_max(d, window), d.upper_bound());
    let (b_scan, b_ub) = (scan_max_modulated(b, window), b.upper_bound());
    let d0 = d.mean_value();
    let mut checks = vec![
        ConditionCheck::new(
            "classic",
            Some(1),
            (d_scan + b_scan) * r * E,
            (d_ub + b_ub) * r * E,
            1.0,
            Relation::Less,
        ),
        ConditionCheck::new(
            "pituk",
            Some(1),
            r * b_scan * (d_scan * r).exp(),
            r * b_ub * (d_ub * r).exp(),
            1.0 / E,
            Relation::Less,
        ),
    ];
    let (scan, bound) = birth_times_survival(model, 0, d0 * r, window);
    checks.push(ConditionCheck::new(
        "improved-classic",
        Some(1),
        (d0 + scan) * r * E,
        (d0 + bound) * r * E,
        1.0,
        Relation::Less,
    ));
    let (scan, bound) = birth_times_survival(model, 0, 0.0, window);
    checks.push(ConditionCheck::new(
        "improved-pituk",
        Some(1),
        r * scan,
        r * bound,
        1.0 / E,
        Relation::Less,
    ));
    Ok(ConditionReport::from_checks(
        "special-solutions",
        checks,
        Some(window),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupersolutionRadius {
    pub radius: f64,
    pub binding_patch: usize,
    pub per_patch: Vec<f64>,
}

/// Smallest `R0` such that every constant state `R >= R0` is a
/// super-equilibrium, from the certified per-patch bound
/// `-inf(d_i - sum_j a_ij) R + beta_i+ R e^{-c_i,inf R} <= 0`.
pub fn superequilibrium_radius(
    model: &NicholsonModel,
    cap: f64,
) -> Result<SupersolutionRadius, ModelError> {
    let m = model.dim();
    let mut per_patch = Vec::with_capacity(m);
    for i in 0..m {
        let mut net = model.decay()[i].clone();
        let mut extra = 0.0;
        for (j, a) in model.migration()[i].iter().enumerate() {
            if j == i {
                continue;
            }
            match a.as_plain() {
                Some(q) => net = net.sub(q),
                None => extra += a.upper_bound(),
            }
        }
        let kappa = net.lower_bound() - extra;
        let beta = model.birth()[i].upper_bound().max(0.0);
        let c = model.crowding()[i].lower_bound();
        // g(R)/R = -kappa + beta e^{-c R} is nonincreasing, so its zero set
        // bounds an interval [R0, inf).
        let rate = |x: f64| -kappa + beta * (-c * x).exp();
        let no_radius = ModelError::NoRadius { patch: i + 1, cap };
        if rate(0.0) <= 0.0 {
            per_patch.push(0.0);
            continue;
        }
        if !(kappa > 0.0 && c > 0.0) || rate(cap) > 0.0 {
            return Err(no_radius);
        }
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if rate(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        per_patch.push(hi);
    }
    let (binding, radius) =
        per_patch
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
            );
    Ok(SupersolutionRadius {
        radius,
        binding_patch: binding + 1,
        per_patch,
    })
}
