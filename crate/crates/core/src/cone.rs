//! The exponential-ordering cone for a diagonal matrix `B = diag(-mu_i)`.
//!
//! A segment `phi` lies in the cone when `phi >= 0` and every
//! `s -> e^{mu_i s} phi_i(s)` is nondecreasing. For smooth segments this is
//! the derivative test `phi_i' + mu_i phi_i >= 0`, which is what is checked
//! here on the sample grid. All relations are reported with a margin so the
//! caller decides how strict to be.

use serde::Serialize;
use thiserror::Error;

use crate::fnspace::{HistorySegment, SegmentError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("rate mu[{index}] = {value} must be finite and nonnegative")]
    InvalidRate { index: usize, value: f64 },
    #[error("cone has dimension {cone}, segment has {segment}")]
    DimensionMismatch { cone: usize, segment: usize },
    #[error("argument {0} is not strictly inside the cone (margin {1:e})")]
    NotInterior(&'static str, f64),
    #[error("infinite distance at this resolution: no alpha below e^{0}")]
    InfiniteDistance(f64),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

/// Rates `mu_i >= 0` defining `B = diag(-mu_1, ..., -mu_m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSpec {
    mu: Vec<f64>,
}

impl ConeSpec {
    pub fn new(mu: Vec<f64>) -> Result<Self, ConeError> {
        for (index, &value) in mu.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConeError::InvalidRate { index, value });
            }
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_dim(&self, seg: &HistorySegment) -> Result<(), ConeError> {
        if seg.dim() == self.dim() {
            Ok(())
        } else {
            Err(ConeError::DimensionMismatch {
                cone: self.dim(),
                segment: seg.dim(),
            })
        }
    }
}

/// Where the smallest slack of a relation was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    /// 1-based component index.
    pub component: usize,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub holds: bool,
    pub margin: f64,
    /// `holds` is `margin >= threshold`.
    pub threshold: f64,
    pub location: Option<GridPoint>,
}

impl OrderReport {
    fn from_margin(margin: f64, location: Option<GridPoint>, threshold: f64) -> Self {
        Self {
            holds: margin >= threshold,
            margin,
            threshold,
            location,
        }
    }
}

struct MinTracker {
    margin: f64,
    location: Option<GridPoint>,
}

impl MinTracker {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            location: None,
        }
    }

    fn offer(&mut self, value: f64, component: usize, s: f64) {
        if value < self.margin || self.location.is_none() {
            self.margin = value;
            self.location = Some(GridPoint {
                component: component + 1,
                s,
            });
        }
    }
}

/// Slack of `phi_i' + mu_i phi_i` at every node. Without derivative samples
/// the difference quotient `(phi_{k+1} e^{mu h} - phi_k) / h` is used instead.
fn growth_slack(seg: &HistorySegment, i: usize, mu: f64, mut visit: impl FnMut(f64, f64)) {
    let values = seg.values(i);
    match seg.derivs(i) {
        Some(d) => {
            for (k, (v, dv)) in values.iter().zip(d).enumerate() {
                visit(dv + mu * v, seg.node(i, k));
            }
        }
        None => {
            let h = seg.step(i);
            let grow = (mu * h).exp();
            for k in 0..values.len() - 1 {
                visit((values[k + 1] * grow - values[k]) / h, seg.node(i, k));
            }
        }
    }
}

/// Tests `phi` in `K_B`: margin is the smallest of `phi_i` and
/// `phi_i' + mu_i phi_i` over the grid; holds when margin `>= -tol`.
pub fn cone_contains(
    phi: &HistorySegment,
    cone: &ConeSpec,
    tol: f64,
) -> Result<OrderReport, ConeError> {
    cone.check_dim(phi)?;
    let mut min = MinTracker::new();
    for (i, &mu) in cone.mu.iter().enumerate() {
        for (k, &v) in phi.values(i).iter().enumerate() {
            min.offer(v, i, phi.node(i, k));
        }
        growth_slack(phi, i, mu, |slack, s| min.offer(slack, i, s));
    }
    Ok(OrderReport::from_margin(min.margin, min.location, -tol))
}

/// `phi <=_B psi`, i.e. `psi - phi` in `K_B`.
pub fn leq_b(
    phi: &HistorySegment,
    psi: &HistorySegment,
    cone: &ConeSpec,
    tol: f64,
) -> Result<OrderReport, ConeError> {
    cone_contains(&psi.sub(phi)?, cone, tol)
}

/// Strict membership in the interior of the Lipschitz cone: margin is the
/// smallest of `phi_i(-r_i)` and `phi_i' + mu_i phi_i`; holds when
/// margin `>= tol`. The margin plays the role of the interior radius.
pub fn in_interior(
    phi: &HistorySegment,
    cone: &ConeSpec,
    tol: f64,
) -> Result<OrderReport, ConeError> {
    cone.check_dim(phi)?;
    if !phi.has_derivs() {
        return Err(SegmentError::MissingDerivatives.into());
    }
    let mut min = MinTracker::new();
    for (i, &mu) in cone.mu.iter().enumerate() {
        min.offer(phi.values(i)[0], i, -phi.delay(i));
        growth_slack(phi, i, mu, |slack, s| min.offer(slack, i, s));
    }
    Ok(OrderReport::from_margin(min.margin, min.location, tol))
}

/// `phi <<_B psi`, i.e. `psi - phi` in the interior.
pub fn ll_b(
    phi: &HistorySegment,
    psi: &HistorySegment,
    cone: &ConeSpec,
    tol: f64,
) -> Result<OrderReport, ConeError> {
    in_interior(&psi.sub(phi)?, cone, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartMetricOptions {
    /// Absolute accuracy of the returned `ln alpha`.
    pub tol: f64,
    /// Largest `ln alpha` searched before declaring the distance infinite.
    pub ln_alpha_max: f64,
    /// Slack given to the order oracle.
    pub order_tol: f64,
}

impl Default for PartMetricOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            ln_alpha_max: 30.0,
            order_tol: 0.0,
        }
    }
}

/// Part metric `p(phi, psi) = inf { ln alpha : phi/alpha <=_B psi <=_B alpha phi }`
/// by bisection on `ln alpha`, using [`leq_b`] as the membership oracle.
/// The result is within `opts.tol` above the infimum.
pub fn part_metric(
    phi: &HistorySegment,
    psi: &HistorySegment,
    cone: &ConeSpec,
    opts: &PartMetricOptions,
) -> Result<f64, ConeError> {
    for (name, seg) in [("phi", phi), ("psi", psi)] {
        let rep = in_interior(seg, cone, 0.0)?;
        if !(rep.margin > 0.0) {
            return Err(ConeError::NotInterior(name, rep.margin));
        }
    }
    if !phi.same_grid(psi) {
        return Err(SegmentError::GridMismatch.into());
    }
    let feasible = |ln_alpha: f64| -> Result<bool, ConeError> {
        let alpha = ln_alpha.exp();
        let below = leq_b(&phi.scaled(1.0 / alpha), psi, cone, opts.order_tol)?;
        if !below.holds {
            return Ok(false);
        }
        Ok(leq_b(psi, &phi.scaled(alpha), cone, opts.order_tol)?.holds)
    };
    if feasible(0.0)? {
        return Ok(0.0);
    }
    if !feasible(opts.ln_alpha_max)? {
        return Err(ConeError::InfiniteDistance(opts.ln_alpha_max));
    }
    let (mut lo, mut hi) = (0.0, opts.ln_alpha_max);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
