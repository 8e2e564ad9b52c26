//! Sampled elements of the phase space `C([-r1,0]) x ... x C([-rm,0])`.
//!
//! A [`HistorySegment`] holds one uniformly sampled function per component,
//! each on its own interval `[-r_i, 0]`. Derivative samples are optional;
//! when present, evaluation switches from linear to cubic Hermite
//! interpolation and the Lipschitz norm and cone-interior tests become
//! available.

use std::io::{self, Write};

use thiserror::Error;

/// Relative slack used when matching sample counts to `delay / step` and
/// when snapping evaluation points onto grid nodes.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("segment has no components")]
    Empty,
    #[error("component {component}: expected {expected} samples, got {got}")]
    InconsistentLength {
        component: usize,
        expected: usize,
        got: usize,
    },
    #[error("component {component}: need at least 2 samples")]
    TooFewSamples { component: usize },
    #[error("step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("component {component}: delay must be positive and finite, got {delay}")]
    NonPositiveDelay { component: usize, delay: f64 },
    #[error("{got} delays given for {expected} components")]
    DelayCount { expected: usize, got: usize },
    #[error("component {component}: s = {s} outside [{lo}, 0]")]
    OutOfRange { component: usize, s: f64, lo: f64 },
    #[error("component index {0} out of range")]
    NoSuchComponent(usize),
    #[error("derivative samples required")]
    MissingDerivatives,
    #[error("segments live on different grids")]
    GridMismatch,
}

/// Which norm [`HistorySegment::norm`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Sup,
    /// `sup |phi| + sup |phi'|`, the derivative-sample proxy for the
    /// Lipschitz norm.
    Lipschitz,
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    delay: f64,
    step: f64,
    values: Vec<f64>,
    derivs: Option<Vec<f64>>,
}

impl Component {
    fn len(&self) -> usize {
        self.values.len()
    }

    fn node(&self, k: usize) -> f64 {
        if k + 1 == self.len() {
            0.0
        } else {
            -self.delay + k as f64 * self.step
        }
    }

    /// Locates `s` on the grid: either exactly on node `k`, or inside cell
    /// `[k, k+1]` at local coordinate `u` in `(0, 1)`.
    fn locate(&self, s: f64) -> Located {
        let x = (s + self.delay) / self.step;
        let nearest = x.round();
        if (x - nearest).abs() <= GRID_EPS {
            let k = (nearest.max(0.0) as usize).min(self.len() - 1);
            return Located::Node(k);
        }
        let k = (x.floor().max(0.0) as usize).min(self.len() - 2);
        Located::Cell(k, x - k as f64)
    }

    fn eval(&self, s: f64) -> f64 {
        match self.locate(s) {
            Located::Node(k) => self.values[k],
            Located::Cell(k, u) => {
                let (y0, y1) = (self.values[k], self.values[k + 1]);
                match &self.derivs {
                    Some(d) => hermite(u, self.step, y0, y1, d[k], d[k + 1]),
                    None => y0 + u * (y1 - y0),
                }
            }
        }
    }

    fn eval_deriv(&self, s: f64) -> f64 {
        match (self.locate(s), &self.derivs) {
            (Located::Node(k), Some(d)) => d[k],
            (Located::Cell(k, u), Some(d)) => hermite_deriv(
                u,
                self.step,
                self.values[k],
                self.values[k + 1],
                d[k],
                d[k + 1],
            ),
            (Located::Node(k), None) => {
                let k = k.min(self.len() - 2);
                (self.values[k + 1] - self.values[k]) / self.step
            }
            (Located::Cell(k, _), None) => (self.values[k + 1] - self.values[k]) / self.step,
        }
    }
}

enum Located {
    Node(usize),
    Cell(usize, f64),
}

/// Cubic Hermite interpolant on a cell of width `h` at local coordinate `u`.
pub(crate) fn hermite(u: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Time derivative of [`hermite`].
pub(crate) fn hermite_deriv(u: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let u2 = u * u;
    let dh00 = 6.0 * u2 - 6.0 * u;
    let dh10 = 3.0 * u2 - 4.0 * u + 1.0;
    let dh01 = -6.0 * u2 + 6.0 * u;
    let dh11 = 3.0 * u2 - 2.0 * u;
    (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
}

/// Per-component sample layout shared by segments that must be comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGrid {
    delays: Vec<f64>,
    counts: Vec<usize>,
}

impl SegmentGrid {
    /// Grid whose spacing does not exceed `step` on any component. When a
    /// delay is an integer multiple of `step` the spacing is exactly `step`.
    pub fn with_max_step(delays: &[f64], step: f64) -> Result<Self, SegmentError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(SegmentError::NonPositiveStep(step));
        }
        let mut counts = Vec::with_capacity(delays.len());
        for (i, &r) in delays.iter().enumerate() {
            check_delay(i, r)?;
            let cells = r / step;
            let cells = if (cells - cells.round()).abs() <= GRID_EPS * cells.max(1.0) {
                cells.round()
            } else {
                cells.ceil()
            };
            counts.push((cells as usize).max(1) + 1);
        }
        if counts.is_empty() {
            return Err(SegmentError::Empty);
        }
        Ok(Self {
            delays: delays.to_vec(),
            counts,
        })
    }

    pub fn with_counts(delays: &[f64], counts: &[usize]) -> Result<Self, SegmentError> {
        if delays.is_empty() {
            return Err(SegmentError::Empty);
        }
        if delays.len() != counts.len() {
            return Err(SegmentError::DelayCount {
                expected: counts.len(),
                got: delays.len(),
            });
        }
        for (i, (&r, &n)) in delays.iter().zip(counts).enumerate() {
            check_delay(i, r)?;
            if n < 2 {
                return Err(SegmentError::TooFewSamples { component: i });
            }
        }
        Ok(Self {
            delays: delays.to_vec(),
            counts: counts.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn step(&self, component: usize) -> f64 {
        self.delays[component] / (self.counts[component] - 1) as f64
    }

    /// Sample time of node `k` of `component`; the last node is exactly 0.
    pub fn node(&self, component: usize, k: usize) -> f64 {
        if k + 1 == self.counts[component] {
            0.0
        } else {
            -self.delays[component] + k as f64 * self.step(component)
        }
    }
}

fn check_delay(component: usize, delay: f64) -> Result<(), SegmentError> {
    if delay > 0.0 && delay.is_finite() {
        Ok(())
    } else {
        Err(SegmentError::NonPositiveDelay { component, delay })
    }
}

/// A sampled state `phi` of the delay system.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    components: Vec<Component>,
}

impl HistorySegment {
    /// Builds a segment from per-component samples on `[-r_i, 0]` with common
    /// spacing `step`; derivatives are filled in by finite differences.
    pub fn new(values: Vec<Vec<f64>>, delays: &[f64], step: f64) -> Result<Self, SegmentError> {
        let mut seg = Self::values_only(values, delays, step)?;
        for c in &mut seg.components {
            c.derivs = Some(finite_difference(&c.values, c.step));
        }
        Ok(seg)
    }

    /// Like [`HistorySegment::new`] but with caller-supplied derivatives.
    pub fn with_derivs(
        values: Vec<Vec<f64>>,
        derivs: Vec<Vec<f64>>,
        delays: &[f64],
        step: f64,
    ) -> Result<Self, SegmentError> {
        let mut seg = Self::values_only(values, delays, step)?;
        if derivs.len() != seg.dim() {
            return Err(SegmentError::DelayCount {
                expected: seg.dim(),
                got: derivs.len(),
            });
        }
        for (i, (c, d)) in seg.components.iter_mut().zip(derivs).enumerate() {
            if d.len() != c.len() {
                return Err(SegmentError::InconsistentLength {
                    component: i,
                    expected: c.len(),
                    got: d.len(),
                });
            }
            c.derivs = Some(d);
        }
        Ok(seg)
    }

    /// Segment without derivative samples: linear interpolation only.
    pub fn values_only(
        values: Vec<Vec<f64>>,
        delays: &[f64],
        step: f64,
    ) -> Result<Self, SegmentError> {
        if values.is_empty() {
            return Err(SegmentError::Empty);
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(SegmentError::NonPositiveStep(step));
        }
        if delays.len() != values.len() {
            return Err(SegmentError::DelayCount {
                expected: values.len(),
                got: delays.len(),
            });
        }
        let mut components = Vec::with_capacity(values.len());
        for (i, (v, &r)) in values.into_iter().zip(delays).enumerate() {
            check_delay(i, r)?;
            let cells = r / step;
            let expected = cells.round() as usize + 1;
            if (cells - cells.round()).abs() > 1e-6 * cells.max(1.0) || v.len() != expected {
                return Err(SegmentError::InconsistentLength {
                    component: i,
                    expected,
                    got: v.len(),
                });
            }
            if v.len() < 2 {
                return Err(SegmentError::TooFewSamples { component: i });
            }
            components.push(Component {
                delay: r,
                step: r / (v.len() - 1) as f64,
                values: v,
                derivs: None,
            });
        }
        Ok(Self { components })
    }

    /// Segment on `grid` from node values and optional node derivatives.
    pub fn from_samples(
        grid: &SegmentGrid,
        values: Vec<Vec<f64>>,
        derivs: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, SegmentError> {
        if values.len() != grid.dim() {
            return Err(SegmentError::DelayCount {
                expected: values.len(),
                got: grid.dim(),
            });
        }
        let mut derivs = derivs.map(|d| d.into_iter().map(Some).collect::<Vec<_>>());
        if let Some(d) = &derivs {
            if d.len() != grid.dim() {
                return Err(SegmentError::MissingDerivatives);
            }
        }
        let mut components = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            let n = grid.counts[i];
            if v.len() != n {
                return Err(SegmentError::InconsistentLength {
                    component: i,
                    expected: n,
                    got: v.len(),
                });
            }
            let d = derivs.as_mut().and_then(|d| d[i].take());
            if let Some(d) = &d {
                if d.len() != n {
                    return Err(SegmentError::InconsistentLength {
                        component: i,
                        expected: n,
                        got: d.len(),
                    });
                }
            }
            components.push(Component {
                delay: grid.delays[i],
                step: grid.step(i),
                values: v,
                derivs: d,
            });
        }
        Ok(Self { components })
    }

    /// Samples `f(i, s)` and its derivative `df(i, s)` on `grid`.
    pub fn sample(
        grid: &SegmentGrid,
        f: impl Fn(usize, f64) -> f64,
        df: impl Fn(usize, f64) -> f64,
    ) -> Self {
        let components = (0..grid.dim())
            .map(|i| {
                let n = grid.counts[i];
                let nodes: Vec<f64> = (0..n).map(|k| grid.node(i, k)).collect();
                Component {
                    delay: grid.delays[i],
                    step: grid.step(i),
                    values: nodes.iter().map(|&s| f(i, s)).collect(),
                    derivs: Some(nodes.iter().map(|&s| df(i, s)).collect()),
                }
            })
            .collect();
        Self { components }
    }

    /// Constant segment `s -> value[i]` on `grid`.
    pub fn constant(grid: &SegmentGrid, value: &[f64]) -> Self {
        Self::sample(grid, |i, _| value[i], |_, _| 0.0)
    }

    /// The zero element on `grid`.
    pub fn zero(grid: &SegmentGrid) -> Self {
        Self::sample(grid, |_, _| 0.0, |_, _| 0.0)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn grid(&self) -> SegmentGrid {
        SegmentGrid {
            delays: self.components.iter().map(|c| c.delay).collect(),
            counts: self.components.iter().map(Component::len).collect(),
        }
    }

    pub fn delay(&self, component: usize) -> f64 {
        self.components[component].delay
    }

    pub fn max_delay(&self) -> f64 {
        self.components.iter().map(|c| c.delay).fold(0.0, f64::max)
    }

    pub fn step(&self, component: usize) -> f64 {
        self.components[component].step
    }

    pub fn len(&self, component: usize) -> usize {
        self.components[component].len()
    }

    pub fn node(&self, component: usize, k: usize) -> f64 {
        self.components[component].node(k)
    }

    pub fn values(&self, component: usize) -> &[f64] {
        &self.components[component].values
    }

    pub fn derivs(&self, component: usize) -> Option<&[f64]> {
        self.components[component].derivs.as_deref()
    }

    pub fn has_derivs(&self) -> bool {
        self.components.iter().all(|c| c.derivs.is_some())
    }

    /// Value at the right end point, `phi(0)`.
    pub fn head(&self) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.values[c.len() - 1])
            .collect()
    }

    /// Value at the left end point of each component, `phi_i(-r_i)`.
    pub fn tail(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.values[0]).collect()
    }

    fn component(&self, component: usize, s: f64) -> Result<&Component, SegmentError> {
        let c = self
            .components
            .get(component)
            .ok_or(SegmentError::NoSuchComponent(component))?;
        let slack = GRID_EPS * c.step;
        if !(s >= -c.delay - slack && s <= slack) {
            return Err(SegmentError::OutOfRange {
                component,
                s,
                lo: -c.delay,
            });
        }
        Ok(c)
    }

    /// Interpolated value at `s` in `[-r_i, 0]`; exact at grid nodes.
    pub fn eval(&self, s: f64, component: usize) -> Result<f64, SegmentError> {
        Ok(self.component(component, s)?.eval(s))
    }

    /// Derivative of the interpolant at `s`.
    pub fn eval_deriv(&self, s: f64, component: usize) -> Result<f64, SegmentError> {
        Ok(self.component(component, s)?.eval_deriv(s))
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64, SegmentError> {
        let sup = self
            .components
            .iter()
            .flat_map(|c| c.values.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        match kind {
            NormKind::Sup => Ok(sup),
            NormKind::Lipschitz => {
                let mut slope = 0.0_f64;
                for c in &self.components {
                    let d = c.derivs.as_ref().ok_or(SegmentError::MissingDerivatives)?;
                    slope = d.iter().fold(slope, |m, v| m.max(v.abs()));
                }
                Ok(sup + slope)
            }
        }
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|(a, b)| a.len() == b.len() && a.delay == b.delay)
    }

    /// `alpha * self + other`, with `None` standing for the zero segment.
    /// Derivatives are combined when both operands carry them.
    pub fn axpy(&self, alpha: f64, other: Option<&Self>) -> Result<Self, SegmentError> {
        let Some(other) = other else {
            return Ok(self.scaled(alpha));
        };
        if !self.same_grid(other) {
            return Err(SegmentError::GridMismatch);
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| Component {
                delay: a.delay,
                step: a.step,
                values: a
                    .values
                    .iter()
                    .zip(&b.values)
                    .map(|(x, y)| alpha * x + y)
                    .collect(),
                derivs: match (&a.derivs, &b.derivs) {
                    (Some(da), Some(db)) => {
                        Some(da.iter().zip(db).map(|(x, y)| alpha * x + y).collect())
                    }
                    _ => None,
                },
            })
            .collect();
        Ok(Self { components })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| Component {
                delay: c.delay,
                step: c.step,
                values: c.values.iter().map(|x| alpha * x).collect(),
                derivs: c
                    .derivs
                    .as_ref()
                    .map(|d| d.iter().map(|x| alpha * x).collect()),
            })
            .collect();
        Self { components }
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, SegmentError> {
        other.axpy(-1.0, Some(self))
    }

    /// Largest pointwise distance over all components and nodes.
    pub fn sup_distance(&self, other: &Self) -> Result<f64, SegmentError> {
        self.sub(other)?.norm(NormKind::Sup)
    }

    /// Debug dump with columns `component,s,value,deriv` (1-based component).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "component,s,value,deriv")?;
        for (i, c) in self.components.iter().enumerate() {
            for k in 0..c.len() {
                let d = c
                    .derivs
                    .as_ref()
                    .map_or(String::new(), |d| d[k].to_string());
                writeln!(out, "{},{},{},{}", i + 1, c.node(k), c.values[k], d)?;
            }
        }
        Ok(())
    }
}

/// Fourth-order finite differences (centered in the interior, one-sided at
/// the ends), falling back to lower order on very short grids.
fn finite_difference(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    match n {
        0 | 1 => vec![0.0; n],
        2 => {
            let d = (f[1] - f[0]) / h;
            vec![d, d]
        }
        3 | 4 => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
            for k in 1..n - 1 {
                d[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
            }
            d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
            d
        }
        _ => {
            let mut d = vec![0.0; n];
            let h12 = 12.0 * h;
            d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / h12;
            d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / h12;
            for k in 2..n - 2 {
                d[k] = (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]) / h12;
            }
            let m = n - 1;
            d[m - 1] =
                (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) / h12;
            d[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3]
                + 3.0 * f[m - 4])
                / h12;
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sampled(f: impl Fn(f64) -> f64, r: f64, step: f64) -> Vec<f64> {
        let n = (r / step).round() as usize + 1;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    f(0.0)
                } else {
                    f(-r + k as f64 * step)
                }
            })
            .collect()
    }

    #[test]
    fn constant_history() {
        let seg = HistorySegment::new(vec![vec![1.0; 11]], &[1.0], 0.1).unwrap();
        assert_eq!(seg.len(0), 11);
        assert!(seg.values(0).iter().all(|&v| v == 1.0));
        assert!(seg.derivs(0).unwrap().iter().all(|&d| d.abs() < 1e-12));
        assert_eq!(seg.eval(-0.37, 0).unwrap(), 1.0);
    }

    #[test]
    fn empty_values_rejected() {
        assert_eq!(
            HistorySegment::new(vec![], &[], 0.1),
            Err(SegmentError::Empty)
        );
        assert!(matches!(
            HistorySegment::new(vec![vec![]], &[1.0], 0.1),
            Err(SegmentError::InconsistentLength { .. })
        ));
    }

    #[test]
    fn bad_lengths_and_steps_rejected() {
        assert!(matches!(
            HistorySegment::new(vec![vec![1.0; 10]], &[1.0], 0.1),
            Err(SegmentError::InconsistentLength {
                expected: 11,
                got: 10,
                ..
            })
        ));
        assert_eq!(
            HistorySegment::new(vec![vec![1.0; 11]], &[1.0], 0.0),
            Err(SegmentError::NonPositiveStep(0.0))
        );
        assert!(matches!(
            HistorySegment::new(vec![vec![1.0; 11]], &[-1.0], 0.1),
            Err(SegmentError::NonPositiveDelay { .. })
        ));
    }

    #[test]
    fn finite_difference_derivs_of_exponential() {
        // derivative of e^{-s} is -e^{-s}; error must shrink at least like step^2
        let mut prev = f64::INFINITY;
        for &step in &[0.1, 0.05, 0.025] {
            let seg = HistorySegment::new(vec![sampled(|s| (-s).exp(), 1.0, step)], &[1.0], step)
                .unwrap();
            let err = (0..seg.len(0))
                .map(|k| (seg.derivs(0).unwrap()[k] + (-seg.node(0, k)).exp()).abs())
                .fold(0.0, f64::max);
            assert!(err <= 2.0 * step * step, "step {step}: err {err}");
            assert!(err < prev / 3.9);
            prev = err;
        }
    }

    #[test]
    fn linear_interpolation_of_identity() {
        let seg = HistorySegment::values_only(vec![sampled(|s| s, 1.0, 0.1)], &[1.0], 0.1).unwrap();
        assert!((seg.eval(-0.5, 0).unwrap() + 0.5).abs() < 1e-15);
        assert!((seg.eval(-0.537, 0).unwrap() + 0.537).abs() < 1e-15);
    }

    #[test]
    fn hermite_interpolation_of_sine() {
        let step = 0.05;
        let seg = HistorySegment::with_derivs(
            vec![sampled(f64::sin, 1.0, step)],
            vec![sampled(f64::cos, 1.0, step)],
            &[1.0],
            step,
        )
        .unwrap();
        assert!((seg.eval(-0.42, 0).unwrap() - (-0.42_f64).sin()).abs() < 1e-6);
        // finite-difference derivatives are accurate enough for the same bound
        let fd = HistorySegment::new(vec![sampled(f64::sin, 1.0, step)], &[1.0], step).unwrap();
        assert!((fd.eval(-0.42, 0).unwrap() - (-0.42_f64).sin()).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_eval() {
        let seg = HistorySegment::new(vec![vec![1.0; 11]], &[1.0], 0.1).unwrap();
        assert!(matches!(
            seg.eval(0.1, 0),
            Err(SegmentError::OutOfRange { .. })
        ));
        assert!(seg.eval(-1.2, 0).is_err());
        assert_eq!(seg.eval(-0.5, 3), Err(SegmentError::NoSuchComponent(3)));
    }

    #[test]
    fn norms() {
        let c2 = HistorySegment::new(vec![vec![2.0; 11]], &[1.0], 0.1).unwrap();
        assert_eq!(c2.norm(NormKind::Sup).unwrap(), 2.0);
        assert!((c2.norm(NormKind::Lipschitz).unwrap() - 2.0).abs() < 1e-12);

        let id = HistorySegment::new(vec![sampled(|s| s, 1.0, 0.1)], &[1.0], 0.1).unwrap();
        assert!((id.norm(NormKind::Lipschitz).unwrap() - 2.0).abs() < 1e-12);

        let bare = HistorySegment::values_only(vec![vec![2.0; 11]], &[1.0], 0.1).unwrap();
        assert_eq!(
            bare.norm(NormKind::Lipschitz),
            Err(SegmentError::MissingDerivatives)
        );
    }

    #[test]
    fn axpy_examples() {
        let grid = SegmentGrid::with_max_step(&[1.0, 0.5], 0.1).unwrap();
        let two = HistorySegment::constant(&grid, &[2.0, 2.0]);
        let one = HistorySegment::constant(&grid, &[1.0, 1.0]);
        let phi = HistorySegment::sample(&grid, |i, s| s * (i + 1) as f64, |i, _| (i + 1) as f64);

        assert_eq!(phi.axpy(0.0, Some(&one)).unwrap(), one);
        assert_eq!(phi.axpy(1.0, None).unwrap(), phi);
        assert_eq!(two.axpy(0.5, Some(&one)).unwrap(), two);

        let other = SegmentGrid::with_max_step(&[1.0, 0.5], 0.05).unwrap();
        assert_eq!(
            phi.axpy(1.0, Some(&HistorySegment::zero(&other))),
            Err(SegmentError::GridMismatch)
        );
    }

    #[test]
    fn interpolation_converges_at_expected_rates() {
        let f = |s: f64| (3.0 * s).sin() + s * s;
        let df = |s: f64| 3.0 * (3.0 * s).cos() + 2.0 * s;
        let probe: Vec<f64> = (0..97).map(|k| -1.0 + (k as f64 + 0.31) / 97.3).collect();
        let err = |seg: &HistorySegment| {
            probe
                .iter()
                .map(|&s| (seg.eval(s, 0).unwrap() - f(s)).abs())
                .fold(0.0, f64::max)
        };
        let (mut lin_prev, mut her_prev) = (0.0, 0.0);
        for (j, &step) in [0.1, 0.05, 0.025].iter().enumerate() {
            let lin =
                HistorySegment::values_only(vec![sampled(f, 1.0, step)], &[1.0], step).unwrap();
            let her = HistorySegment::with_derivs(
                vec![sampled(f, 1.0, step)],
                vec![sampled(df, 1.0, step)],
                &[1.0],
                step,
            )
            .unwrap();
            let (el, eh) = (err(&lin), err(&her));
            if j > 0 {
                assert!(lin_prev / el > 3.5, "linear ratio {}", lin_prev / el);
                assert!(her_prev / eh > 12.0, "hermite ratio {}", her_prev / eh);
            }
            lin_prev = el;
            her_prev = eh;
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let grid = SegmentGrid::with_max_step(&[0.2], 0.1).unwrap();
        let seg = HistorySegment::constant(&grid, &[1.5]);
        let mut buf = Vec::new();
        seg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("component,s,value,deriv"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn grid_with_max_step_respects_multiples() {
        let g = SegmentGrid::with_max_step(&[0.3, 0.25], 0.1).unwrap();
        assert_eq!(g.counts(), &[4, 4]);
        assert!(g.step(1) <= 0.1);
        assert_eq!(g.node(0, 3), 0.0);
        assert_eq!(g.node(0, 0), -0.3);
    }

    proptest! {
        #[test]
        fn eval_exact_at_nodes(vals in prop::collection::vec(-5.0f64..5.0, 2..40), r in 0.1f64..3.0) {
            let n = vals.len();
            let step = r / (n - 1) as f64;
            let seg = HistorySegment::new(vec![vals.clone()], &[r], step).unwrap();
            for (k, &v) in vals.iter().enumerate() {
                prop_assert_eq!(seg.eval(seg.node(0, k), 0).unwrap(), v);
            }
        }

        #[test]
        fn sup_norm_is_absolutely_homogeneous(
            vals in prop::collection::vec(-5.0f64..5.0, 2..40),
            alpha in -4.0f64..4.0,
        ) {
            let n = vals.len();
            let seg = HistorySegment::new(vec![vals], &[1.0], 1.0 / (n - 1) as f64).unwrap();
            let lhs = seg.axpy(alpha, None).unwrap().norm(NormKind::Sup).unwrap();
            let rhs = alpha.abs() * seg.norm(NormKind::Sup).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
