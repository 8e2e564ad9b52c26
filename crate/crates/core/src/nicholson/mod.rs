//! Nicholson patch models with almost periodic coefficients
//!
//! ```text
//! y_i'(t) = -d_i(t) y_i(t) + sum_j a_ij(t) y_j(t)
//!           + beta_i(t) y_i(t - r_i) exp(-c_i(t) y_i(t - r_i))
//! ```
//!
//! A point of the hull is represented by a time offset: the model evaluates
//! every coefficient at `t + offset`.

mod conditions;
mod transform;

pub use conditions::{
    check_monotone, check_relaxed, cone_from_model, special_solution_conditions,
    superequilibrium_radius, validate_model, ConditionCheck, ConditionReport, ConeConstruction,
    Relation, SupersolutionRadius, Verdict, DEFAULT_RADIUS_CAP,
};
pub use transform::{transform_mean, FactorBounds, MeanTransform};

use thiserror::Error;

use crate::coeffs::{Modulated, QuasiPeriodic, ScanWindow};
use crate::fnspace::{HistorySegment, SegmentError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model needs at least one patch")]
    Empty,
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("patch {patch}: delay must be positive and finite, got {delay}")]
    NonPositiveDelay { patch: usize, delay: f64 },
    #[error(
        "patch {patch}: r * beta+ = {product} exceeds e^2, the exponential rate would be {mu}"
    )]
    NegativeRate { patch: usize, product: f64, mu: f64 },
    #[error("patch {patch}: birth rate upper bound {bound} is not positive")]
    NonPositiveBirth { patch: usize, bound: f64 },
    #[error("patch {patch}: no super-equilibrium radius below {cap}")]
    NoRadius { patch: usize, cap: f64 },
    #[error("special-solution conditions are for scalar models, got {0} patches")]
    NotScalar(usize),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NicholsonModel {
    delays: Vec<f64>,
    decay: Vec<QuasiPeriodic>,
    /// `migration[i][j]` is the rate from patch `j` into patch `i`.
    migration: Vec<Vec<Modulated>>,
    birth: Vec<Modulated>,
    crowding: Vec<Modulated>,
    offset: f64,
}

impl NicholsonModel {
    pub fn new(
        delays: Vec<f64>,
        decay: Vec<QuasiPeriodic>,
        migration: Vec<Vec<Modulated>>,
        birth: Vec<Modulated>,
        crowding: Vec<Modulated>,
    ) -> Result<Self, ModelError> {
        let m = delays.len();
        if m == 0 {
            return Err(ModelError::Empty);
        }
        for (patch, &delay) in delays.iter().enumerate() {
            if !(delay > 0.0 && delay.is_finite()) {
                return Err(ModelError::NonPositiveDelay {
                    patch: patch + 1,
                    delay,
                });
            }
        }
        let check = |what, got: usize| {
            if got == m {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch {
                    what,
                    expected: m,
                    got,
                })
            }
        };
        check("decay", decay.len())?;
        check("birth", birth.len())?;
        check("crowding", crowding.len())?;
        check("migration rows", migration.len())?;
        for row in &migration {
            check("migration columns", row.len())?;
        }
        Ok(Self {
            delays,
            decay,
            migration,
            birth,
            crowding,
            offset: 0.0,
        })
    }

    /// Single patch model without migration.
    pub fn scalar(
        delay: f64,
        decay: QuasiPeriodic,
        birth: QuasiPeriodic,
        crowding: QuasiPeriodic,
    ) -> Result<Self, ModelError> {
        Self::new(
            vec![delay],
            vec![decay],
            vec![vec![QuasiPeriodic::zero().into()]],
            vec![birth.into()],
            vec![crowding.into()],
        )
    }

    /// Scalar model with constant coefficients.
    pub fn constant_scalar(
        delay: f64,
        decay: f64,
        birth: f64,
        crowding: f64,
    ) -> Result<Self, ModelError> {
        Self::scalar(
            delay,
            QuasiPeriodic::constant(decay),
            QuasiPeriodic::constant(birth),
            QuasiPeriodic::constant(crowding),
        )
    }

    /// The same system at the base point translated by `offset`.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// The base point moved forward by `dt`.
    pub fn advanced(&self, dt: f64) -> Self {
        self.clone().with_offset(self.offset + dt)
    }

    pub fn dim(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn decay(&self) -> &[QuasiPeriodic] {
        &self.decay
    }

    pub fn migration(&self) -> &[Vec<Modulated>] {
        &self.migration
    }

    pub fn birth(&self) -> &[Modulated] {
        &self.birth
    }

    pub fn crowding(&self) -> &[Modulated] {
        &self.crowding
    }

    /// Default scan window covering every frequency in the model.
    pub fn default_window(&self) -> ScanWindow {
        let freqs = self
            .decay
            .iter()
            .flat_map(|c| c.frequencies())
            .chain(self.birth.iter().flat_map(|c| c.frequencies()))
            .chain(self.crowding.iter().flat_map(|c| c.frequencies()))
            .chain(
                self.migration
                    .iter()
                    .flatten()
                    .flat_map(|c| c.frequencies()),
            );
        ScanWindow::for_frequencies(freqs.collect::<Vec<_>>())
    }

    /// Right-hand side from the current state `y(t)` and the delayed values
    /// `y_i(t - r_i)`.
    pub fn rhs_point(&self, t: f64, current: &[f64], delayed: &[f64], out: &mut [f64]) {
        let tau = t + self.offset;
        for i in 0..self.dim() {
            let mut v = -self.decay[i].eval(tau) * current[i];
            for (j, a) in self.migration[i].iter().enumerate() {
                if j != i && !a.is_zero() {
                    v += a.eval(tau) * current[j];
                }
            }
            let x = delayed[i];
            if x != 0.0 {
                v += self.birth[i].eval(tau) * x * (-self.crowding[i].eval(tau) * x).exp();
            }
            out[i] = v;
        }
    }

    /// Right-hand side at time `t` for the state segment `seg`.
    pub fn rhs(&self, t: f64, seg: &HistorySegment) -> Result<Vec<f64>, ModelError> {
        if seg.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                what: "segment",
                expected: self.dim(),
                got: seg.dim(),
            });
        }
        let current = seg.head();
        let delayed: Vec<f64> = (0..self.dim())
            .map(|i| seg.eval(-self.delays[i], i))
            .collect::<Result<_, _>>()?;
        let mut out = vec![0.0; self.dim()];
        self.rhs_point(t, &current, &delayed, &mut out);
        Ok(out)
    }
}
