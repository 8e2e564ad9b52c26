//! Mean-value change of variables `z_i = e^{h_i(t)} y_i`, where `h_i` is the
//! bounded primitive of `d_i - mean(d_i)`. The transformed system has
//! constant decay rates.

use serde::Serialize;

use super::conditions::{cone_from_model, ConeConstruction};
use super::{ModelError, NicholsonModel};
use crate::coeffs::{Modulated, QuasiPeriodic};
use crate::fnspace::HistorySegment;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanTransform {
    pub model: NicholsonModel,
    /// Bounded primitives `h_i`, functions of absolute time.
    pub primitives: Vec<QuasiPeriodic>,
    /// Cone of the transformed model, when its rates are nonnegative.
    pub cone: Option<ConeConstruction>,
    pub factor_bounds: Vec<FactorBounds>,
}

/// Positive bounds on the back-transformation factor `e^{-h_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn transform_mean(model: &NicholsonModel) -> MeanTransform {
    let m = model.dim();
    let primitives: Vec<QuasiPeriodic> = model
        .decay()
        .iter()
        .map(|d| d.bounded_primitive())
        .collect();
    let modulate = |c: &Modulated, extra: &QuasiPeriodic| {
        Modulated::new(c.base().clone(), c.log_factor().add(extra))
    };
    let migration = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let a = &model.migration()[i][j];
                    if i == j || a.is_zero() {
                        a.clone()
                    } else {
                        modulate(a, &primitives[i].sub(&primitives[j]))
                    }
                })
                .collect()
        })
        .collect();
    let lagged: Vec<QuasiPeriodic> = (0..m)
        .map(|i| primitives[i].shifted(-model.delays()[i]))
        .collect();
    let birth = (0..m)
        .map(|i| modulate(&model.birth()[i], &primitives[i].sub(&lagged[i])))
        .collect();
    let crowding = (0..m)
        .map(|i| modulate(&model.crowding()[i], &lagged[i].scaled(-1.0)))
        .collect();
    let decay = model
        .decay()
        .iter()
        .map(|d| QuasiPeriodic::constant(d.mean_value()))
        .collect();
    let transformed =
        NicholsonModel::new(model.delays().to_vec(), decay, migration, birth, crowding)
            .expect("shape is inherited from a valid model")
            .with_offset(model.offset());
    let factor_bounds = primitives
        .iter()
        .map(|h| FactorBounds {
            lower: (-h.upper_bound()).exp(),
            upper: (-h.lower_bound()).exp(),
        })
        .collect();
    MeanTransform {
        cone: cone_from_model(&transformed).ok(),
        model: transformed,
        primitives,
        factor_bounds,
    }
}

impl MeanTransform {
    fn factor(&self, i: usize, t: f64) -> f64 {
        self.primitives[i].eval(t + self.model.offset()).exp()
    }

    /// Maps a state `y(t)` of the original system to `z(t)`.
    pub fn forward_state(&self, t: f64, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| self.factor(i, t) * v)
            .collect()
    }

    /// Maps a state `z(t)` of the transformed system back to `y(t)`.
    pub fn backward_state(&self, t: f64, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| v / self.factor(i, t))
            .collect()
    }

    /// Maps an initial history of the original system, given at time 0, to
    /// the corresponding history of the transformed one.
    pub fn forward_history(&self, seg: &HistorySegment) -> Result<HistorySegment, ModelError> {
        if seg.dim() != self.model.dim() {
            return Err(ModelError::DimensionMismatch {
                what: "segment",
                expected: self.model.dim(),
                got: seg.dim(),
            });
        }
        let grid = seg.grid();
        let off = self.model.offset();
        let mut values = Vec::with_capacity(seg.dim());
        let mut derivs = seg.has_derivs().then(Vec::new);
        for i in 0..seg.dim() {
            let h = &self.primitives[i];
            let nodes: Vec<f64> = (0..seg.len(i)).map(|k| seg.node(i, k)).collect();
            let y = seg.values(i);
            values.push(
                nodes
                    .iter()
                    .zip(y)
                    .map(|(&s, &v)| h.eval(s + off).exp() * v)
                    .collect(),
            );
            if let (Some(out), Some(dy)) = (derivs.as_mut(), seg.derivs(i)) {
                out.push(
                    nodes
                        .iter()
                        .zip(y.iter().zip(dy))
                        .map(|(&s, (&v, &dv))| {
                            let slope = derivative(h, s + off);
                            h.eval(s + off).exp() * (slope * v + dv)
                        })
                        .collect(),
                );
            }
        }
        Ok(HistorySegment::from_samples(&grid, values, derivs)?)
    }
}

/// `h'(t)`, which equals `d(t) - mean(d)`.
fn derivative(h: &QuasiPeriodic, t: f64) -> f64 {
    h.harmonics()
        .iter()
        .map(|k| -k.amp * k.freq * (k.freq * t + k.phase).sin())
        .sum()
}
