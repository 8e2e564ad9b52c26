//! Fixed-step method of steps for the Nicholson system: the classical
//! four-stage Runge-Kutta scheme, with delayed values taken from the initial
//! history for negative times and from a cubic Hermite dense output of the
//! computed solution otherwise.

use std::io::{self, Write};

use thiserror::Error;

use crate::fnspace::{hermite, hermite_deriv, HistorySegment, SegmentError};
use crate::nicholson::NicholsonModel;

const NODE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon must be nonnegative and finite, got {0}")]
    BadHorizon(f64),
    #[error("step {step} exceeds a quarter of the smallest delay ({limit})")]
    StepTooLarge { step: f64, limit: f64 },
    #[error("history has {got} components, model has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("history component {component} spans {got}, model delay is {expected}")]
    DelayMismatch {
        component: usize,
        expected: f64,
        got: f64,
    },
    #[error("non-finite state at t = {t}")]
    BlowUp { t: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

/// Default step: a fiftieth of the smallest delay.
pub fn default_step(model: &NicholsonModel) -> f64 {
    model.min_delay() / 50.0
}

/// Dense numerical solution on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    model: NicholsonModel,
    history: HistorySegment,
    step: f64,
    horizon: f64,
    dim: usize,
    /// Row-major node values, `states[k * dim + i] = y_i(k h)`.
    states: Vec<f64>,
    /// Right-hand side at each node, with the same layout.
    derivs: Vec<f64>,
}

pub fn integrate(
    model: &NicholsonModel,
    history: &HistorySegment,
    horizon: f64,
    step: f64,
) -> Result<Trajectory, IntegrateError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(IntegrateError::NonPositiveStep(step));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(IntegrateError::BadHorizon(horizon));
    }
    let limit = model.min_delay() / 4.0;
    if step > limit * (1.0 + 1e-12) {
        return Err(IntegrateError::StepTooLarge { step, limit });
    }
    let m = model.dim();
    if history.dim() != m {
        return Err(IntegrateError::DimensionMismatch {
            expected: m,
            got: history.dim(),
        });
    }
    for (i, &r) in model.delays().iter().enumerate() {
        if (history.delay(i) - r).abs() > 1e-12 * r {
            return Err(IntegrateError::DelayMismatch {
                component: i,
                expected: r,
                got: history.delay(i),
            });
        }
    }
    let ratio = horizon / step;
    let n = if (ratio - ratio.round()).abs() <= NODE_EPS * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };

    let mut traj = Trajectory {
        model: model.clone(),
        history: history.clone(),
        step,
        horizon,
        dim: m,
        states: Vec::with_capacity((n + 1) * m),
        derivs: Vec::with_capacity((n + 1) * m),
    };
    traj.states.extend(history.head());
    let mut f = vec![0.0; m];
    traj.eval_rhs(0.0, &traj.states[..m], &mut f)?;
    traj.derivs.extend_from_slice(&f);

    let h = step;
    let (mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut y = traj.states[..m].to_vec();
    let mut stage = vec![0.0; m];
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = &traj.derivs[k * m..(k + 1) * m].to_vec();
        for i in 0..m {
            stage[i] = y[i] + 0.5 * h * k1[i];
        }
        traj.eval_rhs(t + 0.5 * h, &stage, &mut k2)?;
        for i in 0..m {
            stage[i] = y[i] + 0.5 * h * k2[i];
        }
        traj.eval_rhs(t + 0.5 * h, &stage, &mut k3)?;
        for i in 0..m {
            stage[i] = y[i] + h * k3[i];
        }
        traj.eval_rhs(t + h, &stage, &mut k4)?;
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = (k + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::BlowUp { t: t_next });
        }
        traj.states.extend_from_slice(&y);
        traj.eval_rhs(t_next, &y, &mut f)?;
        traj.derivs.extend_from_slice(&f);
    }
    Ok(traj)
}

impl Trajectory {
    fn eval_rhs(&self, t: f64, current: &[f64], out: &mut [f64]) -> Result<(), IntegrateError> {
        let delayed: Vec<f64> = (0..self.dim)
            .map(|i| self.lookup(t - self.model.delays()[i], i))
            .collect::<Result<_, _>>()?;
        self.model.rhs_point(t, current, &delayed, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::BlowUp { t });
        }
        Ok(())
    }

    /// Value of component `i` at time `tau`, from the history when `tau < 0`.
    fn lookup(&self, tau: f64, i: usize) -> Result<f64, SegmentError> {
        if tau < 0.0 {
            self.history.eval(tau, i)
        } else {
            Ok(self.dense(tau, i).0)
        }
    }

    /// Dense output (value, derivative) at `tau >= 0` within the computed nodes.
    fn dense(&self, tau: f64, i: usize) -> (f64, f64) {
        let m = self.dim;
        let last = self.states.len() / m - 1;
        let x = tau / self.step;
        let kr = x.round();
        if (x - kr).abs() <= NODE_EPS * x.max(1.0) {
            let k = (kr as usize).min(last);
            return (self.states[k * m + i], self.derivs[k * m + i]);
        }
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        let u = x - k as f64;
        let (y0, y1) = (self.states[k * m + i], self.states[(k + 1) * m + i]);
        let (d0, d1) = (self.derivs[k * m + i], self.derivs[(k + 1) * m + i]);
        (
            hermite(u, self.step, y0, y1, d0, d1),
            hermite_deriv(u, self.step, y0, y1, d0, d1),
        )
    }

    pub fn model(&self) -> &NicholsonModel {
        &self.model
    }

    pub fn history(&self) -> &HistorySegment {
        &self.history
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored nodes `t_k = k h`, including `t_0 = 0`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn deriv(&self, k: usize) -> &[f64] {
        &self.derivs[k * self.dim..(k + 1) * self.dim]
    }

    fn check_time(&self, t: f64) -> Result<(), IntegrateError> {
        let slack = NODE_EPS * self.step;
        if t >= -slack && t <= self.horizon + slack {
            Ok(())
        } else {
            Err(IntegrateError::OutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// `y(t)` for `t` in `[-r, T]`.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let lo = -self.model.max_delay();
        if t < 0.0 && t >= lo - NODE_EPS * self.step {
            return (0..self.dim)
                .map(|i| {
                    let r = self.history.delay(i);
                    Ok(self.history.eval(t.max(-r), i)?)
                })
                .collect();
        }
        self.check_time(t)?;
        Ok((0..self.dim).map(|i| self.dense(t.max(0.0), i).0).collect())
    }

    /// The state segment `y_t` on the grid of the initial history, with
    /// derivative samples. At `t = 0` this is the initial history itself.
    pub fn segment_at(&self, t: f64) -> Result<HistorySegment, IntegrateError> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(self.history.clone());
        }
        let grid = self.history.grid();
        let mut values = Vec::with_capacity(self.dim);
        let mut derivs = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let n = grid.counts()[i];
            let mut v = Vec::with_capacity(n);
            let mut d = Vec::with_capacity(n);
            for k in 0..n {
                let tau = t + grid.node(i, k);
                let (a, b) = if tau < -NODE_EPS * self.step {
                    (self.history.eval(tau, i)?, self.history.eval_deriv(tau, i)?)
                } else {
                    self.dense(tau.max(0.0).min(self.time(self.len() - 1)), i)
                };
                v.push(a);
                d.push(b);
            }
            values.push(v);
            derivs.push(d);
        }
        Ok(HistorySegment::from_samples(&grid, values, Some(derivs))?)
    }

    /// Writes `t,y_1..y_m,dy_1..dy_m` rows for every node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("y_{i}")));
        header.extend((1..=self.dim).map(|i| format!("dy_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            write!(out, "{}", self.time(k))?;
            for v in self.state(k).iter().chain(self.deriv(k)) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{Harmonic, QuasiPeriodic};
    use crate::cone::{leq_b, ConeSpec};
    use crate::fnspace::SegmentGrid;
    use proptest::prelude::*;

    fn constant_history(delays: &[f64], step: f64, v: &[f64]) -> HistorySegment {
        HistorySegment::constant(&SegmentGrid::with_max_step(delays, step).unwrap(), v)
    }

    /// Fixed point of `-x + b x e^{-x}` by bisection.
    fn equilibrium(b: f64) -> f64 {
        let g = |x: f64| -x + b * x * (-x).exp();
        let (mut lo, mut hi) = (1e-6, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn linear_decay() {
        let m = NicholsonModel::constant_scalar(0.3, 1.0, 0.0, 1.0).unwrap();
        let tr = integrate(&m, &constant_history(&[0.3], 0.01, &[1.0]), 1.0, 1e-3).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!((tr.value_at(1.0).unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn converges_to_equilibrium() {
        let m = NicholsonModel::constant_scalar(0.3, 1.0, 2.0, 1.0).unwrap();
        let tr = integrate(&m, &constant_history(&[0.3], 0.01, &[0.5]), 200.0, 1e-3).unwrap();
        let target = equilibrium(2.0);
        assert!((target - 2f64.ln()).abs() < 1e-12);
        assert!((tr.value_at(200.0).unwrap()[0] - target).abs() < 1e-4);
    }

    #[test]
    fn zero_history_stays_zero() {
        let m = NicholsonModel::constant_scalar(0.3, 1.0, 2.0, 1.0).unwrap();
        let tr = integrate(&m, &constant_history(&[0.3], 0.01, &[0.0]), 10.0, 0.006).unwrap();
        assert!((0..tr.len()).all(|k| tr.state(k)[0] == 0.0 && tr.deriv(k)[0] == 0.0));
    }

    #[test]
    fn argument_errors() {
        let m = NicholsonModel::constant_scalar(0.3, 1.0, 2.0, 1.0).unwrap();
        let h = constant_history(&[0.3], 0.01, &[1.0]);
        assert!(matches!(
            integrate(&m, &h, 1.0, 0.1),
            Err(IntegrateError::StepTooLarge { .. })
        ));
        assert!(matches!(
            integrate(&m, &h, 1.0, 0.0),
            Err(IntegrateError::NonPositiveStep(_))
        ));
        let wrong = constant_history(&[0.4], 0.01, &[1.0]);
        assert!(matches!(
            integrate(&m, &wrong, 1.0, 0.01),
            Err(IntegrateError::DelayMismatch { .. })
        ));
        let tr = integrate(&m, &h, 1.0, 0.01).unwrap();
        assert!(matches!(
            tr.segment_at(1.5),
            Err(IntegrateError::OutOfRange { .. })
        ));
        assert!(tr.segment_at(-0.1).is_err());
    }

    #[test]
    fn segment_at_zero_is_the_history() {
        let m = NicholsonModel::constant_scalar(0.3, 1.0, 2.0, 1.0).unwrap();
        let grid = SegmentGrid::with_max_step(&[0.3], 0.01).unwrap();
        let h = HistorySegment::sample(&grid, |_, s| 1.0 + s.sin(), |_, s| s.cos());
        let tr = integrate(&m, &h, 1.0, 0.006).unwrap();
        assert_eq!(tr.segment_at(0.0).unwrap(), h);
        // partway: the negative part still comes from the history
        let seg = tr.segment_at(0.1).unwrap();
        for k in 0..seg.len(0) {
            let s = seg.node(0, k);
            if s + 0.1 < -1e-12 {
                assert_eq!(seg.values(0)[k], h.eval(s + 0.1, 0).unwrap());
            }
        }
    }

    #[test]
    fn rhs_matches_stored_derivatives() {
        let d = QuasiPeriodic::new(1.0, vec![Harmonic::new(0.3, 2.0, 0.1)]).unwrap();
        let m = NicholsonModel::scalar(
            0.3,
            d,
            QuasiPeriodic::constant(2.0),
            QuasiPeriodic::constant(1.0),
        )
        .unwrap()
        .with_offset(0.4);
        let h = 0.005;
        let tr = integrate(&m, &constant_history(&[0.3], h, &[0.7]), 3.0, h).unwrap();
        for k in [1usize, 100, 599] {
            let t = tr.time(k);
            let seg = tr.segment_at(t).unwrap();
            let f = m.rhs(t, &seg).unwrap();
            assert!((f[0] - tr.deriv(k)[0]).abs() < 1e-12);
        }
    }

    /// `y' = -d y + b y(t - r)` with `y = 1` on `[-r, 0]`, solved by hand on
    /// `[0, 2r]`.
    fn linear_delay_solution(d: f64, b: f64, r: f64, t: f64) -> f64 {
        let a = b / d;
        let first = |s: f64| a + (1.0 - a) * (-d * s).exp();
        if t <= r {
            return first(t);
        }
        let c = first(r) - b * a / d;
        b * a / d + b * (1.0 - a) * (t - r) * (-d * (t - r)).exp() + c * (-d * (t - r)).exp()
    }

    #[test]
    fn fourth_order_with_delay() {
        let (d, b, r) = (1.0, 0.8, 1.0);
        let m = NicholsonModel::constant_scalar(r, d, b, 0.0).unwrap();
        let mut errs = Vec::new();
        for h in [0.2, 0.1, 0.05, 0.025] {
            let tr = integrate(&m, &constant_history(&[r], h, &[1.0]), 2.0 * r, h).unwrap();
            let err = (0..tr.len())
                .map(|k| (tr.state(k)[0] - linear_delay_solution(d, b, r, tr.time(k))).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 12.0, "{errs:?}");
        }
    }

    /// Restarts from `t >= r`, where the segment no longer contains the
    /// derivative jump at `t = 0`.
    #[test]
    fn restart_matches_tail() {
        let d = QuasiPeriodic::new(1.0, vec![Harmonic::new(0.2, 1.0, 0.0)]).unwrap();
        let m = NicholsonModel::scalar(
            0.5,
            d,
            QuasiPeriodic::constant(1.5),
            QuasiPeriodic::constant(1.0),
        )
        .unwrap();
        let h = 0.01;
        let grid = SegmentGrid::with_max_step(&[0.5], h).unwrap();
        let hist = HistorySegment::sample(
            &grid,
            |_, s| 1.0 + 0.5 * (3.0 * s).cos(),
            |_, s| -1.5 * (3.0 * s).sin(),
        );
        let tr = integrate(&m, &hist, 10.0, h).unwrap();
        for s in [0.5, 0.87, 2.0, 4.51] {
            let seg = tr.segment_at(s).unwrap();
            let rest = integrate(&m.advanced(s), &seg, 10.0 - s, h).unwrap();
            let shift = (s / h).round() as usize;
            let worst = (0..rest.len())
                .filter(|k| k + shift < tr.len())
                .map(|k| (rest.state(k)[0] - tr.state(k + shift)[0]).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "restart at {s}: {worst}");
        }
    }

    #[test]
    fn csv_layout() {
        let zero = crate::coeffs::Modulated::from(QuasiPeriodic::zero());
        let m = NicholsonModel::new(
            vec![0.3, 0.4],
            vec![QuasiPeriodic::constant(1.0); 2],
            vec![vec![zero.clone(), zero.clone()], vec![zero.clone(), zero]],
            vec![QuasiPeriodic::constant(2.0).into(); 2],
            vec![QuasiPeriodic::constant(1.0).into(); 2],
        )
        .unwrap();
        let tr = integrate(
            &m,
            &constant_history(&[0.3, 0.4], 0.05, &[1.0, 2.0]),
            0.1,
            0.05,
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,y_1,y_2,dy_1,dy_2");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1,2,"));
    }

    #[test]
    fn componentwise_separation() {
        // phi <=_B psi with a gap at s = 0 keeps the solutions apart
        let m = NicholsonModel::constant_scalar(0.3, 1.0, 2.0, 1.0).unwrap();
        let cone = ConeSpec::new(vec![2.0]).unwrap();
        let grid = SegmentGrid::with_max_step(&[0.3], 0.006).unwrap();
        let phi = HistorySegment::sample(&grid, |_, s| 0.4 + 0.1 * s, |_, _| 0.1);
        let psi = HistorySegment::sample(
            &grid,
            |_, s| 0.45 + 0.1 * s + 0.05 * (-2.0 * s).exp(),
            |_, s| 0.1 - 0.1 * (-2.0 * s).exp(),
        );
        assert!(leq_b(&phi, &psi, &cone, 0.0).unwrap().holds);
        let a = integrate(&m, &phi, 20.0, 0.006).unwrap();
        let b = integrate(&m, &psi, 20.0, 0.006).unwrap();
        assert!((0..a.len()).all(|k| a.state(k)[0] < b.state(k)[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonnegative_histories_stay_nonnegative(
            c in 0.0f64..2.0, a in 0.0f64..2.0, w in 0.5f64..20.0, beta in 0.5f64..6.0, r in 0.2f64..1.5,
        ) {
            let m = NicholsonModel::constant_scalar(r, 1.0, beta, 1.0).unwrap();
            let grid = SegmentGrid::with_max_step(&[r], r / 50.0).unwrap();
            let hist = HistorySegment::sample(
                &grid,
                |_, s| c + a * (w * s).sin().powi(2),
                |_, s| a * w * (2.0 * w * s).sin(),
            );
            let tr = integrate(&m, &hist, 15.0, r / 50.0).unwrap();
            prop_assert!((0..tr.len()).all(|k| tr.state(k)[0] >= -1e-12));
        }

        #[test]
        fn restart_on_random_times(frac in 0.07f64..0.9) {
            let m = NicholsonModel::constant_scalar(0.4, 1.0, 3.0, 1.0).unwrap();
            let h = 0.008;
            let hist = constant_history(&[0.4], h, &[0.3]);
            let tr = integrate(&m, &hist, 6.0, h).unwrap();
            let s = ((frac * 6.0) / h).round() * h;
            let rest = integrate(&m.advanced(s), &tr.segment_at(s).unwrap(), 6.0 - s, h).unwrap();
            let shift = (s / h).round() as usize;
            for k in 0..rest.len().min(tr.len() - shift) {
                prop_assert!((rest.state(k)[0] - tr.state(k + shift)[0]).abs() < 1e-9);
            }
        }

        #[test]
        fn deterministic(v in 0.1f64..3.0) {
            let m = NicholsonModel::constant_scalar(0.3, 1.0, 2.0, 1.0).unwrap();
            let hist = constant_history(&[0.3], 0.006, &[v]);
            let a = integrate(&m, &hist, 3.0, 0.006).unwrap();
            let b = integrate(&m, &hist, 3.0, 0.006).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
