//! Quasi-periodic coefficients `c0 + sum_k a_k cos(w_k t + p_k)` and the
//! exact calculus the Nicholson conditions need: means, moving integrals,
//! bounded primitives, certified bounds and windowed suprema.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("harmonic {index}: frequency must be positive and finite, got {freq}")]
    BadFrequency { index: usize, freq: f64 },
    #[error("harmonic {index}: amplitude and phase must be finite")]
    NonFinite { index: usize },
    #[error("constant term must be finite")]
    NonFiniteConstant,
    #[error("integration window must be positive, got {0}")]
    NonPositiveWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Harmonic {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn new(amp: f64, freq: f64, phase: f64) -> Self {
        Self { amp, freq, phase }
    }

    fn eval(&self, t: f64) -> f64 {
        self.amp * (self.freq * t + self.phase).cos()
    }
}

/// A finite trigonometric sum, the concrete almost periodic coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiPeriodic {
    constant: f64,
    harmonics: Vec<Harmonic>,
    lower: f64,
    upper: f64,
}

impl QuasiPeriodic {
    pub fn new(constant: f64, harmonics: Vec<Harmonic>) -> Result<Self, CoeffError> {
        if !constant.is_finite() {
            return Err(CoeffError::NonFiniteConstant);
        }
        for (index, h) in harmonics.iter().enumerate() {
            if !(h.freq > 0.0 && h.freq.is_finite()) {
                return Err(CoeffError::BadFrequency {
                    index,
                    freq: h.freq,
                });
            }
            if !(h.amp.is_finite() && h.phase.is_finite()) {
                return Err(CoeffError::NonFinite { index });
            }
        }
        Ok(Self::build(constant, harmonics))
    }

    fn build(constant: f64, harmonics: Vec<Harmonic>) -> Self {
        let spread: f64 = merged_amplitudes(&harmonics).iter().sum();
        Self {
            constant,
            harmonics,
            lower: constant - spread,
            upper: constant + spread,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::build(value, Vec::new())
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    /// True when every harmonic has zero amplitude.
    pub fn is_constant(&self) -> bool {
        self.harmonics.iter().all(|h| h.amp == 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.constant + self.harmonics.iter().map(|h| h.eval(t)).sum::<f64>()
    }

    /// Limit of the time averages; every harmonic averages out.
    pub fn mean_value(&self) -> f64 {
        self.constant
    }

    /// Certified lower bound `c0 - sum |a_k|` (harmonics of equal frequency
    /// are combined first, so the bound is attained when no two distinct
    /// frequencies remain).
    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// `int_{t-r}^{t} c(s) ds` in closed form.
    pub fn moving_integral(&self, t: f64, r: f64) -> Result<f64, CoeffError> {
        if !(r > 0.0) {
            return Err(CoeffError::NonPositiveWindow(r));
        }
        let osc: f64 = self
            .harmonics
            .iter()
            .map(|h| {
                h.amp / h.freq * ((h.freq * t + h.phase).sin() - (h.freq * (t - r) + h.phase).sin())
            })
            .sum();
        Ok(self.constant * r + osc)
    }

    /// The map `t -> int_{t-r}^{t} c(s) ds` as a trigonometric sum, using
    /// `sin x - sin(x - wr) = 2 sin(wr/2) cos(x - wr/2)`.
    pub fn moving_integral_fn(&self, r: f64) -> Result<QuasiPeriodic, CoeffError> {
        if !(r > 0.0) {
            return Err(CoeffError::NonPositiveWindow(r));
        }
        let harmonics = self
            .harmonics
            .iter()
            .map(|h| {
                let half = 0.5 * h.freq * r;
                Harmonic::new(2.0 * h.amp / h.freq * half.sin(), h.freq, h.phase - half)
            })
            .collect();
        Ok(Self::build(self.constant * r, harmonics))
    }

    /// Bounded primitive of the centered coefficient:
    /// `h(t) = sum (a_k / w_k) sin(w_k t + p_k)`, so `h' = c - mean`.
    pub fn bounded_primitive(&self) -> QuasiPeriodic {
        let harmonics = self
            .harmonics
            .iter()
            .map(|h| Harmonic::new(h.amp / h.freq, h.freq, h.phase - FRAC_PI_2))
            .collect();
        Self::build(0.0, harmonics)
    }

    /// `t -> c(t + dt)`.
    pub fn shifted(&self, dt: f64) -> QuasiPeriodic {
        let harmonics = self
            .harmonics
            .iter()
            .map(|h| Harmonic::new(h.amp, h.freq, h.phase + h.freq * dt))
            .collect();
        Self::build(self.constant, harmonics)
    }

    pub fn scaled(&self, k: f64) -> QuasiPeriodic {
        let harmonics = self
            .harmonics
            .iter()
            .map(|h| Harmonic::new(k * h.amp, h.freq, h.phase))
            .collect();
        Self::build(k * self.constant, harmonics)
    }

    pub fn add(&self, other: &QuasiPeriodic) -> QuasiPeriodic {
        let mut harmonics = self.harmonics.clone();
        harmonics.extend_from_slice(&other.harmonics);
        Self::build(self.constant + other.constant, harmonics)
    }

    pub fn sub(&self, other: &QuasiPeriodic) -> QuasiPeriodic {
        self.add(&other.scaled(-1.0))
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.harmonics
            .iter()
            .filter(|h| h.amp != 0.0)
            .map(|h| h.freq)
    }
}

/// Amplitudes after combining harmonics with identical frequency as phasors.
fn merged_amplitudes(harmonics: &[Harmonic]) -> Vec<f64> {
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for h in harmonics {
        let (re, im) = (h.amp * h.phase.cos(), h.amp * h.phase.sin());
        match groups.iter_mut().find(|g| g.0 == h.freq) {
            Some(g) => {
                g.1 += re;
                g.2 += im;
            }
            None => groups.push((h.freq, re, im)),
        }
    }
    groups.into_iter().map(|(_, re, im)| re.hypot(im)).collect()
}

/// A coefficient of the form `base(t) * exp(log_factor(t))`. Plain
/// quasi-periodic coefficients have a zero log factor; the mean-value change
/// of variables produces nonzero ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated {
    base: QuasiPeriodic,
    log_factor: QuasiPeriodic,
}

impl Modulated {
    pub fn new(base: QuasiPeriodic, log_factor: QuasiPeriodic) -> Self {
        Self { base, log_factor }
    }

    pub fn base(&self) -> &QuasiPeriodic {
        &self.base
    }

    pub fn log_factor(&self) -> &QuasiPeriodic {
        &self.log_factor
    }

    /// The underlying trigonometric sum when there is no modulation.
    pub fn as_plain(&self) -> Option<&QuasiPeriodic> {
        (self.log_factor.is_constant() && self.log_factor.constant_term() == 0.0)
            .then_some(&self.base)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.log_factor.harmonics.is_empty() && self.log_factor.constant == 0.0 {
            return self.base.eval(t);
        }
        self.base.eval(t) * self.log_factor.eval(t).exp()
    }

    /// `true` when the coefficient vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.base.is_constant() && self.base.constant_term() == 0.0
    }

    pub fn lower_bound(&self) -> f64 {
        let b = self.base.lower_bound();
        if b >= 0.0 {
            b * self.log_factor.lower_bound().exp()
        } else {
            b * self.log_factor.upper_bound().exp()
        }
    }

    pub fn upper_bound(&self) -> f64 {
        let b = self.base.upper_bound();
        if b >= 0.0 {
            b * self.log_factor.upper_bound().exp()
        } else {
            b * self.log_factor.lower_bound().exp()
        }
    }

    pub fn shifted(&self, dt: f64) -> Modulated {
        Self::new(self.base.shifted(dt), self.log_factor.shifted(dt))
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.base.frequencies().chain(self.log_factor.frequencies())
    }
}

impl From<QuasiPeriodic> for Modulated {
    fn from(base: QuasiPeriodic) -> Self {
        Self::new(base, QuasiPeriodic::zero())
    }
}

/// Uniform scan grid `{start, start + step, ..., start + span}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanWindow {
    pub start: f64,
    pub span: f64,
    pub step: f64,
}

impl ScanWindow {
    pub const MAX_SPAN: f64 = 1e4;

    pub fn new(span: f64, step: f64) -> Self {
        Self {
            start: 0.0,
            span,
            step,
        }
    }

    /// Default window for functions built from harmonics with the given
    /// frequencies: 50 slowest periods (capped at `1e4`) sampled at 50
    /// points per fastest period.
    pub fn for_frequencies(freqs: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for w in freqs {
            lo = lo.min(w);
            hi = hi.max(w);
        }
        if hi == 0.0 {
            return Self::new(1.0, 1.0);
        }
        let span = (50.0 * 2.0 * PI / lo).min(Self::MAX_SPAN);
        let step = 2.0 * PI / hi / 50.0;
        Self::new(span, step)
    }

    pub fn points(&self) -> usize {
        (self.span / self.step).floor() as usize + 1
    }

    fn at(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    pub sup: f64,
    pub argmax: f64,
    pub window: ScanWindow,
}

/// Maximum of `f` over the scan grid, refined by golden-section search on
/// the two cells around the best grid point. The result is a lower bound for
/// the supremum over the whole line.
pub fn window_sup(f: impl Fn(f64) -> f64, window: ScanWindow) -> SupEstimate {
    let n = window.points();
    let (mut best_k, mut best) = (0, f(window.at(0)));
    for k in 1..n {
        let v = f(window.at(k));
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let t0 = window.at(best_k);
    let lo = (t0 - window.step).max(window.start);
    let hi = (t0 + window.step).min(window.start + window.span);
    let (t_ref, v_ref) = golden_max(&f, lo, hi);
    let (sup, argmax) = if v_ref > best {
        (v_ref, t_ref)
    } else {
        (best, t0)
    };
    SupEstimate {
        sup,
        argmax,
        window,
    }
}

/// Minimum counterpart of [`window_sup`].
pub fn window_inf(f: impl Fn(f64) -> f64, window: ScanWindow) -> SupEstimate {
    let est = window_sup(|t| -f(t), window);
    SupEstimate {
        sup: -est.sup,
        ..est
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if !(b > a) {
        return (a, f(a));
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qp(c: f64, hs: &[(f64, f64, f64)]) -> QuasiPeriodic {
        QuasiPeriodic::new(
            c,
            hs.iter().map(|&(a, w, p)| Harmonic::new(a, w, p)).collect(),
        )
        .unwrap()
    }

    /// Composite Simpson rule, the quadrature oracle for these tests.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + k as f64 * h);
        }
        acc * h / 3.0
    }

    /// Adaptive Simpson quadrature to absolute tolerance `tol`.
    fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &impl Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn eval_examples() {
        assert!((qp(1.5, &[(0.3, 1.0, 0.0)]).eval(0.0) - 1.8).abs() < 1e-15);
        assert_eq!(QuasiPeriodic::constant(2.0).eval(123.4), 2.0);
        let c = qp(1.0, &[(2.0, 20.0, 0.0)]);
        assert!((c.eval(PI / 20.0) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_harmonics_rejected() {
        assert!(QuasiPeriodic::new(1.0, vec![Harmonic::new(1.0, 0.0, 0.0)]).is_err());
        assert!(QuasiPeriodic::new(1.0, vec![Harmonic::new(1.0, -2.0, 0.0)]).is_err());
        assert!(QuasiPeriodic::new(1.0, vec![Harmonic::new(f64::NAN, 1.0, 0.0)]).is_err());
        assert!(QuasiPeriodic::new(f64::INFINITY, vec![]).is_err());
    }

    #[test]
    fn mean_value_examples() {
        assert_eq!(qp(1.5, &[(0.3, 1.0, 0.0)]).mean_value(), 1.5);
        assert_eq!(QuasiPeriodic::constant(2.0).mean_value(), 2.0);
        assert_eq!(qp(1.0, &[(2.0, 20.0, 0.0)]).mean_value(), 1.0);
    }

    #[test]
    fn mean_value_matches_long_time_average() {
        let c = qp(0.7, &[(1.3, 1.0, 0.4), (0.5, 2f64.sqrt(), 1.0)]);
        let t = 1e4;
        let avg = simpson(|s| c.eval(s), 0.0, t, 400_000) / t;
        assert!((avg - c.mean_value()).abs() < 5.0 / t);
    }

    #[test]
    fn moving_integral_examples() {
        let one = QuasiPeriodic::constant(1.0);
        assert!((one.moving_integral(7.3, 0.5).unwrap() - 0.5).abs() < 1e-15);
        let cos = qp(0.0, &[(1.0, 1.0, 0.0)]);
        assert!(cos.moving_integral(PI, PI).unwrap().abs() < 1e-15);
        assert!(one.moving_integral(0.0, 0.0).is_err());
        assert!(one.moving_integral(0.0, -1.0).is_err());
    }

    #[test]
    fn moving_integral_range_for_fast_oscillation() {
        // 0.5 + 0.1 (sin 20t - sin(20t - 10)); extremes 0.5 +- 0.2|sin 5|
        let c = qp(1.0, &[(2.0, 20.0, 0.0)]);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..200_000 {
            let t = k as f64 * 1e-5;
            let v = c.moving_integral(t, 0.5).unwrap();
            let direct = 0.5 + 0.1 * ((20.0 * t).sin() - (20.0 * t - 10.0).sin());
            assert!((v - direct).abs() < 1e-14);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(lo >= 0.3 && hi <= 0.7);
        let exact = 0.2 * 5f64.sin().abs();
        assert!((hi - (0.5 + exact)).abs() < 1e-8);
        assert!((lo - (0.5 - exact)).abs() < 1e-8);
        let f = c.moving_integral_fn(0.5).unwrap();
        assert!((f.upper_bound() - (0.5 + exact)).abs() < 1e-15);
    }

    #[test]
    fn bounded_primitive_examples() {
        let h = QuasiPeriodic::constant(2.0).bounded_primitive();
        assert_eq!(h.eval(3.0), 0.0);
        let h = qp(1.0, &[(2.0, 20.0, 0.0)]).bounded_primitive();
        for k in 0..100 {
            let t = k as f64 * 0.0731;
            assert!((h.eval(t) - 0.1 * (20.0 * t).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn window_sup_examples() {
        let est = window_sup(|_| 2.0, ScanWindow::new(10.0, 0.1));
        assert_eq!(est.sup, 2.0);
        assert_eq!(est.argmax, 0.0);

        let c = qp(1.0, &[(2.0, 20.0, 0.0)]);
        let est = window_sup(|t| c.eval(t), ScanWindow::new(10.0, 1e-3));
        assert!((est.sup - 3.0).abs() < 1e-6);

        // closed-form sup of 1.3 exp(moving integral): 1.3 e^{0.5 + 0.2|sin 5|}
        let est = window_sup(
            |t| 1.3 * c.moving_integral(t, 0.5).unwrap().exp(),
            ScanWindow::new(10.0, 1e-3),
        );
        let oracle = 1.3 * (0.5 + 0.2 * 5f64.sin().abs()).exp();
        assert!((est.sup - oracle).abs() < 1e-4, "{} vs {}", est.sup, oracle);
        assert!(est.sup < 1.3 * 0.7f64.exp());
    }

    #[test]
    fn window_inf_is_min() {
        let c = qp(1.0, &[(2.0, 20.0, 0.0)]);
        let est = window_inf(|t| c.eval(t), ScanWindow::new(10.0, 1e-3));
        assert!((est.sup + 1.0).abs() < 1e-6);
    }

    #[test]
    fn default_window_follows_frequencies() {
        let w = ScanWindow::for_frequencies([20.0]);
        assert!((w.span - 50.0 * 2.0 * PI / 20.0).abs() < 1e-12);
        assert!((w.step - 2.0 * PI / 20.0 / 50.0).abs() < 1e-15);
        let w = ScanWindow::for_frequencies([1e-4, 1.0]);
        assert_eq!(w.span, ScanWindow::MAX_SPAN);
        assert_eq!(ScanWindow::for_frequencies([]).points(), 2);
    }

    #[test]
    fn merged_bounds_are_tight_for_cancelling_terms() {
        let d = qp(1.0, &[(0.3, 2.0, 0.5)]);
        let diff = d.sub(&d);
        assert!(diff.lower_bound().abs() < 1e-15);
        assert!(diff.upper_bound().abs() < 1e-15);
    }

    #[test]
    fn modulated_bounds_and_eval() {
        let m = Modulated::new(qp(2.0, &[(0.5, 1.0, 0.0)]), qp(0.0, &[(0.1, 3.0, 0.0)]));
        assert!((m.eval(0.0) - 2.5 * 0.1f64.exp()).abs() < 1e-15);
        assert!((m.upper_bound() - 2.5 * 0.1f64.exp()).abs() < 1e-15);
        assert!((m.lower_bound() - 1.5 * (-0.1f64).exp()).abs() < 1e-15);
        assert!(m.as_plain().is_none());
        let plain: Modulated = qp(1.0, &[]).into();
        assert!(plain.as_plain().is_some());
    }

    fn arb_qp() -> impl Strategy<Value = QuasiPeriodic> {
        (
            -2.0f64..2.0,
            prop::collection::vec((-2.0f64..2.0, 0.1f64..25.0, -PI..PI), 0..4),
        )
            .prop_map(|(c, hs)| qp(c, &hs))
    }

    proptest! {
        #[test]
        fn moving_integral_matches_quadrature(c in arb_qp(), t in -50.0f64..50.0, r in 0.01f64..3.0) {
            let exact = c.moving_integral(t, r).unwrap();
            let quad = adaptive(&|s| c.eval(s), t - r, t, 1e-13);
            prop_assert!((exact - quad).abs() < 1e-10, "{} vs {}", exact, quad);
            let as_fn = c.moving_integral_fn(r).unwrap().eval(t);
            prop_assert!((exact - as_fn).abs() < 1e-12);
        }

        #[test]
        fn primitive_differences_match_quadrature(c in arb_qp(), t1 in -20.0f64..20.0, len in 0.0f64..2.0) {
            let t2 = t1 + len;
            let h = c.bounded_primitive();
            let quad = adaptive(&|s| c.eval(s) - c.mean_value(), t1, t2, 1e-13);
            prop_assert!((h.eval(t2) - h.eval(t1) - quad).abs() < 1e-12);
        }

        #[test]
        fn primitive_stays_within_bound(c in arb_qp()) {
            let h = c.bounded_primitive();
            let bound: f64 = c.harmonics().iter().map(|x| x.amp.abs() / x.freq).sum();
            for k in 0..5000 {
                prop_assert!(h.eval(k as f64 * 0.013 - 30.0).abs() <= bound + 1e-12);
            }
        }

        #[test]
        fn window_sup_never_exceeds_upper_bound(c in arb_qp()) {
            let w = ScanWindow::for_frequencies(c.frequencies());
            let est = window_sup(|t| c.eval(t), w);
            prop_assert!(est.sup <= c.upper_bound() + 1e-12);
            prop_assert!(est.sup >= c.lower_bound() - 1e-12);
        }

        #[test]
        fn shifting_translates_time(c in arb_qp(), t in -10.0f64..10.0, dt in -10.0f64..10.0) {
            prop_assert!((c.shifted(dt).eval(t) - c.eval(t + dt)).abs() < 1e-11);
        }
    }
}
