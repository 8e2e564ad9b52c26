//! Scenario files: a TOML description of a model and of what to run on it.
//! Unknown keys are rejected. See `scenarios/README.md` for the grammar.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Sampling;
use crate::coeffs::{CoeffError, Harmonic, Modulated, QuasiPeriodic, ScanWindow};
use crate::cone::{ConeError, ConeSpec};
use crate::fnspace::{HistorySegment, SegmentError, SegmentGrid};
use crate::nicholson::{ModelError, NicholsonModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{what}: {source}")]
    Coefficient {
        what: String,
        #[source]
        source: CoeffError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attractor: Option<AttractorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub delays: Vec<f64>,
    pub decay: Vec<CoeffLiteral>,
    pub birth: Vec<CoeffLiteral>,
    pub crowding: Vec<CoeffLiteral>,
    /// `migration[i][j]`: rate from patch `j` into patch `i`. Zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub migration: Option<Vec<Vec<CoeffLiteral>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

/// A number, or `{ const = c, harmonics = [{ amp, freq, phase }] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffLiteral {
    Number(f64),
    Sum(CoeffSum),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSum {
    #[serde(rename = "const", default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harmonics: Vec<HarmonicLiteral>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicLiteral {
    pub amp: f64,
    pub freq: f64,
    #[serde(default)]
    pub phase: f64,
}

impl CoeffLiteral {
    pub fn to_coefficient(&self) -> Result<QuasiPeriodic, CoeffError> {
        match self {
            CoeffLiteral::Number(c) => QuasiPeriodic::new(*c, Vec::new()),
            CoeffLiteral::Sum(s) => QuasiPeriodic::new(
                s.constant,
                s.harmonics
                    .iter()
                    .map(|h| Harmonic::new(h.amp, h.freq, h.phase))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSection {
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// The strict monotone condition must hold.
    Strict,
    /// The relaxed integral condition is accepted in its place.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Policy>,
    /// Scan window length; the frequency-based default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// One entry per initial history, each with one literal per patch.
    pub histories: Vec<Vec<HistoryLiteral>>,
}

/// A number, or `{ const = c, harmonics = [...], exp_rate = k }`, meaning
/// `s -> e^{k s} (c + sum amp cos(freq s + phase))` on `[-r, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistoryLiteral {
    Number(f64),
    Expr(HistoryExpr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryExpr {
    #[serde(rename = "const", default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harmonics: Vec<HarmonicLiteral>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_rate: Option<f64>,
}

impl HistoryLiteral {
    fn value(&self, s: f64) -> (f64, f64) {
        match self {
            HistoryLiteral::Number(c) => (*c, 0.0),
            HistoryLiteral::Expr(e) => {
                let (mut v, mut dv) = (e.constant, 0.0);
                for h in &e.harmonics {
                    let arg = h.freq * s + h.phase;
                    v += h.amp * arg.cos();
                    dv -= h.amp * h.freq * arg.sin();
                }
                let k = e.exp_rate.unwrap_or(0.0);
                let g = (k * s).exp();
                (g * v, g * (k * v + dv))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    Monotone,
    ConeEntry,
    Sublinear,
    PartMetric,
    Persistence,
}

impl Claim {
    pub fn name(self) -> &'static str {
        match self {
            Claim::Monotone => "monotone",
            Claim::ConeEntry => "cone-entry",
            Claim::Sublinear => "sublinear",
            Claim::PartMetric => "part-metric",
            Claim::Persistence => "persistence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub claims: Vec<Claim>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_metric_tol")]
    pub metric_tol: f64,
    /// Start of the tail for persistence; `0.6 * horizon` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
    #[serde(default = "default_floor_tol")]
    pub floor_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorSection {
    #[serde(default = "default_initials")]
    pub initials: usize,
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    /// Start of the tail; `0.6 * horizon` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default = "default_spread_tol")]
    pub spread_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

fn default_samples() -> usize {
    20
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_lambdas() -> Vec<f64> {
    vec![0.25, 0.5, 0.9]
}
fn default_metric_tol() -> f64 {
    1e-8
}
fn default_floor_tol() -> f64 {
    1e-6
}
fn default_initials() -> usize {
    10
}
fn default_spread_tol() -> f64 {
    1e-3
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.build_model()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario values are always representable")
    }

    pub fn build_model(&self) -> Result<NicholsonModel, ScenarioError> {
        let m = &self.model;
        let coeffs =
            |what: &str, list: &[CoeffLiteral]| -> Result<Vec<QuasiPeriodic>, ScenarioError> {
                list.iter()
                    .enumerate()
                    .map(|(i, c)| {
                        c.to_coefficient()
                            .map_err(|source| ScenarioError::Coefficient {
                                what: format!("model.{what}[{i}]"),
                                source,
                            })
                    })
                    .collect()
            };
        let n = m.delays.len();
        let migration = match &m.migration {
            Some(rows) => rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    Ok(coeffs(&format!("migration[{i}]"), row)?
                        .into_iter()
                        .map(Modulated::from)
                        .collect())
                })
                .collect::<Result<Vec<Vec<Modulated>>, ScenarioError>>()?,
            None => vec![vec![QuasiPeriodic::zero().into(); n]; n],
        };
        let model = NicholsonModel::new(
            m.delays.clone(),
            coeffs("decay", &m.decay)?,
            migration,
            coeffs("birth", &m.birth)?
                .into_iter()
                .map(Into::into)
                .collect(),
            coeffs("crowding", &m.crowding)?
                .into_iter()
                .map(Into::into)
                .collect(),
        )?;
        Ok(model.with_offset(m.offset.unwrap_or(0.0)))
    }

    /// Cone from `[cone]` when present.
    pub fn cone_override(&self) -> Result<Option<ConeSpec>, ScenarioError> {
        let Some(c) = &self.cone else { return Ok(None) };
        if c.mu.len() != self.model.delays.len() {
            return Err(ScenarioError::Invalid(format!(
                "cone.mu has {} entries, model has {} patches",
                c.mu.len(),
                self.model.delays.len()
            )));
        }
        Ok(Some(ConeSpec::new(c.mu.clone())?))
    }

    pub fn scan_window(&self, model: &NicholsonModel) -> ScanWindow {
        let default = model.default_window();
        match &self.check {
            Some(c) => ScanWindow::new(
                c.scan_span.unwrap_or(default.span),
                c.scan_step.unwrap_or(default.step),
            ),
            None => default,
        }
    }

    /// Initial histories of `[simulate]` sampled on a grid of spacing at
    /// most `step`.
    pub fn histories(
        &self,
        model: &NicholsonModel,
        step: f64,
    ) -> Result<Vec<HistorySegment>, ScenarioError> {
        let Some(sim) = &self.simulate else {
            return Ok(Vec::new());
        };
        let grid = SegmentGrid::with_max_step(model.delays(), step)?;
        sim.histories
            .iter()
            .enumerate()
            .map(|(k, h)| {
                if h.len() != model.dim() {
                    return Err(ScenarioError::Invalid(format!(
                        "simulate.histories[{k}] has {} entries, model has {} patches",
                        h.len(),
                        model.dim()
                    )));
                }
                Ok(HistorySegment::sample(
                    &grid,
                    |i, s| h[i].value(s).0,
                    |i, s| h[i].value(s).1,
                ))
            })
            .collect()
    }
}

impl VerifySection {
    pub fn sampling(&self, seed: Option<u64>) -> Sampling {
        Sampling {
            samples: self.samples,
            horizon: self.horizon,
            step: self.step,
            seed: seed.unwrap_or(self.seed),
            tolerance: self.tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A6: &str = r#"
[model]
delays = [0.5]
decay = [{ const = 1, harmonics = [{ amp = 2, freq = 20 }] }]
birth = [1.3]
crowding = [1]

[check]
policy = "relaxed"
"#;

    #[test]
    fn parses_literals() {
        let s = Scenario::parse(A6).unwrap();
        let m = s.build_model().unwrap();
        assert_eq!(m.decay()[0].eval(0.0), 3.0);
        assert_eq!(m.birth()[0].eval(1.0), 1.3);
        assert!(m.migration()[0][0].is_zero());
        assert_eq!(s.check.unwrap().policy, Some(Policy::Relaxed));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = A6.replace("birth = [1.3]", "birth = [1.3]\nbirht = [1.0]");
        let err = Scenario::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");
        assert!(err.contains("birht"), "{err}");
        let bad = A6.replace("freq = 20", "freq = 20, ampl = 1");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn semantic_errors() {
        let bad = A6.replace("delays = [0.5]", "delays = [-0.5]");
        assert!(matches!(
            Scenario::parse(&bad),
            Err(ScenarioError::Model(_))
        ));
        let bad = A6.replace("freq = 20", "freq = 0");
        assert!(matches!(
            Scenario::parse(&bad),
            Err(ScenarioError::Coefficient { .. })
        ));
        let bad = A6.replace("birth = [1.3]", "birth = [1.3, 2]");
        assert!(matches!(
            Scenario::parse(&bad),
            Err(ScenarioError::Model(_))
        ));
    }

    #[test]
    fn history_literals() {
        let text = format!(
            "{A6}\n[simulate]\nhorizon = 1\nhistories = [[0.5], [{{ const = 1, exp_rate = -2, harmonics = [{{ amp = 0.5, freq = 3, phase = 0.1 }}] }}]]\n"
        );
        let s = Scenario::parse(&text).unwrap();
        let m = s.build_model().unwrap();
        let hs = s.histories(&m, 0.01).unwrap();
        assert_eq!(hs.len(), 2);
        assert!(hs[0].values(0).iter().all(|&v| v == 0.5));
        let f = |x: f64| (-2.0 * x).exp() * (1.0 + 0.5 * (3.0 * x + 0.1).cos());
        let s0 = -0.25;
        assert!((hs[1].eval(s0, 0).unwrap() - f(s0)).abs() < 1e-12);
        let fd = (f(s0 + 1e-6) - f(s0 - 1e-6)) / 2e-6;
        assert!((hs[1].eval_deriv(s0, 0).unwrap() - fd).abs() < 1e-6);
    }

    fn literal() -> impl Strategy<Value = CoeffLiteral> {
        prop_oneof![
            (-5.0f64..5.0).prop_map(CoeffLiteral::Number),
            (
                -5.0f64..5.0,
                proptest::collection::vec((-2.0f64..2.0, 0.1f64..30.0, -3.0f64..3.0), 0..3)
            )
                .prop_map(|(c, hs)| CoeffLiteral::Sum(CoeffSum {
                    constant: c,
                    harmonics: hs
                        .into_iter()
                        .map(|(amp, freq, phase)| HarmonicLiteral { amp, freq, phase })
                        .collect(),
                })),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            r in proptest::collection::vec(0.05f64..3.0, 1..3),
            lits in proptest::collection::vec(literal(), 9),
            seed in any::<u64>(),
            offset in proptest::option::of(-10.0f64..10.0),
        ) {
            let m = r.len();
            let scenario = Scenario {
                model: ModelSection {
                    delays: r.clone(),
                    decay: lits[..m].to_vec(),
                    birth: lits[3..3 + m].to_vec(),
                    crowding: lits[6..6 + m].to_vec(),
                    migration: (m == 2).then(|| vec![vec![CoeffLiteral::Number(0.0), lits[2].clone()], vec![lits[5].clone(), CoeffLiteral::Number(0.0)]]),
                    offset,
                },
                cone: None,
                check: Some(CheckSection { policy: Some(Policy::Strict), scan_span: None, scan_step: Some(0.01), radius_cap: None }),
                simulate: None,
                verify: Some(VerifySection {
                    claims: vec![Claim::Monotone, Claim::PartMetric],
                    samples: 3,
                    seed,
                    horizon: 10.0,
                    step: None,
                    tolerance: 1e-9,
                    lambdas: vec![0.5],
                    metric_tol: 1e-8,
                    transient: Some(6.0),
                    floor_tol: 1e-6,
                }),
                attractor: None,
                output: Some(OutputSection { dir: Some("out".into()), formats: Some(vec![Format::Json]) }),
            };
            let text = scenario.to_toml();
            let back: Scenario = toml::from_str(&text).unwrap();
            prop_assert_eq!(&back, &scenario);
            prop_assert_eq!(back.to_toml(), text);
        }
    }
}
