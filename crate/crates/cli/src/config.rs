//! Run configuration files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Noisy,
    ReconstructExact,
    ReconstructNoisy,
    Landweber,
    Verify,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Noisy => "noisy",
            Mode::ReconstructExact => "reconstruct_exact",
            Mode::ReconstructNoisy => "reconstruct_noisy",
            Mode::Landweber => "landweber",
            Mode::Verify => "verify",
        }
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self, Mode::Noisy | Mode::ReconstructNoisy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Either a named preset, a list of kept coordinates, or a dense matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// `identity`, `pair` (first two coordinates) or `mean`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub select: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// Replaces individual certificate constants; any override marks the
/// certificate as user supplied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lip_deriv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jac_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holder_const: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_rho_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_lip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recon_const: Option<f64>,
}

impl ConstantsOverride {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Residual levels reported as iteration counts.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Landweber step; `0.9/‖J(x0)‖²` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_scale: Option<f64>,
    /// Methods to tabulate, `lm` or `landweber`.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
}

fn default_thresholds() -> Vec<f64> {
    vec![1e-4, 1e-6, 1e-8]
}

fn default_methods() -> Vec<String> {
    vec!["lm".into(), "landweber".into()]
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { thresholds: default_thresholds(), step_scale: None, methods: default_methods() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem_id: String,
    pub mode: Mode,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    /// Seed of the constant estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Starting point; the problem's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub record_wall_time: bool,
    pub output_path: PathBuf,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bx: Option<BoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<MeasurementConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_override: Option<ConstantsOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
}

fn one() -> f64 {
    1.0
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::ConfigInvalid(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::ConfigInvalid(m) => CliError::ConfigInvalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if lmreg_core::gallery::PROBLEM_IDS.iter().all(|id| *id != self.problem_id) {
            return Err(invalid(
                "problem_id",
                format!("unknown problem '{}'; known: {}", self.problem_id, lmreg_core::gallery::PROBLEM_IDS.join(", ")),
            ));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(invalid("q", format!("must lie in the open interval (0, 1), got {}", self.q)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(invalid("eps", format!("must lie in (0, 1], got {}", self.eps)));
        }
        if let Some(t) = self.tau {
            if !(t > 1.0) || !t.is_finite() {
                return Err(invalid("tau", format!("must exceed 1, got {t}")));
            }
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(invalid("delta", format!("must be non-negative, got {d}")));
            }
        }
        if self.mode.is_noisy() && (self.tau.is_none() || self.delta.is_none()) {
            return Err(invalid("mode", format!("{} needs both tau and delta", self.mode.as_str())));
        }
        if let Some(g) = self.target_gamma {
            positive("target_gamma", g)?;
        }
        if self.mode == Mode::ReconstructExact && self.target_gamma.is_none() {
            return Err(invalid("target_gamma", "required by reconstruct_exact"));
        }
        if let Some(t) = self.tol_alpha {
            positive("tol_alpha", t)?;
        }
        if matches!(self.samples, Some(s) if s < 10_000) {
            return Err(invalid("samples", "the constant estimator needs at least 10000 pairs"));
        }
        if matches!(self.max_iters, Some(0)) && matches!(self.mode, Mode::Landweber) {
            return Err(invalid("max_iters", "must be positive"));
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(invalid("x0", "entries must be finite"));
            }
        }
        if let Some(b) = &self.bx {
            if b.lower.len() != b.upper.len() || b.lower.is_empty() {
                return Err(invalid("box", "lower and upper must be non-empty and of equal length"));
            }
            if b.lower.iter().zip(&b.upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
                return Err(invalid("box", "needs finite bounds with lower <= upper"));
            }
        }
        if let Some(m) = &self.measurement {
            let given = [m.preset.is_some(), m.select.is_some(), m.matrix.is_some()].iter().filter(|b| **b).count();
            if given != 1 {
                return Err(invalid("measurement", "set exactly one of preset, select, matrix"));
            }
            if let Some(p) = &m.preset {
                if !["identity", "pair", "mean"].contains(&p.as_str()) {
                    return Err(invalid("measurement.preset", format!("unknown preset '{p}'; known: identity, pair, mean")));
                }
            }
            if let Some(rows) = &m.matrix {
                let w = rows.first().map_or(0, Vec::len);
                if w == 0 || rows.iter().any(|r| r.len() != w) {
                    return Err(invalid("measurement.matrix", "rows must be non-empty and of equal length"));
                }
            }
        }
        if let Some(c) = &self.constants_override {
            let fields = [
                ("constants_override.lip_deriv", c.lip_deriv),
                ("constants_override.jac_bound", c.jac_bound),
                ("constants_override.holder_const", c.holder_const),
                ("constants_override.domain_rho_prime", c.domain_rho_prime),
                ("constants_override.forward_lip", c.forward_lip),
                ("constants_override.recon_const", c.recon_const),
            ];
            for (name, v) in fields {
                if let Some(v) = v {
                    positive(name, v)?;
                }
            }
        }
        if let Some(c) = &self.compare {
            if c.thresholds.is_empty() {
                return Err(invalid("compare.thresholds", "must not be empty"));
            }
            for t in &c.thresholds {
                positive("compare.thresholds", *t)?;
            }
            if let Some(s) = c.step_scale {
                positive("compare.step_scale", s)?;
            }
            if c.methods.is_empty() {
                return Err(invalid("compare.methods", "must not be empty"));
            }
            for m in &c.methods {
                if m != "lm" && m != "landweber" {
                    return Err(invalid("compare.methods", format!("unknown method '{m}'; known: lm, landweber")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
problem_id = "scalar_linear"
mode = "exact"
q = 0.5
max_iters = 20
output_path = "out.csv"
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.eps, 1.0);
        assert_eq!(c.mode, Mode::Exact);
        assert!(c.bx.is_none());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.bx = Some(BoxConfig { lower: vec![0.0], upper: vec![1.0] });
        c.measurement = Some(MeasurementConfig { select: Some(vec![0]), ..Default::default() });
        c.compare = Some(CompareConfig::default());
        c.delta = Some(1e-3);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{MINIMAL}\nfoo = 1\n");
        let e = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(e.contains("foo"), "{e}");
    }

    #[test]
    fn q_out_of_range_names_field() {
        let e = RunConfig::parse(&MINIMAL.replace("q = 0.5", "q = 1.5")).unwrap_err().to_string();
        assert!(e.contains("q:") && e.contains("(0, 1)"), "{e}");
    }

    #[test]
    fn noisy_needs_delta() {
        let e = RunConfig::parse(&MINIMAL.replace("\"exact\"", "\"noisy\"")).unwrap_err().to_string();
        assert!(e.contains("tau and delta"), "{e}");
    }
}
