//! Turns a [`RunConfig`] into a ready-to-run problem.

use lmreg_core::engine::{TheoryConstantsExact, TheoryConstantsNoisy};
use lmreg_core::gallery::{certify, problem, GalleryOptions, GalleryProblem};
use lmreg_core::recon::{CompactBox, MeasurementOperator};
use lmreg_core::{add_noise, Provenance, StabilityCertificate};
use nalgebra::{DMatrix, DVector};

use crate::config::{MeasurementConfig, RunConfig};
use crate::error::CliError;
use crate::tracefile::fmt_f64;

pub const DEFAULT_NOISE_SEED: u64 = 0;

#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: GalleryProblem,
    pub x0: DVector<f64>,
    /// Full exact data `F(x†)`.
    pub y: DVector<f64>,
    pub noise_seed: u64,
}

fn measurement_from(cfg: &MeasurementConfig, m: usize) -> Result<MeasurementOperator, CliError> {
    let q = if let Some(p) = &cfg.preset {
        match p.as_str() {
            "identity" => Ok(MeasurementOperator::identity(m)),
            "pair" => MeasurementOperator::selector(m, &[0, 1]),
            _ => MeasurementOperator::averaging(1, m),
        }
    } else if let Some(rows) = &cfg.select {
        MeasurementOperator::selector(m, rows)
    } else {
        let rows = cfg.matrix.as_ref().expect("validated: one source is set");
        MeasurementOperator::new(DMatrix::from_row_iterator(rows.len(), rows[0].len(), rows.iter().flatten().copied()))
    };
    q.map_err(|e| CliError::ConfigInvalid(format!("measurement: {e}")))
}

fn apply_override(cert: &mut StabilityCertificate, cfg: &RunConfig) {
    let Some(o) = &cfg.constants_override else { return };
    if o.is_empty() {
        return;
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cert.lip_deriv, o.lip_deriv);
    set(&mut cert.jac_bound, o.jac_bound);
    set(&mut cert.holder_const, o.holder_const);
    set(&mut cert.domain_rho_prime, o.domain_rho_prime);
    set(&mut cert.forward_lip, o.forward_lip);
    set(&mut cert.recon_const, o.recon_const);
    cert.provenance = Provenance::User;
}

impl Setup {
    /// Builds the gallery problem, applies box/measurement overrides (which
    /// trigger re-certification) and constant overrides.
    pub fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let defaults = GalleryOptions::default();
        let opts = GalleryOptions {
            eps: cfg.eps,
            samples: cfg.samples.unwrap_or(defaults.samples),
            seed: cfg.certificate_seed.unwrap_or(defaults.seed),
        };
        let mut p = problem(&cfg.problem_id, &opts)?;
        let n = p.model.dim_x();
        let mut recertify = false;
        if let Some(b) = &cfg.bx {
            if b.lower.len() != n {
                return Err(CliError::ConfigInvalid(format!("box: problem has dimension {n}, box has {}", b.lower.len())));
            }
            let bx = CompactBox::from_slices(&b.lower, &b.upper)?;
            recertify |= bx != p.default_box;
            p.default_box = bx;
        }
        if let Some(m) = &cfg.measurement {
            let q = measurement_from(m, p.model.dim_y())?;
            recertify |= q != p.measurement;
            p.measurement = q;
        }
        if recertify {
            p.certificate = certify(&p.model, &p.measurement, &p.default_box, opts.eps, opts.samples, opts.seed)?;
        }
        apply_override(&mut p.certificate, cfg);
        p.certificate.validate()?;
        let x0 = match &cfg.x0 {
            Some(v) if v.len() != n => return Err(CliError::ConfigInvalid(format!("x0: problem has dimension {n}, got {}", v.len()))),
            Some(v) => DVector::from_column_slice(v),
            None => p.x0.clone(),
        };
        let y = p.exact_data();
        Ok(Self { problem: p, x0, y, noise_seed: cfg.noise_seed.unwrap_or(DEFAULT_NOISE_SEED) })
    }

    pub fn noisy(&self, y: &DVector<f64>, delta: f64) -> DVector<f64> {
        add_noise(y, delta, self.noise_seed)
    }

    pub fn measured_exact(&self) -> DVector<f64> {
        self.problem.measured_data()
    }
}

pub fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    format!("[{}]", parts.join(", "))
}

/// Header lines shared by every command.
pub fn common_header(command: &str, cfg: &RunConfig, s: &Setup) -> Vec<(String, String)> {
    let mut h = vec![("command".to_string(), command.to_string())];
    for line in cfg.to_toml().lines().filter(|l| !l.trim().is_empty()) {
        h.push(("config".into(), line.to_string()));
    }
    let c = &s.problem.certificate;
    h.push(("problem.notes".into(), s.problem.notes.clone()));
    h.push(("problem.x_dagger".into(), fmt_vec(&s.problem.x_dagger)));
    h.push(("problem.x0".into(), fmt_vec(&s.x0)));
    for (k, v) in [
        ("lip_deriv", c.lip_deriv),
        ("jac_bound", c.jac_bound),
        ("holder_const", c.holder_const),
        ("holder_eps", c.holder_eps),
        ("domain_rho_prime", c.domain_rho_prime),
        ("forward_lip", c.forward_lip),
        ("recon_const", c.recon_const),
        ("q_norm", c.q_norm),
    ] {
        h.push((format!("certificate.{k}"), fmt_f64(v)));
    }
    h.push(("certificate.provenance".into(), c.provenance.as_str().into()));
    h
}

pub fn exact_theory_header(tc: &TheoryConstantsExact) -> Vec<(String, String)> {
    vec![
        ("theory.rho".into(), fmt_f64(tc.rho)),
        ("theory.c".into(), fmt_f64(tc.c)),
        ("theory.q_condition".into(), tc.q_condition_ok.to_string()),
        ("theory.rho_below_rho_prime".into(), tc.rho_lt_rho_prime.to_string()),
    ]
}

pub fn noisy_theory_header(tc: &TheoryConstantsNoisy, delta: f64) -> Vec<(String, String)> {
    vec![
        ("theory.rho".into(), fmt_f64(tc.rho)),
        ("theory.r".into(), fmt_f64(tc.r)),
        ("theory.rho_below_rho_prime".into(), tc.rho_lt_rho_prime.to_string()),
        ("theory.kstar_bound".into(), tc.kstar_bound(delta).to_string()),
    ]
}

pub fn hypothesis_header(trace: &lmreg_core::IterationTrace) -> Vec<(String, String)> {
    trace
        .hypotheses
        .items
        .iter()
        .map(|h| (format!("hypothesis.{}", h.name), format!("{} ({})", h.holds, h.detail)))
        .collect()
}

pub fn run_footer(trace: &lmreg_core::IterationTrace, x_dagger: Option<&DVector<f64>>) -> Vec<(String, String)> {
    let mut f = vec![
        ("terminal".to_string(), trace.terminal.as_str().to_string()),
        ("k_star".into(), trace.k_star.map(|k| k.to_string()).unwrap_or_default()),
        ("iterations".into(), trace.iterations().to_string()),
        ("final_x".into(), fmt_vec(trace.final_x())),
    ];
    if let Some(xd) = x_dagger {
        f.push(("final_error".into(), fmt_f64((trace.final_x() - xd).norm())));
    }
    if let Some(e) = &trace.failure {
        f.push(("failure".into(), e.to_string()));
    }
    for w in &trace.warnings {
        f.push(("warning".into(), w.clone()));
    }
    f
}
