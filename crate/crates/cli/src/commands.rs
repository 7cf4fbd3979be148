//! The four subcommands. Each returns a process exit code and the text
//! it wrote, so tests can drive them without spawning a process.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use lmreg_core::engine::checks::{self, CheckRow, CheckTable};
use lmreg_core::engine::{kstar_upper_bound, qtilde, TheoryConstantsExact, TheoryConstantsNoisy};
use lmreg_core::gallery::{check_tangential_cone, rho_prime_for_eta, CountingOperator};
use lmreg_core::recon::ReconSettings;
use lmreg_core::{landweber_run, reconstruct_exact, reconstruct_noisy, run_exact, run_noisy, ForwardModel, IterationTrace, SolverConfig, StopMode};

use crate::config::{CompareConfig, Mode, RunConfig};
use crate::error::{exit, terminal_exit_code, CliError};
use crate::setup::{common_header, exact_theory_header, fmt_vec, hypothesis_header, noisy_theory_header, run_footer, Setup};
use crate::tracefile::{fmt_f64, TraceFile};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const COMPARE_MAX_ITERS: usize = 100_000;
/// η targeted when choosing the ball for the tangential cone check.
pub const TCC_ETA: f64 = 0.5;

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    /// Contents written to the output path.
    pub output: String,
    /// Human summary for stdout.
    pub summary: String,
}

fn wrong_mode(command: &str, mode: Mode, allowed: &str) -> CliError {
    CliError::ConfigInvalid(format!("mode: '{}' cannot be used with {command} (allowed: {allowed})", mode.as_str()))
}

fn solver_config(cfg: &RunConfig) -> SolverConfig {
    let base = SolverConfig::default();
    let mut s = SolverConfig {
        q: cfg.q,
        max_iters: cfg.max_iters.unwrap_or(DEFAULT_MAX_ITERS),
        tol_alpha: cfg.tol_alpha.unwrap_or(base.tol_alpha),
        target_gamma: cfg.target_gamma,
        ..base
    };
    if cfg.target_gamma.is_some() {
        s.stop_mode = StopMode::TargetError;
    }
    if cfg.mode.is_noisy() {
        s.stop_mode = StopMode::Discrepancy;
        s.tau = cfg.tau.unwrap_or(base.tau);
        s.delta = cfg.delta.unwrap_or(0.0);
    }
    s
}

fn finish(mut tf: TraceFile, cfg: &RunConfig, started: Instant, code: i32, summary: String) -> Result<Outcome, CliError> {
    if cfg.record_wall_time {
        tf.footer.push(("wall_time".into(), format!("{:.6}", started.elapsed().as_secs_f64())));
    }
    tf.footer.push(("exit_code".into(), code.to_string()));
    let output = tf.render();
    tf.write(&cfg.output_path)?;
    Ok(Outcome { code, output, summary })
}

fn trace_summary(trace: &IterationTrace) -> String {
    format!(
        "terminal {} after {} iterations, k* = {}, final residual {:.3e}",
        trace.terminal,
        trace.iterations(),
        trace.k_star.map_or("-".into(), |k| k.to_string()),
        trace.last().residual
    )
}

/// `solve`: exact, noisy or Landweber run from the configured start.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    if !matches!(cfg.mode, Mode::Exact | Mode::Noisy | Mode::Landweber) {
        return Err(wrong_mode("solve", cfg.mode, "exact, noisy, landweber"));
    }
    let s = Setup::build(cfg)?;
    let p = &s.problem;
    let scfg = solver_config(cfg);
    let mut header = common_header("solve", cfg, &s);
    let trace = match cfg.mode {
        Mode::Exact => {
            let tc = TheoryConstantsExact::evaluate(&p.certificate, cfg.q);
            header.extend(exact_theory_header(&tc));
            run_exact(&p.model, Some(&p.x_dagger), &s.y, &s.x0, &scfg, Some(&tc))?
        }
        Mode::Noisy => {
            let delta = scfg.delta;
            let tc = TheoryConstantsNoisy::evaluate(&p.certificate, cfg.q, scfg.tau);
            header.extend(noisy_theory_header(&tc, delta));
            let yd = s.noisy(&s.y, delta);
            run_noisy(&p.model, Some(&p.x_dagger), &yd, &s.x0, &scfg, Some(&tc))?
        }
        _ => {
            let step = cfg.compare.as_ref().and_then(|c| c.step_scale);
            landweber_run(&p.model, Some(&p.x_dagger), &s.y, &s.x0, step, &scfg)?
        }
    };
    header.extend(hypothesis_header(&trace));
    let mut tf = TraceFile::from_trace(&trace);
    tf.header = header;
    tf.footer = run_footer(&trace, Some(&p.x_dagger));
    finish(tf, cfg, started, terminal_exit_code(trace.terminal), trace_summary(&trace))
}

/// `reconstruct`: lattice scan for a starting point, then the iteration.
pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    if !matches!(cfg.mode, Mode::ReconstructExact | Mode::ReconstructNoisy) {
        return Err(wrong_mode("reconstruct", cfg.mode, "reconstruct_exact, reconstruct_noisy"));
    }
    let s = Setup::build(cfg)?;
    let p = &s.problem;
    let settings = ReconSettings { q: cfg.q, tol_alpha: cfg.tol_alpha.unwrap_or(ReconSettings::default().tol_alpha), ..ReconSettings::default() };
    let mut header = common_header("reconstruct", cfg, &s);
    let qfx = s.measured_exact();
    let (rec, kstar_bound) = if cfg.mode == Mode::ReconstructExact {
        let target = cfg.target_gamma.expect("validated");
        let tc = TheoryConstantsExact::evaluate(&p.certificate, cfg.q);
        header.extend(exact_theory_header(&tc));
        let rec = reconstruct_exact(&p.model, &p.measurement, &p.default_box, &p.certificate, &qfx, target, &settings, Some(&p.x_dagger))?;
        (rec, None)
    } else {
        let (tau, delta) = (cfg.tau.expect("validated"), cfg.delta.expect("validated"));
        let tc = TheoryConstantsNoisy::evaluate(&p.certificate, cfg.q, tau);
        header.extend(noisy_theory_header(&tc, delta));
        let yd = s.noisy(&qfx, delta);
        let max_iters = cfg.max_iters.unwrap_or(1000);
        let rec = reconstruct_noisy(&p.model, &p.measurement, &p.default_box, &p.certificate, &yd, tau, delta, max_iters, &settings, Some(&p.x_dagger))?;
        (rec, Some(kstar_upper_bound(&tc, &p.certificate, cfg.q, tau, delta)))
    };
    let sc = &rec.scan;
    let counts: Vec<String> = sc.counts.iter().map(u64::to_string).collect();
    header.extend([
        ("recon.lattice_points".to_string(), sc.lattice_points.to_string()),
        ("recon.counts".into(), format!("[{}]", counts.join(", "))),
        ("recon.radius".into(), fmt_f64(sc.radius)),
        ("recon.covering_radius".into(), fmt_f64(sc.covering_radius)),
        ("recon.threshold".into(), fmt_f64(sc.threshold)),
        ("recon.strategy".into(), sc.strategy.as_str().into()),
        ("recon.scan_index".into(), sc.hit.index.to_string()),
        ("recon.scan_evaluations".into(), sc.hit.evaluations.to_string()),
        ("recon.scan_misfit".into(), fmt_f64(sc.hit.misfit)),
        ("recon.x0".into(), fmt_vec(rec.x0())),
        ("recon.budget".into(), rec.budget.to_string()),
    ]);
    if let Some(b) = kstar_bound {
        header.push(("recon.kstar_upper_bound".into(), b.to_string()));
    }
    for a in &rec.assumptions.items {
        header.push((format!("assumption.{}", a.name), format!("{} ({})", a.holds, a.detail)));
    }
    header.extend(hypothesis_header(&rec.trace));
    let mut tf = TraceFile::from_trace(&rec.trace);
    tf.header = header;
    tf.footer = run_footer(&rec.trace, Some(&p.x_dagger));
    let err = (&rec.x - &p.x_dagger).norm();
    let summary = format!(
        "lattice {} points ({} scan evaluations), x0 = {}, final x = {}, error {:.3e}; {}",
        sc.lattice_points,
        sc.hit.evaluations,
        fmt_vec(rec.x0()),
        fmt_vec(&rec.x),
        err,
        trace_summary(&rec.trace)
    );
    finish(tf, cfg, started, terminal_exit_code(rec.trace.terminal), summary)
}

fn is_linear(id: &str) -> bool {
    matches!(id, "scalar_linear" | "diagonal_linear")
}

/// `verify`: oracle suites plus every armed invariant on exact (and, with
/// `delta`, noisy) runs. Exit 0 iff every armed check passes.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let s = Setup::build(cfg)?;
    let p = &s.problem;
    let seed = cfg.certificate_seed.unwrap_or(0).wrapping_add(0x5eed);
    let mut table = CheckTable::default();

    let adj = p.model.adjoint_test(200, seed);
    table.push(CheckRow::new("adjoint test", adj.passes(1e-10), format!("worst scaled gap {:.3e}, tol 1e-10", adj.worst_scaled_gap)));
    let fd = p.model.jacobian_fd_test(50, seed, 1e-6)?;
    table.push(CheckRow::new("jacobian vs finite differences", fd <= 1e-5, format!("max rel gap {fd:.3e}, tol 1e-5")));
    let rep = p.reverify(10_000, seed)?;
    let detail = format!("{} pairs, {} violations, worst key ratio {:.4}", rep.pairs, rep.violations(), rep.recon.worst_ratio);
    if cfg.constants_override.as_ref().is_some_and(|o| !o.is_empty()) {
        // forced constants are a deliberate what-if, not a claim about F
        table.push(CheckRow::not_armed("certificate re-verification", format!("constants overridden; {detail}")));
    } else {
        table.push(CheckRow::new("certificate re-verification", rep.passes(), detail));
    }
    let rp = rho_prime_for_eta(&p.certificate, TCC_ETA).min(p.certificate.domain_rho_prime);
    let tcc = check_tangential_cone(&p.model, &p.certificate, p.model.center(), rp, 10_000, seed)?;
    table.push(CheckRow::new(
        "tangential cone",
        tcc.passes() && tcc.eta < 1.0,
        format!("eta {:.4} on rho' {:.3e}, {} violations in {} pairs, worst ratio {:.4}", tcc.eta, tcc.rho_prime, tcc.violations, tcc.samples, tcc.worst_ratio),
    ));

    let scfg = SolverConfig { target_gamma: None, stop_mode: StopMode::FixedBudget, ..solver_config(cfg) };
    let scfg = SolverConfig { max_iters: cfg.max_iters.unwrap_or(50), ..scfg };
    let tc = TheoryConstantsExact::evaluate(&p.certificate, cfg.q);
    let exact = run_exact(&p.model, Some(&p.x_dagger), &s.y, &s.x0, &scfg, Some(&tc))?;
    let armed = exact.hypotheses.armed();
    let prefix = |t: CheckTable, label: &str| {
        let mut out = CheckTable::default();
        for mut r in t.rows {
            r.name = format!("{label}: {}", r.name);
            out.push(r);
        }
        out
    };
    let mut ex = CheckTable::default();
    ex.push(checks::check_clean_terminal(&exact));
    ex.push(checks::check_morozov(&exact, scfg.tol_alpha.max(1e-12) * 10.0));
    ex.push(checks::check_mdp_prime(&exact, 1e-8));
    ex.push(checks::check_alpha_bound(&exact));
    if is_linear(&cfg.problem_id) {
        ex.push(checks::check_residual_ratio(&exact, cfg.q, 1e-12 + scfg.tol_alpha));
    }
    ex.push(checks::check_error_monotonicity(&exact, &p.x_dagger));
    ex.push(checks::check_rate_bound(&exact, &tc, p.certificate.holder_eps, armed));
    table.extend(prefix(ex, "exact"));

    let mut tf = TraceFile::from_trace(&exact);
    let mut header = common_header("verify", cfg, &s);
    header.extend(exact_theory_header(&tc));
    header.extend(hypothesis_header(&exact));

    if let (Some(delta), Some(tau)) = (cfg.delta, cfg.tau) {
        let ncfg = SolverConfig { stop_mode: StopMode::Discrepancy, tau, delta, max_iters: cfg.max_iters.unwrap_or(1000), ..scfg };
        let tcn = TheoryConstantsNoisy::evaluate(&p.certificate, cfg.q, tau);
        let yd = s.noisy(&s.y, delta);
        let noisy = run_noisy(&p.model, Some(&p.x_dagger), &yd, &s.x0, &ncfg, Some(&tcn))?;
        let armed_n = noisy.hypotheses.armed();
        let qt = qtilde(cfg.q, &p.certificate, (&s.x0 - &p.x_dagger).norm()).ok();
        let mut nt = CheckTable::default();
        nt.push(checks::check_clean_terminal(&noisy));
        nt.push(checks::check_mdp_prime(&noisy, 1e-8));
        nt.push(checks::check_discrepancy_stop(&noisy, tau * delta));
        nt.push(checks::check_kstar_bound(&noisy, tcn.kstar_bound(delta), armed_n));
        nt.push(if armed_n { checks::check_gamma_nonincreasing(&noisy, noisy.k_star) } else { CheckRow::not_armed("gamma non-increasing", "hypothesis failed") });
        nt.push(checks::check_error_monotonicity(&noisy, &p.x_dagger));
        nt.push(checks::check_qtilde_contraction(&noisy, qt.as_ref()));
        nt.push(checks::check_kstar_log(&noisy, qt.as_ref(), tau, delta));
        table.extend(prefix(nt, "noisy"));
        header.extend(noisy_theory_header(&tcn, delta));
        header.extend(hypothesis_header(&noisy).into_iter().map(|(k, v)| (format!("noisy.{k}"), v)));
    }

    let code = if table.all_armed_pass() { exit::OK } else { exit::VERIFY_FAILED };
    for row in &table.rows {
        header.push(("check".into(), row.to_string()));
    }
    tf.header = header;
    tf.footer = run_footer(&exact, Some(&p.x_dagger));
    finish(tf, cfg, started, code, table.render())
}

/// One method's row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub iterations_to: Vec<Option<usize>>,
    pub calls_per_iteration: f64,
    pub k_star: Option<usize>,
    pub terminal: String,
}

fn counted(model: &ForwardModel) -> Result<(ForwardModel, Arc<CountingOperator>), CliError> {
    let op = Arc::new(CountingOperator::new(model.operator().clone()));
    let m = ForwardModel::new(op.clone(), model.center().clone(), model.radius_sq())?.with_policy(model.policy());
    Ok((m, op))
}

fn run_method(method: &str, s: &Setup, y: &nalgebra::DVector<f64>, cfg: &SolverConfig, step: Option<f64>) -> Result<(IterationTrace, f64), CliError> {
    let (model, counter) = counted(&s.problem.model)?;
    let xd = Some(&s.problem.x_dagger);
    let trace = match (method, cfg.stop_mode) {
        ("lm", StopMode::Discrepancy) => run_noisy(&model, xd, y, &s.x0, cfg, None)?,
        ("lm", _) => run_exact(&model, xd, y, &s.x0, cfg, None)?,
        _ => landweber_run(&model, xd, y, &s.x0, step, cfg)?,
    };
    let per_iter = counter.counts().total() as f64 / trace.iterations().max(1) as f64;
    Ok((trace, per_iter))
}

/// Side-by-side iteration counts for LM and Landweber on exact data, plus
/// k* on noisy data when `delta` is configured.
pub fn compare_rows(cfg: &RunConfig, s: &Setup) -> Result<Vec<CompareRow>, CliError> {
    let cc = cfg.compare.clone().unwrap_or_default();
    let target = cc.thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let base = SolverConfig {
        q: cfg.q,
        max_iters: cfg.max_iters.unwrap_or(COMPARE_MAX_ITERS),
        tol_alpha: cfg.tol_alpha.unwrap_or(SolverConfig::default().tol_alpha),
        target_residual: Some(target),
        ..SolverConfig::default()
    };
    let mut rows = Vec::new();
    for method in &cc.methods {
        let (trace, per_iter) = run_method(method, s, &s.y, &base, cc.step_scale)?;
        let k_star = match (cfg.delta, cfg.tau) {
            (Some(delta), Some(tau)) => {
                let ncfg = SolverConfig { stop_mode: StopMode::Discrepancy, tau, delta, target_residual: None, ..base.clone() };
                run_method(method, s, &s.noisy(&s.y, delta), &ncfg, cc.step_scale)?.0.k_star
            }
            _ => None,
        };
        rows.push(CompareRow {
            method: method.clone(),
            iterations_to: cc.thresholds.iter().map(|t| trace.first_below(*t)).collect(),
            calls_per_iteration: per_iter,
            k_star,
            terminal: trace.terminal.as_str().into(),
        });
    }
    Ok(rows)
}

pub fn render_compare(cc: &CompareConfig, rows: &[CompareRow]) -> String {
    let mut out = String::from("method");
    for t in &cc.thresholds {
        out.push_str(&format!(",iters_to_{t:e}"));
    }
    out.push_str(",calls_per_iter,k_star,terminal\n");
    for r in rows {
        out.push_str(&r.method);
        for i in &r.iterations_to {
            out.push(',');
            out.push_str(&i.map(|v| v.to_string()).unwrap_or_default());
        }
        out.push_str(&format!(",{:.3},{},{}\n", r.calls_per_iteration, r.k_star.map(|k| k.to_string()).unwrap_or_default(), r.terminal));
    }
    out
}

/// `compare`: writes the table as delimited text with a `#` header.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = Setup::build(cfg)?;
    let rows = compare_rows(cfg, &s)?;
    let cc = cfg.compare.clone().unwrap_or_default();
    let table = render_compare(&cc, &rows);
    let mut output = String::new();
    for (k, v) in common_header("compare", cfg, &s) {
        output.push_str(&format!("# {k} = {v}\n"));
    }
    output.push_str(&table);
    write_text(&cfg.output_path, &output)?;
    Ok(Outcome { code: exit::OK, output, summary: table })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
