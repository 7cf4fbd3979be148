//! Delimited trace files.
//!
//! ```text
//! # lmreg-trace v1
//! # <key> = <value>          header lines
//! k,alpha,residual,gamma,step_norm,mdp_prime_rel_err
//! 0,,1.0000000000000000e0,1.2500000000000000e-1,,
//! ...
//! # <key> = <value>          footer lines
//! ```
//!
//! Floats carry 17 significant digits, unset fields are empty, so
//! write → read → write is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use lmreg_core::IterationTrace;

use crate::error::CliError;

pub const MAGIC: &str = "# lmreg-trace v1";
pub const COLUMNS: [&str; 6] = ["k", "alpha", "residual", "gamma", "step_norm", "mdp_prime_rel_err"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub alpha: Option<f64>,
    pub residual: f64,
    pub gamma: Option<f64>,
    pub step_norm: Option<f64>,
    pub mdp_prime_rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceFile {
    pub header: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
    pub footer: Vec<(String, String)>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| CliError::TraceFormat(format!("line {line}: bad number '{s}'")))
}

fn push_meta(out: &mut String, key: &str, value: &str) {
    // values never span lines
    let _ = writeln!(out, "# {key} = {}", value.replace('\n', " "));
}

fn parse_meta(line: &str, n: usize) -> Result<(String, String), CliError> {
    let body = line.strip_prefix("# ").ok_or_else(|| CliError::TraceFormat(format!("line {n}: expected '# key = value'")))?;
    let (k, v) = body.split_once(" = ").ok_or_else(|| CliError::TraceFormat(format!("line {n}: expected '# key = value'")))?;
    Ok((k.to_string(), v.to_string()))
}

impl TraceFile {
    pub fn from_trace(trace: &IterationTrace) -> Self {
        let rows = trace
            .records
            .iter()
            .map(|r| TraceRow {
                k: r.k,
                alpha: r.alpha,
                residual: r.residual,
                gamma: r.gamma,
                step_norm: r.step_norm,
                mdp_prime_rel_err: r.mdp_prime_rel_err,
            })
            .collect();
        Self { header: Vec::new(), rows, footer: Vec::new() }
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn footer_value(&self, key: &str) -> Option<&str> {
        self.footer.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.header {
            push_meta(&mut out, k, v);
        }
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.k,
                fmt_opt(r.alpha),
                fmt_f64(r.residual),
                fmt_opt(r.gamma),
                fmt_opt(r.step_norm),
                fmt_opt(r.mdp_prime_rel_err)
            );
        }
        for (k, v) in &self.footer {
            push_meta(&mut out, k, v);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(CliError::TraceFormat(format!("missing '{MAGIC}' line"))),
        }
        let mut tf = TraceFile::default();
        let columns = COLUMNS.join(",");
        let mut in_rows = false;
        for (n, line) in lines {
            if line == columns && !in_rows {
                in_rows = true;
                continue;
            }
            if line.starts_with('#') {
                let kv = parse_meta(line, n)?;
                if in_rows {
                    tf.footer.push(kv);
                } else {
                    tf.header.push(kv);
                }
                continue;
            }
            if !in_rows || !tf.footer.is_empty() {
                return Err(CliError::TraceFormat(format!("line {n}: data row outside the row block")));
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != COLUMNS.len() {
                return Err(CliError::TraceFormat(format!("line {n}: expected {} fields, found {}", COLUMNS.len(), f.len())));
            }
            let k = f[0].parse().map_err(|_| CliError::TraceFormat(format!("line {n}: bad k '{}'", f[0])))?;
            let residual = parse_opt(f[2], n)?.ok_or_else(|| CliError::TraceFormat(format!("line {n}: residual is required")))?;
            tf.rows.push(TraceRow {
                k,
                alpha: parse_opt(f[1], n)?,
                residual,
                gamma: parse_opt(f[3], n)?,
                step_norm: parse_opt(f[4], n)?,
                mdp_prime_rel_err: parse_opt(f[5], n)?,
            });
        }
        if !in_rows {
            return Err(CliError::TraceFormat("missing column line".into()));
        }
        Ok(tf)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(path, self.render()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
