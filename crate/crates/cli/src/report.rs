//! Per-step CSV output shared by every subcommand that produces a time series.

use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: &str =
    "step,t,k,eps,est1,est2,est_c,rejections,order,div_norm,energy,err_u,err_p";

/// One accepted step. Optional columns render as empty fields: the startup
/// step has no filter estimators, and scenarios without an exact solution
/// have no error columns.
#[derive(Clone, Debug)]
pub struct CsvRow {
    pub step: usize,
    pub t: f64,
    pub k: f64,
    pub eps: f64,
    pub est1: Option<f64>,
    pub est2: Option<f64>,
    pub est_c: f64,
    pub rejections: usize,
    pub order: usize,
    pub div_norm: f64,
    pub energy: f64,
    pub err_u: Option<f64>,
    pub err_p: Option<f64>,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

impl CsvRow {
    pub fn render(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            fmt(self.t),
            fmt(self.k),
            fmt(self.eps),
            fmt_opt(self.est1),
            fmt_opt(self.est2),
            fmt(self.est_c),
            self.rejections,
            self.order,
            fmt(self.div_norm),
            fmt(self.energy),
            fmt_opt(self.err_u),
            fmt_opt(self.err_p),
        )
    }
}

pub fn render_csv(rows: &[CsvRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for row in rows {
        s.push_str(&row.render());
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> std::io::Result<()> {
    write_text(path, &render_csv(rows))
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub const ODE_CSV_HEADER: &str = "t,k,y_pre,y_post,est1,est2,accepted,order";

/// Scalar-problem step records; vector components joined with `;`.
pub fn render_ode_csv(records: &[acflow_core::OdeStepRecord]) -> String {
    let join = |v: &[f64]| v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(";");
    let mut s = String::from(ODE_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt(r.t),
            fmt(r.k),
            join(&r.y_pre),
            join(&r.y_post),
            fmt_opt(r.est1),
            fmt_opt(r.est2),
            r.accepted,
            r.order,
        ));
    }
    s
}
