//! CSV emitters for evaluation and sweep results.
//!
//! | file | columns |
//! |---|---|
//! | `cdf_<algo>_nt<k>.csv` | `error,F` |
//! | `confusion.csv` | `true_nt,pred_1,...,pred_K` |
//! | `classification.csv` | `nt,precision,recall` |
//! | `rmse_matrix.csv` | `model_nt,true_1,...,true_K` |
//! | `summary.csv` | `algo,nt,samples,matched,unmatched,median,p90,rmse` |
//! | `density_sweep.csv` | `mode,n_s,area_w,area_h,rho,rmse_dl,rmse_reml,rmse_ps,rmse_rg` |
//! | `sweep_cdf_<mode>_ns<n>_<algo>.csv` | `error,F` |
//!
//! Every file starts with the `# mtl-lab config=<hash> seed=<n>` line.
//! Undefined values (an algorithm that was not run, an empty denominator)
//! are written as `nan`.

use std::fmt::Write as _;

use mtl_core::eval::{ConfusionMatrix, ErrorSummary, SweepMode};

use crate::formats::Stamp;
use crate::pipeline::{Evaluation, Method, SweepRow};

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    num(v.unwrap_or(f64::NAN))
}

pub fn mode_label(mode: SweepMode) -> &'static str {
    match mode {
        SweepMode::ConstantDensity => "density",
        SweepMode::ConstantArea => "area",
    }
}

pub fn cdf_csv(summary: &ErrorSummary, stamp: &Stamp) -> String {
    let mut s = format!("{}\nerror,F\n", stamp.line());
    for (e, f) in summary.cdf() {
        let _ = writeln!(s, "{},{}", num(e), num(f));
    }
    s
}

pub fn confusion_csv(cm: &ConfusionMatrix, stamp: &Stamp) -> String {
    let k = cm.n_classes();
    let mut s = format!("{}\ntrue_nt", stamp.line());
    for p in 1..=k {
        let _ = write!(s, ",pred_{p}");
    }
    s.push('\n');
    for (t, row) in cm.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{},{}", t + 1, cells.join(","));
    }
    s
}

pub fn classification_csv(cm: &ConfusionMatrix, stamp: &Stamp) -> String {
    let mut s = format!("{}\nnt,precision,recall\n", stamp.line());
    for c in 1..=cm.n_classes() {
        let _ = writeln!(s, "{c},{},{}", opt(cm.precision(c)), opt(cm.recall(c)));
    }
    s
}

pub fn rmse_matrix_csv(matrix: &[Vec<f64>], stamp: &Stamp) -> String {
    let k = matrix.first().map_or(0, Vec::len);
    let mut s = format!("{}\nmodel_nt", stamp.line());
    for m in 1..=k {
        let _ = write!(s, ",true_{m}");
    }
    s.push('\n');
    for (n, row) in matrix.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
        let _ = writeln!(s, "{},{}", n + 1, cells.join(","));
    }
    s
}

pub fn summary_csv(eval: &Evaluation, stamp: &Stamp) -> String {
    let mut s = format!("{}\nalgo,nt,samples,matched,unmatched,median,p90,rmse\n", stamp.line());
    for c in &eval.curves {
        let m = &c.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.method.label(),
            c.n_t,
            m.samples,
            m.errors.len(),
            m.unmatched_truths,
            num(m.median()),
            num(m.quantile(0.9)),
            num(m.rmse())
        );
    }
    s
}

pub fn density_sweep_csv(rows: &[SweepRow], stamp: &Stamp) -> String {
    let mut s = format!("{}\nmode,n_s,area_w,area_h,rho", stamp.line());
    for m in Method::SWEEP {
        let _ = write!(s, ",rmse_{}", m.label());
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            mode_label(r.mode),
            r.point.n_s,
            num(r.point.area.width),
            num(r.point.area.height),
            num(r.point.density)
        );
        for m in Method::SWEEP {
            let _ = write!(s, ",{}", opt(r.summary(m).map(ErrorSummary::rmse)));
        }
        s.push('\n');
    }
    s
}
