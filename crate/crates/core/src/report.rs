//! CSV report files. Every float is printed with six decimals so reports
//! are byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{ConfidenceBucket, DegreeRow, Prf};

pub const PRF_CSV: &str = "prf.csv";
pub const CONFIDENCE_CSV: &str = "confidence_curve.csv";
pub const MASKING_CSV: &str = "masking_curve.csv";
pub const DEGREE_CSV: &str = "degree_table.csv";

pub fn prf_csv(rows: &[(String, Prf)]) -> String {
    let mut s = String::from("model_label,precision,recall,f1\n");
    for (label, p) in rows {
        let _ = writeln!(s, "{label},{:.6},{:.6},{:.6}", p.precision, p.recall, p.f1);
    }
    s
}

pub fn confidence_csv(curve: &[ConfidenceBucket]) -> String {
    let mut s = String::from("level,n,n_correct,fraction\n");
    for b in curve {
        let _ = writeln!(
            s,
            "{:.6},{},{},{:.6}",
            b.level, b.n_cells, b.n_correct, b.fraction_correct
        );
    }
    s
}

pub fn masking_csv(curves: &[(f64, Vec<ConfidenceBucket>)]) -> String {
    let mut s = String::from("factor,level,fraction\n");
    for (factor, curve) in curves {
        for b in curve {
            let _ = writeln!(s, "{factor},{:.6},{:.6}", b.level, b.fraction_correct);
        }
    }
    s
}

pub fn degree_csv(rows: &[DegreeRow]) -> String {
    let mut s = String::from("degree,n,percent,mean_confidence\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6}",
            r.degree, r.n_cells, r.percent, r.mean_confidence
        );
    }
    s
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
