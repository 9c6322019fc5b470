use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use super::EvalReport;
use crate::error::{Error, Result};

/// Writes floats with 17 significant digits so every value round-trips.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // JSON has no encoding for these
        "null".to_string()
    }
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).expect("report values serialize");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `results.json`, `cmc.csv`, `scores.csv` and `runconfig.json`.
pub fn emit_report(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("results.json"), &(to_json_17(report) + "\n"))?;
    write(&dir.join("runconfig.json"), &(to_json_17(&report.config_echo) + "\n"))?;

    let folds = report.per_fold.len();
    let ranks = report.per_fold.iter().map(|f| f.rank_accuracies.len()).max().unwrap_or(0);
    let mut cmc = String::from("rank");
    for f in 0..folds {
        cmc.push_str(&format!(",fold_{}", f + 1));
    }
    cmc.push_str(",mean\n");
    let curve = report.mean_cmc();
    for r in 0..ranks {
        cmc.push_str(&(r + 1).to_string());
        for fold in &report.per_fold {
            cmc.push(',');
            cmc.push_str(&fmt_f64(fold.accuracy_at(r + 1)));
        }
        cmc.push(',');
        cmc.push_str(&fmt_f64(curve[r]));
        cmc.push('\n');
    }
    write(&dir.join("cmc.csv"), &cmc)?;

    let mut scores = String::from("label,value\n");
    for fold in &report.per_fold {
        for v in &fold.genuine_scores {
            scores.push_str(&format!("genuine,{}\n", fmt_f64(*v)));
        }
        for v in &fold.impostor_scores {
            scores.push_str(&format!("impostor,{}\n", fmt_f64(*v)));
        }
    }
    write(&dir.join("scores.csv"), &scores)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
