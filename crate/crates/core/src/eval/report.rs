use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AccuracyReport, AgreementMatrices, CalibrationBins, CrossSkillMatrix, EvalError, MoveQualityStats,
    PerplexityReport, SmoothnessStats,
};
use crate::pipeline::BucketScheme;

/// Everything one `eval` run produces. Optional sections were not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub accuracy: AccuracyReport,
    pub perplexity: PerplexityReport,
    pub cross_skill: CrossSkillMatrix,
    pub calibration: CalibrationBins,
    pub agreement: Option<AgreementMatrices>,
    pub smoothness: Option<SmoothnessStats>,
    pub move_quality: Option<MoveQualityStats>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EvalError + '_ {
    move |e| EvalError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Square matrix with bucket labels on rows and columns; absent cells empty.
pub fn write_matrix_csv(path: &Path, scheme: BucketScheme, matrix: &[Vec<Option<f64>>]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let labels: Vec<String> = (0..matrix.len()).map(|b| scheme.label(b)).collect();
    let header = std::iter::once("bucket".to_string()).chain(labels.iter().cloned());
    w.write_record(header).map_err(csv_err(path))?;
    for (label, row) in labels.iter().zip(matrix) {
        let cells = std::iter::once(label.clone()).chain(row.iter().map(|&v| fmt_opt(v)));
        w.write_record(cells).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

impl EvalReport {
    /// Writes `report.json` plus one CSV per table into `dir`.
    pub fn write(&self, dir: &Path, scheme: BucketScheme) -> Result<(), EvalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(&json, text + "\n").map_err(io_err(&json))?;

        let mut acc: Vec<Vec<String>> = self
            .accuracy
            .groups
            .iter()
            .map(|g| vec![g.group.name().into(), g.total.to_string(), fmt_opt(g.accuracy)])
            .collect();
        acc.push(vec!["macro".into(), String::new(), fmt_opt(self.accuracy.macro_average)]);
        write_rows(&dir.join("accuracy.csv"), &["group", "examples", "accuracy_pct"], acc)?;

        let ppl = self
            .perplexity
            .groups
            .iter()
            .chain(std::iter::once(&self.perplexity.overall))
            .map(|g| {
                vec![
                    g.group.map_or("overall", |g| g.name()).into(),
                    g.count.to_string(),
                    fmt_opt(g.perplexity),
                    fmt_opt(g.cross_entropy_bits),
                ]
            })
            .collect();
        write_rows(
            &dir.join("perplexity.csv"),
            &["group", "examples", "perplexity", "cross_entropy_bits"],
            ppl,
        )?;

        write_matrix_csv(&dir.join("cross_skill_accuracy.csv"), scheme, &self.cross_skill.matrix())?;
        if let Some(a) = &self.agreement {
            let wrap = |m: &Vec<Vec<f64>>| -> Vec<Vec<Option<f64>>> {
                m.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
            };
            write_matrix_csv(&dir.join("agreement_active.csv"), scheme, &wrap(&a.active))?;
            write_matrix_csv(&dir.join("agreement_opponent.csv"), scheme, &wrap(&a.opponent))?;
        }

        let cal = self
            .calibration
            .bins
            .iter()
            .map(|b| {
                vec![
                    b.lower.to_string(),
                    b.upper.to_string(),
                    b.count.to_string(),
                    fmt_opt(b.mean_predicted),
                    fmt_opt(b.empirical),
                ]
            })
            .collect();
        write_rows(
            &dir.join("calibration.csv"),
            &["lower", "upper", "count", "mean_predicted", "empirical"],
            cal,
        )?;

        if let Some(q) = &self.move_quality {
            let rows = q
                .by_played_quality
                .iter()
                .map(|b| vec![format!("{:?}", b.band), b.total.to_string(), fmt_opt(b.accuracy)])
                .collect();
            write_rows(&dir.join("accuracy_by_move_quality.csv"), &["band", "examples", "accuracy"], rows)?;
        }
        Ok(())
    }
}
