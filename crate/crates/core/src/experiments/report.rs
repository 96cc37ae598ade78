use std::io::Write;

use serde::Serialize;

use super::harness::EvalReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub scenario: String,
    pub week: usize,
    pub mask_id: usize,
    /// Empty cell when the fold failed.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub scenario: String,
    pub mean_rmse: Option<f64>,
}

/// Accumulates per-fold results and fold means for several methods.
#[derive(Debug, Default, Clone)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ResultTable {
    pub fn push(&mut self, method: &str, scenario: &str, report: &EvalReport) {
        for f in &report.folds {
            self.rows.push(ResultRow {
                method: method.to_string(),
                scenario: scenario.to_string(),
                week: f.week,
                mask_id: f.mask_id,
                rmse: f.rmse,
            });
        }
        self.summary.push(SummaryRow {
            method: method.to_string(),
            scenario: scenario.to_string(),
            mean_rmse: report.mean_rmse,
        });
    }

    pub fn mean(&self, method: &str, scenario: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.scenario == scenario)
            .and_then(|r| r.mean_rmse)
    }

    /// `method,scenario,week,mask_id,rmse`
    pub fn write_rows<W: Write>(&self, writer: W) -> Result<()> {
        write_all(writer, &self.rows)
    }

    /// `method,scenario,mean_rmse`
    pub fn write_summary<W: Write>(&self, writer: W) -> Result<()> {
        write_all(writer, &self.summary)
    }
}

fn write_all<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::FoldScore;

    #[test]
    fn csv_layout_and_missing_cells() {
        let report = EvalReport {
            folds: vec![
                FoldScore {
                    week: 3,
                    mask_id: 0,
                    rmse: Some(0.25),
                    error: None,
                },
                FoldScore {
                    week: 3,
                    mask_id: 1,
                    rmse: None,
                    error: Some("x".into()),
                },
            ],
            mean_rmse: Some(0.25),
        };
        let mut t = ResultTable::default();
        t.push("grals", "block", &report);
        let mut buf = Vec::new();
        t.write_rows(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,scenario,week,mask_id,rmse\ngrals,block,3,0,0.25\ngrals,block,3,1,\n"
        );
        let mut buf = Vec::new();
        t.write_summary(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,scenario,mean_rmse\ngrals,block,0.25\n"
        );
        assert_eq!(t.mean("grals", "block"), Some(0.25));
    }
}
