use std::io::{self, Write};

use approx_topk::dataset::{write_results_csv, ResultRecord};

use crate::Format;

/// What a subcommand produced: result records plus free-form notes shown
/// above the table (sent to stderr in CSV mode).
#[derive(Debug, Default)]
pub struct Report {
    pub notes: Vec<String>,
    pub records: Vec<ResultRecord>,
}

impl Report {
    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn push(&mut self, config: impl Into<String>, metric: &str, value: f64) {
        self.records.push(ResultRecord::new(config, metric, value));
    }

    pub fn push_se(&mut self, config: impl Into<String>, metric: &str, value: f64, stderr: Option<f64>) {
        let mut r = ResultRecord::new(config, metric, value);
        r.stderr = stderr;
        self.records.push(r);
    }
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.0}")
    } else if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e7) {
        format!("{x:.6e}")
    } else {
        format!("{x:.6}")
    }
}

pub fn emit(report: &Report, format: Format) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Csv => {
            for n in &report.notes {
                eprintln!("{n}");
            }
            write_results_csv(&report.records, &mut out)?;
        }
        Format::Table => {
            for n in &report.notes {
                writeln!(out, "{n}")?;
            }
            if report.records.is_empty() {
                return Ok(());
            }
            let rows: Vec<[String; 4]> = report
                .records
                .iter()
                .map(|r| {
                    [
                        r.config.clone(),
                        r.metric.clone(),
                        fmt_num(r.value),
                        r.stderr.map(fmt_num).unwrap_or_default(),
                    ]
                })
                .collect();
            let header = ["config", "metric", "value", "stderr"].map(String::from);
            let mut width = [0usize; 4];
            for row in std::iter::once(&header).chain(&rows) {
                for (w, cell) in width.iter_mut().zip(row) {
                    *w = (*w).max(cell.len());
                }
            }
            for row in std::iter::once(&header).chain(&rows) {
                let line = format!(
                    "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
                    row[0],
                    row[1],
                    row[2],
                    row[3],
                    w0 = width[0],
                    w1 = width[1],
                    w2 = width[2],
                    w3 = width[3]
                );
                writeln!(out, "{}", line.trim_end())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
