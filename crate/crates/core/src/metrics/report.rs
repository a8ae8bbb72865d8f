use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed leading CSV columns; one `client_<k>` accuracy column follows per client.
pub const CSV_HEADER: [&str; 6] = [
    "round",
    "avg_acc",
    "mean_loss",
    "uplink",
    "downlink",
    "flops",
];

/// Everything recorded after one communication round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    #[serde(rename = "avg_acc")]
    pub avg_test_accuracy: f64,
    #[serde(rename = "client_acc")]
    pub per_client_accuracy: Vec<f64>,
    #[serde(rename = "mean_loss")]
    pub mean_train_loss: f64,
    #[serde(rename = "uplink")]
    pub uplink_params: u64,
    #[serde(rename = "downlink")]
    pub downlink_params: u64,
    pub flops: u64,
}

impl RoundReport {
    /// Checks accuracies lie in `[0, 1]` and the average matches the per-client mean.
    pub fn validate(&self) -> Result<()> {
        if self.per_client_accuracy.is_empty() {
            return Err(Error::Empty(format!(
                "round {} has no client accuracies",
                self.round
            )));
        }
        if let Some(a) = self
            .per_client_accuracy
            .iter()
            .chain([&self.avg_test_accuracy])
            .find(|a| !(0.0..=1.0).contains(*a))
        {
            return Err(Error::config(format!(
                "round {}: accuracy {a} outside [0, 1]",
                self.round
            )));
        }
        let mean = mean(&self.per_client_accuracy);
        if (mean - self.avg_test_accuracy).abs() > 1e-12 {
            return Err(Error::config(format!(
                "round {}: avg_acc {} differs from client mean {mean}",
                self.round, self.avg_test_accuracy
            )));
        }
        Ok(())
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// First round whose average accuracy reaches `target`.
pub fn rounds_to_target(reports: &[RoundReport], target: f64) -> Option<usize> {
    reports
        .iter()
        .find(|r| r.avg_test_accuracy >= target)
        .map(|r| r.round)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::config(format!(
                "unknown report format `{s}` (csv|json)"
            ))),
        }
    }
}

/// Writes the reports. Floats use the shortest representation that parses
/// back to the same value, so files are reproducible and lossless.
pub fn export_reports(reports: &[RoundReport], path: &Path, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Csv => to_csv(reports)?,
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
            s.push('\n');
            s.into_bytes()
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_csv(reports: &[RoundReport]) -> Result<Vec<u8>> {
    let clients = reports.first().map_or(0, |r| r.per_client_accuracy.len());
    if let Some(r) = reports
        .iter()
        .find(|r| r.per_client_accuracy.len() != clients)
    {
        return Err(Error::config(format!(
            "round {} has {} clients, expected {clients}",
            r.round,
            r.per_client_accuracy.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = CSV_HEADER
        .iter()
        .map(|s| s.to_string())
        .chain((0..clients).map(|k| format!("client_{k}")));
    w.write_record(header).map_err(csv_err)?;
    for r in reports {
        let row = [
            r.round.to_string(),
            r.avg_test_accuracy.to_string(),
            r.mean_train_loss.to_string(),
            r.uplink_params.to_string(),
            r.downlink_params.to_string(),
            r.flops.to_string(),
        ]
        .into_iter()
        .chain(r.per_client_accuracy.iter().map(f64::to_string));
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::config(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::config(format!("csv: {e}"))
}

/// Reads a file written by [`export_reports`].
pub fn load_reports(path: &Path, format: ReportFormat) -> Result<Vec<RoundReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Json => serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        }),
        ReportFormat::Csv => parse_csv(path, &text),
    }
}

fn parse_csv(path: &Path, text: &str) -> Result<Vec<RoundReport>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let clients = header.len() - CSV_HEADER.len();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or_default();
        let int = |j: usize| {
            field(j).parse::<u64>().map_err(|e| {
                parse_err(
                    line,
                    format!("column {}: {e}", header.get(j).unwrap_or("?")),
                )
            })
        };
        let float = |j: usize| {
            field(j).parse::<f64>().map_err(|e| {
                parse_err(
                    line,
                    format!("column {}: {e}", header.get(j).unwrap_or("?")),
                )
            })
        };
        out.push(RoundReport {
            round: int(0)? as usize,
            avg_test_accuracy: float(1)?,
            mean_train_loss: float(2)?,
            uplink_params: int(3)?,
            downlink_params: int(4)?,
            flops: int(5)?,
            per_client_accuracy: (0..clients)
                .map(|k| float(CSV_HEADER.len() + k))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(round: usize) -> RoundReport {
        let per = vec![0.1 * round as f64, 1.0 / 3.0, 0.7];
        RoundReport {
            round,
            avg_test_accuracy: mean(&per),
            per_client_accuracy: per,
            mean_train_loss: 1.234_567_890_123 / (round + 1) as f64,
            uplink_params: 100,
            downlink_params: 100,
            flops: 123_456_789_012,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        export_reports(&[], &path, ReportFormat::Csv).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "round,avg_acc,mean_loss,uplink,downlink,flops\n"
        );
    }

    #[test]
    fn json_and_csv_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let reports: Vec<_> = (0..4).map(sample).collect();
        for format in [ReportFormat::Json, ReportFormat::Csv] {
            let path = dir.path().join(format!("r.{}", format.extension()));
            export_reports(&reports, &path, format).unwrap();
            let back = load_reports(&path, format).unwrap();
            assert_eq!(back, reports);
            for r in &back {
                r.validate().unwrap();
            }
        }
    }

    #[test]
    fn csv_header_lists_clients() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        export_reports(&[sample(1)], &path, ReportFormat::Csv).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "round,avg_acc,mean_loss,uplink,downlink,flops,client_0,client_1,client_2\n"
        ));
    }

    #[test]
    fn target_round() {
        let reports: Vec<_> = (0..5).map(sample).collect();
        let first = rounds_to_target(&reports, reports[3].avg_test_accuracy);
        assert_eq!(first, Some(3));
        assert_eq!(rounds_to_target(&reports, 2.0), None);
    }

    #[test]
    fn io_error_names_path() {
        let err = export_reports(&[], Path::new("/nonexistent-dir/x.csv"), ReportFormat::Csv)
            .unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
