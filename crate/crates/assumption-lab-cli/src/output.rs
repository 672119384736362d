//! CSV traces and versioned JSON documents.

use std::fs;
use std::path::Path;

use assumption_lab::engine::Trace;
use assumption_lab::scenarios::Scenario;
use serde::Serialize;

use crate::error::CliError;

/// Bumped whenever a column or a JSON key changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Round-trip safe: 17 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn trace_header(scenario: &Scenario) -> Vec<String> {
    let mut h: Vec<String> = ["replication", "t", "theta", "action", "divergence"].iter().map(|s| s.to_string()).collect();
    h.extend(scenario.statistic_names().iter().map(|s| s.to_string()));
    let dim = scenario.omega_dim();
    h.extend((1..=dim).map(|i| format!("mean_omega{i}")));
    h.extend((1..=dim).map(|i| format!("sd_omega{i}")));
    h.push("theta_bar".into());
    h
}

pub fn write_trace(path: &Path, scenario: &Scenario, traces: &[Trace]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::WriterBuilder::new().delimiter(b',').terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(io)?;
    w.write_record(trace_header(scenario)).map_err(io)?;
    let mut record: Vec<String> = Vec::new();
    for tr in traces {
        for row in &tr.rows {
            record.clear();
            record.push(row.replication.to_string());
            record.push(row.t.to_string());
            record.push(fmt_num(row.theta));
            record.push(u8::from(row.action).to_string());
            record.push(fmt_num(row.divergence));
            record.extend(row.s.iter().map(|x| fmt_num(*x)));
            record.extend(row.means.iter().map(|x| fmt_num(*x)));
            record.extend(row.sds.iter().map(|x| fmt_num(*x)));
            record.push(row.theta_bar.map(fmt_num).unwrap_or_default());
            w.write_record(&record).map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, 0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn empty_trace_list_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let sc = Scenario::by_name("heckman-selection").unwrap();
        write_trace(&path, &sc, &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "replication,t,theta,action,divergence,s1,s2,s3,mean_omega1,mean_omega2,mean_omega3,\
             sd_omega1,sd_omega2,sd_omega3,theta_bar\n"
        );
    }
}
