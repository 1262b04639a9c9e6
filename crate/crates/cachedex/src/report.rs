//! Result serialization: measurement, projection, and answer CSV.
//!
//! The measurement schema is the stable interface downstream tooling
//! scrapes, so it is pinned hard: exact header, plain decimal numbers
//! (never scientific notation), LF line endings, UTF-8. Floats print in
//! Rust's shortest-round-trip form, so `parse(emit(rows)) == rows`
//! bit-for-bit — a property the tests exercise with random rows.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::EngineKind;
use crate::model::ProjectionRow;

/// Column header of the measurement CSV. Changing this is a breaking
/// schema change; the golden test below exists to make that loud.
pub const MEASUREMENT_HEADER: &str =
    "method,batch_bytes,total_keys,elapsed_ns,normalized_s,throughput_keys_per_s,slave_idle_fraction";

/// Column header of the projection CSV.
pub const PROJECTION_HEADER: &str = "year,method,per_key_ns,total_s,normalized_s,ratio_b_over_c3";

/// Column header of the answer CSV.
pub const ANSWER_HEADER: &str = "key,rank";

/// One timed cell of an experiment sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRow {
    /// Strategy measured.
    pub method: EngineKind,
    /// Batch size driven through the engine, bytes of keys.
    pub batch_bytes: u64,
    /// Keys answered in one pass.
    pub total_keys: u64,
    /// Median wall-clock over the timed passes, nanoseconds.
    pub elapsed_ns: u64,
    /// Elapsed seconds after the report normalization (single-node rows
    /// are divided by the configured divisor; cluster rows pass through).
    pub normalized_s: f64,
    /// Keys per second of the median pass.
    pub throughput_keys_per_s: f64,
    /// Mean fraction of wall-clock the slaves spent waiting for work
    /// (0 for single-node rows — there are no slaves to idle).
    pub slave_idle_fraction: f64,
}

/// CSV-layer failures.
#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("bad header: expected {expected:?}, found {found:?}")]
    Header { expected: &'static str, found: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {value:?}")]
    Field { line: usize, column: &'static str, value: String },
}

/// Renders measurement rows as CSV. Empty input yields the header alone.
pub fn emit_measurements(rows: &[MeasurementRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 80);
    out.push_str(MEASUREMENT_HEADER);
    out.push('\n');
    for row in rows {
        // u64 and f64 Display are both plain decimal; f64 prints the
        // shortest digits that parse back to the same bits.
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.method,
            row.batch_bytes,
            row.total_keys,
            row.elapsed_ns,
            row.normalized_s,
            row.throughput_keys_per_s,
            row.slave_idle_fraction,
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// Parses measurement CSV produced by [`emit_measurements`] (or by hand,
/// as long as the schema matches).
pub fn parse_measurements(text: &str) -> Result<Vec<MeasurementRow>, ReportError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != MEASUREMENT_HEADER {
        return Err(ReportError::Header { expected: MEASUREMENT_HEADER, found: header.to_string() });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue; // tolerate a trailing newline
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(ReportError::FieldCount { line: line_no, expected: 7, found: fields.len() });
        }
        rows.push(MeasurementRow {
            method: parse_field(fields[0], line_no, "method")?,
            batch_bytes: parse_field(fields[1], line_no, "batch_bytes")?,
            total_keys: parse_field(fields[2], line_no, "total_keys")?,
            elapsed_ns: parse_field(fields[3], line_no, "elapsed_ns")?,
            normalized_s: parse_field(fields[4], line_no, "normalized_s")?,
            throughput_keys_per_s: parse_field(fields[5], line_no, "throughput_keys_per_s")?,
            slave_idle_fraction: parse_field(fields[6], line_no, "slave_idle_fraction")?,
        });
    }
    Ok(rows)
}

fn parse_field<T: FromStr>(
    raw: &str,
    line: usize,
    column: &'static str,
) -> Result<T, ReportError> {
    raw.parse().map_err(|_| ReportError::Field { line, column, value: raw.to_string() })
}

/// Renders projection rows as CSV.
pub fn emit_projection(rows: &[ProjectionRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 64);
    out.push_str(PROJECTION_HEADER);
    out.push('\n');
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.year,
            row.method,
            row.per_key_ns,
            row.total_s,
            row.normalized_s,
            row.ratio_b_over_c3,
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// Streams `key,rank` answer rows as CSV to a writer. Used by the
/// multi-process runs, where the answer stream is the artifact two
/// transports must reproduce byte for byte.
pub fn write_answers(
    mut sink: impl std::io::Write,
    pairs: impl IntoIterator<Item = (u32, u64)>,
) -> std::io::Result<()> {
    writeln!(sink, "{ANSWER_HEADER}")?;
    for (key, rank) in pairs {
        writeln!(sink, "{key},{rank}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> MeasurementRow {
        MeasurementRow {
            method: EngineKind::C3,
            batch_bytes: 131072,
            total_keys: 1 << 20,
            elapsed_ns: 123_456_789,
            normalized_s: 0.123456789,
            throughput_keys_per_s: 8_493_465.6,
            slave_idle_fraction: 0.25,
        }
    }

    /// Golden schema check: the header is an external contract.
    #[test]
    fn measurement_header_is_pinned() {
        assert_eq!(
            MEASUREMENT_HEADER,
            "method,batch_bytes,total_keys,elapsed_ns,normalized_s,throughput_keys_per_s,slave_idle_fraction"
        );
        let csv = emit_measurements(&[sample_row()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(MEASUREMENT_HEADER));
        assert_eq!(lines.next(), Some("c3,131072,1048576,123456789,0.123456789,8493465.6,0.25"));
        assert_eq!(lines.next(), None);
        assert!(csv.ends_with('\n'));
        assert!(!csv.contains('\r'), "LF only");
    }

    #[test]
    fn empty_input_emits_header_only() {
        assert_eq!(emit_measurements(&[]), format!("{MEASUREMENT_HEADER}\n"));
        assert_eq!(parse_measurements(&emit_measurements(&[])).unwrap(), vec![]);
    }

    #[test]
    fn no_scientific_notation_even_for_extreme_values() {
        let mut row = sample_row();
        row.throughput_keys_per_s = 3.5e9;
        row.slave_idle_fraction = 1e-7;
        let csv = emit_measurements(&[row]);
        for line in csv.lines().skip(1) {
            // The method column is alphabetic; every numeric column must be
            // plain decimal.
            let numerics = line.split_once(',').unwrap().1;
            assert!(!numerics.to_ascii_lowercase().contains('e'), "plain decimal required: {line}");
        }
        assert!(csv.contains("3500000000"));
        assert!(csv.contains("0.0000001"));
    }

    /// 1000 random rows survive a full round trip exactly.
    #[test]
    fn round_trips_random_rows() {
        // Small deterministic generator; no distribution subtleties needed.
        let mut state = 0x5851_F42D_4C95_7F2Du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        let rows: Vec<MeasurementRow> = (0..1000)
            .map(|_| MeasurementRow {
                method: EngineKind::ALL[(next() % 5) as usize],
                batch_bytes: next() % (1 << 30),
                total_keys: next(),
                elapsed_ns: next(),
                normalized_s: (next() as f64 / u64::MAX as f64) * 1e3,
                throughput_keys_per_s: (next() as f64 / u64::MAX as f64) * 1e9,
                slave_idle_fraction: next() as f64 / u64::MAX as f64,
            })
            .collect();
        let parsed = parse_measurements(&emit_measurements(&rows)).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn rejects_wrong_header() {
        let err = parse_measurements("method,batch_bytes\n").unwrap_err();
        assert!(matches!(err, ReportError::Header { .. }));
    }

    #[test]
    fn rejects_short_rows_and_bad_fields() {
        let good = emit_measurements(&[sample_row()]);
        let short = good.replace(",0.25", "");
        assert_eq!(
            parse_measurements(&short).unwrap_err(),
            ReportError::FieldCount { line: 2, expected: 7, found: 6 }
        );
        let bad = good.replace("c3,", "q9,");
        assert_eq!(
            parse_measurements(&bad).unwrap_err(),
            ReportError::Field { line: 2, column: "method", value: "q9".into() }
        );
    }

    #[test]
    fn projection_csv_shape() {
        let rows = crate::model::ModelRun::reference()
            .project(1, &crate::model::ScalingAssumptions::default())
            .unwrap();
        let csv = emit_projection(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(PROJECTION_HEADER));
        assert_eq!(lines.count(), 6, "two years, three methods each");
        assert!(csv.starts_with("year,method,"));
    }

    #[test]
    fn answer_stream_is_deterministic_bytes() {
        let mut buf = Vec::new();
        write_answers(&mut buf, [(42u32, 7u64), (0, 0)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "key,rank\n42,7\n0,0\n");
    }
}
