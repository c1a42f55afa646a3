//! Sample files: CSV with the eight-column header, or JSON lines with the
//! same keys.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rem_core::model::{validate_sample, RawSample};
use rem_core::{BeaconSample, Dataset};
use serde::{Deserialize, Serialize};

pub const HEADER: [&str; 8] = ["timestamp", "x", "y", "z", "ssid", "rssi", "mac", "channel"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess from a file extension; anything but `.jsonl`/`.ndjson` is CSV.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

/// Strict parsing stops at the first bad record; lenient parsing skips it
/// and keeps a note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// A rejected record. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: u64,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: field {field}: {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad csv header {found:?}, expected {expected}", expected = HEADER.join(","))]
    Header { found: Vec<String> },
    #[error("{0}")]
    Record(RecordError),
}

impl IngestError {
    pub fn line(&self) -> Option<u64> {
        match self {
            IngestError::Record(r) => Some(r.line),
            IngestError::Header { .. } => Some(1),
            IngestError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    /// Records dropped in lenient mode, in file order.
    pub skipped: Vec<RecordError>,
}

fn record_error(line: u64, field: Option<&str>, message: impl Into<String>) -> RecordError {
    RecordError {
        line,
        field: field.map(str::to_string),
        message: message.into(),
    }
}

fn number<T: FromStr>(line: u64, field: &str, text: &str) -> Result<T, RecordError>
where
    T::Err: fmt::Display,
{
    text.trim()
        .parse()
        .map_err(|e| record_error(line, Some(field), format!("cannot parse {text:?}: {e}")))
}

fn csv_record(line: u64, rec: &csv::StringRecord) -> Result<BeaconSample, RecordError> {
    if rec.len() != HEADER.len() {
        return Err(record_error(line, None, format!("expected 8 fields, found {}", rec.len())));
    }
    let raw = RawSample {
        timestamp: number(line, "timestamp", &rec[0])?,
        x: number(line, "x", &rec[1])?,
        y: number(line, "y", &rec[2])?,
        z: number(line, "z", &rec[3])?,
        ssid: &rec[4],
        rssi: number(line, "rssi", &rec[5])?,
        mac: rec[6].trim(),
        channel: number(line, "channel", &rec[7])?,
    };
    validate_sample(&raw).map_err(|e| record_error(line, Some(e.field()), e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord<'a> {
    timestamp: i64,
    x: f64,
    y: f64,
    z: f64,
    #[serde(borrow)]
    ssid: std::borrow::Cow<'a, str>,
    rssi: i64,
    #[serde(borrow)]
    mac: std::borrow::Cow<'a, str>,
    channel: i64,
}

fn json_record(line: u64, text: &str) -> Result<BeaconSample, RecordError> {
    let rec: JsonRecord<'_> =
        serde_json::from_str(text).map_err(|e| record_error(line, None, format!("invalid record: {e}")))?;
    let raw = RawSample {
        timestamp: rec.timestamp,
        x: rec.x,
        y: rec.y,
        z: rec.z,
        ssid: &rec.ssid,
        rssi: rec.rssi,
        mac: &rec.mac,
        channel: rec.channel,
    };
    validate_sample(&raw).map_err(|e| record_error(line, Some(e.field()), e.to_string()))
}

fn keep(
    result: Result<BeaconSample, RecordError>,
    mode: ParseMode,
    samples: &mut Vec<BeaconSample>,
    skipped: &mut Vec<RecordError>,
) -> Result<(), IngestError> {
    match result {
        Ok(s) => samples.push(s),
        Err(e) if mode == ParseMode::Lenient => skipped.push(e),
        Err(e) => return Err(IngestError::Record(e)),
    }
    Ok(())
}

/// Reads and validates every record, preserving file order.
pub fn parse_samples<R: Read>(
    input: R,
    format: Format,
    mode: ParseMode,
    provenance: &str,
) -> Result<ParseOutcome, IngestError> {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    match format {
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
            let mut records = reader.records();
            match records.next() {
                None => {}
                Some(header) => {
                    let header = header.map_err(csv_io)?;
                    let found: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
                    if found != HEADER {
                        return Err(IngestError::Header { found });
                    }
                }
            }
            for rec in records {
                let rec = match rec {
                    Ok(r) => r,
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line());
                        if e.is_io_error() {
                            return Err(csv_io(e));
                        }
                        keep(Err(record_error(line, None, e.to_string())), mode, &mut samples, &mut skipped)?;
                        continue;
                    }
                };
                let line = rec.position().map_or(0, |p| p.line());
                keep(csv_record(line, &rec), mode, &mut samples, &mut skipped)?;
            }
        }
        Format::Jsonl => {
            let reader = std::io::BufReader::new(input);
            for (i, line) in reader.lines().enumerate() {
                let line_no = i as u64 + 1;
                let text = line?;
                if text.trim().is_empty() {
                    continue;
                }
                keep(json_record(line_no, &text), mode, &mut samples, &mut skipped)?;
            }
        }
    }
    Ok(ParseOutcome {
        dataset: Dataset::new(samples, provenance),
        skipped,
    })
}

fn csv_io(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}"))),
    }
}

/// Writes samples so that [`parse_samples`] reads back an equal dataset.
pub fn write_samples<W: Write>(out: W, dataset: &Dataset, format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(HEADER)?;
            for s in dataset {
                w.write_record([
                    s.timestamp.to_string(),
                    s.position.x.to_string(),
                    s.position.y.to_string(),
                    s.position.z.to_string(),
                    s.ssid.clone(),
                    s.rssi.to_string(),
                    s.mac.to_string(),
                    s.channel.to_string(),
                ])?;
            }
            w.flush()
        }
        Format::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for s in dataset {
                let mac = s.mac.to_string();
                let rec = JsonRecord {
                    timestamp: s.timestamp as i64,
                    x: s.position.x,
                    y: s.position.y,
                    z: s.position.z,
                    ssid: s.ssid.as_str().into(),
                    rssi: i64::from(s.rssi),
                    mac: mac.as_str().into(),
                    channel: i64::from(s.channel),
                };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

/// Reads a sample file from disk, picking the format from the extension
/// unless one is given.
pub fn read_path(path: &std::path::Path, format: Option<Format>, mode: ParseMode) -> Result<ParseOutcome, IngestError> {
    let file = std::fs::File::open(path)?;
    let format = format.unwrap_or_else(|| Format::from_path(path));
    parse_samples(std::io::BufReader::new(file), format, mode, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROW: &str = "1000,0.5,1,1.5,HomeAP,-70,AA:BB:CC:DD:EE:FF,6";

    fn csv(body: &str) -> String {
        format!("{}\n{body}", HEADER.join(","))
    }

    #[test]
    fn one_valid_row() {
        let out = parse_samples(csv(ROW).as_bytes(), Format::Csv, ParseMode::Strict, "t").unwrap();
        assert_eq!(out.dataset.len(), 1);
        let s = &out.dataset.samples[0];
        assert_eq!(s.mac.to_string(), "aa:bb:cc:dd:ee:ff");
        assert_eq!((s.timestamp, s.rssi, s.channel), (1000, -70, 6));
        assert_eq!(s.ssid, "HomeAP");
    }

    #[test]
    fn header_only_is_empty() {
        let out = parse_samples(csv("").as_bytes(), Format::Csv, ParseMode::Strict, "t").unwrap();
        assert!(out.dataset.is_empty());
        let out = parse_samples(&b""[..], Format::Jsonl, ParseMode::Strict, "t").unwrap();
        assert!(out.dataset.is_empty());
    }

    #[test]
    fn malformed_mac_names_line_two() {
        let body = "1000,0.5,1,1.5,HomeAP,-70,AA:BB:CC:DD:EE,6";
        let err = parse_samples(csv(body).as_bytes(), Format::Csv, ParseMode::Strict, "t").unwrap_err();
        assert_eq!(err.line(), Some(2));
        match err {
            IngestError::Record(r) => assert_eq!(r.field.as_deref(), Some("mac")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn lenient_mode_skips_and_counts() {
        let body = format!("{ROW}\n1,0,0,0,a,10,aa:bb:cc:dd:ee:ff,6\n{ROW}\n2,0,0,0,a,-50,aa:bb:cc:dd:ee:ff\n");
        let strict = parse_samples(csv(&body).as_bytes(), Format::Csv, ParseMode::Strict, "t").unwrap_err();
        assert_eq!(strict.line(), Some(3));
        let out = parse_samples(csv(&body).as_bytes(), Format::Csv, ParseMode::Lenient, "t").unwrap();
        assert_eq!(out.dataset.len(), 2);
        assert_eq!(out.skipped.iter().map(|e| e.line).collect::<Vec<_>>(), vec![3, 5]);
        assert_eq!(out.skipped[0].field.as_deref(), Some("rssi"));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "timestamp,x,y,z,ssid,rssi,mac\n";
        assert!(matches!(
            parse_samples(text.as_bytes(), Format::Csv, ParseMode::Lenient, "t"),
            Err(IngestError::Header { .. })
        ));
    }

    #[test]
    fn non_finite_coordinate_is_rejected() {
        let body = "1000,NaN,1,1.5,HomeAP,-70,AA:BB:CC:DD:EE:FF,6";
        let err = parse_samples(csv(body).as_bytes(), Format::Csv, ParseMode::Strict, "t").unwrap_err();
        match err {
            IngestError::Record(r) => assert_eq!(r.field.as_deref(), Some("x")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn jsonl_records_and_errors() {
        let text = concat!(
            r#"{"timestamp":1000,"x":0.5,"y":1.0,"z":1.5,"ssid":"HomeAP","rssi":-70,"mac":"AA-BB-CC-DD-EE-FF","channel":6}"#,
            "\n\n",
            r#"{"timestamp":1000,"x":0.5,"y":1.0,"z":1.5,"ssid":"HomeAP","rssi":-70,"mac":"aa:bb:cc:dd:ee:ff","channel":0}"#,
            "\n",
        );
        let err = parse_samples(text.as_bytes(), Format::Jsonl, ParseMode::Strict, "t").unwrap_err();
        assert_eq!(err.line(), Some(3));
        let out = parse_samples(text.as_bytes(), Format::Jsonl, ParseMode::Lenient, "t").unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.skipped[0].field.as_deref(), Some("channel"));
    }

    #[test]
    fn quoted_ssid_with_comma_round_trips() {
        let out = parse_samples(csv(ROW).as_bytes(), Format::Csv, ParseMode::Strict, "t").unwrap();
        let mut ds = out.dataset;
        ds.samples[0].ssid = "cafe, \"free\"".into();
        let mut buf = Vec::new();
        write_samples(&mut buf, &ds, Format::Csv).unwrap();
        let back = parse_samples(&buf[..], Format::Csv, ParseMode::Strict, "t").unwrap();
        assert_eq!(back.dataset.samples, ds.samples);
    }
}
