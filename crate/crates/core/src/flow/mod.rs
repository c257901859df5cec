//! Flow-level anomaly detection: ingest flow records, quantize them into a
//! finite alphabet, and run the Markov Hoeffding test over sliding windows.

mod detect;
mod quantizer;

use std::io::{Read, Write};
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use detect::{
    calibrate_from_reference, detect, reports_to_jsonl, reports_to_summary_csv, DetectionConfig,
    Detector, PlFile, ThresholdMethod, WindowReport, WindowStatus,
};
pub use quantizer::{
    build_quantizer, quantize, FeatureBins, QuantizedFlows, QuantizerLevels, QuantizerSpec,
};

/// One flow as seen by the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    /// Seconds since the start of the trace.
    pub start_time: f64,
    /// Seconds.
    pub duration: f64,
    /// Bytes.
    pub size: f64,
    /// Source address, a dotted quad or any opaque token.
    pub src: String,
}

impl FlowRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.start_time.is_finite() {
            return Err(Error::Config(format!(
                "flow from {} has non-finite start time",
                self.src
            )));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::Config(format!(
                "flow at {} has invalid duration {}",
                self.start_time, self.duration
            )));
        }
        if !(self.size >= 0.0) || !self.size.is_finite() {
            return Err(Error::Config(format!(
                "flow at {} has invalid size {}",
                self.start_time, self.size
            )));
        }
        Ok(())
    }
}

/// Sort by start time; ties keep their input order.
pub fn sort_flows(flows: &mut [FlowRecord]) {
    flows.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
}

/// Parse flow CSV (`start_time,duration,size,src`), validate, and sort.
pub fn read_flows_from(reader: impl Read) -> Result<Vec<FlowRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["start_time", "duration", "size", "src"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Config(format!(
            "flow CSV header must be `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut flows = rdr
        .deserialize::<FlowRecord>()
        .map(|r| {
            let f = r?;
            f.validate()?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    sort_flows(&mut flows);
    Ok(flows)
}

pub fn read_flows(path: impl AsRef<Path>) -> Result<Vec<FlowRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_flows_from(std::io::BufReader::new(file))
}

pub fn write_flows_to(writer: impl Write, flows: &[FlowRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    wtr.write_record(["start_time", "duration", "size", "src"])?;
    for f in flows {
        wtr.serialize(f)?;
    }
    wtr.flush().map_err(|e| Error::io("<flow csv>", e))?;
    Ok(())
}

pub fn flows_to_csv(flows: &[FlowRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_flows_to(&mut buf, flows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Map a source identifier to a point in the plane.
///
/// IPv4 `a.b.c.d` becomes `(256a + b, 256c + d)`, so hosts sharing a /16 sit
/// on a common vertical line and nearby subnets are close. IPv6 uses its
/// lowest 32 bits; anything else is hashed (FNV-1a) to 32 bits first.
pub fn source_point(src: &str) -> [f64; 2] {
    let bits = match src.trim().parse::<IpAddr>() {
        Ok(IpAddr::V4(v4)) => u32::from(v4),
        Ok(IpAddr::V6(v6)) => (u128::from(v6) & 0xFFFF_FFFF) as u32,
        Err(_) => fnv1a(src.as_bytes()),
    };
    [(bits >> 16) as f64, (bits & 0xFFFF) as f64]
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}
