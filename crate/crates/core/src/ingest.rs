//! Local emulation of a hosted time-series channel: keyed, rate-limited,
//! append-only ingestion with range queries and CSV / JSON-lines export.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_FIELDS: usize = 8;
pub const DEFAULT_MIN_UPDATE_INTERVAL_S: u64 = 15;

#[derive(Debug, Error, PartialEq)]
pub enum Rejection {
    #[error("write key rejected")]
    Auth,
    #[error("update {elapsed_s}s after the previous one; minimum is {min_s}s")]
    Throttled { elapsed_s: i64, min_s: u64 },
    #[error("expected {expected} field values, got {got}")]
    FieldCount { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("channel {0} not found")]
    NotFound(u32),
    #[error("channel {0} already exists")]
    Duplicate(u32),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("query range reversed: {0} > {1}")]
    ReversedRange(u64, u64),
    #[error("malformed request: {0}")]
    Request(String),
    #[error("export failed: {0}")]
    Export(String),
    #[error("import failed: {0}")]
    Import(String),
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Export(e.to_string())
    }
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Export(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub entry_id: u64,
    pub created_at: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounters {
    pub accepted: u64,
    pub auth_rejections: u64,
    pub throttle_rejections: u64,
    pub malformed_rejections: u64,
}

impl IngestCounters {
    pub fn attempts(&self) -> u64 {
        self.accepted + self.auth_rejections + self.throttle_rejections + self.malformed_rejections
    }
}

#[derive(Debug, Clone)]
pub struct Channel {
    channel_id: u32,
    write_key: String,
    field_names: Vec<String>,
    min_update_interval_s: u64,
    entries: Vec<ChannelEntry>,
    counters: IngestCounters,
}

impl Channel {
    pub fn new(
        channel_id: u32,
        write_key: impl Into<String>,
        field_names: Vec<String>,
        min_update_interval_s: u64,
    ) -> Result<Self, IngestError> {
        let write_key = write_key.into();
        if write_key.is_empty() {
            return Err(IngestError::InvalidChannel("write key must not be empty".into()));
        }
        if field_names.is_empty() || field_names.len() > MAX_FIELDS {
            return Err(IngestError::InvalidChannel(format!(
                "channel needs 1..={MAX_FIELDS} fields, got {}",
                field_names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &field_names {
            if name.is_empty() || name.contains(',') || !seen.insert(name.as_str()) {
                return Err(IngestError::InvalidChannel(format!("bad or duplicate field name {name:?}")));
            }
        }
        Ok(Self {
            channel_id,
            write_key,
            field_names,
            min_update_interval_s,
            entries: Vec::new(),
            counters: IngestCounters::default(),
        })
    }

    pub fn id(&self) -> u32 {
        self.channel_id
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn entries(&self) -> &[ChannelEntry] {
        &self.entries
    }

    pub fn counters(&self) -> IngestCounters {
        self.counters
    }

    pub fn last(&self) -> Option<&ChannelEntry> {
        self.entries.last()
    }

    /// Append a reading set. Key mismatch and updates arriving sooner than
    /// the minimum interval (or out of order) are rejected and counted.
    pub fn ingest(
        &mut self,
        write_key: &str,
        timestamp: u64,
        values: &[f64],
    ) -> Result<&ChannelEntry, Rejection> {
        if write_key != self.write_key {
            self.counters.auth_rejections += 1;
            return Err(Rejection::Auth);
        }
        if values.len() != self.field_names.len() {
            self.counters.malformed_rejections += 1;
            return Err(Rejection::FieldCount {
                expected: self.field_names.len(),
                got: values.len(),
            });
        }
        if let Some(last) = self.entries.last() {
            let elapsed = timestamp as i64 - last.created_at as i64;
            if elapsed < self.min_update_interval_s as i64 {
                self.counters.throttle_rejections += 1;
                return Err(Rejection::Throttled {
                    elapsed_s: elapsed,
                    min_s: self.min_update_interval_s,
                });
            }
        }
        self.counters.accepted += 1;
        self.entries.push(ChannelEntry {
            entry_id: self.entries.len() as u64 + 1,
            created_at: timestamp,
            values: values.to_vec(),
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Entries with `t0 <= created_at <= t1`, in entry order.
    pub fn query_range(&self, t0: u64, t1: u64) -> Result<Vec<&ChannelEntry>, IngestError> {
        if t0 > t1 {
            return Err(IngestError::ReversedRange(t0, t1));
        }
        // created_at is non-decreasing, so the matching span is contiguous
        let start = self.entries.partition_point(|e| e.created_at < t0);
        let end = self.entries.partition_point(|e| e.created_at <= t1);
        Ok(self.entries[start..end].iter().collect())
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut header = vec!["created_at".to_owned(), "entry_id".to_owned()];
        header.extend(self.field_names.iter().cloned());
        header
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<usize, IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for e in &self.entries {
            let mut row = vec![e.created_at.to_string(), e.entry_id.to_string()];
            row.extend(e.values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(self.entries.len())
    }

    pub fn export_csv(&self, path: &Path) -> Result<usize, IngestError> {
        let file = std::fs::File::create(path)
            .map_err(|e| IngestError::Export(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<usize, IngestError> {
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|e| IngestError::Export(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(self.entries.len())
    }
}

/// Read back a CSV export, checking the header against the channel layout.
pub fn import_csv<R: Read>(input: R, field_names: &[String]) -> Result<Vec<ChannelEntry>, IngestError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| IngestError::Import(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut expected = vec!["created_at".to_owned(), "entry_id".to_owned()];
    expected.extend(field_names.iter().cloned());
    if header != expected {
        return Err(IngestError::Import(format!("unexpected header {header:?}")));
    }
    let mut entries = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| IngestError::Import(e.to_string()))?;
        let num = |i: usize| -> Result<&str, IngestError> {
            record
                .get(i)
                .ok_or_else(|| IngestError::Import(format!("short row {record:?}")))
        };
        let parse_err = |e: std::num::ParseIntError| IngestError::Import(e.to_string());
        let created_at = num(0)?.parse().map_err(parse_err)?;
        let entry_id = num(1)?.parse().map_err(parse_err)?;
        let values = (2..expected.len())
            .map(|i| num(i)?.parse::<f64>().map_err(|e| IngestError::Import(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(ChannelEntry {
            entry_id,
            created_at,
            values,
        });
    }
    Ok(entries)
}

pub fn import_jsonl<R: BufRead>(input: R) -> Result<Vec<ChannelEntry>, IngestError> {
    input
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| IngestError::Import(e.to_string()))?;
            serde_json::from_str(&line).map_err(|e| IngestError::Import(e.to_string()))
        })
        .collect()
}

/// A REST-style update call: `api_key=<k>&field1=<v>...&created_at=<t>`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRequest {
    pub api_key: String,
    pub values: Vec<f64>,
    pub created_at: u64,
}

impl UpdateRequest {
    pub fn encode(&self) -> String {
        let mut out = format!("api_key={}", self.api_key);
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("&field{}={v}", i + 1));
        }
        out.push_str(&format!("&created_at={}", self.created_at));
        out
    }

    pub fn parse(query: &str) -> Result<Self, IngestError> {
        let mut api_key = None;
        let mut created_at = None;
        let mut fields: BTreeMap<usize, f64> = BTreeMap::new();
        for pair in query.split('&') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| IngestError::Request(format!("missing '=' in {pair:?}")))?;
            match k {
                "api_key" => api_key = Some(v.to_owned()),
                "created_at" => {
                    created_at = Some(v.parse().map_err(|_| IngestError::Request(format!("bad created_at {v:?}")))?)
                }
                _ => {
                    let idx: usize = k
                        .strip_prefix("field")
                        .and_then(|n| n.parse().ok())
                        .filter(|n| (1..=MAX_FIELDS).contains(n))
                        .ok_or_else(|| IngestError::Request(format!("unknown key {k:?}")))?;
                    let value = v
                        .parse()
                        .map_err(|_| IngestError::Request(format!("bad value for {k}: {v:?}")))?;
                    fields.insert(idx, value);
                }
            }
        }
        // fields must be contiguous from field1
        if fields.keys().enumerate().any(|(i, k)| *k != i + 1) {
            return Err(IngestError::Request("field numbering must be contiguous from field1".into()));
        }
        Ok(Self {
            api_key: api_key.ok_or_else(|| IngestError::Request("missing api_key".into()))?,
            values: fields.into_values().collect(),
            created_at: created_at.ok_or_else(|| IngestError::Request("missing created_at".into()))?,
        })
    }
}

/// All channels of the emulated platform.
#[derive(Debug, Default)]
pub struct ChannelStore {
    channels: BTreeMap<u32, Channel>,
}

impl ChannelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, channel: Channel) -> Result<(), IngestError> {
        let id = channel.id();
        if self.channels.contains_key(&id) {
            return Err(IngestError::Duplicate(id));
        }
        self.channels.insert(id, channel);
        Ok(())
    }

    pub fn channel(&self, id: u32) -> Result<&Channel, IngestError> {
        self.channels.get(&id).ok_or(IngestError::NotFound(id))
    }

    pub fn ingest(
        &mut self,
        id: u32,
        write_key: &str,
        timestamp: u64,
        values: &[f64],
    ) -> Result<Result<&ChannelEntry, Rejection>, IngestError> {
        let ch = self.channels.get_mut(&id).ok_or(IngestError::NotFound(id))?;
        Ok(ch.ingest(write_key, timestamp, values))
    }

    pub fn handle_request(
        &mut self,
        id: u32,
        query: &str,
    ) -> Result<Result<&ChannelEntry, Rejection>, IngestError> {
        let req = UpdateRequest::parse(query)?;
        self.ingest(id, &req.api_key, req.created_at, &req.values)
    }

    pub fn query_range(&self, id: u32, t0: u64, t1: u64) -> Result<Vec<&ChannelEntry>, IngestError> {
        self.channel(id)?.query_range(t0, t1)
    }

    pub fn export_csv(&self, id: u32, path: &Path) -> Result<usize, IngestError> {
        self.channel(id)?.export_csv(path)
    }
}
