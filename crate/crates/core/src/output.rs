//! Run artifacts: CSV tables, the aligned-text report and a JSON-lines
//! manifest of file hashes and random-stream hashes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::alerting::write_dispatch_csv;
use crate::decision::IrrigationLog;
use crate::field::WeatherDay;
use crate::metrics::{build_report, radar_data, write_radar_csv, MetricReport, ReportInputs, ReportLimits, SeasonTotals};
use crate::season::{ArmOutcome, ProtocolRow, SeasonRun};
use crate::transport::Protocol;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.jsonl";
pub const TOTALS: &str = "totals.csv";
pub const LIMITS: &str = "limits.csv";

fn out_err(e: impl std::fmt::Display) -> Error {
    Error::Output(e.to_string())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(out_err)?;
    Ok(buf)
}

pub fn weather_csv(weather: &[WeatherDay]) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["date", "t_min_c", "t_max_c", "t_mean_c", "rh_mean_pct", "rain_mm"])?;
        for d in weather {
            w.write_record([
                d.date.to_string(),
                d.t_min.to_string(),
                d.t_max.to_string(),
                d.t_mean.to_string(),
                d.rh_mean.to_string(),
                d.rain.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn trace_csv(arm: &ArmOutcome) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "day",
            "date",
            "et0_mm",
            "kc",
            "etc_mm",
            "irrigation_mm",
            "depletion_start_mm",
            "depletion_end_mm",
            "eta_mm",
            "drainage_mm",
            "moisture_end_pct",
        ])?;
        for t in &arm.trace {
            w.write_record([
                t.day.to_string(),
                t.date.to_string(),
                t.et0_mm.to_string(),
                t.kc.to_string(),
                t.etc_mm.to_string(),
                t.irrigation_mm.to_string(),
                t.depletion_start_mm.to_string(),
                t.depletion_end_mm.to_string(),
                t.eta_mm.to_string(),
                t.drainage_mm.to_string(),
                t.moisture_end_pct.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn irrigation_csv(log: &IrrigationLog) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["day", "timestamp", "policy", "depth_mm", "observed_moisture_pct", "trigger_reason"])?;
        for e in &log.events {
            w.write_record([
                e.day.to_string(),
                e.timestamp.to_string(),
                e.policy.to_string(),
                e.depth_mm.to_string(),
                e.observed_moisture_pct.map(|m| m.to_string()).unwrap_or_default(),
                e.trigger_reason.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn transport_csv(rows: &[ProtocolRow]) -> Result<Vec<u8>> {
    let reqresp = rows
        .iter()
        .find(|r| r.protocol == Protocol::ReqResp)
        .map(|r| r.stats.energy_mwh());
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "protocol",
            "attempted",
            "delivered",
            "delivery_rate",
            "retransmissions",
            "bytes_sent",
            "energy_mwh",
            "energy_efficiency_pct",
            "mean_latency_s",
            "energy_ratio_vs_reqresp",
        ])?;
        for r in rows {
            let s = &r.stats;
            let efficiency = s.energy_efficiency_pct().map(|e| e.to_string()).unwrap_or_default();
            let ratio = reqresp
                .filter(|e| *e > 0.0)
                .map(|e| (s.energy_mwh() / e).to_string())
                .unwrap_or_default();
            w.write_record([
                r.protocol.to_string(),
                s.attempted.to_string(),
                s.delivered.to_string(),
                s.delivery_rate().to_string(),
                s.retransmissions.to_string(),
                s.bytes_sent.to_string(),
                s.energy_mwh().to_string(),
                efficiency,
                s.mean_latency_s().to_string(),
                ratio,
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn limits_csv(limits: &ReportLimits) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.serialize(limits)?;
        w.flush()?;
        Ok(())
    })
}

/// The three report files, from a report.
pub fn report_files(report: &MetricReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let radar = radar_data(report)?;
    Ok(vec![
        ("report.txt", report.to_text().into_bytes()),
        ("report.csv", csv_bytes(|b| report.write_csv(b))?),
        ("radar.csv", csv_bytes(|b| write_radar_csv(&radar, b))?),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum ManifestLine {
    File { file: String, bytes: u64, sha256: String },
    Stream { arm: String, stream: String, sha256: String },
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Every artifact of a run, in manifest order.
pub fn render_run(run: &SeasonRun) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    files.push(("weather.csv".into(), weather_csv(&run.weather)?));
    for arm in [&run.sensor, &run.baseline] {
        let tag = arm.policy.as_str().to_lowercase();
        files.push((format!("trace_{tag}.csv"), trace_csv(arm)?));
        files.push((format!("irrigation_{tag}.csv"), irrigation_csv(&arm.irrigation)?));
        let mut channel = Vec::new();
        arm.channel.write_csv(&mut channel)?;
        files.push((format!("channel_{tag}.csv"), channel));
    }
    files.push((
        "dispatch.csv".into(),
        csv_bytes(|b| write_dispatch_csv(&run.sensor.dispatch, b))?,
    ));
    files.push(("transport.csv".into(), transport_csv(&run.protocols)?));
    files.push((TOTALS.into(), csv_bytes(|b| run.totals.write_csv(b))?));
    files.push((LIMITS.into(), limits_csv(&run.limits)?));
    for (name, bytes) in report_files(&run.report)? {
        files.push((name.into(), bytes));
    }
    Ok(files)
}

pub fn manifest(run: &SeasonRun, files: &[(String, Vec<u8>)]) -> Result<Vec<u8>> {
    let mut lines: Vec<ManifestLine> = files
        .iter()
        .map(|(name, bytes)| ManifestLine::File {
            file: name.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        })
        .collect();
    for arm in [&run.sensor, &run.baseline] {
        let h = &arm.streams;
        for (stream, sha) in [
            ("weather", &h.weather),
            ("soil_noise", &h.soil_noise),
            ("air_noise", &h.air_noise),
            ("link", &h.link),
        ] {
            lines.push(ManifestLine::Stream {
                arm: arm.policy.as_str().to_lowercase(),
                stream: stream.into(),
                sha256: sha.clone(),
            });
        }
    }
    let mut out = Vec::new();
    for line in lines {
        serde_json::to_writer(&mut out, &line).map_err(out_err)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Write every artifact plus the manifest into `dir`. Returns the manifest
/// bytes.
pub fn write_run(run: &SeasonRun, dir: &Path) -> Result<Vec<u8>> {
    fs::create_dir_all(dir).map_err(out_err)?;
    let files = render_run(run)?;
    for (name, bytes) in &files {
        write_file(&dir.join(name), bytes)?;
    }
    let manifest = manifest(run, &files)?;
    write_file(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| out_err(format!("{}: {e}", path.display())))?;
    f.write_all(bytes).map_err(|e| out_err(format!("{}: {e}", path.display())))
}

/// Rebuild the report from the totals and limits stored in a run directory
/// and rewrite the report files.
pub fn rerender_report(dir: &Path) -> Result<MetricReport> {
    let open = |name: &str| fs::File::open(dir.join(name)).map_err(|e| out_err(format!("{name}: {e}")));
    let totals = SeasonTotals::read_csv(open(TOTALS)?).map_err(out_err)?;
    let limits: ReportLimits = csv::Reader::from_reader(open(LIMITS)?)
        .deserialize()
        .next()
        .ok_or_else(|| out_err(format!("{LIMITS}: no record")))?
        .map_err(out_err)?;
    let report = build_report(&ReportInputs::from_totals(&totals)?, &limits)?;
    for (name, bytes) in report_files(&report)? {
        write_file(&dir.join(name), &bytes)?;
    }
    Ok(report)
}
