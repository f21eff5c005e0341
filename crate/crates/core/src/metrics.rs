//! Validation formulas, the water-stress yield model, economics and the
//! threshold report.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Litres of water in one millimetre over one acre.
pub const LITRES_PER_MM_ACRE: f64 = 4_046.856_422_4;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("incomplete report: missing {0}")]
    Incomplete(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
}

type Result<T> = std::result::Result<T, MetricsError>;

fn finite_non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(MetricsError::Input(format!("{name} must be finite and non-negative, got {v}")))
    }
}

pub fn mm_to_litres_per_acre(mm: f64) -> f64 {
    mm * LITRES_PER_MM_ACRE
}

/// Relative reduction of water use against the baseline, in percent.
pub fn water_efficiency_pct(baseline_l: f64, system_l: f64) -> Result<f64> {
    finite_non_negative("system water use", system_l)?;
    if !(baseline_l.is_finite() && baseline_l > 0.0) {
        return Err(MetricsError::UndefinedMetric(format!(
            "water efficiency needs a positive baseline, got {baseline_l}"
        )));
    }
    Ok((baseline_l - system_l) / baseline_l * 100.0)
}

/// Relative yield gain over the baseline, in percent.
pub fn yield_improvement_pct(system_kg: f64, baseline_kg: f64) -> Result<f64> {
    finite_non_negative("system yield", system_kg)?;
    if !(baseline_kg.is_finite() && baseline_kg > 0.0) {
        return Err(MetricsError::UndefinedMetric(format!(
            "yield improvement needs a positive baseline, got {baseline_kg}"
        )));
    }
    Ok((system_kg - baseline_kg) / baseline_kg * 100.0)
}

/// Seasonal yield-response: relative yield loss is `ky` times the relative
/// evapotranspiration deficit.
pub fn yield_from_water_stress(eta_mm: f64, etm_mm: f64, ky: f64, max_yield_kg: f64) -> Result<f64> {
    finite_non_negative("ETa", eta_mm)?;
    finite_non_negative("maximum yield", max_yield_kg)?;
    if !(etm_mm.is_finite() && etm_mm > 0.0) {
        return Err(MetricsError::Input(format!("ETm must be positive, got {etm_mm}")));
    }
    if !(ky.is_finite() && ky > 0.0) {
        return Err(MetricsError::Input(format!("Ky must be positive, got {ky}")));
    }
    if eta_mm > etm_mm {
        return Err(MetricsError::Input(format!("ETa {eta_mm} exceeds ETm {etm_mm}")));
    }
    Ok((max_yield_kg * (1.0 - ky * (1.0 - eta_mm / etm_mm))).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicParams {
    pub maize_price_ugx_per_kg: f64,
    pub water_cost_ugx_per_l: f64,
    pub labor_cost_ugx_per_event: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            maize_price_ugx_per_kg: 2500.0,
            water_cost_ugx_per_l: 10.0,
            labor_cost_ugx_per_event: 5000.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("maize price", self.maize_price_ugx_per_kg),
            ("water cost", self.water_cost_ugx_per_l),
            ("labor cost", self.labor_cost_ugx_per_event),
        ] {
            finite_non_negative(name, v).map_err(|e| MetricsError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Water plus labour cost of an irrigation programme.
    pub fn irrigation_cost_ugx(&self, water_l: f64, events: f64) -> f64 {
        water_l * self.water_cost_ugx_per_l + events * self.labor_cost_ugx_per_event
    }
}

pub fn cost_savings_ugx(water_saved_l: f64, events_saved: f64, params: &EconomicParams) -> Result<f64> {
    finite_non_negative("water saved", water_saved_l)?;
    finite_non_negative("events saved", events_saved)?;
    Ok(water_saved_l * params.water_cost_ugx_per_l + events_saved * params.labor_cost_ugx_per_event)
}

pub fn revenue_gain_ugx(extra_yield_kg: f64, price_ugx_per_kg: f64) -> Result<f64> {
    finite_non_negative("extra yield", extra_yield_kg)?;
    finite_non_negative("price", price_ugx_per_kg)?;
    Ok(extra_yield_kg * price_ugx_per_kg)
}

/// Season outcome of both arms, plus the observation summary the report is
/// built from. Flat so it stores as a single CSV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonTotals {
    pub water_sensor_l_per_acre: f64,
    pub water_baseline_l_per_acre: f64,
    pub yield_sensor_kg_per_acre: f64,
    pub yield_baseline_kg_per_acre: f64,
    pub events_sensor: u64,
    pub events_baseline: u64,
    pub energy_pubsub_mwh: f64,
    pub energy_reqresp_mwh: f64,
    pub energy_efficiency_pct: f64,
    pub delivery_rate: f64,
    pub peak_temperature_c: f64,
    pub mean_humidity_pct: f64,
    pub mean_soil_moisture_pct: f64,
}

impl SeasonTotals {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("water_sensor_l_per_acre", self.water_sensor_l_per_acre),
            ("water_baseline_l_per_acre", self.water_baseline_l_per_acre),
            ("yield_sensor_kg_per_acre", self.yield_sensor_kg_per_acre),
            ("yield_baseline_kg_per_acre", self.yield_baseline_kg_per_acre),
            ("energy_pubsub_mwh", self.energy_pubsub_mwh),
            ("energy_reqresp_mwh", self.energy_reqresp_mwh),
        ] {
            finite_non_negative(name, v)?;
        }
        if !(0.0..=1.0).contains(&self.delivery_rate) {
            return Err(MetricsError::Input(format!("delivery rate {} outside [0, 1]", self.delivery_rate)));
        }
        Ok(())
    }

    pub fn water_reduction_pct(&self) -> Result<f64> {
        water_efficiency_pct(self.water_baseline_l_per_acre, self.water_sensor_l_per_acre)
    }

    pub fn yield_improvement_pct(&self) -> Result<f64> {
        yield_improvement_pct(self.yield_sensor_kg_per_acre, self.yield_baseline_kg_per_acre)
    }

    pub fn energy_ratio(&self) -> Result<f64> {
        if !(self.energy_reqresp_mwh > 0.0) {
            return Err(MetricsError::UndefinedMetric("request/response energy is zero".into()));
        }
        Ok(self.energy_pubsub_mwh / self.energy_reqresp_mwh)
    }

    /// Net irrigation cost saving of the sensor arm as a fraction of the
    /// baseline cost. Extra irrigation events count against the saving.
    pub fn cost_savings_fraction(&self, params: &EconomicParams) -> Result<f64> {
        let baseline = params.irrigation_cost_ugx(self.water_baseline_l_per_acre, self.events_baseline as f64);
        let system = params.irrigation_cost_ugx(self.water_sensor_l_per_acre, self.events_sensor as f64);
        if !(baseline > 0.0) {
            return Err(MetricsError::UndefinedMetric("baseline irrigation cost is zero".into()));
        }
        Ok((baseline - system) / baseline)
    }

    pub fn revenue_gain_ugx(&self, params: &EconomicParams) -> Result<f64> {
        let extra = (self.yield_sensor_kg_per_acre - self.yield_baseline_kg_per_acre).max(0.0);
        revenue_gain_ugx(extra, params.maize_price_ugx_per_kg)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.serialize(self)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        match r.deserialize().next() {
            Some(rec) => rec,
            None => Err(csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "totals file has no record",
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Alert,
    #[serde(rename = "Within Range")]
    WithinRange,
    #[serde(rename = "Above Threshold")]
    AboveThreshold,
    Exceeded,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Alert => "Alert",
            Status::WithinRange => "Within Range",
            Status::AboveThreshold => "Above Threshold",
            Status::Exceeded => "Exceeded",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a row's recorded value is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    /// Alert when the value exceeds the limit.
    UpperLimit,
    /// Within range when inside `[low, threshold]`.
    Band { low: f64 },
    /// Soil moisture: above, at, or below the trigger.
    LowerLimit,
    /// Performance metric against a target.
    Target,
}

pub fn row_status(kind: RowKind, value: f64, threshold: f64) -> Status {
    match kind {
        RowKind::UpperLimit => {
            if value > threshold {
                Status::Alert
            } else {
                Status::WithinRange
            }
        }
        RowKind::Band { low } => {
            if (low..=threshold).contains(&value) {
                Status::WithinRange
            } else {
                Status::Alert
            }
        }
        RowKind::LowerLimit => {
            if value > threshold {
                Status::AboveThreshold
            } else if value == threshold {
                Status::WithinRange
            } else {
                Status::Alert
            }
        }
        RowKind::Target => {
            if value > threshold {
                Status::Exceeded
            } else if value == threshold {
                Status::WithinRange
            } else {
                Status::Alert
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub recorded: f64,
    /// Upper bound for band rows.
    pub threshold: f64,
    pub unit: String,
    pub kind: RowKind,
    pub status: Status,
}

impl ReportRow {
    pub fn new(parameter: &str, recorded: f64, threshold: f64, unit: &str, kind: RowKind) -> Self {
        Self {
            parameter: parameter.to_owned(),
            recorded,
            threshold,
            unit: unit.to_owned(),
            kind,
            status: row_status(kind, recorded, threshold),
        }
    }

    fn threshold_text(&self) -> String {
        match self.kind {
            RowKind::Band { low } if low != self.threshold => format!("{low:.1}..{:.1}", self.threshold),
            _ => format!("{:.1}", self.threshold),
        }
    }
}

/// Recorded values for each report row; `None` marks a value that was not
/// measured.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReportInputs {
    pub temperature_c: Option<f64>,
    pub humidity_pct: Option<f64>,
    pub soil_moisture_pct: Option<f64>,
    pub transmission_pct: Option<f64>,
    pub water_reduction_pct: Option<f64>,
    pub yield_increase_pct: Option<f64>,
    pub energy_efficiency_pct: Option<f64>,
}

impl ReportInputs {
    pub fn from_totals(totals: &SeasonTotals) -> Result<Self> {
        totals.validate()?;
        Ok(Self {
            temperature_c: Some(totals.peak_temperature_c),
            humidity_pct: Some(totals.mean_humidity_pct),
            soil_moisture_pct: Some(totals.mean_soil_moisture_pct),
            transmission_pct: Some(100.0 * totals.delivery_rate),
            water_reduction_pct: Some(totals.water_reduction_pct()?),
            yield_increase_pct: Some(totals.yield_improvement_pct()?),
            energy_efficiency_pct: Some(totals.energy_efficiency_pct),
        })
    }
}

/// Thresholds and targets the report compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportLimits {
    pub temp_alert_c: f64,
    pub humidity_low_pct: f64,
    pub humidity_high_pct: f64,
    pub soil_moisture_trigger_pct: f64,
    pub transmission_target_pct: f64,
    pub water_reduction_target_pct: f64,
    pub yield_increase_target_pct: f64,
    pub energy_efficiency_target_pct: f64,
}

impl Default for ReportLimits {
    fn default() -> Self {
        Self {
            temp_alert_c: 35.0,
            humidity_low_pct: 30.0,
            humidity_high_pct: 60.0,
            soil_moisture_trigger_pct: 25.0,
            transmission_target_pct: 95.0,
            water_reduction_target_pct: 25.0,
            yield_increase_target_pct: 20.0,
            energy_efficiency_target_pct: 90.0,
        }
    }
}

impl ReportLimits {
    pub fn validate(&self) -> Result<()> {
        if self.humidity_low_pct > self.humidity_high_pct {
            return Err(MetricsError::Config(format!(
                "humidity band reversed: [{}, {}]",
                self.humidity_low_pct, self.humidity_high_pct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
}

pub fn build_report(inputs: &ReportInputs, limits: &ReportLimits) -> Result<MetricReport> {
    limits.validate()?;
    let need = |v: Option<f64>, name: &'static str| v.ok_or(MetricsError::Incomplete(name));
    let rows = vec![
        ReportRow::new(
            "Temperature",
            need(inputs.temperature_c, "temperature")?,
            limits.temp_alert_c,
            "°C",
            RowKind::UpperLimit,
        ),
        ReportRow::new(
            "Humidity",
            need(inputs.humidity_pct, "humidity")?,
            limits.humidity_high_pct,
            "%",
            RowKind::Band {
                low: limits.humidity_low_pct,
            },
        ),
        ReportRow::new(
            "Soil Moisture",
            need(inputs.soil_moisture_pct, "soil moisture")?,
            limits.soil_moisture_trigger_pct,
            "%",
            RowKind::LowerLimit,
        ),
        ReportRow::new(
            "Data Transmission",
            need(inputs.transmission_pct, "data transmission")?,
            limits.transmission_target_pct,
            "%",
            RowKind::Target,
        ),
        ReportRow::new(
            "Water Usage",
            need(inputs.water_reduction_pct, "water usage")?,
            limits.water_reduction_target_pct,
            "% reduction",
            RowKind::Target,
        ),
        ReportRow::new(
            "Crop Yield",
            need(inputs.yield_increase_pct, "crop yield")?,
            limits.yield_increase_target_pct,
            "% increase",
            RowKind::Target,
        ),
        ReportRow::new(
            "Energy Efficiency",
            need(inputs.energy_efficiency_pct, "energy efficiency")?,
            limits.energy_efficiency_target_pct,
            "%",
            RowKind::Target,
        ),
    ];
    Ok(MetricReport { rows })
}

const HEADER: [&str; 5] = ["Parameter", "Recorded Value", "Threshold/Target", "Unit", "Status"];

impl MetricReport {
    fn cells(&self) -> Vec<[String; 5]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.parameter.clone(),
                    format!("{:.1}", r.recorded),
                    r.threshold_text(),
                    r.unit.clone(),
                    r.status.to_string(),
                ]
            })
            .collect()
    }

    /// Left-aligned columns separated by two spaces.
    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let mut widths = HEADER.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                s.push_str(c);
                if i + 1 < row.len() {
                    s.extend(std::iter::repeat_n(' ', w - c.chars().count() + 2));
                }
            }
            s.push('\n');
            s
        };
        let mut out = line(&HEADER.map(String::from));
        for row in &cells {
            out.push_str(&line(row));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for row in self.cells() {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub metric: String,
    pub recorded: f64,
    pub target: f64,
    /// `None` when the target is zero.
    pub ratio: Option<f64>,
}

pub fn radar_data(report: &MetricReport) -> Result<Vec<RadarRow>> {
    if report.rows.is_empty() {
        return Err(MetricsError::Incomplete("report rows"));
    }
    Ok(report
        .rows
        .iter()
        .map(|r| RadarRow {
            metric: r.parameter.clone(),
            recorded: r.recorded,
            target: r.threshold,
            ratio: (r.threshold != 0.0).then(|| r.recorded / r.threshold),
        })
        .collect())
}

pub fn write_radar_csv<W: Write>(rows: &[RadarRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "recorded", "target", "ratio"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.recorded.to_string(),
            r.target.to_string(),
            r.ratio.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
