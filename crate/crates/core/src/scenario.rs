//! Scenario files: every parameter of a season run, loaded strictly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerting::{GatewayConfig, Locale};
use crate::decision::{CalendarPolicy, CropCalendar, Thresholds};
use crate::field::{SeasonConfig, SensorKind, SensorSpec, SoilProfile, WeatherEnvelope};
use crate::metrics::EconomicParams;
use crate::transport::{EnergyModel, LinkModel, Qos, SECONDS_PER_DAY};

pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/mubende_dry.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid [{section}]: {message}")]
    Invalid { section: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub field_id: String,
    pub initial_depletion_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsSection {
    pub soil: SensorSpec,
    pub air: SensorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YieldModel {
    pub ky: f64,
    pub max_yield_kg_per_acre: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrrigationSection {
    /// Largest single sensor-driven application.
    pub daily_cap_mm: f64,
    pub baseline: CalendarPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    pub qos: Qos,
    pub link: LinkModel,
    pub energy: EnergyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub channel_id: u32,
    pub write_key: String,
    pub min_update_interval_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertingSection {
    pub locale: Locale,
    pub dedup_window_s: u64,
    pub gateway: GatewayConfig,
}

/// Report targets for the performance rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsSection {
    pub transmission_pct: f64,
    pub water_reduction_pct: f64,
    pub yield_increase_pct: f64,
    pub energy_efficiency_pct: f64,
}

impl Default for TargetsSection {
    fn default() -> Self {
        Self {
            transmission_pct: 95.0,
            water_reduction_pct: 25.0,
            yield_increase_pct: 20.0,
            energy_efficiency_pct: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub season: SeasonConfig,
    pub weather: WeatherEnvelope,
    pub field: FieldSection,
    pub soil: SoilProfile,
    pub sensors: SensorsSection,
    pub thresholds: Thresholds,
    pub crop: CropCalendar,
    #[serde(rename = "yield")]
    pub yield_model: YieldModel,
    pub irrigation: IrrigationSection,
    pub transport: TransportSection,
    pub ingest: IngestSection,
    pub alerting: AlertingSection,
    pub economics: EconomicParams,
    pub targets: TargetsSection,
}

/// On-disk shape. The seed is optional here only so that its absence can be
/// reported as a validation error rather than a parse error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    seed: Option<u64>,
    season: SeasonConfig,
    weather: WeatherEnvelope,
    field: FieldSection,
    soil: SoilProfile,
    sensors: SensorsSection,
    thresholds: Thresholds,
    crop: CropCalendar,
    #[serde(rename = "yield")]
    yield_model: YieldModel,
    irrigation: IrrigationSection,
    transport: TransportSection,
    ingest: IngestSection,
    alerting: AlertingSection,
    economics: EconomicParams,
    #[serde(default)]
    targets: TargetsSection,
}

fn invalid(section: &'static str) -> impl Fn(String) -> ScenarioError {
    move |message| ScenarioError::Invalid { section, message }
}

fn check<E: ToString>(section: &'static str, r: Result<(), E>) -> Result<(), ScenarioError> {
    r.map_err(|e| invalid(section)(e.to_string()))
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|c| *c != '\n').count() + 1;
    (line, column)
}

impl Scenario {
    pub fn default_scenario() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO).expect("shipped scenario is valid")
    }

    pub fn from_toml_str(source: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(source).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(source, s.start)).unwrap_or((0, 0));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_owned(),
            }
        })?;
        let seed = raw
            .seed
            .ok_or_else(|| invalid("scenario")("seed is required; runs never draw wall-clock entropy".into()))?;
        let scenario = Scenario {
            name: raw.name,
            seed,
            season: raw.season,
            weather: raw.weather,
            field: raw.field,
            soil: raw.soil,
            sensors: raw.sensors,
            thresholds: raw.thresholds,
            crop: raw.crop,
            yield_model: raw.yield_model,
            irrigation: raw.irrigation,
            transport: raw.transport,
            ingest: raw.ingest,
            alerting: raw.alerting,
            economics: raw.economics,
            targets: raw.targets,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let source = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&source)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(invalid("scenario")("name must not be empty".into()));
        }
        check("season", self.season.validate())?;
        check("weather", self.weather.validate())?;
        check("soil", self.soil.validate())?;
        if self.field.field_id.is_empty() || self.field.field_id.contains(['/', ':', '+', '#']) {
            return Err(invalid("field")(format!("bad field_id {:?}", self.field.field_id)));
        }
        let taw = self.soil.taw_mm();
        if !(0.0..=taw).contains(&self.field.initial_depletion_mm) {
            return Err(invalid("field")(format!(
                "initial_depletion_mm {} outside [0, TAW = {taw}]",
                self.field.initial_depletion_mm
            )));
        }
        for (spec, kind, name) in [
            (&self.sensors.soil, SensorKind::SoilMoisture, "sensors.soil"),
            (&self.sensors.air, SensorKind::AirTempHumidity, "sensors.air"),
        ] {
            if spec.kind != kind {
                return Err(invalid("sensors")(format!("{name} has kind {:?}", spec.kind)));
            }
            check("sensors", spec.validate())?;
            if !SECONDS_PER_DAY.is_multiple_of(spec.sample_interval_s) {
                return Err(invalid("sensors")(format!(
                    "{name}: sample interval {}s does not divide a day",
                    spec.sample_interval_s
                )));
            }
        }
        if self.sensors.soil.sample_interval_s != self.sensors.air.sample_interval_s {
            return Err(invalid("sensors")("soil and air sensors must share one sample interval".into()));
        }
        check("thresholds", self.thresholds.validate())?;
        check("crop", self.crop.scaled_to(self.season.days).map(|_| ()))?;
        let y = &self.yield_model;
        if !(y.ky > 0.0 && y.ky.is_finite()) || !(y.max_yield_kg_per_acre > 0.0 && y.max_yield_kg_per_acre.is_finite())
        {
            return Err(invalid("yield")("ky and max_yield_kg_per_acre must be positive".into()));
        }
        if !(self.irrigation.daily_cap_mm > 0.0 && self.irrigation.daily_cap_mm.is_finite()) {
            return Err(invalid("irrigation")("daily_cap_mm must be positive".into()));
        }
        check("irrigation.baseline", self.irrigation.baseline.validate())?;
        check("transport.link", self.transport.link.validate())?;
        check("transport.energy", self.transport.energy.validate())?;
        if self.ingest.write_key.is_empty() {
            return Err(invalid("ingest")("write_key must not be empty".into()));
        }
        let latency = self.transport.link.latency_pubsub_s.max(self.transport.link.latency_reqresp_s);
        if latency.fract() != 0.0 {
            return Err(invalid("transport.link")("latencies must be whole seconds".into()));
        }
        check("alerting.gateway", self.alerting.gateway.validate())?;
        if self.alerting.dedup_window_s == 0 {
            return Err(invalid("alerting")("dedup_window_s must be positive".into()));
        }
        check("economics", self.economics.validate())?;
        Ok(())
    }

    pub fn samples_per_day(&self) -> u64 {
        SECONDS_PER_DAY / self.sensors.soil.sample_interval_s
    }
}
