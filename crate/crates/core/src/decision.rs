//! Crop water requirement pipeline (Ra -> ET0 -> Kc -> ETc) and the
//! threshold rules that turn readings into irrigation advice and alerts.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldState, Quantity, SensorReading, SoilProfile};

/// Solar constant, MJ m-2 min-1.
const SOLAR_CONSTANT: f64 = 0.0820;
/// MJ m-2 day-1 to mm/day of evaporated water.
const MJ_TO_MM: f64 = 0.408;

#[derive(Debug, Error, PartialEq)]
pub enum DecisionError {
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("day {day} outside a {season}-day season")]
    OutOfSeason { day: u32, season: u32 },
    #[error("incomplete input: no {0:?} reading")]
    Incomplete(Quantity),
    #[error("configuration error: {0}")]
    Config(String),
}

type Result<T> = std::result::Result<T, DecisionError>;

/// Daily extraterrestrial radiation, MJ m-2 day-1.
pub fn extraterrestrial_radiation(latitude_deg: f64, day_of_year: u32) -> Result<f64> {
    if !(latitude_deg.is_finite() && (-66.0..=66.0).contains(&latitude_deg)) {
        return Err(DecisionError::OutOfDomain(format!(
            "latitude {latitude_deg} outside [-66, 66]"
        )));
    }
    if !(1..=366).contains(&day_of_year) {
        return Err(DecisionError::OutOfDomain(format!("day of year {day_of_year}")));
    }
    let phi = latitude_deg.to_radians();
    let angle = 2.0 * PI * f64::from(day_of_year) / 365.0;
    let inv_rel_distance = 1.0 + 0.033 * angle.cos();
    let declination = 0.409 * (angle - 1.39).sin();
    let sunset_angle = (-phi.tan() * declination.tan()).acos();
    Ok(24.0 * 60.0 / PI
        * SOLAR_CONSTANT
        * inv_rel_distance
        * (sunset_angle * phi.sin() * declination.sin()
            + phi.cos() * declination.cos() * sunset_angle.sin()))
}

/// Hargreaves reference evapotranspiration, mm/day.
pub fn et0_hargreaves(t_min: f64, t_max: f64, latitude_deg: f64, day_of_year: u32) -> Result<f64> {
    if !(t_min.is_finite() && t_max.is_finite()) || t_min > t_max {
        return Err(DecisionError::Input(format!("t_min {t_min} must not exceed t_max {t_max}")));
    }
    let ra_mm = MJ_TO_MM * extraterrestrial_radiation(latitude_deg, day_of_year)?;
    let t_mean = 0.5 * (t_min + t_max);
    Ok((0.0023 * ra_mm * (t_mean + 17.8) * (t_max - t_min).sqrt()).max(0.0))
}

/// Four-stage crop coefficient curve: flat initial, linear development,
/// flat mid-season, linear late decline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropCalendar {
    /// initial, development, mid-season, late
    pub stage_days: [u32; 4],
    pub kc_ini: f64,
    pub kc_mid: f64,
    pub kc_end: f64,
}

impl Default for CropCalendar {
    fn default() -> Self {
        Self::maize()
    }
}

impl CropCalendar {
    pub fn maize() -> Self {
        Self {
            stage_days: [20, 35, 40, 25],
            kc_ini: 0.30,
            kc_mid: 1.20,
            kc_end: 0.35,
        }
    }

    pub fn season_total_days(&self) -> u32 {
        self.stage_days.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_days.contains(&0) {
            return Err(DecisionError::Config("crop stage lengths must be positive".into()));
        }
        for kc in [self.kc_ini, self.kc_mid, self.kc_end] {
            if !(kc > 0.0 && kc < 2.0) {
                return Err(DecisionError::Config(format!("crop coefficient {kc} outside (0, 2)")));
            }
        }
        Ok(())
    }

    /// Stretch or compress the stages to a season of `days`, keeping their
    /// proportions. The last stage absorbs rounding.
    pub fn scaled_to(&self, days: u32) -> Result<Self> {
        self.validate()?;
        if days < 4 {
            return Err(DecisionError::Config(format!(
                "a {days}-day season cannot hold four crop stages"
            )));
        }
        let total = f64::from(self.season_total_days());
        let mut stages = [0u32; 4];
        for i in 0..3 {
            stages[i] = ((f64::from(self.stage_days[i]) * f64::from(days) / total).round() as u32).max(1);
        }
        let used: u32 = stages[..3].iter().sum();
        if used >= days {
            return Err(DecisionError::Config(format!("cannot scale crop stages into {days} days")));
        }
        stages[3] = days - used;
        Ok(Self {
            stage_days: stages,
            ..self.clone()
        })
    }

    pub fn kc(&self, day_index: u32) -> Result<f64> {
        let [ini, dev, mid, late] = self.stage_days;
        let season = self.season_total_days();
        if day_index >= season {
            return Err(DecisionError::OutOfSeason {
                day: day_index,
                season,
            });
        }
        let d = day_index;
        let kc = if d < ini {
            self.kc_ini
        } else if d < ini + dev {
            let step = f64::from(d - ini + 1) / f64::from(dev);
            self.kc_ini + (self.kc_mid - self.kc_ini) * step
        } else if d < ini + dev + mid {
            self.kc_mid
        } else {
            let step = f64::from(d - ini - dev - mid + 1) / f64::from(late);
            self.kc_mid + (self.kc_end - self.kc_mid) * step
        };
        Ok(kc)
    }

    /// Largest day-to-day change of Kc allowed by the curve.
    pub fn max_daily_slope(&self) -> f64 {
        let dev = (self.kc_mid - self.kc_ini).abs() / f64::from(self.stage_days[1]);
        let late = (self.kc_mid - self.kc_end).abs() / f64::from(self.stage_days[3]);
        dev.max(late)
    }
}

pub fn crop_et(et0_mm: f64, day_index: u32, calendar: &CropCalendar) -> Result<f64> {
    Ok(calendar.kc(day_index)? * et0_mm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub soil_moisture_trigger_pct: f64,
    pub temp_alert_c: f64,
    pub humidity_range_pct: [f64; 2],
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            soil_moisture_trigger_pct: 25.0,
            temp_alert_c: 35.0,
            humidity_range_pct: [30.0, 60.0],
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let t = self.soil_moisture_trigger_pct;
        // 0 is allowed: a rule that can never fire
        if !(0.0..100.0).contains(&t) {
            return Err(DecisionError::Config(format!("moisture trigger {t} outside [0, 100)")));
        }
        let [lo, hi] = self.humidity_range_pct;
        if !(lo < hi) {
            return Err(DecisionError::Config(format!("humidity range reversed: [{lo}, {hi}]")));
        }
        if !self.temp_alert_c.is_finite() {
            return Err(DecisionError::Config("temperature threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Irrigate,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrigationAdvice {
    pub field_id: String,
    pub timestamp: u64,
    pub action: Action,
    pub depth_mm: f64,
    pub reason: String,
    pub observed_moisture_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertKind {
    Heat,
    HumidityLow,
    HumidityHigh,
    MoistureLow,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::Heat => "HEAT",
            AlertKind::HumidityLow => "HUMIDITY_LOW",
            AlertKind::HumidityHigh => "HUMIDITY_HIGH",
            AlertKind::MoistureLow => "MOISTURE_LOW",
        }
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Advisory,
    Warning,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub kind: AlertKind,
    pub severity: Severity,
    pub observed: f64,
    pub threshold: f64,
}

/// Latest value of each sensed quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub timestamp: u64,
    pub moisture_pct: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

impl Observation {
    pub fn from_readings(readings: &[SensorReading]) -> Result<Self> {
        let latest = |q: Quantity| {
            readings
                .iter()
                .filter(|r| r.quantity == q)
                .max_by_key(|r| r.timestamp)
                .ok_or(DecisionError::Incomplete(q))
        };
        let m = latest(Quantity::SoilMoisture)?;
        let t = latest(Quantity::AirTemperature)?;
        let h = latest(Quantity::RelativeHumidity)?;
        Ok(Self {
            timestamp: m.timestamp.max(t.timestamp).max(h.timestamp),
            moisture_pct: m.value,
            temperature_c: t.value,
            humidity_pct: h.value,
        })
    }
}

/// Application depth that brings the root zone back to field capacity,
/// limited to `cap_mm`.
pub fn refill_depth(state: &FieldState, profile: &SoilProfile, cap_mm: f64) -> f64 {
    state.depletion_mm.clamp(0.0, profile.taw_mm()).min(cap_mm.max(0.0))
}

/// Alerts implied by an observation; every alert's observed value violates
/// its threshold.
pub fn alerts_for(obs: &Observation, thresholds: &Thresholds) -> Vec<Alert> {
    let mut alerts = Vec::new();
    if obs.moisture_pct < thresholds.soil_moisture_trigger_pct {
        alerts.push(Alert {
            kind: AlertKind::MoistureLow,
            severity: Severity::Warning,
            observed: obs.moisture_pct,
            threshold: thresholds.soil_moisture_trigger_pct,
        });
    }
    if obs.temperature_c > thresholds.temp_alert_c {
        let severity = if obs.temperature_c > thresholds.temp_alert_c + 5.0 {
            Severity::Critical
        } else {
            Severity::Warning
        };
        alerts.push(Alert {
            kind: AlertKind::Heat,
            severity,
            observed: obs.temperature_c,
            threshold: thresholds.temp_alert_c,
        });
    }
    let [lo, hi] = thresholds.humidity_range_pct;
    if obs.humidity_pct < lo {
        alerts.push(Alert {
            kind: AlertKind::HumidityLow,
            severity: Severity::Advisory,
            observed: obs.humidity_pct,
            threshold: lo,
        });
    } else if obs.humidity_pct > hi {
        alerts.push(Alert {
            kind: AlertKind::HumidityHigh,
            severity: Severity::Advisory,
            observed: obs.humidity_pct,
            threshold: hi,
        });
    }
    alerts
}

pub fn evaluate_observation(
    field_id: &str,
    obs: &Observation,
    thresholds: &Thresholds,
    state: &FieldState,
    profile: &SoilProfile,
    cap_mm: f64,
) -> (IrrigationAdvice, Vec<Alert>) {
    let trigger = thresholds.soil_moisture_trigger_pct;
    // strictly below: a reading equal to the trigger does not fire
    let depth = if obs.moisture_pct < trigger {
        refill_depth(state, profile, cap_mm)
    } else {
        0.0
    };
    let (action, reason) = if depth > 0.0 {
        (
            Action::Irrigate,
            format!("soil moisture {:.1}% below trigger {:.1}%", obs.moisture_pct, trigger),
        )
    } else if obs.moisture_pct < trigger {
        (
            Action::None,
            format!("soil moisture {:.1}% below trigger but root zone at field capacity", obs.moisture_pct),
        )
    } else {
        (
            Action::None,
            format!("soil moisture {:.1}% at or above trigger {:.1}%", obs.moisture_pct, trigger),
        )
    };
    let advice = IrrigationAdvice {
        field_id: field_id.to_owned(),
        timestamp: obs.timestamp,
        action,
        depth_mm: depth,
        reason,
        observed_moisture_pct: obs.moisture_pct,
    };
    (advice, alerts_for(obs, thresholds))
}

/// Apply the threshold rules to the latest readings.
pub fn evaluate(
    field_id: &str,
    readings: &[SensorReading],
    thresholds: &Thresholds,
    state: &FieldState,
    profile: &SoilProfile,
    cap_mm: f64,
) -> Result<(IrrigationAdvice, Vec<Alert>)> {
    let obs = Observation::from_readings(readings)?;
    Ok(evaluate_observation(field_id, &obs, thresholds, state, profile, cap_mm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Policy {
    SensorDriven,
    CalendarBaseline,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::SensorDriven => "SENSOR_DRIVEN",
            Policy::CalendarBaseline => "CALENDAR_BASELINE",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrigationEvent {
    pub day: u32,
    pub timestamp: u64,
    pub policy: Policy,
    pub depth_mm: f64,
    pub trigger_reason: String,
    /// Reading the decision was based on; `None` for calendar events.
    pub observed_moisture_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrigationLog {
    pub policy: Policy,
    pub events: Vec<IrrigationEvent>,
}

impl IrrigationLog {
    pub fn new(policy: Policy) -> Self {
        Self {
            policy,
            events: Vec::new(),
        }
    }

    pub fn total_mm(&self) -> f64 {
        self.events.iter().map(|e| e.depth_mm).sum()
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn depth_on(&self, day: u32) -> f64 {
        self.events.iter().filter(|e| e.day == day).map(|e| e.depth_mm).sum()
    }
}

/// Fixed-interval, fixed-depth irrigation starting on day 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarPolicy {
    pub interval_days: u32,
    pub depth_mm: f64,
}

impl CalendarPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.interval_days == 0 {
            return Err(DecisionError::Config("baseline interval must be at least one day".into()));
        }
        if !(self.depth_mm.is_finite() && self.depth_mm >= 0.0) {
            return Err(DecisionError::Config("baseline depth must be non-negative".into()));
        }
        Ok(())
    }

    pub fn irrigates_on(&self, day: u32) -> bool {
        self.depth_mm > 0.0 && day.is_multiple_of(self.interval_days)
    }

    pub fn schedule(&self, days: u32) -> IrrigationLog {
        let events = (0..days)
            .filter(|d| self.irrigates_on(*d))
            .map(|day| IrrigationEvent {
                day,
                timestamp: u64::from(day) * crate::transport::SECONDS_PER_DAY,
                policy: Policy::CalendarBaseline,
                depth_mm: self.depth_mm,
                trigger_reason: format!("calendar: every {} days", self.interval_days),
                observed_moisture_pct: None,
            })
            .collect();
        IrrigationLog {
            policy: Policy::CalendarBaseline,
            events,
        }
    }
}

/// Irrigation log of one policy arm over the scenario's season.
pub fn schedule_season(policy: Policy, scenario: &crate::Scenario) -> crate::Result<IrrigationLog> {
    Ok(crate::season::simulate_arm(policy, scenario)?.irrigation)
}
