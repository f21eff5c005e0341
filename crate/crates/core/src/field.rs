//! Field ground truth: synthetic weather, a daily root-zone water balance and
//! the soil / air sensors that observe it.

use std::f64::consts::PI;

use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("degenerate calibration: air_counts ({air}) must exceed water_counts ({water})")]
    DegenerateCalibration { air: f64, water: f64 },
}

type Result<T> = std::result::Result<T, FieldError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub t_min: f64,
    pub t_max: f64,
    pub t_mean: f64,
    pub rh_mean: f64,
    pub rain: f64,
}

impl WeatherDay {
    pub fn day_of_year(&self) -> u32 {
        self.date.ordinal()
    }

    /// Air temperature and relative humidity at a given second of the day.
    ///
    /// Temperature follows a sinusoid between `t_min` (03:00) and `t_max`
    /// (15:00); humidity swings in antiphase around `rh_mean`.
    pub fn conditions_at(&self, second_of_day: u64, rh_swing_pct: f64) -> (f64, f64) {
        let hour = second_of_day as f64 / 3600.0;
        let wave = (2.0 * PI * (hour - 9.0) / 24.0).sin();
        let t = self.t_mean + 0.5 * (self.t_max - self.t_min) * wave;
        let rh = (self.rh_mean - rh_swing_pct * wave).clamp(0.0, 100.0);
        (t, rh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonConfig {
    pub days: u32,
    pub start_date: NaiveDate,
    pub latitude_deg: f64,
}

impl SeasonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days < 1 {
            return Err(FieldError::Config("season length must be at least 1 day".into()));
        }
        if !self.latitude_deg.is_finite() || self.latitude_deg.abs() > 66.0 {
            return Err(FieldError::Config(format!(
                "latitude {} outside [-66, 66]",
                self.latitude_deg
            )));
        }
        Ok(())
    }
}

/// Bounds and noise levels for the daily weather generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherEnvelope {
    pub temp_low_c: f64,
    pub temp_high_c: f64,
    pub rh_low_pct: f64,
    pub rh_high_pct: f64,
    pub temp_noise_c: f64,
    pub rh_noise_pct: f64,
    pub rh_diurnal_swing_pct: f64,
    /// Daily probability of a rain event; 0 for a dry season.
    pub rain_probability: f64,
    pub rain_mean_mm: f64,
}

impl Default for WeatherEnvelope {
    fn default() -> Self {
        Self {
            temp_low_c: 15.0,
            temp_high_c: 30.0,
            rh_low_pct: 30.0,
            rh_high_pct: 60.0,
            temp_noise_c: 1.0,
            rh_noise_pct: 4.0,
            rh_diurnal_swing_pct: 5.0,
            rain_probability: 0.0,
            rain_mean_mm: 0.0,
        }
    }
}

impl WeatherEnvelope {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.temp_low_c,
            self.temp_high_c,
            self.rh_low_pct,
            self.rh_high_pct,
            self.temp_noise_c,
            self.rh_noise_pct,
            self.rh_diurnal_swing_pct,
            self.rain_probability,
            self.rain_mean_mm,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(FieldError::Config("weather envelope values must be finite".into()));
        }
        if self.temp_low_c > self.temp_high_c {
            return Err(FieldError::Config(format!(
                "temperature envelope reversed: {} > {}",
                self.temp_low_c, self.temp_high_c
            )));
        }
        if self.rh_low_pct > self.rh_high_pct || self.rh_low_pct < 0.0 || self.rh_high_pct > 100.0 {
            return Err(FieldError::Config(format!(
                "humidity envelope invalid: [{}, {}]",
                self.rh_low_pct, self.rh_high_pct
            )));
        }
        if self.temp_noise_c < 0.0 || self.rh_noise_pct < 0.0 || self.rh_diurnal_swing_pct < 0.0 {
            return Err(FieldError::Config("noise levels must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.rain_probability) || self.rain_mean_mm < 0.0 {
            return Err(FieldError::Config("rain parameters out of range".into()));
        }
        Ok(())
    }
}

/// Seeded daily weather: a season-long sinusoid plus Gaussian noise, clamped
/// into the envelope. `t_min` stays in the lower half of the temperature band
/// and `t_max` in the upper half.
pub fn generate_weather(
    season: &SeasonConfig,
    envelope: &WeatherEnvelope,
    seed: u64,
) -> Result<Vec<WeatherDay>> {
    season.validate()?;
    envelope.validate()?;
    let mut rng = rng::stream(seed, Stream::Weather);
    let span = envelope.temp_high_c - envelope.temp_low_c;
    let mid = 0.5 * (envelope.temp_low_c + envelope.temp_high_c);
    let rh_mid = 0.5 * (envelope.rh_low_pct + envelope.rh_high_pct);
    let rh_span = envelope.rh_high_pct - envelope.rh_low_pct;

    let mut days = Vec::with_capacity(season.days as usize);
    for d in 0..season.days {
        let phase = (2.0 * PI * (d as f64 + 0.5) / season.days as f64).sin();
        let z_max: f64 = StandardNormal.sample(&mut rng);
        let z_min: f64 = StandardNormal.sample(&mut rng);
        let z_rh: f64 = StandardNormal.sample(&mut rng);
        let u_rain: f64 = rng.random();
        let u_depth: f64 = rng.random();

        let t_max = (envelope.temp_high_c - 0.15 * span
            + 0.10 * span * phase
            + envelope.temp_noise_c * z_max)
            .clamp(mid, envelope.temp_high_c);
        let t_min = (envelope.temp_low_c + 0.15 * span - 0.07 * span * phase
            + envelope.temp_noise_c * z_min)
            .clamp(envelope.temp_low_c, mid);
        let rh_mean = (rh_mid - 0.25 * rh_span * phase + envelope.rh_noise_pct * z_rh)
            .clamp(envelope.rh_low_pct, envelope.rh_high_pct);
        let rain = if u_rain < envelope.rain_probability {
            // exponential depth; 1 - u keeps the log argument in (0, 1]
            -envelope.rain_mean_mm * (1.0 - u_depth).ln()
        } else {
            0.0
        };
        let date = season
            .start_date
            .checked_add_days(Days::new(d as u64))
            .ok_or_else(|| FieldError::Config("season runs past the calendar range".into()))?;
        days.push(WeatherDay {
            date,
            t_min,
            t_max,
            t_mean: 0.5 * (t_min + t_max),
            rh_mean,
            rain,
        });
    }
    Ok(days)
}

/// Single-bucket root-zone description. Water contents are volumetric
/// fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoilProfile {
    pub theta_sat: f64,
    pub theta_fc: f64,
    pub theta_wp: f64,
    /// Air-dry content; zero of the display scale.
    pub theta_ad: f64,
    pub root_depth_m: f64,
    pub depletion_fraction_p: f64,
}

impl Default for SoilProfile {
    fn default() -> Self {
        Self {
            theta_sat: 0.45,
            theta_fc: 0.32,
            theta_wp: 0.15,
            theta_ad: 0.05,
            root_depth_m: 0.6,
            depletion_fraction_p: 0.55,
        }
    }
}

impl SoilProfile {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.theta_ad
            && self.theta_ad < self.theta_wp
            && self.theta_wp < self.theta_fc
            && self.theta_fc < self.theta_sat
            && self.theta_sat < 1.0;
        if !ordered {
            return Err(FieldError::Config(
                "soil profile requires 0 < theta_ad < theta_wp < theta_fc < theta_sat < 1".into(),
            ));
        }
        if !(self.depletion_fraction_p > 0.0 && self.depletion_fraction_p < 1.0) {
            return Err(FieldError::Config("depletion_fraction_p must be in (0, 1)".into()));
        }
        if !(self.root_depth_m > 0.0 && self.root_depth_m.is_finite()) {
            return Err(FieldError::Config("root_depth_m must be positive".into()));
        }
        Ok(())
    }

    /// Total available water in the root zone, mm.
    pub fn taw_mm(&self) -> f64 {
        1000.0 * (self.theta_fc - self.theta_wp) * self.root_depth_m
    }

    /// Readily available water, mm.
    pub fn raw_mm(&self) -> f64 {
        self.depletion_fraction_p * self.taw_mm()
    }

    /// Water-stress coefficient for a given depletion.
    pub fn stress_coefficient(&self, depletion_mm: f64) -> f64 {
        let taw = self.taw_mm();
        ((taw - depletion_mm) / (taw * (1.0 - self.depletion_fraction_p))).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldState {
    pub depletion_mm: f64,
    pub cumulative_drainage_mm: f64,
    pub cumulative_irrigation_mm: f64,
    pub cumulative_eta_mm: f64,
    pub day_index: u32,
}

impl FieldState {
    pub fn with_depletion(depletion_mm: f64) -> Self {
        Self {
            depletion_mm,
            ..Self::default()
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(FieldError::Input(format!("{name} must be finite and non-negative, got {v}")))
    }
}

/// Advance the root-zone balance by one day.
///
/// Water in beyond the current depletion drains. Actual ET is the crop ET
/// scaled by the stress coefficient at the start of the day and never takes
/// the bucket past wilting point, so the step conserves water exactly.
pub fn step_soil_water(
    state: &FieldState,
    weather: &WeatherDay,
    irrigation_mm: f64,
    etc_mm: f64,
    profile: &SoilProfile,
) -> Result<FieldState> {
    profile.validate()?;
    non_negative("rain", weather.rain)?;
    non_negative("irrigation", irrigation_mm)?;
    non_negative("crop ET", etc_mm)?;
    let taw = profile.taw_mm();
    if !(state.depletion_mm.is_finite() && (0.0..=taw).contains(&state.depletion_mm)) {
        return Err(FieldError::Input(format!(
            "depletion {} outside [0, {taw}]",
            state.depletion_mm
        )));
    }

    let water_in = weather.rain + irrigation_mm;
    let drainage = (water_in - state.depletion_mm).max(0.0);
    let after_inputs = (state.depletion_mm - water_in).max(0.0);
    let eta = (etc_mm * profile.stress_coefficient(state.depletion_mm)).min(taw - after_inputs);
    let depletion = (state.depletion_mm - water_in + eta + drainage).clamp(0.0, taw);

    Ok(FieldState {
        depletion_mm: depletion,
        cumulative_drainage_mm: state.cumulative_drainage_mm + drainage,
        cumulative_irrigation_mm: state.cumulative_irrigation_mm + irrigation_mm,
        cumulative_eta_mm: state.cumulative_eta_mm + eta,
        day_index: state.day_index + 1,
    })
}

/// Map depletion onto the normalized air-dry (0 %) to saturation (100 %)
/// display scale.
pub fn depletion_to_moisture_pct(depletion_mm: f64, profile: &SoilProfile) -> Result<f64> {
    profile.validate()?;
    let taw = profile.taw_mm();
    if !(depletion_mm.is_finite() && (0.0..=taw).contains(&depletion_mm)) {
        return Err(FieldError::Input(format!("depletion {depletion_mm} outside [0, {taw}]")));
    }
    let theta = profile.theta_fc - depletion_mm / (1000.0 * profile.root_depth_m);
    Ok(theta_to_moisture_pct(theta, profile))
}

pub fn theta_to_moisture_pct(theta: f64, profile: &SoilProfile) -> f64 {
    (100.0 * (theta - profile.theta_ad) / (profile.theta_sat - profile.theta_ad)).clamp(0.0, 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    SoilMoisture,
    AirTempHumidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    SoilMoisture,
    AirTemperature,
    RelativeHumidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Percent,
    Celsius,
    PercentRh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub kind: SensorKind,
    pub adc_bits: u32,
    pub air_counts: f64,
    pub water_counts: f64,
    pub noise_sigma: f64,
    pub sample_interval_s: u64,
    pub depth_cm: f64,
}

impl SensorSpec {
    pub fn soil_default() -> Self {
        Self {
            kind: SensorKind::SoilMoisture,
            adc_bits: 12,
            air_counts: 3500.0,
            water_counts: 1200.0,
            noise_sigma: 40.0,
            sample_interval_s: 300,
            depth_cm: 15.0,
        }
    }

    pub fn air_default() -> Self {
        Self {
            kind: SensorKind::AirTempHumidity,
            adc_bits: 0,
            air_counts: 0.0,
            water_counts: 0.0,
            noise_sigma: 0.3,
            sample_interval_s: 300,
            depth_cm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_interval_s == 0 {
            return Err(FieldError::Config("sample_interval_s must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(FieldError::Config("noise_sigma must be non-negative".into()));
        }
        if self.kind == SensorKind::SoilMoisture {
            if !(1..=24).contains(&self.adc_bits) {
                return Err(FieldError::Config("adc_bits must be in 1..=24".into()));
            }
            if self.water_counts >= self.air_counts {
                return Err(FieldError::DegenerateCalibration {
                    air: self.air_counts,
                    water: self.water_counts,
                });
            }
            let full_scale = self.adc_full_scale();
            if self.water_counts < 0.0 || self.air_counts > full_scale {
                return Err(FieldError::Config(format!(
                    "calibration counts outside ADC range [0, {full_scale}]"
                )));
            }
        }
        Ok(())
    }

    pub fn adc_full_scale(&self) -> f64 {
        ((1u64 << self.adc_bits) - 1) as f64
    }

    /// Two-point calibration from raw counts to the display scale.
    pub fn calibrate(&self, raw_counts: f64) -> Result<f64> {
        let span = self.air_counts - self.water_counts;
        if span <= 0.0 {
            return Err(FieldError::DegenerateCalibration {
                air: self.air_counts,
                water: self.water_counts,
            });
        }
        Ok((100.0 * (self.air_counts - raw_counts) / span).clamp(0.0, 100.0))
    }

    /// Ideal (noiseless) counts for a moisture on the display scale.
    pub fn counts_for(&self, moisture_pct: f64) -> f64 {
        self.air_counts - (self.air_counts - self.water_counts) * moisture_pct / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub timestamp: u64,
    pub sensor_id: String,
    pub quantity: Quantity,
    pub value: f64,
    pub unit: Unit,
}

/// Generate raw ADC counts for the true moisture, add Gaussian noise and
/// calibrate back. Counts are kept fractional: the firmware averages an
/// oversampled burst, so quantization is below the noise floor.
pub fn sample_soil_sensor<R: Rng + ?Sized>(
    true_moisture_pct: f64,
    spec: &SensorSpec,
    sensor_id: &str,
    timestamp: u64,
    rng: &mut R,
) -> Result<SensorReading> {
    if spec.kind != SensorKind::SoilMoisture {
        return Err(FieldError::Input("sensor spec is not a soil-moisture sensor".into()));
    }
    if spec.air_counts == spec.water_counts {
        return Err(FieldError::DegenerateCalibration {
            air: spec.air_counts,
            water: spec.water_counts,
        });
    }
    let z: f64 = StandardNormal.sample(rng);
    let raw = (spec.counts_for(true_moisture_pct) + spec.noise_sigma * z)
        .clamp(0.0, spec.adc_full_scale());
    Ok(SensorReading {
        timestamp,
        sensor_id: sensor_id.to_owned(),
        quantity: Quantity::SoilMoisture,
        value: spec.calibrate(raw)?,
        unit: Unit::Percent,
    })
}

fn tenth(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Temperature/humidity pair with 0.1 resolution.
pub fn sample_air_sensor<R: Rng + ?Sized>(
    t_true: f64,
    rh_true: f64,
    spec: &SensorSpec,
    sensor_id: &str,
    timestamp: u64,
    rng: &mut R,
) -> (SensorReading, SensorReading) {
    let zt: f64 = StandardNormal.sample(rng);
    let zh: f64 = StandardNormal.sample(rng);
    let t = tenth((t_true + spec.noise_sigma * zt).clamp(-40.0, 80.0));
    let rh = tenth((rh_true + spec.noise_sigma * zh).clamp(0.0, 100.0));
    (
        SensorReading {
            timestamp,
            sensor_id: sensor_id.to_owned(),
            quantity: Quantity::AirTemperature,
            value: t,
            unit: Unit::Celsius,
        },
        SensorReading {
            timestamp,
            sensor_id: sensor_id.to_owned(),
            quantity: Quantity::RelativeHumidity,
            value: rh,
            unit: Unit::PercentRh,
        },
    )
}
