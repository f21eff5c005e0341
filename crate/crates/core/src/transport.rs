//! Telemetry over a lossy link: publish/subscribe (MQTT-like) versus polled
//! request/response (HTTP-like), with delivery, latency and energy totals.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

type Result<T> = std::result::Result<T, TransportError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    PubSub,
    ReqResp,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::PubSub, Protocol::ReqResp];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::PubSub => "pubsub",
            Protocol::ReqResp => "reqresp",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Delivery guarantee. QoS 1 retries until acknowledged or the retry budget
/// runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Qos {
    AtMostOnce,
    AtLeastOnce,
}

impl TryFrom<u8> for Qos {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Qos::AtMostOnce),
            1 => Ok(Qos::AtLeastOnce),
            other => Err(format!("unsupported qos level {other}")),
        }
    }
}

impl From<Qos> for u8 {
    fn from(q: Qos) -> u8 {
        match q {
            Qos::AtMostOnce => 0,
            Qos::AtLeastOnce => 1,
        }
    }
}

pub fn telemetry_topic(field_id: &str) -> String {
    format!("farm/{field_id}/telemetry")
}

/// One consolidated reading set per sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPacket {
    pub sequence_no: u64,
    pub timestamp: u64,
    pub moisture_pct: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub topic: String,
}

impl TelemetryPacket {
    /// Wire payload: `moisture=<m>,temperature=<t>,humidity=<h>`, each value
    /// with one decimal.
    pub fn payload(&self) -> String {
        format!(
            "moisture={:.1},temperature={:.1},humidity={:.1}",
            self.moisture_pct, self.temperature_c, self.humidity_pct
        )
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload().len()
    }

    /// Inverse of [`payload`](Self::payload); field order is fixed.
    pub fn parse_payload(payload: &str) -> Option<(f64, f64, f64)> {
        let mut parts = payload.split(',');
        let mut take = |key: &str| -> Option<f64> {
            let (k, v) = parts.next()?.split_once('=')?;
            (k == key).then(|| v.parse().ok()).flatten()
        };
        let out = (take("moisture")?, take("temperature")?, take("humidity")?);
        parts.next().is_none().then_some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub loss_prob: f64,
    pub latency_pubsub_s: f64,
    pub latency_reqresp_s: f64,
    pub max_retries: u32,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            loss_prob: 0.02,
            latency_pubsub_s: 3.0,
            latency_reqresp_s: 10.0,
            max_retries: 5,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.loss_prob) {
            return Err(TransportError::Config(format!(
                "loss_prob {} outside [0, 1)",
                self.loss_prob
            )));
        }
        if !(self.latency_pubsub_s > 0.0 && self.latency_reqresp_s > 0.0) {
            return Err(TransportError::Config("latencies must be positive".into()));
        }
        Ok(())
    }

    pub fn latency_s(&self, protocol: Protocol) -> f64 {
        match protocol {
            Protocol::PubSub => self.latency_pubsub_s,
            Protocol::ReqResp => self.latency_reqresp_s,
        }
    }
}

/// Per-message radio energy plus a daily idle floor, in mWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub pubsub_mwh_per_message: f64,
    pub reqresp_mwh_per_message: f64,
    pub idle_mwh_per_day: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        // Season totals of 850 and 1000 mWh spread over 60 days x 288 messages.
        Self {
            pubsub_mwh_per_message: 850.0 / 17_280.0,
            reqresp_mwh_per_message: 1000.0 / 17_280.0,
            idle_mwh_per_day: 0.05,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.pubsub_mwh_per_message,
            self.reqresp_mwh_per_message,
            self.idle_mwh_per_day,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(TransportError::Config("energy constants must be non-negative".into()))
        }
    }

    pub fn per_message_mwh(&self, protocol: Protocol) -> f64 {
        match protocol {
            Protocol::PubSub => self.pubsub_mwh_per_message,
            Protocol::ReqResp => self.reqresp_mwh_per_message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryResult {
    pub attempts: u32,
    pub delivered: bool,
}

/// Send one packet. Each attempt is lost independently with `loss_prob`.
/// One uniform draw is consumed per attempt.
pub fn publish<R: Rng + ?Sized>(qos: Qos, link: &LinkModel, rng: &mut R) -> DeliveryResult {
    let budget = match qos {
        Qos::AtMostOnce => 1,
        Qos::AtLeastOnce => link.max_retries.saturating_add(1),
    };
    for attempt in 1..=budget {
        let u: f64 = rng.random();
        if u >= link.loss_prob {
            return DeliveryResult {
                attempts: attempt,
                delivered: true,
            };
        }
    }
    DeliveryResult {
        attempts: budget,
        delivered: false,
    }
}

/// Season-level accounting. All fields are additive so [`merge`](Self::merge)
/// is associative and commutative; rates are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransportStats {
    pub attempted: u64,
    pub delivered: u64,
    pub retransmissions: u64,
    pub bytes_sent: u64,
    pub messages_transmitted: u64,
    pub message_energy_mwh: f64,
    pub useful_energy_mwh: f64,
    pub idle_energy_mwh: f64,
    pub latency_sum_s: f64,
}

impl TransportStats {
    pub fn record(
        &mut self,
        packet_bytes: usize,
        result: DeliveryResult,
        protocol: Protocol,
        link: &LinkModel,
        energy: &EnergyModel,
    ) {
        let per_msg = energy.per_message_mwh(protocol);
        self.attempted += 1;
        self.messages_transmitted += u64::from(result.attempts);
        self.retransmissions += u64::from(result.attempts.saturating_sub(1));
        self.bytes_sent += packet_bytes as u64 * u64::from(result.attempts);
        self.message_energy_mwh += per_msg * f64::from(result.attempts);
        if result.delivered {
            self.delivered += 1;
            self.useful_energy_mwh += per_msg;
            self.latency_sum_s += link.latency_s(protocol);
        }
    }

    pub fn add_idle(&mut self, days: f64, energy: &EnergyModel) {
        self.idle_energy_mwh += days * energy.idle_mwh_per_day;
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            attempted: self.attempted + other.attempted,
            delivered: self.delivered + other.delivered,
            retransmissions: self.retransmissions + other.retransmissions,
            bytes_sent: self.bytes_sent + other.bytes_sent,
            messages_transmitted: self.messages_transmitted + other.messages_transmitted,
            message_energy_mwh: self.message_energy_mwh + other.message_energy_mwh,
            useful_energy_mwh: self.useful_energy_mwh + other.useful_energy_mwh,
            idle_energy_mwh: self.idle_energy_mwh + other.idle_energy_mwh,
            latency_sum_s: self.latency_sum_s + other.latency_sum_s,
        }
    }

    pub fn energy_mwh(&self) -> f64 {
        self.message_energy_mwh + self.idle_energy_mwh
    }

    pub fn delivery_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.delivered as f64 / self.attempted as f64
        }
    }

    pub fn mean_latency_s(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.latency_sum_s / self.delivered as f64
        }
    }

    pub fn energy_efficiency_pct(&self) -> Result<f64> {
        energy_efficiency_pct(self.useful_energy_mwh, self.energy_mwh())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub protocol: Protocol,
    pub qos: Qos,
    pub link: LinkModel,
    pub energy: EnergyModel,
    /// Wall span the idle floor is charged over.
    pub days: f64,
}

/// Run every packet through the link and aggregate. An empty packet list
/// gives zeroed message counts.
pub fn run_session<R: Rng + ?Sized>(
    packets: &[TelemetryPacket],
    session: &Session,
    rng: &mut R,
) -> Result<TransportStats> {
    session.link.validate()?;
    session.energy.validate()?;
    let mut stats = TransportStats::default();
    for packet in packets {
        let result = publish(session.qos, &session.link, rng);
        stats.record(
            packet.payload_bytes(),
            result,
            session.protocol,
            &session.link,
            &session.energy,
        );
    }
    stats.add_idle(session.days, &session.energy);
    Ok(stats)
}

pub fn season_packet_count(days: u32, interval_s: u64) -> Result<u64> {
    if days < 1 {
        return Err(TransportError::Config("season must be at least one day".into()));
    }
    if interval_s == 0 || !SECONDS_PER_DAY.is_multiple_of(interval_s) {
        return Err(TransportError::Config(format!(
            "sampling interval {interval_s}s does not divide a day"
        )));
    }
    Ok(u64::from(days) * (SECONDS_PER_DAY / interval_s))
}

/// Share of the energy budget spent on messages that arrived, in percent.
pub fn energy_efficiency_pct(useful_energy_mwh: f64, total_energy_mwh: f64) -> Result<f64> {
    if !(total_energy_mwh > 0.0) {
        return Err(TransportError::UndefinedMetric(
            "energy efficiency needs a positive total".into(),
        ));
    }
    Ok((100.0 * useful_energy_mwh / total_energy_mwh).clamp(0.0, 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn packets(n: u64) -> Vec<TelemetryPacket> {
        (0..n)
            .map(|i| TelemetryPacket {
                sequence_no: i,
                timestamp: i * 300,
                moisture_pct: 40.0,
                temperature_c: 24.5,
                humidity_pct: 45.0,
                topic: telemetry_topic("mubende-1"),
            })
            .collect()
    }

    fn session(protocol: Protocol, qos: Qos, loss: f64) -> Session {
        Session {
            protocol,
            qos,
            link: LinkModel {
                loss_prob: loss,
                ..LinkModel::default()
            },
            energy: EnergyModel::default(),
            days: 60.0,
        }
    }

    #[test]
    fn payload_golden() {
        let p = TelemetryPacket {
            sequence_no: 1,
            timestamp: 0,
            moisture_pct: 56.0,
            temperature_c: 20.2,
            humidity_pct: 48.0,
            topic: telemetry_topic("f1"),
        };
        assert_eq!(p.payload(), "moisture=56.0,temperature=20.2,humidity=48.0");
        assert_eq!(p.payload_bytes(), 44);
        assert_eq!(p.topic, "farm/f1/telemetry");
        assert_eq!(TelemetryPacket::parse_payload(&p.payload()), Some((56.0, 20.2, 48.0)));
        assert_eq!(TelemetryPacket::parse_payload("temperature=1,moisture=2,humidity=3"), None);
    }

    #[test]
    fn lossless_link_delivers_first_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let link = LinkModel {
            loss_prob: 0.0,
            ..LinkModel::default()
        };
        for _ in 0..100 {
            assert_eq!(
                publish(Qos::AtMostOnce, &link, &mut rng),
                DeliveryResult {
                    attempts: 1,
                    delivered: true
                }
            );
        }
        let stats =
            run_session(&packets(500), &session(Protocol::PubSub, Qos::AtLeastOnce, 0.0), &mut rng)
                .unwrap();
        assert_eq!(stats.delivered, stats.attempted);
        assert_eq!(stats.retransmissions, 0);
    }

    #[test]
    fn qos0_matches_loss_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let stats = run_session(
            &packets(17_280),
            &session(Protocol::PubSub, Qos::AtMostOnce, 0.02),
            &mut rng,
        )
        .unwrap();
        assert!((stats.delivery_rate() - 0.98).abs() <= 0.005, "{}", stats.delivery_rate());
    }

    #[test]
    fn qos1_nearly_always_delivers() {
        // closed form: 1 - 0.02^6 = 0.999_999_999_936
        let expected = 1.0 - 0.02f64.powi(6);
        assert!(expected >= 0.999_999);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let stats = run_session(
            &packets(17_280),
            &session(Protocol::PubSub, Qos::AtLeastOnce, 0.02),
            &mut rng,
        )
        .unwrap();
        assert!(stats.delivery_rate() >= 0.9999);
        assert!(stats.retransmissions > 0);
        assert!(stats.delivered <= stats.attempted + stats.retransmissions);
    }

    #[test]
    fn season_energy_totals() {
        let n = season_packet_count(60, 300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pub_ = run_session(&packets(n), &session(Protocol::PubSub, Qos::AtMostOnce, 0.02), &mut rng)
            .unwrap();
        let req = run_session(&packets(n), &session(Protocol::ReqResp, Qos::AtMostOnce, 0.02), &mut rng)
            .unwrap();
        assert!((pub_.energy_mwh() - 850.0).abs() / 850.0 < 0.01);
        assert!((req.energy_mwh() - 1000.0).abs() / 1000.0 < 0.01);
        assert!((pub_.energy_mwh() / req.energy_mwh() - 0.85).abs() < 0.01);
        assert_eq!(pub_.mean_latency_s(), 3.0);
        assert_eq!(req.mean_latency_s(), 10.0);
    }

    #[test]
    fn packet_count() {
        assert_eq!(season_packet_count(60, 300).unwrap(), 17_280);
        assert_eq!(season_packet_count(1, 86_400).unwrap(), 1);
        assert!(season_packet_count(0, 300).is_err());
        assert!(season_packet_count(1, 7).is_err());
        assert!(season_packet_count(1, 0).is_err());
    }

    #[test]
    fn efficiency_edges() {
        assert_eq!(energy_efficiency_pct(10.0, 10.0).unwrap(), 100.0);
        assert_eq!(energy_efficiency_pct(0.0, 10.0).unwrap(), 0.0);
        assert!(energy_efficiency_pct(0.0, 0.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = session(Protocol::PubSub, Qos::AtMostOnce, 0.0);
        s.energy.idle_mwh_per_day = 0.0;
        let stats = run_session(&packets(100), &s, &mut rng).unwrap();
        assert!((stats.energy_efficiency_pct().unwrap() - 100.0).abs() < 1e-9);

        let mut all_lost = TransportStats::default();
        all_lost.record(
            10,
            DeliveryResult {
                attempts: 1,
                delivered: false,
            },
            Protocol::PubSub,
            &LinkModel::default(),
            &EnergyModel::default(),
        );
        assert_eq!(all_lost.energy_efficiency_pct().unwrap(), 0.0);
    }

    #[test]
    fn empty_session_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = session(Protocol::PubSub, Qos::AtMostOnce, 0.02);
        s.days = 0.0;
        let stats = run_session(&[], &s, &mut rng).unwrap();
        assert_eq!(stats, TransportStats::default());
        assert_eq!(stats.delivery_rate(), 0.0);
        assert_eq!(stats.mean_latency_s(), 0.0);
    }

    #[test]
    fn bad_link_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(run_session(&packets(1), &session(Protocol::PubSub, Qos::AtMostOnce, 1.0), &mut rng)
            .is_err());
        assert!(Qos::try_from(2).is_err());
    }

    #[test]
    fn energy_monotone_in_message_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = session(Protocol::PubSub, Qos::AtMostOnce, 0.1);
        let mut last = -1.0;
        for n in [1, 2, 10, 100, 1000] {
            let e = run_session(&packets(n), &s, &mut rng).unwrap().energy_mwh();
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn qos0_rate_within_binomial_bounds() {
        let n = 5000u64;
        for (i, loss) in [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let stats =
                run_session(&packets(n), &session(Protocol::PubSub, Qos::AtMostOnce, loss), &mut rng)
                    .unwrap();
            let p = 1.0 - loss;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (stats.delivery_rate() - p).abs() <= 3.0 * sigma,
                "loss {loss}: rate {}",
                stats.delivery_rate()
            );
        }
    }

    fn arb_stats() -> impl Strategy<Value = TransportStats> {
        (0u64..1000, 0u64..1000, 0u64..100, 0u32..1000).prop_map(|(a, d, r, e)| TransportStats {
            attempted: a,
            delivered: d.min(a),
            retransmissions: r,
            bytes_sent: a * 43,
            messages_transmitted: a + r,
            message_energy_mwh: f64::from(e) * 0.25,
            useful_energy_mwh: f64::from(e) * 0.125,
            idle_energy_mwh: 0.5,
            latency_sum_s: d.min(a) as f64 * 3.0,
        })
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(a in arb_stats(), b in arb_stats(), c in arb_stats()) {
            prop_assert_eq!(a.merge(&b), b.merge(&a));
            prop_assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn qos1_never_delivers_less_than_qos0(seed in any::<u64>(), loss in 0.0f64..0.95, retries in 0u32..8) {
            // same draws for both: QoS 1 only adds attempts after QoS 0 gives up
            let link = LinkModel { loss_prob: loss, max_retries: retries, ..LinkModel::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut d0, mut d1) = (0u32, 0u32);
            for _ in 0..50 {
                let r0 = publish(Qos::AtMostOnce, &link, &mut rng.clone());
                let r1 = publish(Qos::AtLeastOnce, &link, &mut rng);
                prop_assert!(r1.delivered >= r0.delivered);
                d0 += u32::from(r0.delivered);
                d1 += u32::from(r1.delivered);
            }
            prop_assert!(d1 >= d0);
        }

    }
}
