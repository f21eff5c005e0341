//! Localized farmer messages and their delivery through messaging gateways.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{Action, Alert, AlertKind, IrrigationAdvice};

pub const BUNDLED_CATALOG: &str = include_str!("../data/messages.toml");
pub const DEFAULT_DEDUP_WINDOW_S: u64 = 12 * 3600;

/// RFC 3986 unreserved characters pass through; everything else is
/// percent-encoded, so a space becomes `%20` and `!` becomes `%21`.
const QUERY_VALUE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Error, PartialEq)]
pub enum AlertingError {
    #[error("catalog error: {0}")]
    Catalog(String),
    #[error("no template {template_id:?} for locale {locale}")]
    NotFound { template_id: String, locale: Locale },
    #[error("missing value for placeholder {0:?}")]
    MissingParam(String),
    #[error("gateway configuration error: {0}")]
    Config(String),
    #[error("refusing to send an empty message")]
    EmptyText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    En,
    Lg,
}

impl Locale {
    pub fn as_str(self) -> &'static str {
        match self {
            Locale::En => "en",
            Locale::Lg => "lg",
        }
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageTemplate {
    pub template_id: String,
    pub locale: Locale,
    pub params: Vec<String>,
    pub review: String,
    pub text: String,
}

impl MessageTemplate {
    pub fn placeholders(&self) -> Result<Vec<&str>, AlertingError> {
        placeholders(&self.text)
    }
}

fn placeholders(text: &str) -> Result<Vec<&str>, AlertingError> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(AlertingError::Catalog(format!("stray '}}' in {text:?}")));
        }
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| AlertingError::Catalog(format!("unclosed placeholder in {text:?}")))?;
        let name = &after[..close];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(AlertingError::Catalog(format!("bad placeholder {name:?}")));
        }
        out.push(name);
        rest = &after[close + 1..];
    }
    Ok(out)
}

fn format_param(name: &str, value: f64) -> String {
    if name.ends_with("_pct") {
        format!("{}", value.round() as i64)
    } else if name.ends_with("_c") || name.ends_with("_rh") {
        format!("{:.1}", (value * 10.0).round() / 10.0)
    } else {
        format!("{value}")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    message: Vec<MessageTemplate>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    templates: BTreeMap<(String, Locale), MessageTemplate>,
}

impl Catalog {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CATALOG).expect("bundled message catalog is valid")
    }

    /// Parse and check a catalog: unique keys, placeholders declared, and
    /// every locale of a template declaring the same parameter set.
    pub fn parse(source: &str) -> Result<Self, AlertingError> {
        let file: CatalogFile =
            toml::from_str(source).map_err(|e| AlertingError::Catalog(e.to_string()))?;
        let mut templates = BTreeMap::new();
        let mut param_sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for t in file.message {
            let declared: BTreeSet<String> = t.params.iter().cloned().collect();
            for p in t.placeholders()? {
                if !declared.contains(p) {
                    return Err(AlertingError::Catalog(format!(
                        "{}/{}: placeholder {p:?} not declared",
                        t.template_id, t.locale
                    )));
                }
            }
            match param_sets.get(&t.template_id) {
                Some(existing) if *existing != declared => {
                    return Err(AlertingError::Catalog(format!(
                        "{}: locales declare different parameters",
                        t.template_id
                    )));
                }
                Some(_) => {}
                None => {
                    param_sets.insert(t.template_id.clone(), declared);
                }
            }
            let key = (t.template_id.clone(), t.locale);
            if templates.insert(key, t).is_some() {
                return Err(AlertingError::Catalog("duplicate (template_id, locale) entry".into()));
            }
        }
        Ok(Self { templates })
    }

    pub fn get(&self, template_id: &str, locale: Locale) -> Result<&MessageTemplate, AlertingError> {
        self.templates
            .get(&(template_id.to_owned(), locale))
            .ok_or_else(|| AlertingError::NotFound {
                template_id: template_id.to_owned(),
                locale,
            })
    }

    pub fn templates(&self) -> impl Iterator<Item = &MessageTemplate> {
        self.templates.values()
    }

    pub fn render(
        &self,
        template_id: &str,
        locale: Locale,
        params: &BTreeMap<String, f64>,
    ) -> Result<String, AlertingError> {
        let template = self.get(template_id, locale)?;
        let mut out = String::with_capacity(template.text.len() + 8);
        let mut rest = template.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}').expect("validated at load");
            let name = &after[..close];
            let value = params
                .get(name)
                .ok_or_else(|| AlertingError::MissingParam(name.to_owned()))?;
            out.push_str(&format_param(name, *value));
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Render with the bundled catalog.
pub fn render(
    template_id: &str,
    locale: Locale,
    params: &BTreeMap<String, f64>,
) -> Result<String, AlertingError> {
    Catalog::bundled().render(template_id, locale, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayKind {
    WhatsappGateway,
    Sms,
}

impl GatewayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GatewayKind::WhatsappGateway => "whatsapp_gateway",
            GatewayKind::Sms => "sms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub kind: GatewayKind,
    pub endpoint: String,
    pub phone: String,
    pub api_key: String,
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), AlertingError> {
        let url = url::Url::parse(&self.endpoint)
            .map_err(|e| AlertingError::Config(format!("endpoint {:?}: {e}", self.endpoint)))?;
        if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
            return Err(AlertingError::Config(format!("endpoint {:?} is not http(s)", self.endpoint)));
        }
        if url.query().is_some() || url.fragment().is_some() {
            return Err(AlertingError::Config("endpoint must not carry a query or fragment".into()));
        }
        let digits = self.phone.strip_prefix('+').unwrap_or("");
        if !(8..=15).contains(&digits.len()) || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(AlertingError::Config(format!("phone {:?} is not E.164", self.phone)));
        }
        if self.api_key.is_empty() {
            return Err(AlertingError::Config("api_key must not be empty".into()));
        }
        Ok(())
    }
}

pub fn url_encode(text: &str) -> String {
    utf8_percent_encode(text, QUERY_VALUE).to_string()
}

/// `<endpoint>?phone=<phone>&text=<encoded text>&apikey=<encoded key>`
pub fn build_gateway_request(config: &GatewayConfig, text: &str) -> Result<String, AlertingError> {
    if text.is_empty() {
        return Err(AlertingError::EmptyText);
    }
    config.validate()?;
    Ok(format!(
        "{}?phone={}&text={}&apikey={}",
        config.endpoint,
        config.phone,
        url_encode(text),
        url_encode(&config.api_key)
    ))
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gateway failure: {0}")]
pub struct GatewayError(pub String);

pub trait GatewayClient {
    fn send(&mut self, request: &str) -> Result<(), GatewayError>;
}

/// Records requests instead of sending them; can be told to fail.
#[derive(Debug, Default, Clone)]
pub struct MockGateway {
    pub sent: Vec<String>,
    pub fail_with: Option<String>,
}

impl MockGateway {
    pub fn failing(reason: impl Into<String>) -> Self {
        Self {
            sent: Vec::new(),
            fail_with: Some(reason.into()),
        }
    }
}

impl GatewayClient for MockGateway {
    fn send(&mut self, request: &str) -> Result<(), GatewayError> {
        match &self.fail_with {
            Some(reason) => Err(GatewayError(reason.clone())),
            None => {
                self.sent.push(request.to_owned());
                Ok(())
            }
        }
    }
}

/// A rendered message bound for a farmer.
#[derive(Debug, Clone, PartialEq)]
pub struct Notification {
    pub dedup_key: String,
    pub template_id: String,
    pub text: String,
}

pub fn template_for_alert(kind: AlertKind) -> &'static str {
    match kind {
        AlertKind::MoistureLow => "irrigate_low_moisture",
        AlertKind::Heat => "heat_alert",
        AlertKind::HumidityLow => "humidity_low",
        AlertKind::HumidityHigh => "humidity_high",
    }
}

impl Notification {
    fn new(
        catalog: &Catalog,
        field_id: &str,
        template_id: &str,
        locale: Locale,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, AlertingError> {
        Ok(Self {
            dedup_key: format!("{field_id}:{template_id}"),
            template_id: template_id.to_owned(),
            text: catalog.render(template_id, locale, params)?,
        })
    }

    /// `None` when the advice carries no action.
    pub fn from_advice(
        catalog: &Catalog,
        advice: &IrrigationAdvice,
        locale: Locale,
    ) -> Result<Option<Self>, AlertingError> {
        if advice.action != Action::Irrigate {
            return Ok(None);
        }
        let params = BTreeMap::from([("moisture_pct".to_owned(), advice.observed_moisture_pct)]);
        Self::new(catalog, &advice.field_id, "irrigate_low_moisture", locale, &params).map(Some)
    }

    pub fn from_alert(
        catalog: &Catalog,
        field_id: &str,
        alert: &Alert,
        locale: Locale,
    ) -> Result<Self, AlertingError> {
        let template_id = template_for_alert(alert.kind);
        let params = match alert.kind {
            AlertKind::MoistureLow => BTreeMap::from([("moisture_pct".to_owned(), alert.observed)]),
            AlertKind::Heat => BTreeMap::from([
                ("temp_c".to_owned(), alert.observed),
                ("threshold_c".to_owned(), alert.threshold),
            ]),
            AlertKind::HumidityLow | AlertKind::HumidityHigh => BTreeMap::from([
                ("humidity_rh".to_owned(), alert.observed),
                ("threshold_rh".to_owned(), alert.threshold),
            ]),
        };
        Self::new(catalog, field_id, template_id, locale, &params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DispatchStatus {
    Sent,
    SuppressedDuplicate,
    Failed,
}

impl DispatchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DispatchStatus::Sent => "SENT",
            DispatchStatus::SuppressedDuplicate => "SUPPRESSED_DUPLICATE",
            DispatchStatus::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub timestamp: u64,
    pub channel: GatewayKind,
    pub text: String,
    pub status: DispatchStatus,
    pub dedup_key: String,
    pub request: Option<String>,
    pub failure: Option<String>,
}

/// Serializes sends for one field and suppresses repeats of the same key
/// inside the window. Only successful sends open a window.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    window_s: u64,
    last_sent: HashMap<String, u64>,
    records: Vec<DispatchRecord>,
}

impl Dispatcher {
    pub fn new(window_s: u64) -> Self {
        Self {
            window_s,
            last_sent: HashMap::new(),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[DispatchRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DispatchRecord> {
        self.records
    }

    pub fn dispatch(
        &mut self,
        notification: &Notification,
        gateway: &GatewayConfig,
        client: &mut dyn GatewayClient,
        now: u64,
    ) -> &DispatchRecord {
        let suppressed = self
            .last_sent
            .get(&notification.dedup_key)
            .is_some_and(|&t| now.saturating_sub(t) < self.window_s);
        let mut record = DispatchRecord {
            timestamp: now,
            channel: gateway.kind,
            text: notification.text.clone(),
            status: DispatchStatus::SuppressedDuplicate,
            dedup_key: notification.dedup_key.clone(),
            request: None,
            failure: None,
        };
        if !suppressed {
            match build_gateway_request(gateway, &notification.text) {
                Err(e) => {
                    record.status = DispatchStatus::Failed;
                    record.failure = Some(e.to_string());
                }
                Ok(request) => {
                    match client.send(&request) {
                        Ok(()) => {
                            record.status = DispatchStatus::Sent;
                            self.last_sent.insert(notification.dedup_key.clone(), now);
                        }
                        Err(e) => {
                            record.status = DispatchStatus::Failed;
                            record.failure = Some(e.to_string());
                        }
                    }
                    record.request = Some(request);
                }
            }
        }
        self.records.push(record);
        self.records.last().expect("just pushed")
    }
}

pub fn write_dispatch_csv<W: Write>(records: &[DispatchRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "channel", "status", "dedup_key", "text", "failure"])?;
    for r in records {
        w.write_record([
            r.timestamp.to_string().as_str(),
            r.channel.as_str(),
            r.status.as_str(),
            &r.dedup_key,
            &r.text,
            r.failure.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}
