//! Chat-completion and embedding backends.
//!
//! Every model call in the crate goes through the [`Gateway`] trait. Two
//! backends exist: [`HttpGateway`] speaks the OpenAI-compatible wire format
//! served by llama.cpp and similar servers, and [`ScriptedGateway`] replays
//! canned responses so whole simulations run deterministically offline.

mod cassette;
mod embed;
mod http;
mod scripted;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use cassette::{read_cassette, CassetteRecord, CassetteWriter, Recording};
pub use embed::{HashEmbedder, DEFAULT_DIMENSION};
pub use http::{chat_request_body, embedding_request_body, HttpGateway};
pub use scripted::{Script, ScriptedGateway};

/// Default number of corrective re-prompts for structured output.
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("script exhausted after {consumed} responses")]
    ScriptExhausted { consumed: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no parseable structured reply after {attempts} attempts: {reason}")]
    ExhaustedRetries {
        attempts: u32,
        reason: String,
        last_reply: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// True when the failure lies with the serving backend rather than with
    /// the content of a reply.
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, GatewayError::Unreachable(_) | GatewayError::Http { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One history entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Msg {
    pub role: Role,
    pub content: String,
}

impl Msg {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// Sampling parameters for one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 512,
            seed: None,
        }
    }
}

impl GenParams {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::Precondition(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A unit-length text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Scales `values` to unit L2 norm. Empty and all-zero vectors are
    /// rejected since they have no direction.
    pub fn normalized(values: Vec<f64>) -> Result<Self, GatewayError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(GatewayError::Malformed("embedding has no direction".into()));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Wraps stored values without renormalizing; used when loading dumps.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Embedding) -> Option<f64> {
        if self.dimension() != other.dimension() {
            return None;
        }
        Some(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }
}

/// Rejects histories the chat endpoint should never see: empty ones, and
/// ones with a system message anywhere but the first slot.
pub fn check_history(history: &[Msg]) -> Result<(), GatewayError> {
    if history.is_empty() {
        return Err(GatewayError::Precondition("history is empty".into()));
    }
    if let Some(pos) = history.iter().skip(1).position(|m| m.role == Role::System) {
        return Err(GatewayError::Precondition(format!(
            "system message at position {}; only the first message may be a system message",
            pos + 1
        )));
    }
    Ok(())
}

/// A chat model plus text embedder.
///
/// Backends implement [`complete`](Gateway::complete) and
/// [`embed_raw`](Gateway::embed_raw); callers use [`chat`](Gateway::chat)
/// and [`embed`](Gateway::embed), which add the shared contract checks.
/// Calls are issued strictly one at a time.
pub trait Gateway {
    fn complete(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError>;

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError>;

    fn chat(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError> {
        check_history(history)?;
        params.validate()?;
        self.complete(history, params)
    }

    fn embed(&mut self, text: &str) -> Result<Embedding, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Precondition("cannot embed empty text".into()));
        }
        Embedding::normalized(self.embed_raw(text)?)
    }
}

impl<G: Gateway + ?Sized> Gateway for &mut G {
    fn complete(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError> {
        (**self).complete(history, params)
    }

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError> {
        (**self).embed_raw(text)
    }
}

impl<G: Gateway + ?Sized> Gateway for Box<G> {
    fn complete(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError> {
        (**self).complete(history, params)
    }

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError> {
        (**self).embed_raw(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Integer,
    Number,
    Bool,
    Array,
    Object,
    Any,
}

impl FieldKind {
    fn accepts(self, value: &Value) -> bool {
        match self {
            FieldKind::Text => value.is_string(),
            FieldKind::Integer => value.is_i64() || value.is_u64(),
            FieldKind::Number => value.is_number(),
            FieldKind::Bool => value.is_boolean(),
            FieldKind::Array => value.is_array(),
            FieldKind::Object => value.is_object(),
            FieldKind::Any => true,
        }
    }

    fn label(self) -> &'static str {
        match self {
            FieldKind::Text => "string",
            FieldKind::Integer => "integer",
            FieldKind::Number => "number",
            FieldKind::Bool => "boolean",
            FieldKind::Array => "array",
            FieldKind::Object => "object",
            FieldKind::Any => "any value",
        }
    }
}

/// One field of a structured reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Optional fields may be absent or null; they come back as `null`.
    pub required: bool,
}

impl FieldSpec {
    pub fn required(name: &str, kind: FieldKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            required: true,
        }
    }

    pub fn optional(name: &str, kind: FieldKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            required: false,
        }
    }
}

/// A structured reply: the schema's fields plus the raw text they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Structured {
    pub fields: Map<String, Value>,
    pub raw: String,
}

/// Human-readable description of the JSON object a schema expects.
pub fn describe_schema(schema: &[FieldSpec]) -> String {
    let fields: Vec<String> = schema
        .iter()
        .map(|f| {
            let opt = if f.required { "" } else { ", optional" };
            format!("\"{}\" ({}{})", f.name, f.kind.label(), opt)
        })
        .collect();
    format!("a single JSON object with the fields {}", fields.join(", "))
}

fn check_schema(schema: &[FieldSpec]) -> Result<(), GatewayError> {
    for (i, field) in schema.iter().enumerate() {
        if field.name.is_empty() {
            return Err(GatewayError::Precondition("schema field with empty name".into()));
        }
        if schema[..i].iter().any(|f| f.name == field.name) {
            return Err(GatewayError::Precondition(format!(
                "duplicate schema field `{}`",
                field.name
            )));
        }
    }
    Ok(())
}

fn fit_schema(object: &Map<String, Value>, schema: &[FieldSpec]) -> Result<Map<String, Value>, String> {
    let mut out = Map::new();
    for field in schema {
        match object.get(&field.name) {
            None | Some(Value::Null) if !field.required => {
                out.insert(field.name.clone(), Value::Null);
            }
            None => return Err(format!("missing field \"{}\"", field.name)),
            Some(v) if field.kind.accepts(v) => {
                out.insert(field.name.clone(), v.clone());
            }
            Some(v) => {
                return Err(format!(
                    "field \"{}\" should be {} but was {}",
                    field.name,
                    field.kind.label(),
                    v
                ))
            }
        }
    }
    Ok(out)
}

/// Extracts the first embedded JSON object matching `schema` from `text`.
pub fn parse_structured(text: &str, schema: &[FieldSpec]) -> Result<Map<String, Value>, String> {
    let objects = crate::json::objects_in(text);
    let mut first_problem = None;
    for object in &objects {
        match fit_schema(object, schema) {
            Ok(fields) => return Ok(fields),
            Err(e) => {
                first_problem.get_or_insert(e);
            }
        }
    }
    Err(first_problem.unwrap_or_else(|| "no JSON object found".to_string()))
}

/// Asks for a JSON reply matching `schema`.
///
/// Unparseable replies are answered with a corrective user message and the
/// model is asked again, up to `retries` extra times. The caller's history
/// is never modified; corrections live in a private copy.
pub fn chat_structured(
    gateway: &mut dyn Gateway,
    history: &[Msg],
    schema: &[FieldSpec],
    params: &GenParams,
    retries: u32,
) -> Result<Structured, GatewayError> {
    check_schema(schema)?;
    let mut convo = history.to_vec();
    let mut reason = String::new();
    let mut last_reply = String::new();
    for attempt in 0..=retries {
        let reply = gateway.chat(&convo, params)?;
        match parse_structured(&reply, schema) {
            Ok(fields) => return Ok(Structured { fields, raw: reply }),
            Err(problem) => {
                log::debug!("structured reply rejected on attempt {}: {problem}", attempt + 1);
                convo.push(Msg::assistant(reply.clone()));
                convo.push(Msg::user(format!(
                    "Your reply could not be used: {problem}. Respond with only {}.",
                    describe_schema(schema)
                )));
                reason = problem;
                last_reply = reply;
            }
        }
    }
    Err(GatewayError::ExhaustedRetries {
        attempts: retries + 1,
        reason,
        last_reply,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directed() -> Vec<FieldSpec> {
        vec![
            FieldSpec::required("message", FieldKind::Text),
            FieldSpec::required("to", FieldKind::Text),
        ]
    }

    #[test]
    fn history_rules() {
        assert!(check_history(&[]).is_err());
        assert!(check_history(&[Msg::system("s"), Msg::user("u")]).is_ok());
        assert!(check_history(&[Msg::user("u")]).is_ok());
        assert!(check_history(&[Msg::user("u"), Msg::system("s")]).is_err());
        assert!(check_history(&[Msg::system("a"), Msg::system("b")]).is_err());
    }

    #[test]
    fn chat_rejects_late_system_message() {
        let mut gw = ScriptedGateway::new(["Madison."]);
        let err = gw
            .chat(&[Msg::user("q"), Msg::system("s")], &GenParams::default())
            .unwrap_err();
        assert!(matches!(err, GatewayError::Precondition(_)));
        // nothing consumed
        assert_eq!(gw.chat(&[Msg::user("q")], &GenParams::default()).unwrap(), "Madison.");
    }

    #[test]
    fn negative_temperature_rejected() {
        let mut gw = ScriptedGateway::new(["x"]);
        let err = gw
            .chat(&[Msg::user("q")], &GenParams::with_temperature(-0.1))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Precondition(_)));
    }

    #[test]
    fn structured_parses_directed_message() {
        let mut gw = ScriptedGateway::new([r#"{"message":"Bonjour","to":"Jerome"}"#]);
        let out = chat_structured(&mut gw, &[Msg::user("go")], &directed(), &GenParams::default(), 2).unwrap();
        assert_eq!(out.fields["message"], "Bonjour");
        assert_eq!(out.fields["to"], "Jerome");
        assert_eq!(out.fields.len(), 2);
    }

    #[test]
    fn structured_retries_then_succeeds() {
        let mut gw = ScriptedGateway::new(["not json", r#"{"message":"hi","to":"Bo"}"#]);
        let history = vec![Msg::system("sys"), Msg::user("go")];
        let out = chat_structured(&mut gw, &history, &directed(), &GenParams::default(), 1).unwrap();
        assert_eq!(out.fields["to"], "Bo");
        assert_eq!(history.len(), 2);
        // second request carried the failed reply and a correction
        let second = &gw.requests()[1];
        assert_eq!(second.len(), 4);
        assert_eq!(second[2], Msg::assistant("not json"));
        assert!(second[3].content.contains("\"message\""));
    }

    #[test]
    fn structured_exhausts() {
        let mut gw = ScriptedGateway::new(["x", "y"]);
        let err = chat_structured(&mut gw, &[Msg::user("go")], &directed(), &GenParams::default(), 1).unwrap_err();
        match err {
            GatewayError::ExhaustedRetries {
                attempts, last_reply, ..
            } => {
                assert_eq!(attempts, 2);
                assert_eq!(last_reply, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structured_backend_error_passes_through() {
        let mut gw = ScriptedGateway::new(Vec::<String>::new());
        let err = chat_structured(&mut gw, &[Msg::user("go")], &directed(), &GenParams::default(), 2).unwrap_err();
        assert!(matches!(err, GatewayError::ScriptExhausted { .. }));
    }

    #[test]
    fn schema_names_must_be_distinct_and_nonempty() {
        let mut gw = ScriptedGateway::new(["{}"]);
        let dup = vec![
            FieldSpec::required("a", FieldKind::Text),
            FieldSpec::required("a", FieldKind::Text),
        ];
        assert!(matches!(
            chat_structured(&mut gw, &[Msg::user("q")], &dup, &GenParams::default(), 0),
            Err(GatewayError::Precondition(_))
        ));
        let empty = vec![FieldSpec::required("", FieldKind::Text)];
        assert!(matches!(
            chat_structured(&mut gw, &[Msg::user("q")], &empty, &GenParams::default(), 0),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn optional_fields_become_null_and_extras_drop() {
        let schema = vec![
            FieldSpec::optional("edit", FieldKind::Object),
            FieldSpec::required("done", FieldKind::Bool),
        ];
        let fields = parse_structured(r#"{"done": true, "extra": 1}"#, &schema).unwrap();
        assert_eq!(fields.len(), 2);
        assert!(fields["edit"].is_null());
        assert_eq!(fields["done"], true);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let schema = vec![FieldSpec::required("done", FieldKind::Bool)];
        let err = parse_structured(r#"{"done": "yes"}"#, &schema).unwrap_err();
        assert!(err.contains("boolean"));
    }

    #[test]
    fn normalization() {
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert!((e.values()[0] - 0.6).abs() < 1e-12);
        assert!(Embedding::normalized(vec![0.0, 0.0]).is_err());
        assert!(Embedding::normalized(vec![]).is_err());
        let other = Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(e.dot(&other).is_none());
    }
}
