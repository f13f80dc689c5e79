use std::time::Duration;

use serde_json::{json, Value};

use super::{Gateway, GatewayError, GenParams, Msg};

/// Request body for `POST /v1/chat/completions`.
pub fn chat_request_body(model: &str, history: &[Msg], params: &GenParams) -> Value {
    let mut body = json!({
        "model": model,
        "messages": history,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    });
    if let Some(seed) = params.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Request body for `POST /v1/embeddings`.
pub fn embedding_request_body(model: &str, text: &str) -> Value {
    json!({ "model": model, "input": text })
}

/// Client for an OpenAI-compatible server such as llama.cpp's `llama-server`.
pub struct HttpGateway {
    base_url: String,
    model: String,
    agent: ureq::Agent,
}

impl HttpGateway {
    pub fn new(base_url: &str, model: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            agent,
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}{}", self.base_url, path);
        let payload = body.to_string();
        let mut resp = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json")
            .send(payload.as_str())
            .map_err(|e| match e {
                ureq::Error::StatusCode(status) => GatewayError::Http {
                    status,
                    body: String::new(),
                },
                other => GatewayError::Unreachable(format!("{url}: {other}")),
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Malformed(format!("unreadable body from {url}: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Http { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(format!("{url}: {e}")))
    }
}

impl Gateway for HttpGateway {
    fn complete(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError> {
        let body = self.post("/v1/chat/completions", &chat_request_body(&self.model, history, params))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))
    }

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let body = self.post("/v1/embeddings", &embedding_request_body(&self.model, text))?;
        let values = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Malformed("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| GatewayError::Malformed("non-numeric embedding value".into()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_field_names() {
        let history = vec![Msg::system("s"), Msg::user("u")];
        let mut params = GenParams::with_temperature(0.2);
        let body = chat_request_body("m", &history, &params);
        assert_eq!(body["messages"][0], json!({"role": "system", "content": "s"}));
        assert_eq!(body["messages"][1], json!({"role": "user", "content": "u"}));
        assert!(body.get("seed").is_none());
        params.seed = Some(7);
        assert_eq!(chat_request_body("m", &history, &params)["seed"], 7);
    }

    #[test]
    fn unreachable_server() {
        // port 9 (discard) is essentially never bound on test hosts
        let mut gw = HttpGateway::new("http://127.0.0.1:9", "m");
        let err = gw.chat(&[Msg::user("hi")], &GenParams::default()).unwrap_err();
        assert!(err.is_backend_failure(), "{err:?}");
    }
}
