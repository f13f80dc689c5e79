use std::collections::BTreeMap;

use super::{CassetteRecord, Gateway, GatewayError, GenParams, HashEmbedder, Msg};

/// Canned chat responses consumed in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    responses: Vec<String>,
    cursor: usize,
}

impl Script {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: responses.into_iter().map(Into::into).collect(),
            cursor: 0,
        }
    }

    pub fn next_response(&mut self) -> Result<String, GatewayError> {
        let response = self
            .responses
            .get(self.cursor)
            .cloned()
            .ok_or(GatewayError::ScriptExhausted { consumed: self.cursor })?;
        self.cursor += 1;
        Ok(response)
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.cursor
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// Deterministic backend: chat replies come from a [`Script`], embeddings
/// from a [`HashEmbedder`] unless a recorded vector exists for the text.
#[derive(Debug, Clone)]
pub struct ScriptedGateway {
    script: Script,
    embedder: HashEmbedder,
    recorded_embeddings: BTreeMap<String, Vec<f64>>,
    requests: Vec<Vec<Msg>>,
}

impl ScriptedGateway {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_script(Script::new(responses))
    }

    pub fn from_script(script: Script) -> Self {
        Self {
            script,
            embedder: HashEmbedder::default(),
            recorded_embeddings: BTreeMap::new(),
            requests: Vec::new(),
        }
    }

    /// Replays a cassette: records whose response is a string become the
    /// chat script in file order; records carrying an embedding are served
    /// back for the same input text.
    pub fn from_cassette(records: &[CassetteRecord]) -> Self {
        let mut responses = Vec::new();
        let mut recorded = BTreeMap::new();
        for record in records {
            if let Some(text) = record.response.as_str() {
                responses.push(text.to_string());
            } else if let (Some(input), Some(values)) = (
                record.request.get("input").and_then(|v| v.as_str()),
                record.response.as_array(),
            ) {
                let values: Option<Vec<f64>> = values.iter().map(|v| v.as_f64()).collect();
                if let Some(values) = values {
                    recorded.insert(input.to_string(), values);
                }
            }
        }
        let mut gw = Self::new(responses);
        gw.recorded_embeddings = recorded;
        gw
    }

    pub fn with_embedder(mut self, embedder: HashEmbedder) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    /// Every history passed to `chat`, in call order.
    pub fn requests(&self) -> &[Vec<Msg>] {
        &self.requests
    }
}

impl Gateway for ScriptedGateway {
    fn complete(&mut self, history: &[Msg], _params: &GenParams) -> Result<String, GatewayError> {
        self.requests.push(history.to_vec());
        self.script.next_response()
    }

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError> {
        match self.recorded_embeddings.get(text) {
            Some(values) => Ok(values.clone()),
            None => Ok(self.embedder.raw(text)),
        }
    }
}
