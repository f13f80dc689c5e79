//! Record/replay of backend traffic, one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{chat_request_body, embedding_request_body, Gateway, GatewayError, GenParams, Msg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteRecord {
    #[serde(default)]
    pub request: Value,
    pub response: Value,
}

/// Reads a cassette file. Blank lines are ignored.
pub fn read_cassette(path: &Path) -> Result<Vec<CassetteRecord>, GatewayError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| GatewayError::Malformed(format!("{}:{}: {e}", path.display(), n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

pub struct CassetteWriter {
    out: BufWriter<File>,
}

impl CassetteWriter {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, record: &CassetteRecord) -> Result<(), GatewayError> {
        let line = serde_json::to_string(record).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Wraps any backend and appends every successful exchange to a cassette.
pub struct Recording<G> {
    inner: G,
    model: String,
    writer: CassetteWriter,
}

impl<G: Gateway> Recording<G> {
    pub fn new(inner: G, model: impl Into<String>, writer: CassetteWriter) -> Self {
        Self {
            inner,
            model: model.into(),
            writer,
        }
    }

    pub fn into_inner(self) -> G {
        self.inner
    }
}

impl<G: Gateway> Gateway for Recording<G> {
    fn complete(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError> {
        let response = self.inner.complete(history, params)?;
        self.writer.append(&CassetteRecord {
            request: chat_request_body(&self.model, history, params),
            response: Value::String(response.clone()),
        })?;
        Ok(response)
    }

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let values = self.inner.embed_raw(text)?;
        self.writer.append(&CassetteRecord {
            request: embedding_request_body(&self.model, text),
            response: Value::from(values.clone()),
        })?;
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cassette");
        let history = vec![Msg::system("persona"), Msg::user("hi")];
        {
            let inner = ScriptedGateway::new(["one", "two"]);
            let mut rec = Recording::new(inner, "m", CassetteWriter::create(&path).unwrap());
            assert_eq!(rec.chat(&history, &GenParams::default()).unwrap(), "one");
            rec.embed("thermostat").unwrap();
            assert_eq!(rec.chat(&history, &GenParams::default()).unwrap(), "two");
        }
        let records = read_cassette(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].request["messages"][1]["content"], "hi");
        assert_eq!(records[1].request["input"], "thermostat");

        let mut original = ScriptedGateway::new(Vec::<String>::new());
        let mut replay = ScriptedGateway::from_cassette(&records);
        assert_eq!(replay.chat(&history, &GenParams::default()).unwrap(), "one");
        assert_eq!(replay.chat(&history, &GenParams::default()).unwrap(), "two");
        assert_eq!(
            replay.embed("thermostat").unwrap(),
            original.embed("thermostat").unwrap()
        );
    }

    #[test]
    fn bad_line_names_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cassette");
        std::fs::write(&path, "{\"response\": \"ok\"}\n\nnot json\n").unwrap();
        let err = read_cassette(&path).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }
}
