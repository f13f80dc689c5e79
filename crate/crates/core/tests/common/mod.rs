//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

/// One request seen by the stub server.
#[derive(Debug, Clone)]
pub struct Seen {
    pub path: String,
    pub body: Value,
}

/// Minimal OpenAI-compatible server on 127.0.0.1. Chat requests are
/// answered from `replies` in order; embedding requests get a fixed vector.
pub struct StubServer {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
}

impl StubServer {
    pub fn start(replies: Vec<String>) -> Self {
        Self::start_with_status(replies, 200)
    }

    pub fn start_with_status(replies: Vec<String>, status: u16) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        thread::spawn(move || {
            let mut replies = replies.into_iter();
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                    continue;
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or_default().to_string();
                let mut length = 0usize;
                loop {
                    let mut header = String::new();
                    reader.read_line(&mut header).unwrap();
                    let header = header.trim_end();
                    if header.is_empty() {
                        break;
                    }
                    if let Some((name, value)) = header.split_once(':') {
                        if name.eq_ignore_ascii_case("content-length") {
                            length = value.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                log.lock().unwrap().push(Seen {
                    path: path.clone(),
                    body,
                });
                let payload = if status != 200 {
                    json!({"error": "stub failure"})
                } else if path.ends_with("/embeddings") {
                    json!({"data": [{"embedding": [0.6, 0.8, 0.0]}]})
                } else {
                    let content = replies.next().unwrap_or_default();
                    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})
                }
                .to_string();
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self { url, seen }
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

pub fn directed(message: &str, to: &str) -> String {
    json!({"message": message, "to": to}).to_string()
}

pub fn action(name: &str, args: Value) -> String {
    json!({"action": name, "args": args}).to_string()
}

/// The six chat replies one mediated turn consumes when the action is not
/// a speak: memory query, question, moderator answer, action, observation,
/// importance rating.
pub fn mediated_turn(question: &str, action_reply: &str, observation: &str, rating: u8) -> Vec<String> {
    vec![
        format!("What do I know about {question}?"),
        question.to_string(),
        "The moderator notes the request.".to_string(),
        action_reply.to_string(),
        observation.to_string(),
        rating.to_string(),
    ]
}

/// Seven replies: as [`mediated_turn`] with the recipient's reply after the
/// action.
pub fn speak_turn(to: &str, text: &str, reply: &str) -> Vec<String> {
    vec![
        "What does my roommate think?".to_string(),
        format!("I want to talk to {to}."),
        "You can speak to your roommate.".to_string(),
        action("speak_to_roommate", json!([to, text])),
        reply.to_string(),
        format!("I talked to {to}."),
        "4".to_string(),
    ]
}

pub fn coding_reply(edit: Option<Value>, chat: &str, done: bool) -> String {
    json!({"edit": edit, "chat": chat, "done": done}).to_string()
}

/// Writes `responses` as a replayable cassette (JSONL).
pub fn write_cassette(path: &std::path::Path, responses: &[String]) {
    let mut out = String::new();
    for r in responses {
        out.push_str(&json!({"request": {}, "response": r}).to_string());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
