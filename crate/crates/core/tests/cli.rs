mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{action, coding_reply, directed, mediated_turn, write_cassette, StubServer};
use serde_json::json;

fn synergos(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synergos"))
        .current_dir(dir)
        .env_remove("SYNERGOS_LLM_URL")
        .env("SYNERGOS_LOG", "off")
        .args(args)
        .output()
        .unwrap()
}

fn trio_script() -> Vec<String> {
    vec![
        directed("Hail, Frenchman!", "Bo"),
        directed("Bonjour, Jerome.", "Jerome"),
        directed("Tom, what do you think?", "Tom"),
        directed("Crypto will fix it.", "Bo"),
        directed("Non.", "Tom"),
        directed("Yes.", "Jerome"),
    ]
}

#[test]
fn trio_from_cassette() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("trio.toml"),
        "scenario = \"trio-chat\"\nmax_rounds = 2\n",
    )
    .unwrap();
    write_cassette(&dir.path().join("trio.cassette"), &trio_script());
    let out = synergos(
        dir.path(),
        &["run", "--config", "trio.toml", "--script", "trio.cassette"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 6);
    for line in transcript.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let log = std::fs::read_to_string(dir.path().join("transcript.log")).unwrap();
    assert!(log.starts_with("Jerome -> Bo :: Hail, Frenchman!\nBo -> Jerome :: Bonjour, Jerome.\n"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("turns run: 6"), "{stdout}");
}

#[test]
fn missing_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = synergos(dir.path(), &["run", "--config", "absent.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage: synergos run --config"));

    let out = synergos(dir.path(), &["run"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "scenario = \"apartment\"\n[backend]\nurl = \"http://127.0.0.1:9\"\nscript = \"x.cassette\"\n",
        "scenario = \"apartment\"\ntemprature = 3\n",
        "scenario = \"apartment\"\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        let name = format!("c{i}.toml");
        std::fs::write(dir.path().join(&name), text).unwrap();
        let out = synergos(dir.path(), &["run", "--config", &name]);
        assert_eq!(out.status.code(), Some(1), "{text}");
    }
}

#[test]
fn unreachable_backend_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    std::fs::write(
        dir.path().join("live.toml"),
        format!("scenario = \"apartment\"\nmax_rounds = 1\n[backend]\nurl = \"http://127.0.0.1:{port}\"\n"),
    )
    .unwrap();
    let out = synergos(dir.path(), &["run", "--config", "live.toml"]);
    assert_eq!(out.status.code(), Some(2));
    // the transcript is still complete, valid JSONL
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 2);
}

#[test]
fn live_run_records_and_replays() {
    let server = StubServer::start(trio_script());
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("trio.toml"),
        "scenario = \"trio-chat\"\nmax_rounds = 2\nseed = 3\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_synergos"))
        .current_dir(dir.path())
        .env("SYNERGOS_LLM_URL", &server.url)
        .args([
            "run",
            "--config",
            "trio.toml",
            "--record",
            "rec.cassette",
            "--out",
            "live.jsonl",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(server.requests().iter().all(|r| r.body["seed"] == 3));

    let out = synergos(
        dir.path(),
        &[
            "run",
            "--config",
            "trio.toml",
            "--script",
            "rec.cassette",
            "--out",
            "replay.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("live.jsonl")).unwrap(),
        std::fs::read(dir.path().join("replay.jsonl")).unwrap()
    );
}

#[test]
fn http_error_exits_two() {
    let server = StubServer::start_with_status(vec![], 503);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        format!(
            "scenario = \"trio-chat\"\nmax_rounds = 1\n[backend]\nurl = \"{}\"\n",
            server.url
        ),
    )
    .unwrap();
    assert_eq!(
        synergos(dir.path(), &["run", "--config", "c.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn coding_out_is_code_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("code.toml"),
        "scenario = \"coding\"\nmax_rounds = 2\n[backend]\nscript = \"code.cassette\"\n[coding]\nproblem = \"Print hello\"\n",
    )
    .unwrap();
    write_cassette(
        &dir.path().join("code.cassette"),
        &[
            "1. print it".to_string(),
            coding_reply(
                Some(json!({"kind": "replace_range", "start": 0, "end": 0, "lines": ["print('hello')"]})),
                "done",
                true,
            ),
            coding_reply(None, "agreed", true),
        ],
    );
    let out = synergos(dir.path(), &["run", "--config", "code.toml", "--out", "hello.py"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("hello.py")).unwrap(),
        "print('hello')\n"
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("transcript.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn apartment_max_rounds_flag() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("a.toml"),
        "scenario = \"apartment\"\n[backend]\nscript = \"a.cassette\"\n",
    )
    .unwrap();
    let mut script = mediated_turn("cold", &action("set_thermostat", json!([70])), "Warmer now.", 5);
    script.extend(mediated_turn(
        "temp?",
        &action("read_thermostat", json!([])),
        "It is 70.",
        2,
    ));
    write_cassette(&dir.path().join("a.cassette"), &script);
    let out = synergos(dir.path(), &["run", "--config", "a.toml", "--max-rounds", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("actions ok: 2"), "{stdout}");
}

#[test]
fn bundled_scenarios_replay() {
    let source = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&source).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
    }
    for config in ["trio.toml", "coding.toml"] {
        let out = synergos(dir.path(), &["run", "--config", config]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{config}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let code = std::fs::read_to_string(dir.path().join("out/remove_nth.py")).unwrap();
    assert!(code.starts_with("def remove_nth_from_end(head, n):\n") && code.ends_with("return head\n"));
    // the live sample has no URL and the environment variable is cleared
    assert_eq!(
        synergos(dir.path(), &["run", "--config", "apartment.toml"])
            .status
            .code(),
        Some(1)
    );
}
