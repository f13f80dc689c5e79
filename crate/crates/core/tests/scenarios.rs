mod common;

use common::{action, coding_reply, directed, mediated_turn, speak_turn};
use serde_json::json;
use synergos::apartment::{build_apartment, build_cake_variant, ledger, thermostat, ApartmentConfig};
use synergos::coding::{run_coding, CodeBuffer, CodingConfig, Termination, CODER_PERSONA};
use synergos::engine::EngineConfig;
use synergos::gateway::{read_cassette, CassetteWriter, GenParams, Recording};
use synergos::trio::{cast_settings, run_trio_chat, DEFAULT_CAST};
use synergos::{Roster, ScriptedGateway, TurnOutcome, Validation};

fn apartment_script() -> Vec<String> {
    let mut script = Vec::new();
    script.extend(mediated_turn(
        "It is chilly.",
        &action("set_thermostat", json!([68])),
        "The thermostat is at 68.",
        6,
    ));
    script.extend(mediated_turn(
        "How warm is it?",
        &action("read_thermostat", json!([])),
        "It is 68 degrees.",
        3,
    ));
    script.extend(mediated_turn(
        "Make it hot.",
        &action("set_thermostat", json!([200])),
        "The thermostat refused.",
        4,
    ));
    script.extend(mediated_turn(
        "We bought groceries.",
        &action("add_expense", json!(["groceries", 54.5])),
        "Groceries cost 54.50.",
        7,
    ));
    script.extend(speak_turn(
        "Roommate 2",
        "Can you pay half the groceries?",
        "Sure, I will pay half.",
    ));
    script.extend(mediated_turn(
        "What do we owe?",
        &action("list_expenses", json!([])),
        "We owe 54.50 in total.",
        5,
    ));
    script
}

fn run_apartment(script: Vec<String>, rounds: usize) -> (Vec<TurnOutcome>, synergos::Simulation, ScriptedGateway) {
    let mut gw = ScriptedGateway::new(script);
    let mut sim = build_apartment(&ApartmentConfig::default()).unwrap();
    let config = EngineConfig {
        max_rounds: rounds,
        ..Default::default()
    };
    let outcomes = sim.run_loop(&mut gw, &config, |_| {});
    (outcomes, sim, gw)
}

#[test]
fn apartment_three_rounds() {
    let (outcomes, sim, gw) = run_apartment(apartment_script(), 3);
    assert_eq!(outcomes.len(), 6);
    assert_eq!(outcomes.iter().map(|o| o.turn).collect::<Vec<_>>(), [0, 1, 2, 3, 4, 5]);
    assert_eq!(
        outcomes.iter().map(|o| o.agent.as_str()).collect::<Vec<_>>(),
        [
            "Roommate 1",
            "Roommate 2",
            "Roommate 1",
            "Roommate 2",
            "Roommate 1",
            "Roommate 2"
        ]
    );
    assert_eq!(gw.script().remaining(), 0);

    assert!(outcomes[0].success);
    assert!(outcomes[1].effect.contains("68"));
    assert!(matches!(outcomes[2].validation, Validation::Error(_)));
    assert!(!outcomes[2].success);
    assert!(outcomes[3].success);
    assert!(outcomes[4].success && outcomes[4].effect.contains("Sure, I will pay half."));
    assert!(outcomes[5].effect.contains("54.50"));

    assert_eq!(thermostat(&sim.world), Some(68.0));
    assert_eq!(ledger(&sim.world), [("groceries".to_string(), 5450)]);
    assert_eq!(sim.memory.len(), 6);

    // the second round's moderator prompts show the new setting
    let moderator_prompts: Vec<&str> = gw
        .requests()
        .iter()
        .filter_map(|h| h.last().map(|m| m.content.as_str()))
        .filter(|c| c.contains("Current state of the environment"))
        .collect();
    assert_eq!(moderator_prompts.len(), 6);
    assert!(moderator_prompts[0].contains("temperature = 72"));
    for prompt in &moderator_prompts[2..] {
        assert!(prompt.contains("temperature = 68"), "{prompt}");
    }
}

#[test]
fn invalid_action_leaves_world_untouched() {
    let mut script = mediated_turn("x", &action("set_thermostat", json!([68])), "ok", 5);
    let bad = [
        action("set_thermostat", json!([20])),
        action("set_thermostat", json!(["warm"])),
        action("open_window", json!([])),
        action("add_expense", json!(["rent", -4])),
        "{\"action\": \"read_thermostat\"} then {\"action\": \"set_thermostat\", \"args\": [70]}".to_string(),
    ];
    for reply in &bad {
        script.extend(mediated_turn("y", reply, "nothing changed", 2));
    }
    let mut gw = ScriptedGateway::new(script);
    let mut sim = build_apartment(&ApartmentConfig::default()).unwrap();
    let config = EngineConfig::default();
    let id = sim.roster.ids()[0];
    sim.run_turn(&mut gw, id, &config);
    for reply in &bad {
        let before = sim.world.clone();
        let outcome = sim.run_turn(&mut gw, id, &config);
        assert!(!outcome.success, "{reply}");
        assert!(matches!(outcome.validation, Validation::Error(_)), "{reply}");
        assert_eq!(sim.world, before, "{reply}");
    }
}

#[test]
fn cake_steps_in_order() {
    let mut script = Vec::new();
    script.extend(mediated_turn("bake now", &action("bake", json!([])), "Not ready.", 3));
    for ingredient in ["flour", "sugar", "eggs", "butter", "milk"] {
        script.extend(mediated_turn(
            "gather",
            &action("gather", json!([ingredient])),
            "Gathered.",
            4,
        ));
    }
    script.extend(mediated_turn("mix", &action("mix", json!([])), "Mixed.", 6));
    script.extend(mediated_turn("bake", &action("bake", json!([])), "Baked!", 9));
    let mut gw = ScriptedGateway::new(script);
    let mut sim = build_cake_variant(&ApartmentConfig::default()).unwrap();
    let config = EngineConfig {
        max_rounds: 4,
        ..Default::default()
    };
    let outcomes = sim.run_loop(&mut gw, &config, |_| {});
    assert_eq!(outcomes.len(), 8);
    assert!(!outcomes[0].success);
    assert!(
        outcomes[1..].iter().all(|o| o.success),
        "{:#?}",
        outcomes.iter().map(|o| &o.effect).collect::<Vec<_>>()
    );
    assert_eq!(sim.world.get("cake", "baked").and_then(|v| v.as_bool()), Some(true));
}

fn coders() -> Roster {
    let mut roster = Roster::new();
    for name in ["Agent 1", "Agent 2"] {
        roster.add(name, CODER_PERSONA, GenParams::default(), 20).unwrap();
    }
    roster
}

#[test]
fn coding_run_writes_replayable_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solution.py");
    let script = vec![
        "1. Count the list length\n2. Walk to the node before the target\n3. Unlink it".to_string(),
        coding_reply(
            Some(
                json!({"kind": "replace_range", "start": 0, "end": 0, "lines": ["def remove_nth_from_end(head, n):", "    size = 0", "    curr = head"]}),
            ),
            "Started with a size count.",
            false,
        ),
        coding_reply(
            Some(
                json!({"kind": "insert_after", "anchor": 2, "lines": ["    while curr:", "        size += 1", "        curr = curr.next"]}),
            ),
            "Added the loop.",
            false,
        ),
        coding_reply(
            Some(
                json!({"kind": "insert_after", "anchor": 5, "lines": ["    if size == n:", "        return head.next", "    prev = head", "    for _ in range(size - n - 1):", "        prev = prev.next", "    prev.next = prev.next.next"]}),
            ),
            "Here is the rest.",
            false,
        ),
        coding_reply(
            Some(
                json!({"kind": "insert_after", "anchor": 5, "lines": ["    if size == n:", "        return head.next"]}),
            ),
            "Trimmed to fit.",
            true,
        ),
        coding_reply(None, "Looks complete.", true),
        coding_reply(None, "Agreed.", true),
    ];
    let mut gw = ScriptedGateway::new(script);
    let config = CodingConfig {
        max_rounds: 5,
        output: Some(out.clone()),
        ..Default::default()
    };
    let run = run_coding(
        &mut gw,
        &mut coders(),
        "Remove Nth Node From End of List",
        &config,
        |_| {},
    )
    .unwrap();
    assert_eq!(run.plan.steps.len(), 3);
    assert_eq!(run.transcript.len(), 6);
    assert!(run.finished);
    assert_eq!(run.buffer.edit_log().len(), 3);
    assert_eq!(run.chatroom.messages().len(), 6);

    let written = std::fs::read(&out).unwrap();
    assert!(written.ends_with(b"\n"));
    assert_eq!(
        CodeBuffer::replay(run.buffer.edit_log()).unwrap().render().as_bytes(),
        written.as_slice()
    );
}

#[test]
fn coding_single_mode_stops_at_first_done() {
    let script = vec![
        "- one step".to_string(),
        coding_reply(None, "thinking", false),
        coding_reply(None, "done here", true),
    ];
    let mut gw = ScriptedGateway::new(script);
    let config = CodingConfig {
        termination: Termination::Single,
        ..Default::default()
    };
    let run = run_coding(&mut gw, &mut coders(), "p", &config, |_| {}).unwrap();
    assert_eq!(run.transcript.len(), 2);
}

#[test]
fn trio_opening_exchange() {
    let mut cast = DEFAULT_CAST.to_vec();
    cast.rotate_left(1);
    let mut roster = Roster::from_settings(&cast_settings(&cast)).unwrap();
    let mut gw = ScriptedGateway::new([
        directed("Jerome, the soup is cold.", "Jerome"),
        directed("Then heat it with fire, Bo.", "Bo"),
        directed("Tom, do you own a stove?", "Tom"),
    ]);
    let lines = run_trio_chat(&mut gw, &mut roster, 3, 0, |_| {}).unwrap();
    let rendered: Vec<String> = lines.iter().map(|l| l.render()).collect();
    assert!(rendered[0].starts_with("Bo -> Jerome :: "));
    assert!(rendered[1].starts_with("Jerome -> Bo :: "));
    assert!(rendered[2].starts_with("Bo -> Tom :: "));
}

#[test]
fn recorded_cassette_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("apartment.cassette");
    let config = EngineConfig {
        max_rounds: 3,
        ..Default::default()
    };

    let first = {
        let writer = CassetteWriter::create(&cassette).unwrap();
        let mut gw = Recording::new(ScriptedGateway::new(apartment_script()), "m", writer);
        let mut sim = build_apartment(&ApartmentConfig::default()).unwrap();
        sim.run_loop(&mut gw, &config, |_| {})
    };
    let records = read_cassette(&cassette).unwrap();
    assert!(records.iter().any(|r| r.request.get("input").is_some()));
    let mut replay = ScriptedGateway::from_cassette(&records);
    let mut sim = build_apartment(&ApartmentConfig::default()).unwrap();
    let second = sim.run_loop(&mut replay, &config, |_| {});
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&second).unwrap()
    );
}
