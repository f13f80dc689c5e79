//! Three-way directed chat: each speaker addresses one participant, who
//! speaks next.

use serde::{Deserialize, Serialize};

use crate::agent::{next_speaker, AgentError, AgentSettings, DirectedMessage, Roster};
use crate::engine::DEFAULT_AGENT_TEMPERATURE;
use crate::gateway::Gateway;

/// Default cast as (name, description).
pub const DEFAULT_CAST: [(&str, &str); 3] = [
    ("Jerome", "a mighty barbarian"),
    ("Bo", "a high class Frenchman"),
    ("Tom", "an argumentative and highly opinionated tech entrepreneur"),
];

/// System prompt for one participant.
pub fn trio_persona(name: &str, description: &str, others: &[&str]) -> String {
    format!(
        "You are {name}, {description}. You are talking with {}. When it is your turn, reply with only a JSON \
         object of the form {{\"message\": \"<what you say>\", \"to\": \"<exact name of the person you are \
         speaking to>\"}}.",
        others.join(" and ")
    )
}

/// Roster settings for a cast of (name, description) pairs.
pub fn cast_settings(cast: &[(&str, &str)]) -> Vec<AgentSettings> {
    cast.iter()
        .map(|(name, description)| {
            let others: Vec<&str> = cast.iter().map(|(n, _)| *n).filter(|n| n != name).collect();
            AgentSettings::new(
                name,
                &trio_persona(name, description, &others),
                DEFAULT_AGENT_TEMPERATURE,
            )
        })
        .collect()
}

pub fn default_roster() -> Roster {
    Roster::from_settings(&cast_settings(&DEFAULT_CAST)).expect("default cast has distinct names")
}

/// One transcript entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrioLine {
    pub turn: u64,
    pub from: String,
    pub to: String,
    pub message: String,
    /// The next speaker was picked round-robin because `to` named nobody.
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrioLine {
    pub fn render(&self) -> String {
        match &self.error {
            Some(err) => format!("{} -> ? :: (no message: {err})\n", self.from),
            None => format!("{} -> {} :: {}\n", self.from, self.to, self.message),
        }
    }
}

/// Runs `max_turns` turns starting with the roster's first agent.
pub fn run_trio_chat(
    gateway: &mut dyn Gateway,
    roster: &mut Roster,
    max_turns: usize,
    retries: u32,
    mut on_line: impl FnMut(&TrioLine),
) -> Result<Vec<TrioLine>, AgentError> {
    let ids = roster.ids();
    let Some(&first) = ids.first() else {
        return Err(AgentError::EmptyRoster);
    };
    let mut speaker = first;
    let mut prompt = "You start the conversation. It is your turn to speak.".to_string();
    let mut lines = Vec::with_capacity(max_turns);
    for turn in 0..max_turns as u64 {
        let agent = roster.get_mut(speaker).expect("speaker is a roster member");
        let from = agent.name().to_string();
        let reply = agent.respond_structured(gateway, &prompt, &DirectedMessage::schema(), retries);
        let round_robin = ids[(roster.position(speaker).expect("member") + 1) % ids.len()];
        let line = match reply {
            Ok(structured) => {
                let msg = DirectedMessage::from(&structured);
                let (next, fallback) = match next_speaker(roster, &msg) {
                    Ok(next) => (next, false),
                    Err(e) => {
                        log::warn!("{from}: {e}; passing the turn round-robin");
                        (round_robin, true)
                    }
                };
                prompt = if fallback {
                    format!(
                        "{from} said to {}: \"{}\"\nIt is your turn to speak.",
                        msg.to, msg.message
                    )
                } else {
                    format!("{from} says to you: \"{}\"\nIt is your turn to speak.", msg.message)
                };
                speaker = next;
                TrioLine {
                    turn,
                    from,
                    to: msg.to,
                    message: msg.message,
                    fallback,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("{from} produced no directed message: {e}");
                speaker = round_robin;
                prompt = "It is your turn to speak.".into();
                TrioLine {
                    turn,
                    from,
                    to: String::new(),
                    message: String::new(),
                    fallback: true,
                    error: Some(e.to_string()),
                }
            }
        };
        on_line(&line);
        lines.push(line);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;

    fn said(message: &str, to: &str) -> String {
        DirectedMessage {
            message: message.into(),
            to: to.into(),
        }
        .to_json()
    }

    #[test]
    fn personas_carry_name_and_description() {
        let roster = default_roster();
        let jerome = roster.at(0).unwrap();
        assert_eq!(jerome.name(), "Jerome");
        assert!(jerome.persona().contains("a mighty barbarian"));
        assert!(jerome.persona().contains("Bo and Tom"));
    }

    #[test]
    fn routing_follows_recipient() {
        let mut roster = default_roster();
        let mut gw = ScriptedGateway::new([said("Hail", "Tom"), said("Hi", "Bo"), said("Bonjour", "Jerome")]);
        let lines = run_trio_chat(&mut gw, &mut roster, 3, 0, |_| {}).unwrap();
        let froms: Vec<_> = lines.iter().map(|l| l.from.as_str()).collect();
        assert_eq!(froms, ["Jerome", "Tom", "Bo"]);
        assert_eq!(lines[1].render(), "Tom -> Bo :: Hi\n");
        let tom_prompt = &gw.requests()[1].last().unwrap().content;
        assert!(tom_prompt.contains("Jerome says to you: \"Hail\""));
    }

    #[test]
    fn everyone_addresses_tom() {
        let mut roster = default_roster();
        let script: Vec<_> = (0..6)
            .map(|i| said(&format!("m{i}"), if i % 2 == 1 { "Jerome" } else { "Tom" }))
            .collect();
        let mut gw = ScriptedGateway::new(script);
        let lines = run_trio_chat(&mut gw, &mut roster, 6, 0, |_| {}).unwrap();
        for (i, line) in lines.iter().enumerate() {
            // 1-based even turns belong to Tom
            assert_eq!(line.from == "Tom", (i + 1) % 2 == 0);
        }
    }

    #[test]
    fn unknown_target_falls_back_round_robin() {
        let mut roster = default_roster();
        let mut gw = ScriptedGateway::new([said("Who?", "tom"), said("Me", "Jerome")]);
        let lines = run_trio_chat(&mut gw, &mut roster, 2, 0, |_| {}).unwrap();
        assert!(lines[0].fallback);
        assert_eq!(lines[1].from, "Bo");
    }

    #[test]
    fn unparseable_turn_is_recorded() {
        let mut roster = default_roster();
        let mut gw = ScriptedGateway::new(["grunt".to_string(), said("Oui", "Jerome")]);
        let lines = run_trio_chat(&mut gw, &mut roster, 2, 0, |_| {}).unwrap();
        assert!(lines[0].error.is_some());
        assert_eq!(lines[1].from, "Bo");
    }
}
