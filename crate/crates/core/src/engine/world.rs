use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Text,
    Number,
    Bool,
}

impl Scalar {
    pub fn kind(&self) -> ScalarKind {
        match self {
            Scalar::Bool(_) => ScalarKind::Bool,
            Scalar::Number(_) => ScalarKind::Number,
            Scalar::Text(_) => ScalarKind::Text,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Scalar::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Option<Self> {
        match value {
            serde_json::Value::Bool(b) => Some(Scalar::Bool(*b)),
            serde_json::Value::Number(n) => n.as_f64().map(Scalar::Number),
            serde_json::Value::String(s) => Some(Scalar::Text(s.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Number(n) if n.fract() == 0.0 && n.abs() < 1e15 => write!(f, "{}", *n as i64),
            Scalar::Number(n) => write!(f, "{n}"),
            Scalar::Text(s) => write!(f, "{s}"),
        }
    }
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarKind::Text => "text",
            ScalarKind::Number => "number",
            ScalarKind::Bool => "boolean",
        })
    }
}

impl From<f64> for Scalar {
    fn from(n: f64) -> Self {
        Scalar::Number(n)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.to_string())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Text(s)
    }
}

/// A named object: attribute name → scalar value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub name: String,
    pub attributes: BTreeMap<String, Scalar>,
}

impl WorldObject {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, attribute: &str, value: impl Into<Scalar>) -> Self {
        self.attributes.insert(attribute.to_string(), value.into());
        self
    }
}

/// The mutable state agents act on: an ordered list of objects.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct World {
    objects: Vec<WorldObject>,
}

impl World {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an object; an existing object of the same name is replaced.
    pub fn add(&mut self, object: WorldObject) {
        match self.objects.iter_mut().find(|o| o.name == object.name) {
            Some(existing) => *existing = object,
            None => self.objects.push(object),
        }
    }

    pub fn objects(&self) -> &[WorldObject] {
        &self.objects
    }

    pub fn object(&self, name: &str) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn get(&self, object: &str, attribute: &str) -> Option<&Scalar> {
        self.object(object)?.attributes.get(attribute)
    }

    /// Sets an attribute on an existing object.
    pub fn set(&mut self, object: &str, attribute: &str, value: impl Into<Scalar>) -> Result<(), String> {
        let target = self
            .objects
            .iter_mut()
            .find(|o| o.name == object)
            .ok_or_else(|| format!("there is no object named {object}"))?;
        target.attributes.insert(attribute.to_string(), value.into());
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// One line per object, `name: attr = value, ...`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for object in &self.objects {
            let attrs: Vec<String> = object.attributes.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            out.push_str(&format!("- {}: {}\n", object.name, attrs.join(", ")));
        }
        out
    }
}

/// Simulation time in turns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnClock {
    current: u64,
}

impl TurnClock {
    pub fn starting_at(turn: u64) -> Self {
        Self { current: turn }
    }

    pub fn now(&self) -> u64 {
        self.current
    }

    pub fn advance(&mut self) -> u64 {
        self.current += 1;
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_json_forms() {
        let s: Vec<Scalar> = serde_json::from_str(r#"[72, "hot", true, 1.5]"#).unwrap();
        assert_eq!(
            s,
            vec![
                Scalar::Number(72.0),
                "hot".into(),
                Scalar::Bool(true),
                Scalar::Number(1.5)
            ]
        );
        assert_eq!(s[0].to_string(), "72");
        assert_eq!(s[3].to_string(), "1.5");
    }

    #[test]
    fn set_and_render() {
        let mut w = World::new();
        w.add(WorldObject::new("thermostat").with("temperature", 72.0));
        w.set("thermostat", "temperature", 68.0).unwrap();
        assert_eq!(w.get("thermostat", "temperature"), Some(&Scalar::Number(68.0)));
        assert!(w.set("oven", "on", true).is_err());
        assert_eq!(w.render(), "- thermostat: temperature = 68\n");
    }

    #[test]
    fn clock() {
        let mut c = TurnClock::starting_at(7);
        assert_eq!(c.advance(), 8);
        assert_eq!(c.now(), 8);
    }
}
