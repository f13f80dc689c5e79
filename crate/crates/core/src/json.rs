//! Locating JSON objects inside free-form model output.

use serde_json::{Map, Value};

/// Every well-formed top-level JSON object embedded in `text`, in order of
/// appearance. Prose, code fences and broken fragments around the objects
/// are skipped.
pub fn objects_in(text: &str) -> Vec<Map<String, Value>> {
    let mut found = Vec::new();
    let mut pos = 0;
    while let Some(offset) = text[pos..].find('{') {
        let start = pos + offset;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                pos = start + stream.byte_offset();
                found.push(map);
            }
            _ => pos = start + 1,
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_object_inside_prose() {
        let objs = objects_in("Sure! {\"a\": 1} and then {\"b\": {\"c\": 2}} done");
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0]["a"], 1);
        assert_eq!(objs[1]["b"]["c"], 2);
    }

    #[test]
    fn skips_broken_fragments() {
        let objs = objects_in("{broken {\"ok\": true}");
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0]["ok"], true);
    }

    #[test]
    fn code_fence() {
        let objs = objects_in("```json\n{\"x\": \"}\"}\n```");
        assert_eq!(objs[0]["x"], "}");
    }

    #[test]
    fn nothing() {
        assert!(objects_in("no json here").is_empty());
        assert!(objects_in("").is_empty());
    }
}
