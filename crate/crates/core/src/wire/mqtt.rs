//! Mapping between MQTT topic filters and broker subjects.

use super::subject::is_plain_token;
use super::{Subject, WireError};

/// `/` becomes a token boundary, `+` becomes `*` and a final `#` becomes `>`.
pub fn mqtt_topic_to_subject(topic: &str) -> Result<Subject, WireError> {
    let invalid = |why: &str| WireError::InvalidTopic(format!("{topic}: {why}"));
    if topic.is_empty() {
        return Err(invalid("empty topic"));
    }
    let levels: Vec<&str> = topic.split('/').collect();
    let last = levels.len() - 1;
    let mut tokens = Vec::with_capacity(levels.len());
    for (i, level) in levels.iter().enumerate() {
        let token = match *level {
            "" => return Err(invalid("empty level")),
            "+" => "*",
            "#" if i == last => ">",
            "#" => return Err(invalid("'#' must be the final level")),
            other if is_plain_token(other) => other,
            _ => return Err(invalid("level contains a reserved character")),
        };
        tokens.push(token);
    }
    Subject::from_tokens(tokens)
}

/// Inverse of [`mqtt_topic_to_subject`].
pub fn subject_to_mqtt_topic(subject: &Subject) -> String {
    subject
        .tokens()
        .iter()
        .map(|t| match t.as_str() {
            "*" => "+",
            ">" => "#",
            other => other,
        })
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separator_mapping() {
        let s = mqtt_topic_to_subject("site/65/daq/1/sensor/epc3").unwrap();
        assert_eq!(s.to_string(), "site.65.daq.1.sensor.epc3");
        assert!(!s.is_pattern());
    }

    #[test]
    fn wildcard_mapping() {
        let s = mqtt_topic_to_subject("site/+/sensor/#").unwrap();
        assert_eq!(s.to_string(), "site.*.sensor.>");
        assert_eq!(subject_to_mqtt_topic(&s), "site/+/sensor/#");
    }

    #[test]
    fn invalid_topics() {
        for topic in ["a/b.c/d", "a//b", "a/#/b", "a/b*", "a/>", "", "/a", "a/b c"] {
            assert!(
                matches!(mqtt_topic_to_subject(topic), Err(WireError::InvalidTopic(_))),
                "{topic}"
            );
        }
    }
}
