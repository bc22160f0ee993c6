//! Topic names, subscription patterns and the wildcard matching rule.
//!
//! Topics are `/`-separated, non-empty levels. In patterns `+` matches
//! exactly one level and `#`, allowed only as the final level, matches one
//! or more remaining levels. So `a/#` matches `a/b` and `a/b/c` but not `a`.

use std::fmt;

use crate::error::BusError;

const SEPARATOR: char = '/';

/// A concrete topic messages are published to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicName(String);

impl TopicName {
    pub fn parse(s: &str) -> Result<Self, BusError> {
        if s.is_empty() {
            return Err(BusError::protocol("topic must not be empty"));
        }
        for level in s.split(SEPARATOR) {
            if level.is_empty() {
                return Err(BusError::protocol(format!("topic `{s}` has an empty level")));
            }
            if level.contains(['+', '#']) {
                return Err(BusError::protocol(format!(
                    "wildcards are not allowed in published topic `{s}`"
                )));
            }
        }
        Ok(TopicName(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn levels(&self) -> impl Iterator<Item = &str> {
        self.0.split(SEPARATOR)
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Level {
    Exact(String),
    /// `+`
    Single,
    /// `#`
    Rest,
}

/// A subscription pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicFilter {
    raw: String,
    levels: Vec<Level>,
}

impl TopicFilter {
    pub fn parse(s: &str) -> Result<Self, BusError> {
        if s.is_empty() {
            return Err(BusError::protocol("pattern must not be empty"));
        }
        let parts: Vec<&str> = s.split(SEPARATOR).collect();
        let mut levels = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let level = match *part {
                "" => return Err(BusError::protocol(format!("pattern `{s}` has an empty level"))),
                "+" => Level::Single,
                "#" if i + 1 == parts.len() => Level::Rest,
                "#" => {
                    return Err(BusError::protocol(format!(
                        "`#` must be the last level in pattern `{s}`"
                    )))
                }
                p if p.contains(['+', '#']) => {
                    return Err(BusError::protocol(format!(
                        "wildcards must occupy a whole level in pattern `{s}`"
                    )))
                }
                p => Level::Exact(p.to_owned()),
            };
            levels.push(level);
        }
        Ok(TopicFilter {
            raw: s.to_owned(),
            levels,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn matches(&self, topic: &TopicName) -> bool {
        let mut topic_levels = topic.levels();
        for level in &self.levels {
            match level {
                Level::Rest => return topic_levels.next().is_some(),
                Level::Single => {
                    if topic_levels.next().is_none() {
                        return false;
                    }
                }
                Level::Exact(want) => {
                    if topic_levels.next() != Some(want.as_str()) {
                        return false;
                    }
                }
            }
        }
        topic_levels.next().is_none()
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Wildcard match of `pattern` against `topic`. Invalid inputs never match.
pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    match (TopicFilter::parse(pattern), TopicName::parse(topic)) {
        (Ok(p), Ok(t)) => p.matches(&t),
        _ => false,
    }
}
