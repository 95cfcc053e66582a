use std::fmt;
use std::str::FromStr;

use super::WireError;

/// A dot-separated routing address.
///
/// Concrete subjects are made of plain tokens (`A-Z a-z 0-9 _ -`). Patterns may
/// additionally use `*` for exactly one token and a trailing `>` for one or
/// more remaining tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subject {
    tokens: Vec<String>,
}

pub(crate) fn is_plain_token(token: &str) -> bool {
    !token.is_empty()
        && token
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl Subject {
    /// Parses a subject that may contain wildcards.
    pub fn pattern(s: &str) -> Result<Self, WireError> {
        if s.is_empty() {
            return Err(WireError::InvalidSubject(s.to_string()));
        }
        let tokens: Vec<String> = s.split('.').map(str::to_string).collect();
        let last = tokens.len() - 1;
        for (i, token) in tokens.iter().enumerate() {
            let ok = is_plain_token(token) || token == "*" || (token == ">" && i == last);
            if !ok {
                return Err(WireError::InvalidSubject(s.to_string()));
            }
        }
        Ok(Subject { tokens })
    }

    /// Parses a subject that must not contain wildcards.
    pub fn concrete(s: &str) -> Result<Self, WireError> {
        let subject = Self::pattern(s)?;
        if subject.is_pattern() {
            return Err(WireError::WildcardNotAllowed(s.to_string()));
        }
        Ok(subject)
    }

    /// Builds a subject from already-split tokens, validating them as a pattern.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, WireError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let joined = tokens
            .into_iter()
            .map(Into::into)
            .collect::<Vec<String>>()
            .join(".");
        Self::pattern(&joined)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_pattern(&self) -> bool {
        self.tokens.iter().any(|t| t == "*" || t == ">")
    }

    /// Returns true when `self`, read as a pattern, matches the concrete `subject`.
    pub fn matches(&self, subject: &Subject) -> bool {
        subject_matches(self, subject)
    }
}

/// Token-wise wildcard match. `*` consumes exactly one token, a trailing `>`
/// consumes one or more.
pub fn subject_matches(pattern: &Subject, subject: &Subject) -> bool {
    let pat = &pattern.tokens;
    let sub = &subject.tokens;
    for (i, p) in pat.iter().enumerate() {
        if p == ">" {
            return sub.len() > i;
        }
        match sub.get(i) {
            None => return false,
            Some(s) if p == "*" || p == s => {}
            Some(_) => return false,
        }
    }
    pat.len() == sub.len()
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join("."))
    }
}

impl FromStr for Subject {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subject::pattern(s)
    }
}
