use std::collections::HashMap;

use crate::wire::Subject;

use super::BrokerError;

pub type SessionId = u64;

/// One subscription endpoint: a session and the sid it chose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Delivery {
    pub session: SessionId,
    pub sid: u64,
}

#[derive(Debug, Default)]
struct Node {
    literal: HashMap<String, Node>,
    star: Option<Box<Node>>,
    /// Subscriptions whose pattern ends exactly at this node.
    exact: Vec<Delivery>,
    /// Subscriptions whose pattern is this node's path followed by `>`.
    tail: Vec<Delivery>,
}

impl Node {
    fn is_empty(&self) -> bool {
        self.literal.is_empty() && self.star.is_none() && self.exact.is_empty() && self.tail.is_empty()
    }

    fn insert(&mut self, tokens: &[String], who: Delivery) {
        match tokens.split_first() {
            None => self.exact.push(who),
            Some((t, _)) if t == ">" => self.tail.push(who),
            Some((t, rest)) if t == "*" => {
                self.star.get_or_insert_with(Default::default).insert(rest, who)
            }
            Some((t, rest)) => self.literal.entry(t.clone()).or_default().insert(rest, who),
        }
    }

    fn remove(&mut self, tokens: &[String], who: Delivery) -> bool {
        let removed = match tokens.split_first() {
            None => remove_from(&mut self.exact, who),
            Some((t, _)) if t == ">" => remove_from(&mut self.tail, who),
            Some((t, rest)) if t == "*" => match self.star.as_mut() {
                Some(child) => {
                    let removed = child.remove(rest, who);
                    if child.is_empty() {
                        self.star = None;
                    }
                    removed
                }
                None => false,
            },
            Some((t, rest)) => match self.literal.get_mut(t) {
                Some(child) => {
                    let removed = child.remove(rest, who);
                    if child.is_empty() {
                        self.literal.remove(t);
                    }
                    removed
                }
                None => false,
            },
        };
        removed
    }

    fn collect(&self, tokens: &[String], out: &mut Vec<Delivery>) {
        let Some((head, rest)) = tokens.split_first() else {
            out.extend_from_slice(&self.exact);
            return;
        };
        out.extend_from_slice(&self.tail);
        if let Some(child) = self.literal.get(head) {
            child.collect(rest, out);
        }
        if let Some(child) = &self.star {
            child.collect(rest, out);
        }
    }
}

fn remove_from(list: &mut Vec<Delivery>, who: Delivery) -> bool {
    match list.iter().position(|d| *d == who) {
        Some(i) => {
            list.swap_remove(i);
            true
        }
        None => false,
    }
}

/// Subscription table keyed by subject tokens.
#[derive(Debug, Default)]
pub struct Router {
    root: Node,
    patterns: HashMap<Delivery, Subject>,
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn subscribe(&mut self, session: SessionId, sid: u64, pattern: Subject) -> Result<(), BrokerError> {
        let who = Delivery { session, sid };
        if self.patterns.contains_key(&who) {
            return Err(BrokerError::DuplicateSid(sid));
        }
        self.root.insert(pattern.tokens(), who);
        self.patterns.insert(who, pattern);
        Ok(())
    }

    pub fn unsubscribe(&mut self, session: SessionId, sid: u64) -> bool {
        let who = Delivery { session, sid };
        match self.patterns.remove(&who) {
            Some(pattern) => self.root.remove(pattern.tokens(), who),
            None => false,
        }
    }

    pub fn remove_session(&mut self, session: SessionId) -> usize {
        let doomed: Vec<Delivery> =
            self.patterns.keys().filter(|d| d.session == session).copied().collect();
        for who in &doomed {
            self.unsubscribe(who.session, who.sid);
        }
        doomed.len()
    }

    /// Every subscription whose pattern matches the concrete `subject`, each once.
    pub fn route(&self, subject: &Subject) -> Vec<Delivery> {
        let mut out = Vec::new();
        self.route_into(subject, &mut out);
        out
    }

    pub fn route_into(&self, subject: &Subject, out: &mut Vec<Delivery>) {
        self.root.collect(subject.tokens(), out);
    }

    pub fn pattern(&self, session: SessionId, sid: u64) -> Option<&Subject> {
        self.patterns.get(&Delivery { session, sid })
    }
}
