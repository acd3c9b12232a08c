use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{count_tokens, BackendError, ChatBackend, ChatMessage, ChatRequest, Completion};

type Predicate = Arc<dyn Fn(&[ChatMessage]) -> bool + Send + Sync>;
type Responder = Arc<dyn Fn(&[ChatMessage]) -> String + Send + Sync>;

/// Decides whether a rule applies to a message list.
#[derive(Clone)]
pub enum Matcher {
    /// Some message content contains the needle.
    Contains(String),
    /// The last user message contains the needle.
    LastUserContains(String),
    /// [`messages_hash`] of the whole list equals this hex digest.
    MessagesHash(String),
    Predicate(Predicate),
    /// Always matches; use as the last rule.
    Default,
}

impl Matcher {
    pub fn predicate(f: impl Fn(&[ChatMessage]) -> bool + Send + Sync + 'static) -> Self {
        Matcher::Predicate(Arc::new(f))
    }

    fn matches(&self, messages: &[ChatMessage]) -> bool {
        match self {
            Matcher::Contains(needle) => messages.iter().any(|m| m.content.contains(needle.as_str())),
            Matcher::LastUserContains(needle) => last_user(messages).is_some_and(|c| c.contains(needle.as_str())),
            Matcher::MessagesHash(hash) => messages_hash(messages) == *hash,
            Matcher::Predicate(f) => f(messages),
            Matcher::Default => true,
        }
    }
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Matcher::Contains(s) => write!(f, "Contains({s:?})"),
            Matcher::LastUserContains(s) => write!(f, "LastUserContains({s:?})"),
            Matcher::MessagesHash(h) => write!(f, "MessagesHash({h})"),
            Matcher::Predicate(_) => f.write_str("Predicate(..)"),
            Matcher::Default => f.write_str("Default"),
        }
    }
}

#[derive(Clone)]
pub enum Reply {
    Text(String),
    With(Responder),
}

impl Reply {
    pub fn with(f: impl Fn(&[ChatMessage]) -> String + Send + Sync + 'static) -> Self {
        Reply::With(Arc::new(f))
    }

    fn render(&self, messages: &[ChatMessage]) -> String {
        match self {
            Reply::Text(t) => t.clone(),
            Reply::With(f) => f(messages),
        }
    }
}

impl From<&str> for Reply {
    fn from(value: &str) -> Self {
        Reply::Text(value.to_string())
    }
}

impl From<String> for Reply {
    fn from(value: String) -> Self {
        Reply::Text(value)
    }
}

#[derive(Clone)]
pub struct Rule {
    pub matcher: Matcher,
    pub reply: Reply,
}

impl Rule {
    pub fn new(matcher: Matcher, reply: impl Into<Reply>) -> Self {
        Self {
            matcher,
            reply: reply.into(),
        }
    }
}

/// Deterministic backend: the first matching rule produces the reply.
///
/// Token counts are whitespace tokens of all message contents (prompt) and
/// of the reply (completion).
#[derive(Clone)]
pub struct ScriptedBackend {
    model_id: String,
    rules: Vec<Rule>,
}

impl ScriptedBackend {
    pub fn new(model_id: impl Into<String>, rules: Vec<Rule>) -> Self {
        Self {
            model_id: model_id.into(),
            rules,
        }
    }

    pub fn reply_for(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.rules
            .iter()
            .find(|r| r.matcher.matches(messages))
            .map(|r| r.reply.render(messages))
            .ok_or_else(|| {
                BackendError::Scripting(format!(
                    "no rule of scripted backend {:?} matches the prompt",
                    self.model_id
                ))
            })
    }
}

impl ChatBackend for ScriptedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn send(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let text = self.reply_for(&request.messages)?;
        let prompt_tokens = request.messages.iter().map(|m| count_tokens(&m.content)).sum();
        Ok(Completion {
            completion_tokens: count_tokens(&text),
            text,
            prompt_tokens,
        })
    }
}

/// Convenience constructor with a generic model id.
pub fn scripted_backend(rules: Vec<Rule>) -> ScriptedBackend {
    ScriptedBackend::new("scripted", rules)
}

/// SHA-256 over roles and contents, hex encoded.
pub fn messages_hash(messages: &[ChatMessage]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update(format!("{:?}", m.role).as_bytes());
        hasher.update([0]);
        hasher.update(m.content.as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn last_user(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .iter()
        .rev()
        .find(|m| m.role == super::Role::User)
        .map(|m| m.content.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn send(b: &ScriptedBackend, text: &str) -> Result<Completion, BackendError> {
        b.send(&ChatRequest::new("m", vec![ChatMessage::user(text)]))
    }

    #[test]
    fn first_matching_rule_wins() {
        let b = scripted_backend(vec![
            Rule::new(Matcher::Contains("final question".into()), "A"),
            Rule::new(Matcher::Default, "B"),
        ]);
        assert_eq!(send(&b, "Here is your final question").unwrap().text, "A");
        assert_eq!(send(&b, "something else").unwrap().text, "B");
    }

    #[test]
    fn hash_keyed_reply() {
        let msgs = vec![ChatMessage::user("exact prompt")];
        let b = scripted_backend(vec![Rule::new(Matcher::MessagesHash(messages_hash(&msgs)), "keyed")]);
        assert_eq!(send(&b, "exact prompt").unwrap().text, "keyed");
        assert!(matches!(send(&b, "exact prompt!"), Err(BackendError::Scripting(_))));
    }

    #[test]
    fn whitespace_token_counts() {
        let b = scripted_backend(vec![Rule::new(Matcher::Default, "one two")]);
        let c = b
            .send(&ChatRequest::new(
                "m",
                vec![ChatMessage::user("a b c"), ChatMessage::assistant("d")],
            ))
            .unwrap();
        assert_eq!((c.prompt_tokens, c.completion_tokens), (4, 2));
    }

    #[test]
    fn hash_distinguishes_roles() {
        assert_ne!(
            messages_hash(&[ChatMessage::user("x")]),
            messages_hash(&[ChatMessage::assistant("x")])
        );
    }
}
