//! Parsing and normalization of line-delimited conversation dumps.
//!
//! Every input line is one post. Posts of a conversation are sorted by
//! `(timestamp, input order)` and receive a dense `ordinal` that the rest of
//! the pipeline uses as the canonical position of a post.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("post {post_id}: parent {parent_id} is not part of the conversation")]
    DanglingParent { post_id: String, parent_id: String },
    #[error("post {post_id}: parent {parent_id} is not strictly earlier in canonical order")]
    ParentOrder { post_id: String, parent_id: String },
    #[error("post id {0} appears more than once")]
    DuplicatePost(String),
    #[error("input mixes conversations {first} and {other}")]
    MixedConversation { first: String, other: String },
    #[error("no posts in input")]
    Empty,
}

/// One post after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    #[serde(rename = "id")]
    pub post_id: String,
    pub conversation_id: String,
    #[serde(rename = "author")]
    pub author_id: String,
    pub parent_id: Option<String>,
    pub body: String,
    pub timestamp: i64,
    pub score: i64,
    pub ordinal: usize,
}

/// A thread of posts in canonical order. Immutable once parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    id: String,
    posts: Vec<Post>,
}

impl Conversation {
    /// Assembles a conversation without checks. Use [`validate_thread`] to
    /// inspect the result; [`parse_conversation`] is the checked entry point.
    pub fn from_parts(id: impl Into<String>, posts: Vec<Post>) -> Self {
        Self {
            id: id.into(),
            posts,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Maps post id to its index in [`Conversation::posts`].
    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.post_id.as_str(), i))
            .collect()
    }

    /// Canonical JSONL, one post per line, with `ordinal` filled in.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for post in &self.posts {
            serde_json::to_writer(&mut out, post)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// A referral to a user found inside a post body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub username: String,
    /// Offset of the first character of the mention token, counted in chars.
    pub char_offset: usize,
}

impl Mention {
    pub fn new(username: impl Into<String>, char_offset: usize) -> Self {
        Self {
            username: username.into(),
            char_offset,
        }
    }
}

const KEYS: [&str; 7] = [
    "id",
    "conversation_id",
    "author",
    "parent_id",
    "body",
    "timestamp",
    "score",
];

struct RawPost {
    id: String,
    conversation_id: String,
    author: String,
    parent_id: Option<String>,
    body: String,
    timestamp: i64,
    score: i64,
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a Value, IngestError> {
    obj.get(key).ok_or_else(|| IngestError::MalformedLine {
        line,
        reason: format!("missing key `{key}`"),
    })
}

fn string_field(obj: &Map<String, Value>, key: &str, line: usize) -> Result<String, IngestError> {
    match field(obj, key, line)? {
        Value::String(s) => Ok(s.clone()),
        other => Err(IngestError::MalformedLine {
            line,
            reason: format!("`{key}` must be a string, found {other}"),
        }),
    }
}

fn int_field(obj: &Map<String, Value>, key: &str, line: usize) -> Result<i64, IngestError> {
    field(obj, key, line)?
        .as_i64()
        .ok_or_else(|| IngestError::MalformedLine {
            line,
            reason: format!("`{key}` must be an integer"),
        })
}

fn parse_line(text: &str, line: usize) -> Result<RawPost, IngestError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::MalformedLine {
        line,
        reason: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(IngestError::MalformedLine {
            line,
            reason: "expected a JSON object".into(),
        });
    };
    // `ordinal` is tolerated so canonical output can be fed back in; it is recomputed.
    if let Some(extra) = obj
        .keys()
        .find(|k| !KEYS.contains(&k.as_str()) && k.as_str() != "ordinal")
    {
        return Err(IngestError::MalformedLine {
            line,
            reason: format!("unexpected key `{extra}`"),
        });
    }
    let parent_id = match field(&obj, "parent_id", line)? {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => {
            return Err(IngestError::MalformedLine {
                line,
                reason: format!("`parent_id` must be a string or null, found {other}"),
            })
        }
    };
    Ok(RawPost {
        id: string_field(&obj, "id", line)?,
        conversation_id: string_field(&obj, "conversation_id", line)?,
        author: string_field(&obj, "author", line)?,
        parent_id,
        body: string_field(&obj, "body", line)?,
        timestamp: int_field(&obj, "timestamp", line)?,
        score: int_field(&obj, "score", line)?,
    })
}

fn non_blank_lines<'a, I, S>(raw_lines: I) -> impl Iterator<Item = (usize, S)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + 'a,
{
    raw_lines
        .into_iter()
        .enumerate()
        .filter(|(_, l)| !l.as_ref().trim().is_empty())
        .map(|(i, l)| (i + 1, l))
}

fn normalize(mut raw: Vec<RawPost>) -> Result<Conversation, IngestError> {
    let Some(first) = raw.first() else {
        return Err(IngestError::Empty);
    };
    let conversation_id = first.conversation_id.clone();
    if let Some(other) = raw.iter().find(|p| p.conversation_id != conversation_id) {
        return Err(IngestError::MixedConversation {
            first: conversation_id,
            other: other.conversation_id.clone(),
        });
    }
    let mut seen = HashSet::new();
    for p in &raw {
        if !seen.insert(p.id.as_str()) {
            return Err(IngestError::DuplicatePost(p.id.clone()));
        }
    }
    // stable sort keeps input order among equal timestamps
    raw.sort_by_key(|p| p.timestamp);
    let ordinal_of: HashMap<&str, usize> = raw
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    for (i, p) in raw.iter().enumerate() {
        if let Some(parent) = &p.parent_id {
            match ordinal_of.get(parent.as_str()) {
                None => {
                    return Err(IngestError::DanglingParent {
                        post_id: p.id.clone(),
                        parent_id: parent.clone(),
                    })
                }
                Some(&j) if j >= i => {
                    return Err(IngestError::ParentOrder {
                        post_id: p.id.clone(),
                        parent_id: parent.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }
    let posts = raw
        .into_iter()
        .enumerate()
        .map(|(ordinal, p)| Post {
            post_id: p.id,
            conversation_id: p.conversation_id,
            author_id: p.author,
            parent_id: p.parent_id,
            body: p.body,
            timestamp: p.timestamp,
            score: p.score,
            ordinal,
        })
        .collect();
    Ok(Conversation {
        id: conversation_id,
        posts,
    })
}

/// Parses the JSONL lines of a single conversation. Blank lines are skipped.
pub fn parse_conversation<I, S>(raw_lines: I) -> Result<Conversation, IngestError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let raw = non_blank_lines(raw_lines)
        .map(|(n, l)| parse_line(l.as_ref(), n))
        .collect::<Result<Vec<_>, _>>()?;
    normalize(raw)
}

/// Parses a JSONL dump that may hold several conversations, grouping lines by
/// `conversation_id`. Conversations are returned in order of first appearance.
pub fn parse_corpus<I, S>(raw_lines: I) -> Result<Vec<Conversation>, IngestError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RawPost>> = BTreeMap::new();
    for (n, l) in non_blank_lines(raw_lines) {
        let post = parse_line(l.as_ref(), n)?;
        if !groups.contains_key(&post.conversation_id) {
            order.push(post.conversation_id.clone());
        }
        groups.entry(post.conversation_id.clone()).or_default().push(post);
    }
    if order.is_empty() {
        return Err(IngestError::Empty);
    }
    order
        .into_iter()
        .map(|id| normalize(groups.remove(&id).unwrap_or_default()))
        .collect()
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn is_name_byte(b: u8) -> bool {
    is_word_byte(b) || b == b'-'
}

/// Lazily yields `u/NAME`, `/u/NAME` and `@NAME` referrals in order of
/// occurrence.
///
/// A mention token must not be glued to a preceding word character, so
/// `menu/x` and `mail@host` are not mentions. `NAME` is the maximal run of
/// `[A-Za-z0-9_-]` after the prefix.
pub fn mentions(body: &str) -> impl Iterator<Item = Mention> + '_ {
    // Prefixes and names are ASCII, so scanning bytes is exact; a non-ASCII
    // predecessor is never a word character.
    let bytes = body.as_bytes();
    let mut i = 0;
    let mut chars_before = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() {
            let boundary = i == 0 || !is_word_byte(bytes[i - 1]);
            let prefix_len = if !boundary {
                0
            } else if bytes[i] == b'@' {
                1
            } else if bytes[i..].starts_with(b"/u/") {
                3
            } else if bytes[i..].starts_with(b"u/") {
                2
            } else {
                0
            };
            if prefix_len > 0 {
                let start = i + prefix_len;
                let end = bytes[start..]
                    .iter()
                    .position(|&b| !is_name_byte(b))
                    .map_or(bytes.len(), |n| start + n);
                if end > start {
                    let found = Mention {
                        username: body[start..end].to_string(),
                        char_offset: chars_before,
                    };
                    chars_before += end - i;
                    i = end;
                    return Some(found);
                }
            }
            i += 1;
            if i == bytes.len() || bytes[i] & 0xC0 != 0x80 {
                chars_before += 1;
            }
        }
        None
    })
}

/// All mentions in `body`; see [`mentions`].
pub fn extract_mentions(body: &str) -> Vec<Mention> {
    mentions(body).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Empty,
    ConversationId,
    DuplicateId,
    OrdinalSequence,
    TimestampOrder,
    FirstPostHasParent,
    DanglingParent,
    ParentOrder,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Empty => "empty",
            Rule::ConversationId => "conversation_id",
            Rule::DuplicateId => "duplicate_id",
            Rule::OrdinalSequence => "ordinal_sequence",
            Rule::TimestampOrder => "timestamp_order",
            Rule::FirstPostHasParent => "first_post_has_parent",
            Rule::DanglingParent => "dangling_parent",
            Rule::ParentOrder => "parent_order",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for conversation-level rules such as [`Rule::Empty`].
    pub post_id: Option<String>,
    pub rule: Rule,
}

impl Violation {
    fn at(post: &Post, rule: Rule) -> Self {
        Self {
            post_id: Some(post.post_id.clone()),
            rule,
        }
    }
}

/// Checks every conversation and post invariant. An empty result means the
/// conversation is well formed.
pub fn validate_thread(c: &Conversation) -> Vec<Violation> {
    let posts = c.posts();
    if posts.is_empty() {
        return vec![Violation {
            post_id: None,
            rule: Rule::Empty,
        }];
    }
    let mut violations = Vec::new();
    let mut ordinal_of: HashMap<&str, usize> = HashMap::new();
    for p in posts {
        if ordinal_of.insert(p.post_id.as_str(), p.ordinal).is_some() {
            violations.push(Violation::at(p, Rule::DuplicateId));
        }
    }
    for (i, p) in posts.iter().enumerate() {
        if p.conversation_id != c.id() {
            violations.push(Violation::at(p, Rule::ConversationId));
        }
        if p.ordinal != i {
            violations.push(Violation::at(p, Rule::OrdinalSequence));
        }
        if i > 0 && p.timestamp < posts[i - 1].timestamp {
            violations.push(Violation::at(p, Rule::TimestampOrder));
        }
        if i == 0 && p.parent_id.is_some() {
            violations.push(Violation::at(p, Rule::FirstPostHasParent));
        }
        if let Some(parent) = &p.parent_id {
            match ordinal_of.get(parent.as_str()) {
                None => violations.push(Violation::at(p, Rule::DanglingParent)),
                Some(&ord) if ord >= p.ordinal => violations.push(Violation::at(p, Rule::ParentOrder)),
                Some(_) => {}
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, author: &str, parent: Option<&str>, ts: i64) -> String {
        serde_json::json!({
            "id": id,
            "conversation_id": "c1",
            "author": author,
            "parent_id": parent,
            "body": "text",
            "timestamp": ts,
            "score": 1,
        })
        .to_string()
    }

    #[test]
    fn three_post_thread() {
        let lines = [
            line("a", "x", None, 10),
            line("b", "y", Some("a"), 20),
            line("c", "x", Some("b"), 30),
        ];
        let c = parse_conversation(&lines).unwrap();
        assert_eq!(c.len(), 3);
        let ordinals: Vec<_> = c.posts().iter().map(|p| p.ordinal).collect();
        assert_eq!(ordinals, vec![0, 1, 2]);
        assert!(validate_thread(&c).is_empty());
    }

    #[test]
    fn dangling_parent() {
        let lines = [line("a", "x", None, 1), line("b", "y", Some("zzz"), 2)];
        assert_eq!(
            parse_conversation(&lines),
            Err(IngestError::DanglingParent {
                post_id: "b".into(),
                parent_id: "zzz".into()
            })
        );
    }

    #[test]
    fn equal_timestamps_follow_input_order() {
        let lines = [
            line("a", "x", None, 5),
            line("c", "z", None, 7),
            line("b", "y", None, 7),
        ];
        let c = parse_conversation(&lines).unwrap();
        let ids: Vec<_> = c.posts().iter().map(|p| p.post_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c", "b"]);
    }

    #[test]
    fn sorts_by_timestamp() {
        let lines = [line("b", "y", Some("a"), 9), line("a", "x", None, 3)];
        let c = parse_conversation(&lines).unwrap();
        assert_eq!(c.posts()[0].post_id, "a");
        assert_eq!(c.posts()[1].ordinal, 1);
    }

    #[test]
    fn parent_after_child_is_rejected() {
        let lines = [line("a", "x", Some("b"), 1), line("b", "y", None, 2)];
        assert!(matches!(
            parse_conversation(&lines),
            Err(IngestError::ParentOrder { .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_conversation(["{not json"]),
            Err(IngestError::MalformedLine { line: 1, .. })
        ));
        let missing = r#"{"id":"a","conversation_id":"c","author":"x","body":"","timestamp":1,"score":0}"#;
        let err = parse_conversation([missing]).unwrap_err();
        assert!(err.to_string().contains("parent_id"), "{err}");
        let bad_ts = r#"{"id":"a","conversation_id":"c","author":"x","parent_id":null,"body":"","timestamp":"x","score":0}"#;
        assert!(matches!(
            parse_conversation([bad_ts]),
            Err(IngestError::MalformedLine { .. })
        ));
        let extra = r#"{"id":"a","conversation_id":"c","author":"x","parent_id":null,"body":"","timestamp":1,"score":0,"x":1}"#;
        assert!(matches!(
            parse_conversation([extra]),
            Err(IngestError::MalformedLine { .. })
        ));
    }

    #[test]
    fn mixed_and_duplicate() {
        let other = line("b", "y", None, 2).replace("\"c1\"", "\"c2\"");
        assert!(matches!(
            parse_conversation([line("a", "x", None, 1), other]),
            Err(IngestError::MixedConversation { .. })
        ));
        assert_eq!(
            parse_conversation([line("a", "x", None, 1), line("a", "y", None, 2)]),
            Err(IngestError::DuplicatePost("a".into()))
        );
        assert_eq!(parse_conversation(Vec::<String>::new()), Err(IngestError::Empty));
    }

    #[test]
    fn corpus_groups_by_conversation() {
        let other = line("b", "y", None, 2).replace("\"c1\"", "\"c2\"");
        let corpus = parse_corpus([line("a", "x", None, 1), other, line("c", "z", Some("a"), 3)]).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].id(), "c1");
        assert_eq!(corpus[0].len(), 2);
        assert_eq!(corpus[1].id(), "c2");
    }

    #[test]
    fn canonical_output_reparses() {
        let lines = [line("a", "x", None, 1), line("b", "y", Some("a"), 2)];
        let c = parse_conversation(&lines).unwrap();
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with(r#""ordinal":0}"#));
        assert_eq!(parse_conversation(text.lines()).unwrap(), c);
    }

    #[test]
    fn mention_examples() {
        assert_eq!(extract_mentions("u/alice you are wrong"), vec![Mention::new("alice", 0)]);
        assert_eq!(
            extract_mentions("@bob and @carol agree"),
            vec![Mention::new("bob", 0), Mention::new("carol", 9)]
        );
        assert!(extract_mentions("nothing here").is_empty());
    }

    #[test]
    fn mention_edge_cases() {
        assert_eq!(extract_mentions("see /u/Dan-9_x."), vec![Mention::new("Dan-9_x", 4)]);
        assert!(extract_mentions("menu/items and mail@host").is_empty());
        assert!(extract_mentions("@ alone, u/ too").is_empty());
        // offsets are in chars, not bytes
        assert_eq!(extract_mentions("é @z"), vec![Mention::new("z", 2)]);
        assert_eq!(
            extract_mentions("(@a)@b"),
            vec![Mention::new("a", 1), Mention::new("b", 4)]
        );
    }

    #[test]
    fn validate_reports() {
        let empty = Conversation::from_parts("c", vec![]);
        assert_eq!(
            validate_thread(&empty),
            vec![Violation {
                post_id: None,
                rule: Rule::Empty
            }]
        );

        let lines = [line("a", "x", None, 1), line("b", "y", Some("a"), 2), line("c", "x", Some("b"), 3)];
        let good = parse_conversation(&lines).unwrap();
        let mut posts = good.posts().to_vec();
        posts[1].parent_id = Some("c".into());
        let bad = Conversation::from_parts("c1", posts);
        assert_eq!(
            validate_thread(&bad),
            vec![Violation {
                post_id: Some("b".into()),
                rule: Rule::ParentOrder
            }]
        );
    }
}
