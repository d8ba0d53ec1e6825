//! Attack/defence graph construction for a conversation.
//!
//! A post attacks the post it replies to when the two authors differ. A post
//! that is not a reply attacks the latest earlier post of the first user it
//! mentions, or, failing that, the latest earlier post written by somebody
//! else. A post defends `c` whenever it attacks some `b` that attacks `c`.
//!
//! Self-replies are continuations and produce no edge at all.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{mentions, validate_thread, Conversation, Post, Violation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("conversation violates {} invariant(s), first: {:?}", .0.len(), .0.first())]
    InvalidConversation(Vec<Violation>),
    #[error("malformed graph document: {0}")]
    Malformed(String),
}

/// `source` defends `target` through the intermediate post `witness`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Defence {
    pub source: usize,
    pub target: usize,
    pub witness: usize,
}

/// Argumentation graph over the posts of one conversation.
///
/// Nodes are indexed by canonical ordinal; edges point from the attacking
/// (or defending) post to its target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgGraph {
    pub conversation_id: String,
    pub nodes: Vec<String>,
    pub authors: Vec<String>,
    pub attacks: Vec<(usize, usize)>,
    pub defences: Vec<Defence>,
}

/// Tracks, for a prefix of the conversation, the latest post of every author
/// and the latest post by somebody other than a given author.
#[derive(Default)]
struct PrefixIndex<'a> {
    last_by_author: HashMap<&'a str, usize>,
    last: Option<usize>,
    // latest post whose author differs from the author of `last`
    last_other: Option<usize>,
}

impl<'a> PrefixIndex<'a> {
    fn push(&mut self, idx: usize, posts: &'a [Post]) {
        let author = posts[idx].author_id.as_str();
        if let Some(prev) = self.last {
            if posts[prev].author_id != author {
                self.last_other = Some(prev);
            }
        }
        self.last = Some(idx);
        self.last_by_author.insert(author, idx);
    }

    fn latest_not_by(&self, author: &str, posts: &[Post]) -> Option<usize> {
        let last = self.last?;
        if posts[last].author_id != author {
            Some(last)
        } else {
            self.last_other
        }
    }

    fn target_of(&self, post: &Post, posts: &[Post], index: &HashMap<&str, usize>) -> Option<usize> {
        if let Some(parent) = &post.parent_id {
            let parent_idx = *index.get(parent.as_str())?;
            return (posts[parent_idx].author_id != post.author_id).then_some(parent_idx);
        }
        if let Some(first) = mentions(&post.body).next() {
            if first.username != post.author_id {
                if let Some(&idx) = self.last_by_author.get(first.username.as_str()) {
                    return Some(idx);
                }
            }
        }
        self.latest_not_by(&post.author_id, posts)
    }
}

/// Resolves the post that `post` attacks, if any.
///
/// `post` must belong to `c`; posts at or after its ordinal are ignored.
pub fn resolve_target(post: &Post, c: &Conversation) -> Option<String> {
    let posts = c.posts();
    let index = c.index_by_id();
    let mut prefix = PrefixIndex::default();
    for i in 0..post.ordinal.min(posts.len()) {
        prefix.push(i, posts);
    }
    prefix
        .target_of(post, posts, &index)
        .map(|i| posts[i].post_id.clone())
}

/// All length-2 attack paths `a -> b -> c`, reported as `(a, c, b)`.
///
/// Each ordered pair of edges sharing the middle node yields one triple, so
/// the output length equals the number of such paths.
pub fn defence_closure<T>(attacks: &[(T, T)]) -> Vec<(T, T, T)>
where
    T: Clone + Eq + Hash,
{
    let mut out_edges: HashMap<&T, Vec<&T>> = HashMap::new();
    for (src, dst) in attacks {
        out_edges.entry(src).or_default().push(dst);
    }
    let mut triples = Vec::new();
    for (a, b) in attacks {
        if let Some(targets) = out_edges.get(b) {
            for c in targets {
                triples.push((a.clone(), (*c).clone(), b.clone()));
            }
        }
    }
    triples
}

/// Builds the argumentation graph of a well-formed conversation.
pub fn build_graph(c: &Conversation) -> Result<ArgGraph, GraphError> {
    let violations = validate_thread(c);
    if !violations.is_empty() {
        return Err(GraphError::InvalidConversation(violations));
    }
    let posts = c.posts();
    let index = c.index_by_id();
    let mut prefix = PrefixIndex::default();
    let mut attacks = Vec::new();
    for (i, post) in posts.iter().enumerate() {
        if let Some(target) = prefix.target_of(post, posts, &index) {
            attacks.push((i, target));
        }
        prefix.push(i, posts);
    }
    let defences = defence_closure(&attacks)
        .into_iter()
        .map(|(source, target, witness)| Defence {
            source,
            target,
            witness,
        })
        .collect();
    Ok(ArgGraph {
        conversation_id: c.id().to_string(),
        nodes: posts.iter().map(|p| p.post_id.clone()).collect(),
        authors: posts.iter().map(|p| p.author_id.clone()).collect(),
        attacks,
        defences,
    })
}

/// Serialized form: ids instead of indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub conversation_id: String,
    pub nodes: Vec<String>,
    pub attacks: Vec<[String; 2]>,
    pub defences: Vec<[String; 3]>,
    pub authors: BTreeMap<String, String>,
}

impl ArgGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Union of attack and defence edges as a simple directed edge set,
    /// sorted, without self-loops.
    pub fn combined_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .attacks
            .iter()
            .copied()
            .chain(self.defences.iter().map(|d| (d.source, d.target)))
            .filter(|(a, b)| a != b)
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Lists broken graph invariants; empty for graphs produced by [`build_graph`].
    pub fn invariant_violations(&self) -> Vec<String> {
        let n = self.nodes.len();
        let mut out = Vec::new();
        if self.authors.len() != n {
            out.push(format!("{} authors for {} nodes", self.authors.len(), n));
            return out;
        }
        let mut attack_out = vec![0usize; n];
        let mut defence_out = vec![0usize; n];
        for &(a, b) in &self.attacks {
            if a >= n || b >= n {
                out.push(format!("attack ({a},{b}) out of range"));
                continue;
            }
            if self.authors[a] == self.authors[b] {
                out.push(format!("attack {} -> {} joins same-author posts", self.nodes[a], self.nodes[b]));
            }
            attack_out[a] += 1;
        }
        for d in &self.defences {
            if d.source >= n || d.target >= n || d.witness >= n {
                out.push(format!("defence {d:?} out of range"));
                continue;
            }
            if !self.attacks.contains(&(d.source, d.witness)) || !self.attacks.contains(&(d.witness, d.target)) {
                out.push(format!("defence {} -> {} lacks its attack path", self.nodes[d.source], self.nodes[d.target]));
            }
            if self.authors[d.witness] == self.authors[d.target] {
                out.push(format!("defence witness {} shares author with target", self.nodes[d.witness]));
            }
            defence_out[d.source] += 1;
        }
        for i in 0..n {
            if attack_out[i] > 1 || defence_out[i] > 1 {
                out.push(format!("post {} has out-degree > 1", self.nodes[i]));
            }
        }
        out
    }

    pub fn to_document(&self) -> GraphDocument {
        let id = |i: usize| self.nodes[i].clone();
        GraphDocument {
            conversation_id: self.conversation_id.clone(),
            nodes: self.nodes.clone(),
            attacks: self.attacks.iter().map(|&(a, b)| [id(a), id(b)]).collect(),
            defences: self
                .defences
                .iter()
                .map(|d| [id(d.source), id(d.target), id(d.witness)])
                .collect(),
            authors: self
                .nodes
                .iter()
                .cloned()
                .zip(self.authors.iter().cloned())
                .collect(),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self, GraphError> {
        let index: HashMap<&str, usize> = doc
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if index.len() != doc.nodes.len() {
            return Err(GraphError::Malformed("duplicate node id".into()));
        }
        let lookup = |id: &String| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| GraphError::Malformed(format!("edge endpoint {id} is not a node")))
        };
        let authors = doc
            .nodes
            .iter()
            .map(|n| {
                doc.authors
                    .get(n)
                    .cloned()
                    .ok_or_else(|| GraphError::Malformed(format!("node {n} has no author")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let attacks = doc
            .attacks
            .iter()
            .map(|[a, b]| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        let defences = doc
            .defences
            .iter()
            .map(|[a, c, b]| {
                Ok(Defence {
                    source: lookup(a)?,
                    target: lookup(c)?,
                    witness: lookup(b)?,
                })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        let graph = ArgGraph {
            conversation_id: doc.conversation_id.clone(),
            nodes: doc.nodes.clone(),
            authors,
            attacks,
            defences,
        };
        match graph.invariant_violations().into_iter().next() {
            Some(problem) => Err(GraphError::Malformed(problem)),
            None => Ok(graph),
        }
    }
}
