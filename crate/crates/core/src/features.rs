//! Per-user structural features of one conversation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argraph::ArgGraph;
use crate::ingest::{Conversation, Post};
use crate::metrics::CentralityScores;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("graph node {0} is not a post of the conversation")]
    GraphMismatch(String),
    #[error("centrality vectors have {got} entries for {expected} nodes")]
    CentralityMismatch { expected: usize, got: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown feature set `{0}`")]
    UnknownSelector(String),
}

/// The nineteen user features, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "PC")]
    PostCount,
    #[serde(rename = "CC")]
    Coverage,
    #[serde(rename = "Att_IN")]
    AttIn,
    #[serde(rename = "Att_OUT")]
    AttOut,
    #[serde(rename = "Def_IN")]
    DefIn,
    #[serde(rename = "Def_OUT")]
    DefOut,
    #[serde(rename = "AvgAtt_OUT")]
    AvgAttOut,
    #[serde(rename = "AvgAtt_IN")]
    AvgAttIn,
    #[serde(rename = "AvgDef_OUT")]
    AvgDefOut,
    #[serde(rename = "AvgDef_IN")]
    AvgDefIn,
    #[serde(rename = "Agr")]
    Aggressiveness,
    #[serde(rename = "Dis")]
    Disapproval,
    #[serde(rename = "En")]
    Engagement,
    #[serde(rename = "NEn")]
    NormEngagement,
    #[serde(rename = "As")]
    Activity,
    #[serde(rename = "NAs")]
    NormActivity,
    #[serde(rename = "CBC")]
    CumBetweenness,
    #[serde(rename = "CEC")]
    CumEigenvector,
    #[serde(rename = "CClC")]
    CumCloseness,
}

impl Feature {
    pub const ALL: [Feature; 19] = [
        Feature::PostCount,
        Feature::Coverage,
        Feature::AttIn,
        Feature::AttOut,
        Feature::DefIn,
        Feature::DefOut,
        Feature::AvgAttOut,
        Feature::AvgAttIn,
        Feature::AvgDefOut,
        Feature::AvgDefIn,
        Feature::Aggressiveness,
        Feature::Disapproval,
        Feature::Engagement,
        Feature::NormEngagement,
        Feature::Activity,
        Feature::NormActivity,
        Feature::CumBetweenness,
        Feature::CumEigenvector,
        Feature::CumCloseness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::PostCount => "PC",
            Feature::Coverage => "CC",
            Feature::AttIn => "Att_IN",
            Feature::AttOut => "Att_OUT",
            Feature::DefIn => "Def_IN",
            Feature::DefOut => "Def_OUT",
            Feature::AvgAttOut => "AvgAtt_OUT",
            Feature::AvgAttIn => "AvgAtt_IN",
            Feature::AvgDefOut => "AvgDef_OUT",
            Feature::AvgDefIn => "AvgDef_IN",
            Feature::Aggressiveness => "Agr",
            Feature::Disapproval => "Dis",
            Feature::Engagement => "En",
            Feature::NormEngagement => "NEn",
            Feature::Activity => "As",
            Feature::NormActivity => "NAs",
            Feature::CumBetweenness => "CBC",
            Feature::CumEigenvector => "CEC",
            Feature::CumCloseness => "CClC",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureVector {
    pub user_id: String,
    pub post_count: u32,
    pub coverage: f64,
    pub att_in: u32,
    pub att_out: u32,
    pub def_in: u32,
    pub def_out: u32,
    pub avg_att_out: f64,
    pub avg_att_in: f64,
    pub avg_def_out: f64,
    pub avg_def_in: f64,
    pub aggressiveness: f64,
    pub disapproval: f64,
    pub engagement: u32,
    pub norm_engagement: f64,
    pub activity: f64,
    pub norm_activity: f64,
    pub cum_betweenness: f64,
    pub cum_eigenvector: f64,
    pub cum_closeness: f64,
}

impl UserFeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::PostCount => self.post_count as f64,
            Feature::Coverage => self.coverage,
            Feature::AttIn => self.att_in as f64,
            Feature::AttOut => self.att_out as f64,
            Feature::DefIn => self.def_in as f64,
            Feature::DefOut => self.def_out as f64,
            Feature::AvgAttOut => self.avg_att_out,
            Feature::AvgAttIn => self.avg_att_in,
            Feature::AvgDefOut => self.avg_def_out,
            Feature::AvgDefIn => self.avg_def_in,
            Feature::Aggressiveness => self.aggressiveness,
            Feature::Disapproval => self.disapproval,
            Feature::Engagement => self.engagement as f64,
            Feature::NormEngagement => self.norm_engagement,
            Feature::Activity => self.activity,
            Feature::NormActivity => self.norm_activity,
            Feature::CumBetweenness => self.cum_betweenness,
            Feature::CumEigenvector => self.cum_eigenvector,
            Feature::CumCloseness => self.cum_closeness,
        }
    }

    /// All nineteen values in table order.
    pub fn values(&self) -> [f64; 19] {
        Feature::ALL.map(|f| self.get(f))
    }

    /// Rebuilds a vector from table-ordered values, as read back from CSV.
    /// Count features are rounded to the nearest integer.
    pub fn from_values(user_id: impl Into<String>, v: &[f64; 19]) -> Self {
        let count = |x: f64| x.round().max(0.0) as u32;
        Self {
            user_id: user_id.into(),
            post_count: count(v[0]),
            coverage: v[1],
            att_in: count(v[2]),
            att_out: count(v[3]),
            def_in: count(v[4]),
            def_out: count(v[5]),
            avg_att_out: v[6],
            avg_att_in: v[7],
            avg_def_out: v[8],
            avg_def_in: v[9],
            aggressiveness: v[10],
            disapproval: v[11],
            engagement: count(v[12]),
            norm_engagement: v[13],
            activity: v[14],
            norm_activity: v[15],
            cum_betweenness: v[16],
            cum_eigenvector: v[17],
            cum_closeness: v[18],
        }
    }
}

/// Laplace-smoothed ratio `(num + 1) / (den + 1)`, used for the two
/// attack-to-defence ratios whose raw form divides by zero for most users.
pub fn smoothed_ratio(num: u32, den: u32) -> f64 {
    (num as f64 + 1.0) / (den as f64 + 1.0)
}

/// A named, ordered list of features used to project vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSelector {
    pub name: String,
    pub members: Vec<Feature>,
}

impl FeatureSelector {
    pub fn minimal() -> Self {
        Self::custom(
            "minimal",
            vec![
                Feature::AvgAttIn,
                Feature::AvgDefIn,
                Feature::Engagement,
                Feature::CumBetweenness,
            ],
        )
    }

    pub fn reduced() -> Self {
        Self::custom(
            "reduced",
            vec![
                Feature::DefIn,
                Feature::Coverage,
                Feature::AvgAttOut,
                Feature::AvgAttIn,
                Feature::AvgDefIn,
                Feature::Disapproval,
                Feature::Engagement,
            ],
        )
    }

    pub fn full() -> Self {
        Self::custom("full", Feature::ALL.to_vec())
    }

    pub fn custom(name: impl Into<String>, members: Vec<Feature>) -> Self {
        Self {
            name: name.into(),
            members,
        }
    }

    /// Resolves `minimal`, `reduced`, `full`, or a comma-separated feature list.
    pub fn parse(names: &str) -> Result<Self, FeatureError> {
        match names {
            "minimal" => Ok(Self::minimal()),
            "reduced" => Ok(Self::reduced()),
            "full" => Ok(Self::full()),
            list if list.contains(',') || list.parse::<Feature>().is_ok() => {
                let members = list
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Self::custom(list, members))
            }
            other => Err(FeatureError::UnknownSelector(other.to_string())),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.members.iter().map(|f| f.name().to_string()).collect()
    }
}

pub fn select_features(v: &UserFeatureVector, s: &FeatureSelector) -> Vec<f64> {
    s.members.iter().map(|&f| v.get(f)).collect()
}

/// Computes the feature vector of every author in `c`, keyed by user id.
pub fn aggregate_features(
    g: &ArgGraph,
    cent: &CentralityScores,
    c: &Conversation,
) -> Result<BTreeMap<String, UserFeatureVector>, FeatureError> {
    let n = g.node_count();
    for len in [cent.betweenness.len(), cent.eigenvector.len(), cent.closeness.len()] {
        if len != n {
            return Err(FeatureError::CentralityMismatch { expected: n, got: len });
        }
    }
    let index = c.index_by_id();
    let mut node_author = Vec::with_capacity(n);
    for node in &g.nodes {
        let &i = index
            .get(node.as_str())
            .ok_or_else(|| FeatureError::GraphMismatch(node.clone()))?;
        node_author.push(c.posts()[i].author_id.as_str());
    }

    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut users: Vec<UserFeatureVector> = Vec::new();
    for post in c.posts() {
        let i = *slot.entry(post.author_id.as_str()).or_insert_with(|| {
            users.push(UserFeatureVector {
                user_id: post.author_id.clone(),
                ..Default::default()
            });
            users.len() - 1
        });
        users[i].post_count += 1;
    }
    let owner: Vec<usize> = node_author.iter().map(|a| slot[a]).collect();
    for &(a, b) in &g.attacks {
        users[owner[a]].att_out += 1;
        users[owner[b]].att_in += 1;
    }
    for d in &g.defences {
        users[owner[d.source]].def_out += 1;
        users[owner[d.target]].def_in += 1;
    }
    for (node, &u) in owner.iter().enumerate() {
        users[u].cum_betweenness += cent.betweenness[node];
        users[u].cum_eigenvector += cent.eigenvector[node];
        users[u].cum_closeness += cent.closeness[node];
    }

    let total_posts = c.len() as f64;
    let mut total_engagement = 0u64;
    for u in users.iter_mut() {
        let pc = u.post_count as f64;
        u.coverage = pc / total_posts;
        u.avg_att_out = u.att_out as f64 / pc;
        u.avg_att_in = u.att_in as f64 / pc;
        u.avg_def_out = u.def_out as f64 / pc;
        u.avg_def_in = u.def_in as f64 / pc;
        u.aggressiveness = smoothed_ratio(u.att_out, u.def_out);
        u.disapproval = smoothed_ratio(u.att_in, u.def_in);
        u.engagement = u.att_in + u.att_out + u.def_in + u.def_out;
        u.activity = u.engagement as f64 * u.coverage;
        total_engagement += u.engagement as u64;
    }
    let max_activity = users.iter().map(|u| u.activity).fold(0.0, f64::max);
    for u in users.iter_mut() {
        u.norm_engagement = if total_engagement > 0 {
            u.engagement as f64 / total_engagement as f64
        } else {
            0.0
        };
        u.norm_activity = if max_activity > 0.0 {
            u.activity / max_activity
        } else {
            0.0
        };
    }
    Ok(users.into_iter().map(|u| (u.user_id.clone(), u)).collect())
}

/// [`aggregate_features`] when only the graph is at hand: post ownership is
/// read from the graph's author list.
pub fn aggregate_graph_features(
    g: &ArgGraph,
    cent: &CentralityScores,
) -> Result<BTreeMap<String, UserFeatureVector>, FeatureError> {
    let posts = g
        .nodes
        .iter()
        .zip(&g.authors)
        .enumerate()
        .map(|(i, (id, author))| Post {
            post_id: id.clone(),
            conversation_id: g.conversation_id.clone(),
            author_id: author.clone(),
            parent_id: None,
            body: String::new(),
            timestamp: i as i64,
            score: 0,
            ordinal: i,
        })
        .collect();
    aggregate_features(g, cent, &Conversation::from_parts(g.conversation_id.clone(), posts))
}
