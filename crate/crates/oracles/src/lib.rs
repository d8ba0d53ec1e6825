//! Deliberately naive reference implementations.
//!
//! Nothing here shares code with `convoarg`. Each function recomputes a
//! quantity from its definition by exhaustive search or a dense solve, so
//! agreement with the fast paths is meaningful.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use regex::Regex;

/// A post reduced to what the attack rule looks at.
#[derive(Debug, Clone)]
pub struct RulePost {
    pub author: String,
    /// Index of the parent post, if this is a reply.
    pub parent: Option<usize>,
    pub body: String,
}

fn mention_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^A-Za-z0-9_])(?:/u/|u/|@)([A-Za-z0-9_-]+)").unwrap())
}

/// The first user referred to in `body`.
pub fn first_mention(body: &str) -> Option<String> {
    mention_pattern()
        .captures(body)
        .map(|c| c[1].to_string())
}

thread_local! {
    static SEEN: RefCell<HashMap<String, Option<String>>> = RefCell::new(HashMap::new());
}

/// [`first_mention`] memoized per thread; enumeration reuses few bodies.
fn first_mention_cached(body: &str) -> Option<String> {
    SEEN.with(|seen| {
        if let Some(hit) = seen.borrow().get(body) {
            return hit.clone();
        }
        let found = first_mention(body);
        seen.borrow_mut().insert(body.to_string(), found.clone());
        found
    })
}

/// Attack target of every post, by direct reading of the two rules.
pub fn attack_targets(posts: &[RulePost]) -> Vec<Option<usize>> {
    (0..posts.len())
        .map(|i| {
            let p = &posts[i];
            if let Some(j) = p.parent {
                return if posts[j].author != p.author { Some(j) } else { None };
            }
            if let Some(name) = first_mention_cached(&p.body) {
                if name != p.author {
                    if let Some(j) = (0..i).rev().find(|&j| posts[j].author == name) {
                        return Some(j);
                    }
                }
            }
            (0..i).rev().find(|&j| posts[j].author != p.author)
        })
        .collect()
}

/// Every `(a, c, b)` with `a -> b` and `b -> c` both in `attacks`, found by
/// trying all node triples. Parallel edges multiply.
pub fn length2_paths(n: usize, attacks: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
    let count = |x: usize, y: usize| attacks.iter().filter(|&&e| e == (x, y)).count();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let ab = count(a, b);
            if ab == 0 {
                continue;
            }
            for c in 0..n {
                for _ in 0..ab * count(b, c) {
                    out.push((a, c, b));
                }
            }
        }
    }
    out
}

/// Number of directed length-2 walks, as the entry sum of the squared
/// adjacency-count matrix.
pub fn length2_path_count(n: usize, attacks: &[(usize, usize)]) -> u64 {
    let mut m = DMatrix::<f64>::zeros(n, n);
    for &(a, b) in attacks {
        m[(a, b)] += 1.0;
    }
    (&m * &m).sum().round() as u64
}

fn simple_edges(n: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut out = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            out[a].insert(b);
        }
    }
    out
}

/// Betweenness by listing every simple path between every ordered pair and
/// keeping the shortest ones.
pub fn betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let adj = simple_edges(n, edges);
    let mut score = vec![0.0; n];
    for s in 0..n {
        // paths[t] = every simple path from s to t
        let mut paths: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
        let mut stack = vec![vec![s]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            for &w in &adj[last] {
                if path.contains(&w) {
                    continue;
                }
                let mut next = path.clone();
                next.push(w);
                paths[w].push(next.clone());
                stack.push(next);
            }
        }
        for (t, ps) in paths.iter().enumerate() {
            if t == s || ps.is_empty() {
                continue;
            }
            let shortest = ps.iter().map(Vec::len).min().unwrap();
            let best: Vec<&Vec<usize>> = ps.iter().filter(|p| p.len() == shortest).collect();
            let total = best.len() as f64;
            for p in &best {
                for &v in &p[1..p.len() - 1] {
                    score[v] += 1.0 / total;
                }
            }
        }
    }
    score
}

/// Stationary vector of the damped walk along edge direction, obtained by
/// solving the linear fixed-point system directly.
pub fn pagerank(n: usize, edges: &[(usize, usize)], damping: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let adj = simple_edges(n, edges);
    let nf = n as f64;
    let mut g = DMatrix::<f64>::zeros(n, n);
    for v in 0..n {
        if adj[v].is_empty() {
            for w in 0..n {
                g[(w, v)] += 1.0 / nf;
            }
        } else {
            for &w in &adj[v] {
                g[(w, v)] += 1.0 / adj[v].len() as f64;
            }
        }
    }
    let system = DMatrix::<f64>::identity(n, n) - g * damping;
    let rhs = DVector::<f64>::from_element(n, (1.0 - damping) / nf);
    let x = system.lu().solve(&rhs).expect("damped system is nonsingular");
    let total = x.sum();
    x.iter().map(|v| v / total).collect()
}

/// Harmonic closeness from Floyd-Warshall distances.
pub fn harmonic_closeness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let adj = simple_edges(n, edges);
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for v in 0..n {
        d[v][v] = 0;
        for &w in &adj[v] {
            d[v][w] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (0..n)
        .map(|v| {
            (0..n)
                .filter(|&u| u != v && d[v][u] < inf)
                .map(|u| 1.0 / d[v][u] as f64)
                .sum()
        })
        .collect()
}

/// Per-user `[att_in, att_out, def_in, def_out]`, counted edge by edge.
pub fn user_edge_counts(
    authors: &[String],
    attacks: &[(usize, usize)],
    defences: &[(usize, usize)],
) -> BTreeMap<String, [u32; 4]> {
    let mut out: BTreeMap<String, [u32; 4]> = authors.iter().map(|a| (a.clone(), [0; 4])).collect();
    for (edges, base) in [(attacks, 0), (defences, 2)] {
        for &(src, dst) in edges {
            out.get_mut(&authors[dst]).unwrap()[base] += 1;
            out.get_mut(&authors[src]).unwrap()[base + 1] += 1;
        }
    }
    out
}

/// Author names used by [`enumerate_threads`].
pub const AUTHORS: [&str; 3] = ["a", "b", "c"];

/// Calls `visit` once for every thread of 1 to `max_posts` posts: every
/// reply-tree shape, every author assignment up to renaming (first
/// appearances in order a, b, c), and every choice from `top_bodies` for
/// posts that are not replies. Replies carry `reply_body`.
pub fn enumerate_threads(max_posts: usize, top_bodies: &[&str], reply_body: &str, mut visit: impl FnMut(&[RulePost])) {
    fn step(
        posts: &mut Vec<RulePost>,
        used: usize,
        max_posts: usize,
        top: &[&str],
        reply: &str,
        visit: &mut dyn FnMut(&[RulePost]),
    ) {
        if !posts.is_empty() {
            visit(posts);
        }
        let i = posts.len();
        if i == max_posts {
            return;
        }
        for author in 0..(used + 1).min(AUTHORS.len()) {
            let parents = std::iter::once(None).chain((0..i).map(Some));
            for parent in parents {
                let bodies: Vec<&str> = if parent.is_some() { vec![reply] } else { top.to_vec() };
                for body in bodies {
                    posts.push(RulePost {
                        author: AUTHORS[author].to_string(),
                        parent,
                        body: body.to_string(),
                    });
                    step(posts, used.max(author + 1), max_posts, top, reply, visit);
                    posts.pop();
                }
            }
        }
    }
    let mut posts = Vec::with_capacity(max_posts);
    step(&mut posts, 0, max_posts, top_bodies, reply_body, &mut visit);
}
