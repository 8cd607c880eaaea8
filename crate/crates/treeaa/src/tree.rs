//! Labeled trees: edge-list parsing, paths, convex hulls, projections,
//! the Euler list and prefix algebra on paths.
//!
//! Vertices are addressed by [`VertexId`], the rank of the label in
//! bytewise lexicographic order. The smallest label therefore always has
//! id 0, which is both the Euler-list root and the path-finding start.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("edge list is empty")]
    EmptyInput,
    #[error("line {line}: edge {a} - {b} closes a cycle")]
    CycleDetected { line: usize, a: String, b: String },
    #[error("edges leave {components} disconnected components")]
    Disconnected { components: usize },
    #[error("line {line}: duplicate edge {a} - {b}")]
    DuplicateEdge { line: usize, a: String, b: String },
    #[error("line {line}: expected two labels, found {found}")]
    MalformedLine { line: usize, found: usize },
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("vertex set is empty")]
    EmptySet,
    #[error("paths start at different vertices")]
    DistinctStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(usize);

impl VertexId {
    pub fn new(index: usize) -> Self {
        VertexId(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// An undirected tree whose vertices carry unique text labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    labels: Vec<String>,
    ids: BTreeMap<String, VertexId>,
    adjacency: Vec<Vec<VertexId>>,
}

/// Parse the whitespace separated edge-list format.
///
/// Blank lines and lines starting with `#` are ignored. A document whose
/// only content line holds a single label describes a one-vertex tree.
pub fn parse_tree(text: &str) -> Result<LabeledTree, TreeError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        lines.push((i + 1, tokens));
    }
    match lines.as_slice() {
        [] => Err(TreeError::EmptyInput),
        [(_, tokens)] if tokens.len() == 1 => LabeledTree::single(tokens[0]),
        _ => {
            let mut edges = Vec::with_capacity(lines.len());
            for (line, tokens) in &lines {
                if tokens.len() != 2 {
                    return Err(TreeError::MalformedLine {
                        line: *line,
                        found: tokens.len(),
                    });
                }
                edges.push((*line, tokens[0], tokens[1]));
            }
            LabeledTree::build(&edges)
        }
    }
}

impl LabeledTree {
    pub fn single(label: &str) -> Result<Self, TreeError> {
        if label.is_empty() {
            return Err(TreeError::EmptyInput);
        }
        let mut ids = BTreeMap::new();
        ids.insert(label.to_string(), VertexId(0));
        Ok(LabeledTree {
            labels: vec![label.to_string()],
            ids,
            adjacency: vec![Vec::new()],
        })
    }

    /// Build a tree from label pairs. Errors report 1-based edge positions.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self, TreeError> {
        let numbered: Vec<(usize, &str, &str)> = edges
            .iter()
            .enumerate()
            .map(|(i, (a, b))| (i + 1, a.as_ref(), b.as_ref()))
            .collect();
        if numbered.is_empty() {
            return Err(TreeError::EmptyInput);
        }
        Self::build(&numbered)
    }

    fn build(edges: &[(usize, &str, &str)]) -> Result<Self, TreeError> {
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for &(_, a, b) in edges {
            names.insert(a);
            names.insert(b);
        }
        let labels: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let ids: BTreeMap<String, VertexId> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), VertexId(i)))
            .collect();

        let mut adjacency = vec![Vec::new(); labels.len()];
        let mut seen = BTreeSet::new();
        let mut dsu = UnionFind::new(labels.len());
        for &(line, a, b) in edges {
            let (u, v) = (ids[a].0, ids[b].0);
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(TreeError::DuplicateEdge {
                    line,
                    a: a.to_string(),
                    b: b.to_string(),
                });
            }
            if !dsu.union(u, v) {
                return Err(TreeError::CycleDetected {
                    line,
                    a: a.to_string(),
                    b: b.to_string(),
                });
            }
            adjacency[u].push(VertexId(v));
            adjacency[v].push(VertexId(u));
        }
        let components = dsu.components();
        if components != 1 {
            return Err(TreeError::Disconnected { components });
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(LabeledTree {
            labels,
            ids,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.labels.len()).map(VertexId)
    }

    /// The vertex with the lexicographically smallest label.
    pub fn root(&self) -> VertexId {
        VertexId(0)
    }

    pub fn label(&self, v: VertexId) -> &str {
        &self.labels[v.0]
    }

    pub fn vertex(&self, label: &str) -> Result<VertexId, TreeError> {
        self.ids
            .get(label)
            .copied()
            .ok_or_else(|| TreeError::UnknownVertex(label.to_string()))
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.0 < self.labels.len()
    }

    /// Neighbours in ascending label order.
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v.0]
    }

    pub fn adjacent(&self, u: VertexId, v: VertexId) -> bool {
        self.contains(u) && self.adjacency[u.0].binary_search(&v).is_ok()
    }

    /// Edges as `(smaller id, larger id)`, sorted.
    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        let mut out = Vec::with_capacity(self.len().saturating_sub(1));
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                if u < v.0 {
                    out.push((VertexId(u), v));
                }
            }
        }
        out
    }

    /// Render in the edge-list format accepted by [`parse_tree`].
    pub fn to_edge_list(&self) -> String {
        if self.len() == 1 {
            return format!("{}\n", self.labels[0]);
        }
        let mut out = String::new();
        for (u, v) in self.edges() {
            out.push_str(self.label(u));
            out.push(' ');
            out.push_str(self.label(v));
            out.push('\n');
        }
        out
    }

    fn check(&self, v: VertexId) -> Result<(), TreeError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(TreeError::UnknownVertex(v.to_string()))
        }
    }

    /// BFS distances and parent pointers from `source`.
    pub fn bfs(&self, source: VertexId) -> (Vec<usize>, Vec<Option<VertexId>>) {
        let mut dist = vec![usize::MAX; self.len()];
        let mut parent = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[source.0] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u.0] {
                if dist[w.0] == usize::MAX {
                    dist[w.0] = dist[u.0] + 1;
                    parent[w.0] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        (dist, parent)
    }

    pub fn distance(&self, u: VertexId, v: VertexId) -> Result<usize, TreeError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.bfs(u).0[v.0])
    }

    /// The unique path from `u` to `v`.
    pub fn path_between(&self, u: VertexId, v: VertexId) -> Result<TreePath, TreeError> {
        self.check(u)?;
        self.check(v)?;
        // BFS from v so the parent walk from u yields u..v in order.
        let (_, parent) = self.bfs(v);
        let mut vertices = vec![u];
        let mut cur = u;
        while cur != v {
            cur = parent[cur.0].expect("tree is connected");
            vertices.push(cur);
        }
        Ok(TreePath { vertices })
    }

    /// Vertex set of the smallest subtree containing every vertex of `set`.
    pub fn convex_hull<I>(&self, set: I) -> Result<BTreeSet<VertexId>, TreeError>
    where
        I: IntoIterator<Item = VertexId>,
    {
        let mut member = vec![false; self.len()];
        let mut anchor = None;
        for v in set {
            self.check(v)?;
            member[v.0] = true;
            anchor.get_or_insert(v);
        }
        let anchor = anchor.ok_or(TreeError::EmptySet)?;

        // Rooted at a member, w is in the hull iff its subtree holds a member.
        let (dist, parent) = self.bfs(anchor);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(dist[i]));
        let mut has = member;
        for &i in &order {
            if has[i] {
                if let Some(p) = parent[i] {
                    has[p.0] = true;
                }
            }
        }
        Ok(self.vertices().filter(|v| has[v.0]).collect())
    }

    /// The vertex of `path` closest to `v`.
    pub fn project_onto_path(&self, path: &TreePath, v: VertexId) -> Result<VertexId, TreeError> {
        self.check(v)?;
        self.validate_path(path.vertices())?;
        let (dist, _) = self.bfs(v);
        let best = path
            .vertices()
            .iter()
            .copied()
            .min_by_key(|w| dist[w.0])
            .expect("paths are non-empty");
        Ok(best)
    }

    /// Both endpoints of a longest path, found by double BFS.
    pub fn diameter_endpoints(&self) -> (VertexId, VertexId) {
        let far = |dist: &[usize]| {
            let mut best = 0;
            for (i, &d) in dist.iter().enumerate() {
                if d > dist[best] {
                    best = i;
                }
            }
            VertexId(best)
        };
        let a = far(&self.bfs(self.root()).0);
        let b = far(&self.bfs(a).0);
        (a, b)
    }

    pub fn diameter(&self) -> usize {
        let (a, b) = self.diameter_endpoints();
        self.bfs(a).0[b.0]
    }

    /// DFS visit list from `root`, visiting children in label order and
    /// recording a vertex again each time the walk returns to it.
    pub fn euler_list(&self, root: VertexId) -> Result<EulerList, TreeError> {
        self.check(root)?;
        let mut entries = Vec::with_capacity(2 * self.len());
        let mut stack: Vec<(VertexId, Option<VertexId>, usize)> = vec![(root, None, 0)];
        entries.push(root);
        while let Some(top) = stack.last_mut() {
            let (v, parent, next) = *top;
            let children = &self.adjacency[v.0];
            match children[next..].iter().position(|&c| Some(c) != parent) {
                Some(offset) => {
                    let child = children[next + offset];
                    top.2 = next + offset + 1;
                    entries.push(child);
                    stack.push((child, Some(v), 0));
                }
                None => {
                    stack.pop();
                    if let Some(&(up, _, _)) = stack.last() {
                        entries.push(up);
                    }
                }
            }
        }
        let mut index_of = vec![Vec::new(); self.len()];
        for (i, v) in entries.iter().enumerate() {
            index_of[v.0].push(i + 1);
        }
        Ok(EulerList { entries, index_of })
    }

    fn validate_path(&self, vertices: &[VertexId]) -> Result<(), TreeError> {
        if vertices.is_empty() {
            return Err(TreeError::InvalidPath("empty".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, &v) in vertices.iter().enumerate() {
            if !self.contains(v) {
                return Err(TreeError::InvalidPath(format!("unknown vertex {v}")));
            }
            if !seen.insert(v) {
                return Err(TreeError::InvalidPath(format!(
                    "vertex {} repeats",
                    self.label(v)
                )));
            }
            if i > 0 && !self.adjacent(vertices[i - 1], v) {
                return Err(TreeError::InvalidPath(format!(
                    "{} and {} are not adjacent",
                    self.label(vertices[i - 1]),
                    self.label(v)
                )));
            }
        }
        Ok(())
    }
}

/// A non-empty simple path of adjacent vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreePath {
    vertices: Vec<VertexId>,
}

impl TreePath {
    pub fn new(tree: &LabeledTree, vertices: Vec<VertexId>) -> Result<Self, TreeError> {
        tree.validate_path(&vertices)?;
        Ok(TreePath { vertices })
    }

    pub fn from_labels<S: AsRef<str>>(tree: &LabeledTree, labels: &[S]) -> Result<Self, TreeError> {
        let vertices = labels
            .iter()
            .map(|l| tree.vertex(l.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(tree, vertices)
    }

    pub fn single(v: VertexId) -> Self {
        TreePath { vertices: vec![v] }
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of edges.
    pub fn edge_len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn first(&self) -> VertexId {
        self.vertices[0]
    }

    pub fn last(&self) -> VertexId {
        *self.vertices.last().expect("paths are non-empty")
    }

    /// The vertex at 1-based position `k`.
    pub fn at(&self, k: usize) -> Option<VertexId> {
        k.checked_sub(1).and_then(|i| self.vertices.get(i).copied())
    }

    /// 1-based position of `v`.
    pub fn position(&self, v: VertexId) -> Option<usize> {
        self.vertices.iter().position(|&w| w == v).map(|i| i + 1)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertices.contains(&v)
    }

    /// The first `k` vertices; `k` is clamped to `1..=len`.
    pub fn truncated(&self, k: usize) -> TreePath {
        let k = k.clamp(1, self.vertices.len());
        TreePath {
            vertices: self.vertices[..k].to_vec(),
        }
    }

    pub fn labels<'t>(&self, tree: &'t LabeledTree) -> Vec<&'t str> {
        self.vertices.iter().map(|&v| tree.label(v)).collect()
    }
}

/// True iff `q` equals `p` or extends it.
pub fn is_prefix(p: &TreePath, q: &TreePath) -> bool {
    q.vertices.starts_with(&p.vertices)
}

pub fn longest_common_prefix(p: &TreePath, q: &TreePath) -> Result<TreePath, TreeError> {
    if p.first() != q.first() {
        return Err(TreeError::DistinctStart);
    }
    let k = p
        .vertices
        .iter()
        .zip(&q.vertices)
        .take_while(|(a, b)| a == b)
        .count();
    Ok(TreePath {
        vertices: p.vertices[..k].to_vec(),
    })
}

/// DFS visit list with the 1-based positions of every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EulerList {
    entries: Vec<VertexId>,
    index_of: Vec<Vec<usize>>,
}

impl EulerList {
    pub fn entries(&self) -> &[VertexId] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry at 1-based index `i`.
    pub fn at(&self, i: usize) -> Option<VertexId> {
        i.checked_sub(1).and_then(|k| self.entries.get(k).copied())
    }

    /// L(v): all 1-based indices holding `v`, ascending.
    pub fn indices(&self, v: VertexId) -> &[usize] {
        &self.index_of[v.0]
    }

    pub fn min_index(&self, v: VertexId) -> usize {
        self.index_of[v.0][0]
    }
}

struct UnionFind {
    parent: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            sets: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        self.sets -= 1;
        true
    }

    fn components(&self) -> usize {
        self.sets
    }
}
