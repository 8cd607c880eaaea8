//! Path agreement sub-protocols.
//!
//! The Fox path finder gradecasts `P(v_start, input)` and keeps the longest
//! prefixes supported by `n - t` senders with grade 2 (giving `P`) and with
//! grade at least 1 (giving `Q`). The legacy path finder agrees on an Euler
//! list index with real-valued AA and returns the path from the root to the
//! vertex at the rounded index.
//!
//! Path wire format: a big-endian `u32` vertex count, then per vertex a
//! big-endian `u32` byte length and the UTF-8 label. Decoded paths must be
//! valid simple paths starting at the smallest label.

use std::collections::BTreeMap;
use std::sync::Arc;

use bytes::{BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::gradecast::{GradedValue, Gradecast, Stage};
use crate::real_aa::{plan_iterations, RealAaError, RealAaParty};
use crate::sim::{Inbox, Outgoing, Protocol, Round};
use crate::tree::{EulerList, LabeledTree, TreeError, TreePath, VertexId};
use crate::tree_aa::closest_int;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathSelectError {
    #[error("no path reaches the support threshold")]
    NoSupport,
    #[error("path payload truncated")]
    Truncated,
    #[error("{0} trailing bytes after path")]
    Trailing(usize),
    #[error("label is not UTF-8")]
    BadLabel,
    #[error("path does not start at the start vertex")]
    WrongStart,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub fn encode_path(tree: &LabeledTree, path: &TreePath) -> Bytes {
    let labels = path.labels(tree);
    let size = 4 + labels.iter().map(|l| 4 + l.len()).sum::<usize>();
    let mut buf = BytesMut::with_capacity(size);
    buf.put_u32(labels.len() as u32);
    for l in labels {
        buf.put_u32(l.len() as u32);
        buf.put_slice(l.as_bytes());
    }
    buf.freeze()
}

pub fn decode_path(tree: &LabeledTree, bytes: &[u8]) -> Result<TreePath, PathSelectError> {
    fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<usize, PathSelectError> {
        let end = pos.checked_add(4).filter(|&e| e <= bytes.len()).ok_or(PathSelectError::Truncated)?;
        let v = u32::from_be_bytes(bytes[*pos..end].try_into().expect("4 bytes"));
        *pos = end;
        Ok(v as usize)
    }
    let mut pos = 0;
    let count = read_u32(bytes, &mut pos)?;
    if count > tree.len() {
        return Err(TreeError::InvalidPath(format!("{count} vertices in a tree of {}", tree.len())).into());
    }
    let mut vertices = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(bytes, &mut pos)?;
        let end = pos.checked_add(len).filter(|&e| e <= bytes.len()).ok_or(PathSelectError::Truncated)?;
        let label = std::str::from_utf8(&bytes[pos..end]).map_err(|_| PathSelectError::BadLabel)?;
        vertices.push(tree.vertex(label)?);
        pos = end;
    }
    if pos != bytes.len() {
        return Err(PathSelectError::Trailing(bytes.len() - pos));
    }
    let path = TreePath::new(tree, vertices)?;
    if path.first() != tree.root() {
        return Err(PathSelectError::WrongStart);
    }
    Ok(path)
}

/// A sender's gradecast path; `None` when the payload failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportedEntry {
    pub path: Option<TreePath>,
    pub grade: u8,
}

impl SupportedEntry {
    pub fn effective_grade(&self) -> u8 {
        if self.path.is_some() {
            self.grade
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportedPaths {
    pub entries: Vec<SupportedEntry>,
}

impl SupportedPaths {
    pub fn from_gradecast(tree: &LabeledTree, graded: &[GradedValue]) -> Self {
        let entries = graded
            .iter()
            .map(|g| SupportedEntry {
                path: g.value.as_deref().and_then(|b| decode_path(tree, b).ok()),
                grade: g.grade,
            })
            .collect();
        SupportedPaths { entries }
    }
}

/// The longest path that is a prefix of at least `threshold` entries of
/// grade at least `min_grade`.
pub fn supported_prefix(
    paths: &SupportedPaths,
    min_grade: u8,
    threshold: usize,
) -> Result<TreePath, PathSelectError> {
    let mut support: Vec<&TreePath> = paths
        .entries
        .iter()
        .filter(|e| e.effective_grade() >= min_grade.max(1))
        .filter_map(|e| e.path.as_ref())
        .collect();
    let mut depth = 0;
    loop {
        let mut children: BTreeMap<VertexId, Vec<&TreePath>> = BTreeMap::new();
        for p in &support {
            if let Some(&v) = p.vertices().get(depth) {
                children.entry(v).or_default().push(p);
            }
        }
        let best = children
            .into_iter()
            .filter(|(_, s)| s.len() >= threshold.max(1))
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| b.0.cmp(&a.0)));
        match best {
            Some((_, s)) => {
                support = s;
                depth += 1;
            }
            None => break,
        }
    }
    match support.first() {
        Some(p) if depth > 0 => Ok(p.truncated(depth)),
        _ => Err(PathSelectError::NoSupport),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoxPaths {
    pub p: TreePath,
    pub q: TreePath,
}

/// One party of the three-round Fox path finder.
#[derive(Debug, Clone)]
pub struct FoxPathFinderParty {
    tree: Arc<LabeledTree>,
    n: usize,
    t: usize,
    gc: Gradecast,
    result: Option<FoxPaths>,
}

impl FoxPathFinderParty {
    pub fn new(tree: Arc<LabeledTree>, n: usize, t: usize, input: VertexId) -> Result<Self, TreeError> {
        let own = tree.path_between(tree.root(), input)?;
        let gc = Gradecast::new(n, t, encode_path(&tree, &own), Default::default());
        Ok(FoxPathFinderParty {
            tree,
            n,
            t,
            gc,
            result: None,
        })
    }
}

impl Protocol for FoxPathFinderParty {
    type Output = FoxPaths;

    fn send(&mut self, round: Round) -> Vec<Outgoing> {
        Outgoing::broadcast(self.n, self.gc.message(Stage::of_round(round)))
    }

    fn receive(&mut self, round: Round, inbox: &Inbox) {
        let stage = Stage::of_round(round);
        self.gc.absorb(stage, inbox);
        if let Some(graded) = self.gc.result() {
            let paths = SupportedPaths::from_gradecast(&self.tree, graded);
            let fallback = TreePath::single(self.tree.root());
            let threshold = self.n - self.t;
            let p = supported_prefix(&paths, 2, threshold).unwrap_or_else(|_| fallback.clone());
            let q = supported_prefix(&paths, 1, threshold).unwrap_or(fallback);
            self.result = Some(FoxPaths { p, q });
        }
    }

    fn output(&self) -> Option<Self::Output> {
        self.result.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegacyPath {
    pub path: TreePath,
    pub index: usize,
    pub j: f64,
    pub rounded: i64,
}

/// The Euler vertex for a rounded index, clamped into the list.
pub fn euler_vertex(list: &EulerList, c: i64) -> VertexId {
    let k = c.clamp(1, list.len() as i64) as usize;
    list.at(k).expect("index clamped into the list")
}

/// One party of the legacy Euler-list path finder.
#[derive(Debug, Clone)]
pub struct LegacyPathFinderParty {
    tree: Arc<LabeledTree>,
    list: Arc<EulerList>,
    index: usize,
    real: RealAaParty,
    plan: u32,
}

impl LegacyPathFinderParty {
    pub fn new(
        tree: Arc<LabeledTree>,
        list: Arc<EulerList>,
        n: usize,
        t: usize,
        input: VertexId,
    ) -> Result<Self, RealAaError> {
        if !tree.contains(input) {
            return Err(RealAaError::InvalidParams(format!("unknown input vertex {input}")));
        }
        let plan = plan_iterations(n, t, 2.0 * tree.len() as f64, 1.0)?;
        let index = list.min_index(input);
        Ok(LegacyPathFinderParty {
            tree,
            list,
            index,
            real: RealAaParty::new(n, t, plan, index as f64),
            plan,
        })
    }

    pub fn rounds(&self) -> Round {
        3 * self.plan
    }
}

impl Protocol for LegacyPathFinderParty {
    type Output = LegacyPath;

    fn send(&mut self, round: Round) -> Vec<Outgoing> {
        self.real.send(round)
    }

    fn receive(&mut self, round: Round, inbox: &Inbox) {
        self.real.receive(round, inbox);
    }

    fn output(&self) -> Option<Self::Output> {
        let out = self.real.output()?;
        let rounded = closest_int(out.value).unwrap_or(self.index as i64);
        let end = euler_vertex(&self.list, rounded);
        let path = self
            .tree
            .path_between(self.tree.root(), end)
            .expect("Euler entries are tree vertices");
        Some(LegacyPath {
            path,
            index: self.index,
            j: out.value,
            rounded,
        })
    }
}
