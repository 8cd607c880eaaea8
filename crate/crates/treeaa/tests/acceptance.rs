//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! Runs as a plain binary. Pass criterion numbers to run a subset:
//! `cargo test --test acceptance -- 3 9`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use treeaa::bounds::{k_bound, k_bound_simple, lb_rounds, max_partition_product, BoundParams};
use treeaa::gradecast::{encode_message, GradecastParty, GradedValue, Stage};
use treeaa::harness::{
    assign_inputs, build_adversary, execute, generate_tree, run_experiment, AttackContext, ExperimentConfig, Format,
    InputAssignment, TreeKind, TreeSource, ADVERSARIES,
};
use treeaa::real_aa::{encode_value, plan_iterations, run_real_aa};
use treeaa::sim::{run_simulation, Adversary, AdversaryView, Outgoing, PartyId, SimConfig};
use treeaa::tree::{parse_tree, LabeledTree, TreePath, VertexId};
use treeaa::tree_aa::{closest_int, Mode, Phase, PhaseKind, Trace, TreeAaOutput};

const FIG3: &str = "v1 v2\nv2 v3\nv3 v6\nv3 v7\nv2 v4\nv4 v8\nv2 v5\n";
const MATRIX_NT: [(usize, usize); 3] = [(4, 1), (7, 2), (10, 3)];
const SEEDS: u64 = 100;

type Verdict = Result<String, String>;

// ---------------------------------------------------------------- oracles

/// Brute-force view of a tree over vertex indices, built from its edge list.
struct Oracle {
    adj: Vec<Vec<usize>>,
    edges: BTreeSet<(usize, usize)>,
}

impl Oracle {
    fn new(tree: &LabeledTree) -> Self {
        let mut adj = vec![Vec::new(); tree.len()];
        let mut edges = BTreeSet::new();
        for (a, b) in tree.edges() {
            let (a, b) = (a.index(), b.index());
            adj[a].push(b);
            adj[b].push(a);
            edges.insert((a.min(b), a.max(b)));
        }
        Oracle { adj, edges }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    fn dist_from(&self, s: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Parent of every vertex when rooted at `root`.
    fn parents(&self, root: usize) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.len()];
        let mut seen = vec![false; self.len()];
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &w in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(u);
                    stack.push(w);
                }
            }
        }
        parent
    }

    /// Hull by repeatedly peeling leaves outside `set`.
    fn hull(&self, set: &[usize]) -> Vec<bool> {
        let keep: BTreeSet<usize> = set.iter().copied().collect();
        let mut alive = vec![true; self.len()];
        let mut degree: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len())
            .filter(|&v| degree[v] <= 1 && !keep.contains(&v))
            .collect();
        while let Some(v) = queue.pop_front() {
            if !alive[v] {
                continue;
            }
            alive[v] = false;
            for &w in &self.adj[v] {
                if alive[w] {
                    degree[w] -= 1;
                    if degree[w] <= 1 && !keep.contains(&w) {
                        queue.push_back(w);
                    }
                }
            }
        }
        alive
    }

    fn max_pairwise(&self, vs: &[usize]) -> usize {
        let distinct: BTreeSet<usize> = vs.iter().copied().collect();
        let mut worst = 0;
        for &a in &distinct {
            let d = self.dist_from(a);
            for &b in &distinct {
                worst = worst.max(d[b]);
            }
        }
        worst
    }

    fn diameter(&self) -> usize {
        (0..self.len())
            .map(|s| self.dist_from(s).into_iter().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    fn is_walk_from(&self, start: usize, path: &[usize]) -> bool {
        path.first() == Some(&start) && path.windows(2).all(|w| self.adjacent(w[0], w[1]))
    }
}

fn ids(vs: &[VertexId]) -> Vec<usize> {
    vs.iter().map(|v| v.index()).collect()
}

fn starts_with(q: &TreePath, p: &TreePath) -> bool {
    q.vertices().starts_with(p.vertices())
}

/// Smallest R with d t^R <= R^R (n - 2t)^R, in exact integers.
fn plan_oracle(n: usize, t: usize, d: u64) -> u32 {
    let gap = (n - 2 * t) as u128;
    for r in 0u32.. {
        let lhs = (d as u128) * (t as u128).pow(r);
        let rhs = (r as u128).pow(r) * gap.pow(r);
        if lhs <= rhs {
            return r;
        }
    }
    unreachable!()
}

fn random_tree(rng: &mut ChaCha8Rng, size: usize) -> LabeledTree {
    let mut names: Vec<String> = (0..size).map(|i| format!("n{}", i * 7919 % 10007)).collect();
    names.shuffle(rng);
    if size == 1 {
        return LabeledTree::single(&names[0]).unwrap();
    }
    let edges: Vec<(String, String)> = (1..size)
        .map(|i| (names[rng.gen_range(0..i)].clone(), names[i].clone()))
        .collect();
    LabeledTree::from_edges(&edges).unwrap()
}

fn violations(list: &[String]) -> String {
    let shown: Vec<&str> = list.iter().take(3).map(String::as_str).collect();
    format!("{} violations, e.g. {}", list.len(), shown.join("; "))
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("{what} took {elapsed:.2?}, limit {limit:?}"))
    }
}

// ---------------------------------------------------------------- criterion 1

fn euler_exactness() -> Verdict {
    let tree = parse_tree(FIG3).map_err(|e| e.to_string())?;
    let root = tree.vertex("v1").map_err(|e| e.to_string())?;
    let start = Instant::now();
    let list = tree.euler_list(root).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let got: Vec<&str> = list.entries().iter().map(|&v| tree.label(v)).collect();
    let want = [
        "v1", "v2", "v3", "v6", "v3", "v7", "v3", "v2", "v4", "v8", "v4", "v2", "v5", "v2", "v1",
    ];
    if got != want {
        return Err(format!("got {got:?}"));
    }
    within(elapsed, Duration::from_millis(1), "euler_list")?;
    Ok(format!("15 entries match, {elapsed:.1?}"))
}

// ---------------------------------------------------------------- criterion 2

fn euler_properties(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = rng.gen_range(1..=60);
    let tree = random_tree(&mut rng, size);
    let oracle = Oracle::new(&tree);
    let mut bad = Vec::new();
    let roots = [tree.root().index(), rng.gen_range(0..size)];
    for root in roots {
        let list = tree.euler_list(VertexId::new(root)).unwrap();
        // 1-based positions.
        let l: Vec<usize> = ids(list.entries());
        let mut occ: Vec<Vec<usize>> = vec![Vec::new(); size];
        for (i, &v) in l.iter().enumerate() {
            occ[v].push(i + 1);
        }
        let tag = format!("seed {seed} root {root}");
        if size > 1 && !l.windows(2).all(|w| oracle.adjacent(w[0], w[1])) {
            bad.push(format!("{tag}: property 1"));
        }
        if l.len() > 2 * size || occ.iter().any(Vec::is_empty) {
            bad.push(format!("{tag}: property 2"));
        }
        let parent = oracle.parents(root);
        let ancestors = |v: usize| {
            let mut chain = vec![v];
            let mut cur = v;
            while let Some(p) = parent[cur] {
                chain.push(p);
                cur = p;
            }
            chain
        };
        let chains: Vec<Vec<usize>> = (0..size).map(ancestors).collect();
        for v in 0..size {
            let (lo, hi) = (occ[v][0], *occ[v].last().unwrap());
            for u in 0..size {
                let in_subtree = chains[u].contains(&v);
                let inside = occ[u].iter().all(|&i| lo <= i && i <= hi);
                if in_subtree != inside {
                    bad.push(format!("{tag}: property 3 for v={v} u={u}"));
                }
            }
        }
        for v in 0..size {
            let av: BTreeSet<usize> = chains[v].iter().copied().collect();
            for w in v..size {
                let lca = *chains[w].iter().find(|x| av.contains(x)).unwrap();
                for &i in &occ[v] {
                    for &j in &occ[w] {
                        let (lo, hi) = (i.min(j), i.max(j));
                        if !occ[lca].iter().any(|&k| lo <= k && k <= hi) {
                            bad.push(format!("{tag}: property 4 for {v},{w} at {i},{j}"));
                        }
                    }
                }
            }
        }
    }
    bad
}

fn euler_oracle_suite() -> Verdict {
    let start = Instant::now();
    let bad: Vec<String> = (0..500u64).into_par_iter().flat_map(euler_properties).collect();
    let elapsed = start.elapsed();
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    within(elapsed, Duration::from_secs(10), "500 trees")?;
    Ok(format!("500 trees, two roots each, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 3

/// Byzantine party whose every message is scripted: one base-3 digit per
/// (round, honest receiver), meaning v, v' or ⊥.
struct Scripted {
    byz: PartyId,
    script: u32,
    alphabet: [Bytes; 2],
}

impl Adversary for Scripted {
    fn corrupt(&mut self, _: &AdversaryView<'_>, _: &mut ChaCha8Rng) -> BTreeSet<PartyId> {
        BTreeSet::from([self.byz])
    }

    fn byzantine_send(&mut self, view: &AdversaryView<'_>, _: PartyId, _: &mut ChaCha8Rng) -> Vec<Outgoing> {
        let stage = Stage::of_round(view.round);
        let mut out = Vec::new();
        for (j, to) in view.honest().into_iter().enumerate() {
            let digit = (self.script / 3u32.pow((view.round - 1) * 3 + j as u32)) % 3;
            let slot = (digit < 2).then(|| self.alphabet[digit as usize].clone());
            let payload = match stage {
                Stage::Send => match slot {
                    Some(v) => encode_message(stage, &[Some(v)]),
                    None => continue,
                },
                _ => encode_message(stage, &vec![slot; view.n]),
            };
            out.push(Outgoing { to, payload });
        }
        out
    }
}

/// Integrity, consistency and termination over the final honest parties.
fn gradecast_verdict(
    inputs: &[Bytes],
    outputs: &BTreeMap<PartyId, Vec<GradedValue>>,
    rounds: u32,
    n: usize,
) -> Result<(), String> {
    if rounds != 3 {
        return Err(format!("took {rounds} rounds"));
    }
    let honest: Vec<&PartyId> = outputs.keys().collect();
    for (p, out) in outputs {
        if out.len() != n {
            return Err(format!("{p} output has {} slots", out.len()));
        }
        for q in &honest {
            let got = &out[q.slot()];
            if got.grade != 2 || got.value.as_ref() != Some(&inputs[q.slot()]) {
                return Err(format!("integrity: {p} got {got:?} from honest {q}"));
            }
        }
    }
    for k in 0..n {
        for a in outputs.values() {
            for b in outputs.values() {
                let (x, y) = (&a[k], &b[k]);
                if x.grade.abs_diff(y.grade) > 1 {
                    return Err(format!("consistency: grades {} and {} for slot {k}", x.grade, y.grade));
                }
                if x.grade > 0 && y.grade > 0 && x.value != y.value {
                    return Err(format!("consistency: values differ for slot {k}"));
                }
            }
        }
    }
    Ok(())
}

fn gradecast_definition() -> Verdict {
    let start = Instant::now();
    let v = Bytes::from_static(b"v");
    let w = Bytes::from_static(b"v'");
    let branches = 3u32.pow(9);
    let mut jobs = Vec::new();
    for byz in 1..=4u32 {
        for mask in 0..8u32 {
            jobs.push((byz, mask));
        }
    }
    let exhaustive: Vec<String> = jobs
        .par_iter()
        .flat_map_iter(|&(byz, mask)| {
            let (v, w) = (v.clone(), w.clone());
            let inputs: Vec<Bytes> = (0..4)
                .map(|i| if mask >> (i % 3) & 1 == 1 { w.clone() } else { v.clone() })
                .collect();
            (0..branches).filter_map(move |script| {
                let parties = inputs.iter().map(|x| GradecastParty::new(4, 1, x.clone())).collect();
                let mut adv = Scripted {
                    byz: PartyId::new(byz),
                    script,
                    alphabet: [v.clone(), w.clone()],
                };
                let cfg = SimConfig { n: 4, t: 1, seed: 0, round_cap: 10 };
                let res = run_simulation(&cfg, parties, &mut adv)
                    .map_err(|e| e.to_string())
                    .and_then(|o| gradecast_verdict(&inputs, &o.outputs, o.rounds, 4));
                res.err().map(|e| format!("byz p{byz} inputs {mask:03b} script {script}: {e}"))
            })
        })
        .collect();
    let exhaustive_runs = jobs.len() as u32 * branches;

    let mut registry_jobs = Vec::new();
    for (n, t) in [(7usize, 2usize), (10, 3)] {
        for adv in ADVERSARIES {
            for seed in 0..200u64 {
                registry_jobs.push((n, t, adv, seed));
            }
        }
    }
    let registry: Vec<String> = registry_jobs
        .par_iter()
        .filter_map(|&(n, t, adv, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Bytes> = (0..n).map(|_| encode_value(rng.gen_range(0.0..1000.0))).collect();
            let phases = vec![Phase {
                first_round: 1,
                rounds: 3,
                kind: PhaseKind::RealAa { d_bound: 1000.0, iterations: 1 },
            }];
            let mut adversary = build_adversary(adv, AttackContext { n, t, tree: None, phases }).unwrap();
            let parties = inputs.iter().map(|x| GradecastParty::new(n, t, x.clone())).collect();
            let cfg = SimConfig { n, t, seed, round_cap: 30 };
            let res = run_simulation(&cfg, parties, adversary.as_mut())
                .map_err(|e| e.to_string())
                .and_then(|o| {
                    if o.outputs.len() + t < n {
                        return Err(format!("only {} outputs", o.outputs.len()));
                    }
                    gradecast_verdict(&inputs, &o.outputs, o.rounds, n)
                });
            res.err().map(|e| format!("{adv} n={n} seed {seed}: {e}"))
        })
        .collect();
    let elapsed = start.elapsed();
    let bad: Vec<String> = exhaustive.into_iter().chain(registry).collect();
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    within(elapsed, Duration::from_secs(60), "gradecast checks")?;
    Ok(format!(
        "{exhaustive_runs} exhaustive n=4 branches, {} registry runs, {elapsed:.2?}",
        registry_jobs.len()
    ))
}

// ---------------------------------------------------------------- criterion 4

fn real_aa_claims() -> Verdict {
    let start = Instant::now();
    let mut jobs = Vec::new();
    for n in [4usize, 7, 10] {
        let t = (n - 1) / 3;
        for d in [100u64, 1_000, 1_000_000] {
            for adv in ADVERSARIES {
                for seed in 0..SEEDS {
                    jobs.push((n, t, d, adv, seed));
                }
            }
        }
    }
    let bad: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(n, t, d, adv, seed)| {
            let df = d as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4);
            let inputs: Vec<f64> = (0..n)
                .map(|i| if seed % 2 == 0 { rng.gen_range(0.0..=df) } else { (i % 2) as f64 * df })
                .collect();
            let plan = plan_iterations(n, t, df, 1.0).unwrap();
            let phases = vec![Phase {
                first_round: 1,
                rounds: 3 * plan,
                kind: PhaseKind::RealAa { d_bound: df, iterations: plan },
            }];
            let mut adversary = build_adversary(adv, AttackContext { n, t, tree: None, phases }).unwrap();
            let tag = format!("{adv} n={n} d={d} seed {seed}");
            let out = match run_real_aa(&inputs, t, df, 1.0, adversary.as_mut(), seed) {
                Ok(o) => o,
                Err(e) => return Some(format!("{tag}: {e}")),
            };
            if out.outputs.len() + t < n {
                return Some(format!("{tag}: {} outputs", out.outputs.len()));
            }
            let honest: Vec<f64> = out.outputs.keys().map(|p| inputs[p.slot()]).collect();
            let lo = honest.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = honest.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for o in out.outputs.values() {
                if o.value < lo || o.value > hi {
                    return Some(format!("{tag}: output {} outside [{lo}, {hi}]", o.value));
                }
            }
            for r in 1..=plan as usize {
                let vals: Vec<f64> = out.outputs.values().map(|o| o.trajectory[r]).collect();
                let range = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    - vals.iter().copied().fold(f64::INFINITY, f64::min);
                let rf = r as f64;
                let bound = df * (t as f64).powi(r as i32) / (rf.powi(r as i32) * ((n - 2 * t) as f64).powi(r as i32));
                if range > bound + 2f64.powi(-40) {
                    return Some(format!("{tag}: range {range} after {r} iterations exceeds {bound}"));
                }
            }
            None
        })
        .collect();
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    Ok(format!("{} runs, {:.2?}", jobs.len(), start.elapsed()))
}

// ---------------------------------------------------------------- criterion 5

fn round_cap() -> Verdict {
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut checked = 0;
    for delta in [16u64, 1_000, 1_000_000, 1_000_000_000] {
        let lg = (delta as f64).log2();
        let cap = 7.0 * lg / lg.log2() + 3.0;
        for (n, t) in MATRIX_NT {
            let plan = plan_iterations(n, t, delta as f64, 1.0).map_err(|e| e.to_string())?;
            let oracle = plan_oracle(n, t, delta);
            if plan != oracle {
                bad.push(format!("plan({n},{t},{delta}) = {plan}, oracle {oracle}"));
            }
            if (3 * plan) as f64 >= cap {
                bad.push(format!("3*{plan} >= {cap:.3} for d/eps={delta} n={n} t={t}"));
            }
            checked += 1;
        }
    }
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    within(start.elapsed(), Duration::from_secs(1), "cap check")?;
    Ok(format!("{checked} (d/eps, n, t) cases"))
}

// ---------------------------------------------------------------- criteria 6-8: the tree matrix

struct MatrixTree {
    name: &'static str,
    tree: Arc<LabeledTree>,
    oracle: Oracle,
    diameter: usize,
}

fn matrix_trees() -> Vec<MatrixTree> {
    let build = |name: &'static str, tree: LabeledTree| {
        let oracle = Oracle::new(&tree);
        let diameter = oracle.diameter();
        MatrixTree {
            name,
            tree: Arc::new(tree),
            oracle,
            diameter,
        }
    };
    vec![
        build("path(1000)", generate_tree(TreeKind::Path, 1000, 0).unwrap()),
        build("star(50)", generate_tree(TreeKind::Star, 50, 0).unwrap()),
        build("caterpillar(300)", generate_tree(TreeKind::Caterpillar, 300, 0).unwrap()),
        build("binary(255)", generate_tree(TreeKind::Binary, 255, 0).unwrap()),
        build("figure-3", parse_tree(FIG3).unwrap()),
        build("random(200)", generate_tree(TreeKind::Random, 200, 7).unwrap()),
    ]
}

struct RunResult {
    tree: usize,
    n: usize,
    t: usize,
    mode: Mode,
    /// Criterion 6 violations.
    errors: Vec<String>,
    rounds: u32,
}

/// Path-finder guarantees on the traces of the honest parties.
fn path_checks(tree: &LabeledTree, oracle: &Oracle, hull: &[bool], outs: &[&TreeAaOutput]) -> Vec<String> {
    let mut bad = Vec::new();
    let root = tree.root().index();
    let touches = |p: &TreePath| p.vertices().iter().any(|v| hull[v.index()]);
    let walk = |p: &TreePath| oracle.is_walk_from(root, &ids(p.vertices()));
    let mut fox = Vec::new();
    let mut legacy = Vec::new();
    for o in outs {
        match &o.trace {
            Trace::Final { paths, .. } => fox.push(paths),
            Trace::Legacy { finder, .. } => legacy.push(&finder.path),
            Trace::Trivial => bad.push("trivial trace on a non-trivial tree".into()),
        }
    }
    for p in &fox {
        if !walk(&p.p) || !walk(&p.q) {
            bad.push("P or Q is not a root path".into());
        }
        if !touches(&p.p) {
            bad.push("P misses the hull".into());
        }
        for q in &fox {
            if !starts_with(&q.q, &p.p) {
                bad.push("P is not a prefix of some Q'".into());
            }
        }
    }
    for a in &legacy {
        if !walk(a) {
            bad.push("legacy path is not a root path".into());
        }
        if !touches(a) {
            bad.push("legacy path misses the hull".into());
        }
        for b in &legacy {
            let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
            if !starts_with(long, short) || long.len() - short.len() > 1 {
                bad.push("legacy paths are not nested within one vertex".into());
            }
        }
    }
    bad
}

fn run_matrix() -> (Vec<MatrixTree>, Vec<RunResult>, Duration) {
    let trees = matrix_trees();
    let mut jobs = Vec::new();
    for ti in 0..trees.len() {
        for (n, t) in MATRIX_NT {
            for adv in ADVERSARIES {
                for seed in 0..SEEDS {
                    for mode in [Mode::Final, Mode::Legacy] {
                        jobs.push((ti, n, t, adv, seed, mode));
                    }
                }
            }
        }
    }
    let start = Instant::now();
    let results = jobs
        .par_iter()
        .map(|&(ti, n, t, adv, seed, mode)| {
            let mt = &trees[ti];
            let assignment = if seed % 2 == 0 {
                InputAssignment::RandomValid
            } else {
                InputAssignment::EndpointsOfDiameter
            };
            let tag = format!("{} {} n={n} {adv} seed {seed}", mt.name, mode.name());
            let mut result = RunResult { tree: ti, n, t, mode, errors: Vec::new(), rounds: 0 };
            let inputs = assign_inputs(&mt.tree, &assignment, n, seed).unwrap();
            let run = match execute(&mt.tree, mode, t, inputs.clone(), adv, seed) {
                Ok(r) => r,
                Err(e) => {
                    result.errors.push(format!("{tag}: {e}"));
                    return result;
                }
            };
            result.rounds = run.outcome.rounds;
            let outs = &run.outcome.outputs;
            if outs.len() + t < n {
                result.errors.push(format!("{tag}: {} outputs", outs.len()));
            }
            let honest_inputs: Vec<usize> = outs.keys().map(|p| inputs[p.slot()].index()).collect();
            let hull = mt.oracle.hull(&honest_inputs);
            let got: Vec<usize> = outs.values().map(|o| o.vertex.index()).collect();
            if let Some(&v) = got.iter().find(|&&v| !hull[v]) {
                result.errors.push(format!("{tag}: output {} outside the hull", mt.tree.label(VertexId::new(v))));
            }
            let spread = mt.oracle.max_pairwise(&got);
            if spread > 1 {
                result.errors.push(format!("{tag}: outputs {spread} apart"));
            }
            let traced: Vec<&TreeAaOutput> = outs.values().collect();
            for e in path_checks(&mt.tree, &mt.oracle, &hull, &traced) {
                result.errors.push(format!("{tag}: {e}"));
            }
            result
        })
        .collect();
    (trees, results, start.elapsed())
}

struct Ctx {
    matrix: Option<(Vec<MatrixTree>, Vec<RunResult>, Duration)>,
}

impl Ctx {
    fn matrix(&mut self) -> &(Vec<MatrixTree>, Vec<RunResult>, Duration) {
        self.matrix.get_or_insert_with(run_matrix)
    }
}

fn end_to_end(ctx: &mut Ctx) -> Verdict {
    let (_, results, elapsed) = ctx.matrix();
    let bad: Vec<String> = results.iter().flat_map(|r| r.errors.iter().cloned()).collect();
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    within(*elapsed, Duration::from_secs(300), "tree matrix")?;
    Ok(format!("{} runs in both modes, {elapsed:.1?}", results.len()))
}

fn round_accounting(ctx: &mut Ctx) -> Verdict {
    let (trees, results, _) = ctx.matrix();
    let mut bad = Vec::new();
    for r in results {
        let mt = &trees[r.tree];
        let inner = plan_oracle(r.n, r.t, mt.diameter as u64);
        let want = match r.mode {
            Mode::Final => 3 + 3 * inner,
            Mode::Legacy => 3 * plan_oracle(r.n, r.t, 2 * mt.tree.len() as u64) + 3 * inner,
        };
        if r.rounds != want {
            bad.push(format!("{} {} n={}: {} rounds, expected {want}", mt.name, r.mode.name(), r.n, r.rounds));
        }
    }
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    Ok(format!("{} runs match exactly", results.len()))
}

fn bounds_consistency(ctx: &mut Ctx) -> Verdict {
    let (trees, results, _) = ctx.matrix();
    let (mut lb_bad, mut dom_bad, mut part_bad) = (Vec::new(), Vec::new(), Vec::new());
    let mut configs = BTreeSet::new();
    for r in results.iter().filter(|r| r.mode == Mode::Final) {
        let mt = &trees[r.tree];
        let lb = lb_rounds(r.n, r.t, mt.diameter as f64).map_err(|e| e.to_string())?;
        if lb > r.rounds {
            lb_bad.push(format!("{} n={}: lb_rounds {lb} > observed {}", mt.name, r.n, r.rounds));
        }
        configs.insert((r.tree, r.n, r.t));
    }
    for &(ti, n, t) in &configs {
        let d = trees[ti].diameter as f64;
        for rounds in 1..=t as u32 {
            let p = BoundParams { n, t, rounds, d };
            let (full, simple) = (k_bound(&p).unwrap(), k_bound_simple(&p).unwrap());
            if full < simple {
                dom_bad.push(format!(
                    "k_bound {full:.4} < k_bound_simple {simple:.4} at n={n} t={t} R={rounds} D={d}"
                ));
            }
        }
    }
    for t in 0..=12usize {
        for r in 1..=12u32 {
            let best = best_product(t, r as usize);
            if max_partition_product(t, r).0 != best as f64 {
                part_bad.push(format!("partition product t={t} R={r}"));
            }
        }
    }
    let part = |name: &str, bad: &[String]| {
        if bad.is_empty() {
            format!("{name} ok")
        } else {
            format!("{name} {}", violations(bad))
        }
    };
    let detail = format!(
        "{} configurations; {}; {}; {}",
        configs.len(),
        part("lb_rounds <= observed", &lb_bad),
        part("k_bound >= k_bound_simple", &dom_bad),
        part("partitions t,R <= 12", &part_bad),
    );
    if lb_bad.is_empty() && dom_bad.is_empty() && part_bad.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Exhaustive best product of `r` positive integers summing to at most `t`.
fn best_product(t: usize, r: usize) -> u64 {
    if r == 0 {
        return 1;
    }
    (1..=t)
        .filter(|&first| t - first >= r - 1)
        .map(|first| first as u64 * best_product(t - first, r - 1))
        .max()
        .unwrap_or(0)
}

// ---------------------------------------------------------------- criterion 9

fn closest_int_properties() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = Vec::new();
    let ci = |x: f64| closest_int(x).unwrap();
    for _ in 0..1_000_000 {
        let k: i64 = rng.gen_range(-1_000_000..1_000_000);
        let j = match rng.gen_range(0..4) {
            0 => k as f64 + 0.5,
            1 => k as f64,
            _ => k as f64 + rng.gen::<f64>(),
        };
        let c = ci(j);
        let oracle = (j + 0.5).floor() as i64;
        if c != oracle || (c as f64 - j).abs() > 0.5 {
            bad.push(format!("closest_int({j}) = {c}"));
        }
        if j == k as f64 + 0.5 && c != k + 1 {
            bad.push(format!("half-up fails at {j}"));
        }
        let step = if rng.gen_bool(0.25) { 1.0 } else { rng.gen_range(-1.0..=1.0) };
        let j2 = j + step;
        if ci(j2).abs_diff(c) > 1 {
            bad.push(format!("agreement fails for {j}, {j2}"));
        }
        let (a, b) = (k, k + rng.gen_range(0..50));
        let inner = if rng.gen_bool(0.2) {
            [a as f64, b as f64][rng.gen_range(0..2)]
        } else {
            rng.gen_range(a as f64..=b as f64)
        };
        let ci_inner = ci(inner);
        if ci_inner < a || ci_inner > b {
            bad.push(format!("validity fails for {inner} in [{a}, {b}]"));
        }
    }
    let elapsed = start.elapsed();
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    within(elapsed, Duration::from_secs(5), "10^6 samples")?;
    Ok(format!("10^6 samples, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 10

fn determinism() -> Verdict {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let sources = [
        TreeSource::Generate { kind: TreeKind::Path, size: 1000, seed: 0 },
        TreeSource::Generate { kind: TreeKind::Star, size: 50, seed: 0 },
        TreeSource::Generate { kind: TreeKind::Caterpillar, size: 300, seed: 0 },
        TreeSource::Generate { kind: TreeKind::Binary, size: 255, seed: 0 },
        TreeSource::Edges(FIG3.into()),
        TreeSource::Generate { kind: TreeKind::Random, size: 200, seed: 7 },
    ];
    let mut compared = 0;
    let mut bad = Vec::new();
    for (si, source) in sources.iter().enumerate() {
        for adv in ADVERSARIES {
            for mode in [Mode::Final, Mode::Legacy] {
                let sub = format!("{si}-{adv}");
                let mut files = Vec::new();
                for dir in &dirs {
                    let cfg = ExperimentConfig {
                        tree: source.clone(),
                        n: 7,
                        t: 2,
                        inputs: InputAssignment::RandomValid,
                        adversary: adv.to_string(),
                        seeds: vec![11, 12],
                        mode,
                        format: Format::Json,
                        transcripts: Some(dir.path().join(&sub)),
                    };
                    let reports = run_experiment(&cfg).map_err(|e| e.to_string())?;
                    files.push(
                        reports
                            .iter()
                            .map(|r| std::fs::read(r.transcript.as_ref().unwrap()).unwrap())
                            .collect::<Vec<_>>(),
                    );
                }
                for (a, b) in files[0].iter().zip(&files[1]) {
                    compared += 1;
                    if a != b || a.is_empty() {
                        bad.push(format!("{sub} {} differs", mode.name()));
                    }
                }
            }
        }
    }
    if !bad.is_empty() {
        return Err(violations(&bad));
    }
    Ok(format!("{compared} transcript pairs byte-identical"))
}

// ---------------------------------------------------------------- driver

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut ctx = Ctx { matrix: None };
    let criteria: Vec<(u32, &str, Box<dyn Fn(&mut Ctx) -> Verdict>)> = vec![
        (1, "euler list of the worked example", Box::new(|_| euler_exactness())),
        (2, "euler list properties vs brute force", Box::new(|_| euler_oracle_suite())),
        (3, "gradecast integrity/consistency/termination", Box::new(|_| gradecast_definition())),
        (4, "realAA validity and contraction", Box::new(|_| real_aa_claims())),
        (5, "iteration count cap", Box::new(|_| round_cap())),
        (6, "tree AA validity and 1-agreement", Box::new(end_to_end)),
        (7, "round accounting", Box::new(round_accounting)),
        (8, "bounds consistency", Box::new(bounds_consistency)),
        (9, "closest_int properties", Box::new(|_| closest_int_properties())),
        (10, "transcript determinism", Box::new(|_| determinism())),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(|| check(&mut ctx)))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match verdict {
            Ok(detail) => println!("criterion {id}: PASS  {name}: {detail}"),
            Err(detail) => {
                println!("criterion {id}: FAIL  {name}: {detail}");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
