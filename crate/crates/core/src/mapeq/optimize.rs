//! Greedy map-equation optimization.
//!
//! The search works on a *subnet*: a piece of the network with per-node
//! visit rates, per-node flow crossing the piece's outer boundary, and
//! internal edges carrying one-direction flows. The whole graph is the
//! root subnet (boundary zero); module splits re-run the same machinery on
//! a module's interior, and index levels run it on a contracted network of
//! module exit rates. The local objective for a partition of a subnet with
//! boundary flow `b` is
//!
//! ```text
//! L = plogp(b + Σq_i) − plogp(b) − 2·Σ plogp(q_i) + Σ plogp(q_i + p_i) − Σ plogp(p_α)
//! ```
//!
//! which at the root reduces to the two-level map equation, and inside a
//! module equals that module's codebook contribution plus its children's.
//!
//! Moves follow the usual greedy scheme: start from singletons, repeatedly
//! offer each node to its neighboring modules (candidates in ascending
//! module id; strict improvement, so the lowest id wins ties), contract
//! the result and repeat one level up until contraction stops merging,
//! then fine-tune at the finest level. Trials differ only in the shuffled
//! node visiting order; each trial's RNG derives from the master seed, so
//! results do not depend on thread scheduling.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{plogp, tree_codelength, ClusterTree, FlowDistribution, TreeChild, TreeModule};
use crate::rng;
use crate::simnet::SimilarityGraph;

/// Minimum gain for a single move to be taken.
const MOVE_EPS: f64 = 1e-13;
/// Minimum whole-pass / whole-cycle improvement to keep iterating, and the
/// margin an extra hierarchy level must beat.
const LEVEL_EPS: f64 = 1e-10;
const MAX_PASSES: usize = 100;
const MAX_CYCLES: usize = 30;
const MAX_INDEX_LEVELS: usize = 16;
const MAX_SPLIT_DEPTH: usize = 16;

const CTX_ROOT: u64 = 0x726f_6f74;
const CTX_INDEX: u64 = 0x6964_7831;
const CTX_SPLIT: u64 = 0x7370_6c74;

struct SubNet {
    visit: Vec<f64>,
    ext_exit: Vec<f64>,
    /// ext_exit plus internal adjacency flow; everything leaving the node
    /// short of staying put.
    node_exit: Vec<f64>,
    adj_start: Vec<usize>,
    adj_node: Vec<u32>,
    adj_flow: Vec<f64>,
}

impl SubNet {
    /// `edges` carry one-direction flows with arbitrary but fixed order;
    /// both directions end up in the adjacency.
    fn build(visit: Vec<f64>, ext_exit: Vec<f64>, edges: &[(u32, u32, f64)]) -> SubNet {
        let n = visit.len();
        let mut adj_start = vec![0usize; n + 1];
        for &(a, b, _) in edges {
            adj_start[a as usize + 1] += 1;
            adj_start[b as usize + 1] += 1;
        }
        for i in 0..n {
            adj_start[i + 1] += adj_start[i];
        }
        let mut pos = adj_start.clone();
        let mut adj_node = vec![0u32; adj_start[n]];
        let mut adj_flow = vec![0f64; adj_start[n]];
        for &(a, b, f) in edges {
            adj_node[pos[a as usize]] = b;
            adj_flow[pos[a as usize]] = f;
            pos[a as usize] += 1;
            adj_node[pos[b as usize]] = a;
            adj_flow[pos[b as usize]] = f;
            pos[b as usize] += 1;
        }
        let node_exit = (0..n)
            .map(|i| {
                ext_exit[i] + adj_flow[adj_start[i]..adj_start[i + 1]].iter().sum::<f64>()
            })
            .collect();
        SubNet { visit, ext_exit, node_exit, adj_start, adj_node, adj_flow }
    }

    fn n(&self) -> usize {
        self.visit.len()
    }

    fn boundary(&self) -> f64 {
        self.ext_exit.iter().sum()
    }

    fn leaf_term(&self) -> f64 {
        self.visit.iter().map(|&p| plogp(p)).sum()
    }

    fn neighbors(&self, a: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.adj_start[a]..self.adj_start[a + 1];
        self.adj_node[r.clone()].iter().copied().zip(self.adj_flow[r].iter().copied())
    }
}

/// Module statistics for one assignment. Arrays are indexed by module id;
/// ids live in `0..n` and may have holes once modules empty out.
struct Partition {
    node_module: Vec<u32>,
    q: Vec<f64>,
    p: Vec<f64>,
    size: Vec<u32>,
    sum_q: f64,
}

impl Partition {
    fn from_assignment(net: &SubNet, node_module: Vec<u32>) -> Partition {
        let n = net.n();
        let mut part = Partition {
            node_module,
            q: vec![0.0; n],
            p: vec![0.0; n],
            size: vec![0; n],
            sum_q: 0.0,
        };
        part.recompute(net);
        part
    }

    /// Rebuild all module aggregates from the assignment; run at pass
    /// boundaries so incremental float error never accumulates.
    fn recompute(&mut self, net: &SubNet) {
        self.q.iter_mut().for_each(|x| *x = 0.0);
        self.p.iter_mut().for_each(|x| *x = 0.0);
        self.size.iter_mut().for_each(|x| *x = 0);
        for a in 0..net.n() {
            let m = self.node_module[a] as usize;
            self.p[m] += net.visit[a];
            self.size[m] += 1;
            let mut q = net.ext_exit[a];
            for (nbr, f) in net.neighbors(a) {
                if self.node_module[nbr as usize] != self.node_module[a] {
                    q += f;
                }
            }
            self.q[m] += q;
        }
        self.sum_q = self.q.iter().sum();
    }

    fn codelength(&self, net: &SubNet, leaf_term: f64) -> f64 {
        let b = net.boundary();
        let mut l = plogp(b + self.sum_q) - plogp(b) - leaf_term;
        for m in 0..self.q.len() {
            if self.size[m] > 0 {
                l += plogp(self.q[m] + self.p[m]) - 2.0 * plogp(self.q[m]);
            }
        }
        l
    }

    fn n_modules(&self) -> usize {
        self.size.iter().filter(|&&s| s > 0).count()
    }
}

/// Sparse per-move accumulator of flow from one node into each neighboring
/// module; stamped so clearing is O(touched).
struct Scratch {
    stamp: Vec<u64>,
    val: Vec<f64>,
    round: u64,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Scratch {
        Scratch { stamp: vec![0; n], val: vec![0.0; n], round: 0, touched: Vec::new() }
    }

    fn begin(&mut self) {
        self.round += 1;
        self.touched.clear();
    }

    fn add(&mut self, m: u32, f: f64) {
        let i = m as usize;
        if self.stamp[i] != self.round {
            self.stamp[i] = self.round;
            self.val[i] = 0.0;
            self.touched.push(m);
        }
        self.val[i] += f;
    }

    fn get(&self, m: u32) -> f64 {
        if self.stamp[m as usize] == self.round {
            self.val[m as usize]
        } else {
            0.0
        }
    }
}

/// One sweep over `order`, moving each node to its best neighboring module
/// when that strictly shrinks the description length. Returns the number
/// of moves taken.
fn move_pass(
    net: &SubNet,
    part: &mut Partition,
    order: &[u32],
    scratch: &mut Scratch,
    b: f64,
) -> usize {
    let mut moves = 0;
    for &alpha in order {
        let a = alpha as usize;
        let i = part.node_module[a];
        scratch.begin();
        for (nbr, f) in net.neighbors(a) {
            scratch.add(part.node_module[nbr as usize], f);
        }
        if scratch.touched.is_empty() {
            continue;
        }
        scratch.touched.sort_unstable();
        let e = net.node_exit[a];
        let v = net.visit[a];
        let w_i = scratch.get(i);
        let (qi, pi) = (part.q[i as usize], part.p[i as usize]);
        // Pulling α out of i turns its in-module flow w_i into exit flow
        // and removes its former exit contribution e.
        let qi_new = qi - e + 2.0 * w_i;
        let pi_new = pi - v;
        let di = -2.0 * (plogp(qi_new) - plogp(qi)) + (plogp(qi_new + pi_new) - plogp(qi + pi));
        let base = plogp(b + part.sum_q);
        let mut best: Option<(f64, u32)> = None;
        let touched = std::mem::take(&mut scratch.touched);
        for &j in &touched {
            if j == i {
                continue;
            }
            let w_j = scratch.get(j);
            let (qj, pj) = (part.q[j as usize], part.p[j as usize]);
            let qj_new = qj + e - 2.0 * w_j;
            let pj_new = pj + v;
            let dj =
                -2.0 * (plogp(qj_new) - plogp(qj)) + (plogp(qj_new + pj_new) - plogp(qj + pj));
            let dsum = 2.0 * (w_i - w_j);
            let delta = di + dj + plogp(b + part.sum_q + dsum) - base;
            if delta < best.map_or(-MOVE_EPS, |(d, _)| d) {
                best = Some((delta, j));
            }
        }
        scratch.touched = touched;
        if let Some((_, j)) = best {
            let w_j = scratch.get(j);
            part.q[i as usize] = qi_new;
            part.p[i as usize] = pi_new;
            part.size[i as usize] -= 1;
            part.q[j as usize] += e - 2.0 * w_j;
            part.p[j as usize] += v;
            part.size[j as usize] += 1;
            part.sum_q += 2.0 * (w_i - w_j);
            part.node_module[a] = j;
            moves += 1;
        }
    }
    moves
}

/// Move passes until converged, shuffling the visit order each pass.
/// Returns the (recomputed) codelength of the final partition.
fn refine(net: &SubNet, part: &mut Partition, leaf_term: f64, rng: &mut ChaCha8Rng) -> f64 {
    let b = net.boundary();
    let mut order: Vec<u32> = (0..net.n() as u32).collect();
    let mut scratch = Scratch::new(net.n());
    let mut l = part.codelength(net, leaf_term);
    for _ in 0..MAX_PASSES {
        order.shuffle(rng);
        let moves = move_pass(net, part, &order, &mut scratch, b);
        part.recompute(net);
        let l_new = part.codelength(net, leaf_term);
        let improved = l - l_new;
        l = l_new;
        if moves == 0 || improved < LEVEL_EPS {
            break;
        }
    }
    l
}

/// Inter-module flows under an assignment, as one-direction edges between
/// compacted module ranks (ascending id order), sorted by endpoint pair.
fn module_edges(net: &SubNet, node_module: &[u32], rank: &[u32]) -> Vec<(u32, u32, f64)> {
    let mut acc: std::collections::HashMap<(u32, u32), f64> = std::collections::HashMap::new();
    for a in 0..net.n() {
        for (nbr, f) in net.neighbors(a) {
            if (nbr as usize) > a {
                let (ma, mb) = (node_module[a], node_module[nbr as usize]);
                if ma != mb {
                    let (ra, rb) = (rank[ma as usize], rank[mb as usize]);
                    let key = (ra.min(rb), ra.max(rb));
                    *acc.entry(key).or_insert(0.0) += f;
                }
            }
        }
    }
    let mut edges: Vec<(u32, u32, f64)> = acc.into_iter().map(|((a, b), f)| (a, b, f)).collect();
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    edges
}

/// Contract modules into supernodes (visit and boundary flow summed,
/// inter-module flows become edges). Returns the contracted net and the
/// node-to-supernode map.
fn contract(net: &SubNet, part: &Partition) -> (SubNet, Vec<u32>) {
    let mut rank = vec![u32::MAX; part.size.len()];
    let mut k = 0u32;
    for (m, &s) in part.size.iter().enumerate() {
        if s > 0 {
            rank[m] = k;
            k += 1;
        }
    }
    let cmap: Vec<u32> = part.node_module.iter().map(|&m| rank[m as usize]).collect();
    let mut visit = vec![0.0; k as usize];
    let mut ext = vec![0.0; k as usize];
    for a in 0..net.n() {
        visit[cmap[a] as usize] += net.visit[a];
        ext[cmap[a] as usize] += net.ext_exit[a];
    }
    let edges = module_edges(net, &part.node_module, &rank);
    (SubNet::build(visit, ext, &edges), cmap)
}

/// One merge cycle: refine at the base level from `start`, then contract
/// and refine repeatedly until contraction stops merging. Returns the
/// base-level assignment and its codelength.
fn merge_cycle(
    net: &SubNet,
    leaf_term: f64,
    start: Vec<u32>,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, f64) {
    let mut part = Partition::from_assignment(net, start);
    let mut l = refine(net, &mut part, leaf_term, rng);
    let (mut cnet, mut to_coarse) = contract(net, &part);
    loop {
        if cnet.n() <= 1 {
            break;
        }
        let mut cpart = Partition::from_assignment(&cnet, (0..cnet.n() as u32).collect());
        let l_coarse = refine(&cnet, &mut cpart, leaf_term, rng);
        if cpart.n_modules() == cnet.n() {
            break;
        }
        l = l_coarse;
        let (next, step) = contract(&cnet, &cpart);
        for x in to_coarse.iter_mut() {
            *x = step[cpart.node_module[*x as usize] as usize];
        }
        cnet = next;
    }
    // to_coarse maps nodes straight to final supernodes once composed with
    // the last refinement's module ids.
    (to_coarse, l)
}

/// Map module ids to 0.. in order of first appearance.
fn compact(assignment: &mut [u32]) {
    let max = assignment.iter().map(|&m| m as usize + 1).max().unwrap_or(0);
    let mut remap = vec![u32::MAX; max];
    let mut next = 0u32;
    for m in assignment.iter_mut() {
        let slot = &mut remap[*m as usize];
        if *slot == u32::MAX {
            *slot = next;
            next += 1;
        }
        *m = *slot;
    }
}

fn single_trial(net: &SubNet, leaf_term: f64, mut rng: ChaCha8Rng) -> (Vec<u32>, f64) {
    let n = net.n();
    let mut asg: Vec<u32> = (0..n as u32).collect();
    let mut l = Partition::from_assignment(net, asg.clone()).codelength(net, leaf_term);
    for _ in 0..MAX_CYCLES {
        let (new_asg, new_l) = merge_cycle(net, leaf_term, asg.clone(), &mut rng);
        let improved = l - new_l;
        if new_l < l {
            l = new_l;
            asg = new_asg;
        }
        if improved < LEVEL_EPS {
            break;
        }
    }
    compact(&mut asg);
    (asg, l)
}

/// Best partition over independent trials; ties go to the earliest trial.
fn best_partition(
    net: &SubNet,
    leaf_term: f64,
    trials: u32,
    seed: u64,
    ctx: u64,
) -> (Vec<u32>, f64) {
    let results: Vec<(Vec<u32>, f64)> = (0..trials.max(1))
        .into_par_iter()
        .map(|t| {
            let trial_rng = rng::task_rng(seed, rng::mix(ctx, t as u64));
            single_trial(net, leaf_term, trial_rng)
        })
        .collect();
    results
        .into_iter()
        .reduce(|best, cand| if cand.1 < best.1 { cand } else { best })
        .expect("at least one trial")
}

fn root_subnet(graph: &SimilarityGraph, fl: &FlowDistribution) -> SubNet {
    let edges: Vec<(u32, u32, f64)> = graph
        .edges
        .iter()
        .zip(&fl.edge_flow)
        .map(|(e, &f)| (e.a, e.b, f))
        .collect();
    SubNet::build(fl.visit.clone(), vec![0.0; graph.n_nodes], &edges)
}

/// Best flat partition of the whole graph: greedy search plus the
/// all-in-one-module fallback, whichever describes the walk in fewer bits.
/// Module ids are compacted in order of first appearance. The returned
/// codelength is recomputed from scratch.
pub fn optimize_two_level(
    graph: &SimilarityGraph,
    fl: &FlowDistribution,
    trials: u32,
    seed: u64,
) -> (Vec<u32>, f64) {
    let net = root_subnet(graph, fl);
    let leaf_term = net.leaf_term();
    let (asg, _) = best_partition(&net, leaf_term, trials, seed, CTX_ROOT);
    let l = super::partition_codelength(graph, fl, &asg);
    let one = vec![0u32; graph.n_nodes];
    let l_one = super::partition_codelength(graph, fl, &one);
    if l_one < l {
        (one, l_one)
    } else {
        (asg, l)
    }
}

/// Subnet of the nodes in `members` (ascending indices into `net`): visit
/// rates carry over, flows to anything outside become boundary flow.
fn restrict(net: &SubNet, members: &[u32]) -> SubNet {
    let mut local = vec![u32::MAX; net.n()];
    for (li, &g) in members.iter().enumerate() {
        local[g as usize] = li as u32;
    }
    let mut visit = Vec::with_capacity(members.len());
    let mut ext = Vec::with_capacity(members.len());
    let mut edges = Vec::new();
    for (li, &g) in members.iter().enumerate() {
        visit.push(net.visit[g as usize]);
        let mut out = net.ext_exit[g as usize];
        for (nbr, f) in net.neighbors(g as usize) {
            let ln = local[nbr as usize];
            if ln == u32::MAX {
                out += f;
            } else if nbr > g {
                edges.push((li as u32, ln, f));
            }
        }
        ext.push(out);
    }
    SubNet::build(visit, ext, &edges)
}

/// Children of a module's tree node: plain leaves, or submodules when a
/// split describes the module's interior in fewer bits than one codebook.
fn split_children(
    sub: &SubNet,
    classes: &[u32],
    trials: u32,
    seed: u64,
    ctx: u64,
    depth: usize,
) -> Vec<TreeChild> {
    let as_leaves = |classes: &[u32]| classes.iter().map(|&c| TreeChild::Leaf(c)).collect();
    if sub.n() < 2 || depth >= MAX_SPLIT_DEPTH {
        return as_leaves(classes);
    }
    let leaf_term = sub.leaf_term();
    let (mut asg, _) = best_partition(sub, leaf_term, trials, seed, ctx);
    compact(&mut asg);
    let part = Partition::from_assignment(sub, asg.clone());
    if part.n_modules() < 2 {
        return as_leaves(classes);
    }
    let l_split = part.codelength(sub, leaf_term);
    // Staying a leaf module costs one codebook over the leaves plus the
    // boundary exit; the split must beat that, not the one-module value of
    // the local objective (which double-counts the boundary).
    let b = sub.boundary();
    let p_sum: f64 = sub.visit.iter().sum();
    let l_leaf = plogp(b + p_sum) - plogp(b) - leaf_term;
    if !(l_split < l_leaf - LEVEL_EPS) {
        return as_leaves(classes);
    }
    let k = part.n_modules();
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (i, &m) in asg.iter().enumerate() {
        groups[m as usize].push(i as u32);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(m, members)| {
            let child_net = restrict(sub, &members);
            let child_classes: Vec<u32> =
                members.iter().map(|&i| classes[i as usize]).collect();
            let children = split_children(
                &child_net,
                &child_classes,
                trials,
                seed,
                rng::mix(ctx, m as u64 + 0x100),
                depth + 1,
            );
            TreeChild::Module(TreeModule { children })
        })
        .collect()
}

/// Full hierarchical clustering: two-level partition, recursive splits of
/// each module, then index levels grouping top modules while that shortens
/// the description. The tree's codelength is recomputed from scratch.
pub fn optimize_hierarchical(
    graph: &SimilarityGraph,
    fl: &FlowDistribution,
    trials: u32,
    seed: u64,
) -> ClusterTree {
    let net = root_subnet(graph, fl);
    let (asg, _) = optimize_two_level(graph, fl, trials, seed);
    let n_modules = asg.iter().map(|&m| m as usize + 1).max().unwrap_or(0);
    let mut module_nodes: Vec<Vec<u32>> = vec![Vec::new(); n_modules];
    for (node, &m) in asg.iter().enumerate() {
        module_nodes[m as usize].push(node as u32);
    }

    let mut top_children: Vec<TreeChild> = module_nodes
        .iter()
        .enumerate()
        .map(|(mid, nodes)| {
            let sub = restrict(&net, nodes);
            let children = split_children(
                &sub,
                nodes,
                trials,
                seed,
                rng::mix(CTX_SPLIT, mid as u64),
                1,
            );
            TreeChild::Module(TreeModule { children })
        })
        .collect();

    // Index levels: treat top modules as nodes whose visit rates are their
    // exit flows; grouping them pays off when the root codebook shrinks by
    // more than the added group codebooks.
    let part = Partition::from_assignment(&net, asg);
    let identity: Vec<u32> = (0..n_modules as u32).collect();
    let mut rates: Vec<f64> = part.q[..n_modules].to_vec();
    let mut edges = module_edges(&net, &part.node_module, &identity);
    for level in 1..=MAX_INDEX_LEVELS {
        let sum_rates: f64 = rates.iter().sum();
        if rates.len() <= 1 || !(sum_rates > 0.0) {
            break;
        }
        let old_cb = plogp(sum_rates) - rates.iter().map(|&q| plogp(q)).sum::<f64>();
        let snet = SubNet::build(rates.clone(), vec![0.0; rates.len()], &edges);
        let leaf_term = snet.leaf_term();
        let (mut sasg, _) =
            best_partition(&snet, leaf_term, trials, seed, rng::mix(CTX_INDEX, level as u64));
        compact(&mut sasg);
        let spart = Partition::from_assignment(&snet, sasg.clone());
        let l_super = spart.codelength(&snet, leaf_term);
        if !(l_super < old_cb - LEVEL_EPS) || spart.n_modules() < 2 {
            break;
        }
        let k = spart.n_modules();
        let mut groups: Vec<Vec<TreeChild>> = (0..k).map(|_| Vec::new()).collect();
        for (c, child) in top_children.into_iter().enumerate() {
            groups[sasg[c] as usize].push(child);
        }
        top_children = groups
            .into_iter()
            .map(|children| TreeChild::Module(TreeModule { children }))
            .collect();
        let srank: Vec<u32> = (0..k as u32).collect();
        edges = module_edges(&snet, &sasg, &srank);
        rates = spart.q[..k].to_vec();
    }

    // A lone top module that got split adds a zero-rate index level; its
    // codebook costs nothing, so hoisting the children preserves the
    // codelength and keeps top-level groups meaningful.
    let mut root = TreeModule { children: top_children };
    while root.children.len() == 1 {
        match &root.children[0] {
            TreeChild::Module(m)
                if m.children.iter().any(|c| matches!(c, TreeChild::Module(_))) =>
            {
                let TreeChild::Module(m) = root.children.pop().unwrap() else { unreachable!() };
                root.children = m.children;
            }
            _ => break,
        }
    }

    let codelength = tree_codelength(&root, graph, fl);
    ClusterTree { codelength, root }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapeq::{flows, partition_codelength};
    use crate::simnet::{GraphEdge, SimilarityGraph};
    use approx::assert_abs_diff_eq;

    fn graph(n: usize, loops: &[f64], edges: &[(u32, u32, f64)]) -> SimilarityGraph {
        SimilarityGraph {
            n_nodes: n,
            threshold: 0.9,
            self_loops: loops.to_vec(),
            edges: edges
                .iter()
                .map(|&(a, b, w)| GraphEdge { a, b, weight: w })
                .collect(),
        }
    }

    fn two_triangles() -> SimilarityGraph {
        graph(
            6,
            &[0.0; 6],
            &[
                (0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0),
                (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0),
                (2, 3, 1.0),
            ],
        )
    }

    #[test]
    fn splits_two_triangles_at_the_bridge() {
        let g = two_triangles();
        let fl = flows(&g).unwrap();
        let (asg, l) = optimize_two_level(&g, &fl, 10, 42);
        assert_eq!(asg, vec![0, 0, 0, 1, 1, 1]);
        assert_abs_diff_eq!(l, 2.3207, epsilon = 5e-5);
    }

    #[test]
    fn keeps_path_graph_in_one_module() {
        let g = graph(3, &[0.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let fl = flows(&g).unwrap();
        let (asg, l) = optimize_two_level(&g, &fl, 10, 1);
        assert_eq!(asg, vec![0, 0, 0]);
        assert_abs_diff_eq!(l, 1.5, epsilon = 1e-12);
        // And hierarchically: one module of three leaves, no splits.
        let tree = optimize_hierarchical(&g, &fl, 10, 1);
        assert_abs_diff_eq!(tree.codelength, 1.5, epsilon = 1e-12);
        assert_eq!(tree.root.children.len(), 1);
        match &tree.root.children[0] {
            TreeChild::Module(m) => assert_eq!(m.children.len(), 3),
            TreeChild::Leaf(_) => panic!("expected a module"),
        }
    }

    #[test]
    fn matches_exhaustive_search_on_a_small_graph() {
        // All 203 partitions of 6 nodes, scored with the reference
        // two-level formula.
        let g = graph(
            6,
            &[0.5, 0.0, 1.0, 0.0, 0.0, 2.0],
            &[
                (0, 1, 2.0), (1, 2, 1.0), (0, 2, 3.0),
                (2, 3, 0.5), (3, 4, 2.0), (4, 5, 1.5), (3, 5, 1.0),
            ],
        );
        let fl = flows(&g).unwrap();
        let mut best = f64::INFINITY;
        let mut cur = vec![0u32; 6];
        fn rec(i: usize, maxm: u32, cur: &mut Vec<u32>, best: &mut f64, g: &SimilarityGraph, fl: &crate::mapeq::FlowDistribution) {
            if i == cur.len() {
                *best = best.min(partition_codelength(g, fl, cur));
                return;
            }
            for m in 0..=maxm {
                cur[i] = m;
                rec(i + 1, maxm.max(m + 1), cur, best, g, fl);
            }
        }
        rec(1, 1, &mut cur, &mut best, &g, &fl);
        let (_, l) = optimize_two_level(&g, &fl, 10, 7);
        assert_abs_diff_eq!(l, best, epsilon = 1e-9);
    }

    #[test]
    fn hierarchy_adds_an_index_level_over_four_triangles() {
        // Two pairs of triangles: strong bridges inside a pair, a weak one
        // between pairs. Flat optimum is the four triangles; one index
        // level grouping the pairs describes the walk in fewer bits.
        let g = graph(
            12,
            &[0.0; 12],
            &[
                (0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0),
                (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0),
                (6, 7, 1.0), (6, 8, 1.0), (7, 8, 1.0),
                (9, 10, 1.0), (9, 11, 1.0), (10, 11, 1.0),
                (2, 3, 1.0), (8, 9, 1.0),
                (5, 6, 0.1),
            ],
        );
        let fl = flows(&g).unwrap();
        let (_, l_flat) = optimize_two_level(&g, &fl, 10, 5);
        let tree = optimize_hierarchical(&g, &fl, 10, 5);
        assert!(tree.codelength < l_flat - 1e-6, "{} vs {}", tree.codelength, l_flat);
        assert_eq!(tree.root.children.len(), 2);
        let mut triangles = Vec::new();
        for super_module in &tree.root.children {
            let m = match super_module {
                TreeChild::Module(m) => m,
                TreeChild::Leaf(_) => panic!("expected super-module"),
            };
            assert_eq!(m.children.len(), 2);
            for t in &m.children {
                match t {
                    TreeChild::Module(tri) => {
                        assert_eq!(tri.leaf_count(), 3);
                        let mut leaves = tri.leaves();
                        leaves.sort_unstable();
                        triangles.push(leaves);
                    }
                    TreeChild::Leaf(_) => panic!("expected triangle module"),
                }
            }
        }
        triangles.sort();
        assert_eq!(
            triangles,
            vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![9, 10, 11]]
        );
        assert_abs_diff_eq!(
            tree.codelength,
            crate::mapeq::tree_codelength(&tree.root, &g, &fl),
            epsilon = 1e-12
        );
    }

    #[test]
    fn same_seed_reproduces_the_tree() {
        let g = two_triangles();
        let fl = flows(&g).unwrap();
        let a = optimize_hierarchical(&g, &fl, 10, 99);
        let b = optimize_hierarchical(&g, &fl, 10, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn isolated_nodes_stay_in_their_own_modules() {
        // Node 3 has only a self-loop: positive visit rate, no exits.
        let g = graph(4, &[0.0, 0.0, 0.0, 2.0], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let fl = flows(&g).unwrap();
        let (asg, _) = optimize_two_level(&g, &fl, 10, 3);
        assert_eq!(asg[3], asg[..3].iter().max().unwrap() + 1);
    }
}
