//! Map-equation clustering of the similarity network.
//!
//! A random walk on the weighted graph visits node α with probability
//! `strength(α) / total_strength` (self-loops count twice toward strength,
//! like any other incident edge end). Grouping nodes into modules lets the
//! walk be described with one codebook per module plus an index codebook;
//! the map equation scores a partition by the resulting description length
//! in bits. Lower is better: tight modules with little boundary flow
//! compress well.
//!
//! Two-level description length for modules i with exit flow `q_i` and
//! visit mass `p_i`:
//!
//! ```text
//! L = plogp(Σq_i) − 2·Σ plogp(q_i) + Σ plogp(q_i + p_i) − Σ plogp(p_α)
//! ```
//!
//! The hierarchical generalization gives every module its own codebook
//! whose entries are its children (submodule enter rates or leaf visit
//! rates) plus its own exit event; total L is the sum of per-codebook
//! contributions. `optimize` in [`optimize`] searches partitions greedily;
//! everything here is the objective, the tree representation, and the
//! serialized form.

mod optimize;

pub use optimize::{optimize_hierarchical, optimize_two_level};

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simnet::SimilarityGraph;

/// `x·log2(x)`, with the measure-zero convention `0·log 0 = 0`.
pub fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

pub(crate) use crate::numeric::Kahan;

/// Stationary visit rates of the undirected walk.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDistribution {
    /// Per-node visit probability; sums to 1.
    pub visit: Vec<f64>,
    /// Per-edge one-direction flow, parallel to `graph.edges`. An edge
    /// carries this much walk probability each way per step.
    pub edge_flow: Vec<f64>,
}

pub fn flows(graph: &SimilarityGraph) -> Result<FlowDistribution> {
    let mut strength = vec![0.0f64; graph.n_nodes];
    for (i, &w) in graph.self_loops.iter().enumerate() {
        strength[i] += 2.0 * w;
    }
    for e in &graph.edges {
        strength[e.a as usize] += e.weight;
        strength[e.b as usize] += e.weight;
    }
    let total: f64 = strength.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateGraph(format!(
            "graph carries no walkable mass (total strength {total})"
        )));
    }
    let visit = strength.iter().map(|s| s / total).collect();
    let edge_flow = graph.edges.iter().map(|e| e.weight / total).collect();
    Ok(FlowDistribution { visit, edge_flow })
}

/// Two-level description length of `assignment` (node -> module id),
/// recomputed from scratch. Module ids need not be contiguous.
pub fn partition_codelength(
    graph: &SimilarityGraph,
    flows: &FlowDistribution,
    assignment: &[u32],
) -> f64 {
    assert_eq!(assignment.len(), graph.n_nodes);
    let n_modules = assignment.iter().map(|&m| m as usize + 1).max().unwrap_or(0);
    let mut q = vec![0.0f64; n_modules];
    let mut p = vec![0.0f64; n_modules];
    for (alpha, &m) in assignment.iter().enumerate() {
        p[m as usize] += flows.visit[alpha];
    }
    for (e, &f) in graph.edges.iter().zip(&flows.edge_flow) {
        let (ma, mb) = (assignment[e.a as usize], assignment[e.b as usize]);
        if ma != mb {
            q[ma as usize] += f;
            q[mb as usize] += f;
        }
    }
    let q_total: f64 = q.iter().sum();
    let mut acc = Kahan::default();
    acc.add(plogp(q_total));
    for i in 0..n_modules {
        acc.add(-2.0 * plogp(q[i]));
        acc.add(plogp(q[i] + p[i]));
    }
    for &pa in &flows.visit {
        acc.add(-plogp(pa));
    }
    acc.value()
}

// --- cluster tree ------------------------------------------------------------

/// One internal node of the cluster tree; children are submodules or leaf
/// classes in a fixed order (positions are meaningful and 1-based in the
/// serialized form).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModule {
    pub children: Vec<TreeChild>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeChild {
    Leaf(u32),
    Module(TreeModule),
}

/// Result of hierarchical clustering: the module tree over portfolio
/// classes and its description length in bits. The root's children are the
/// reported top-level modules; even a flat solution keeps one module level,
/// so leaves never hang directly off the root.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    pub codelength: f64,
    pub root: TreeModule,
}

impl TreeModule {
    pub fn leaf_count(&self) -> usize {
        self.children
            .iter()
            .map(|c| match c {
                TreeChild::Leaf(_) => 1,
                TreeChild::Module(m) => m.leaf_count(),
            })
            .sum()
    }

    /// All leaf class ids under this module, depth-first.
    pub fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<u32>) {
        for c in &self.children {
            match c {
                TreeChild::Leaf(class) => out.push(*class),
                TreeChild::Module(m) => m.collect_leaves(out),
            }
        }
    }
}

/// Hierarchical description length of a tree, recomputed from scratch.
///
/// Every module owns a codebook over its children's rates (submodule exit
/// flow or leaf visit rate) plus its own exit rate; an edge crossing a
/// module boundary contributes its one-direction flow to the exit of every
/// module strictly below the endpoints' deepest common ancestor, on both
/// sides.
pub fn tree_codelength(
    tree: &TreeModule,
    graph: &SimilarityGraph,
    flows: &FlowDistribution,
) -> f64 {
    // Path of each leaf: module child-positions from the root, excluding
    // the leaf position itself.
    let mut paths: Vec<Vec<u32>> = vec![Vec::new(); graph.n_nodes];
    fn walk(m: &TreeModule, prefix: &mut Vec<u32>, paths: &mut [Vec<u32>]) {
        for (i, c) in m.children.iter().enumerate() {
            match c {
                TreeChild::Leaf(class) => paths[*class as usize] = prefix.clone(),
                TreeChild::Module(sub) => {
                    prefix.push(i as u32);
                    walk(sub, prefix, paths);
                    prefix.pop();
                }
            }
        }
    }
    walk(tree, &mut Vec::new(), &mut paths);

    // Exit flow accumulates per module, keyed by path.
    use std::collections::HashMap;
    let mut exit: HashMap<Vec<u32>, f64> = HashMap::new();
    for (e, &f) in graph.edges.iter().zip(&flows.edge_flow) {
        let pa = &paths[e.a as usize];
        let pb = &paths[e.b as usize];
        let common = pa.iter().zip(pb.iter()).take_while(|(x, y)| x == y).count();
        for side in [pa, pb] {
            for depth in common..side.len() {
                *exit.entry(side[..=depth].to_vec()).or_insert(0.0) += f;
            }
        }
    }

    fn contribution(
        m: &TreeModule,
        path: &mut Vec<u32>,
        exit: &HashMap<Vec<u32>, f64>,
        visit: &[f64],
    ) -> f64 {
        let q_self = if path.is_empty() {
            0.0
        } else {
            exit.get(path.as_slice()).copied().unwrap_or(0.0)
        };
        let mut usage = Kahan::default();
        usage.add(q_self);
        let mut rate_terms = Kahan::default();
        let mut below = Kahan::default();
        for (i, c) in m.children.iter().enumerate() {
            let rate = match c {
                TreeChild::Leaf(class) => visit[*class as usize],
                TreeChild::Module(sub) => {
                    path.push(i as u32);
                    below.add(contribution(sub, path, exit, visit));
                    let q = exit.get(path.as_slice()).copied().unwrap_or(0.0);
                    path.pop();
                    q
                }
            };
            usage.add(rate);
            rate_terms.add(plogp(rate));
        }
        plogp(usage.value()) - plogp(q_self) - rate_terms.value() + below.value()
    }

    contribution(tree, &mut Vec::new(), &exit, &flows.visit)
}

/// Investor groups from the tree's top-level modules: each group is the
/// union of its classes' members, sorted by investor index. Groups are
/// ordered by descending investor count, ties by smallest class id.
pub fn project(tree: &ClusterTree, class_members: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut groups: Vec<(Vec<u32>, u32)> = tree
        .root
        .children
        .iter()
        .map(|c| {
            let classes = match c {
                TreeChild::Leaf(class) => vec![*class],
                TreeChild::Module(m) => m.leaves(),
            };
            let min_class = classes.iter().copied().min().unwrap_or(u32::MAX);
            let mut investors: Vec<u32> = classes
                .iter()
                .flat_map(|&k| class_members[k as usize].iter().copied())
                .collect();
            investors.sort_unstable();
            (investors, min_class)
        })
        .collect();
    groups.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
    groups.into_iter().map(|(inv, _)| inv).collect()
}

// --- tree persistence --------------------------------------------------------

/// Write the tree: header `# codelength=<L> bits`, then one line per leaf
/// in depth-first order, `<path> <visit> <class_id>` where `<path>` is the
/// colon-joined 1-based child position at every level down to and
/// including the leaf's own position.
pub fn write_tree_file(
    path: &Path,
    tree: &ClusterTree,
    visit: &[f64],
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# codelength={} bits", tree.codelength);
    fn emit(m: &TreeModule, prefix: &mut Vec<u32>, visit: &[f64], out: &mut String) {
        for (i, c) in m.children.iter().enumerate() {
            prefix.push(i as u32 + 1);
            match c {
                TreeChild::Leaf(class) => {
                    let path: Vec<String> = prefix.iter().map(|p| p.to_string()).collect();
                    let _ = writeln!(
                        out,
                        "{} {} {}",
                        path.join(":"),
                        visit[*class as usize],
                        class + 1
                    );
                }
                TreeChild::Module(sub) => emit(sub, prefix, visit, out),
            }
            prefix.pop();
        }
    }
    emit(&tree.root, &mut Vec::new(), visit, &mut out);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// In-progress node used while rebuilding a tree from path lines.
enum Slot {
    Leaf(u32),
    Module(Vec<Option<Slot>>),
}

/// Read a tree file back. `n_classes` fixes the expected leaf set; every
/// class must appear exactly once. Returns the tree and per-class visit
/// rates as stored.
pub fn read_tree_file(path: &Path, n_classes: usize) -> Result<(ClusterTree, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty tree file"))?;
    let codelength: f64 = header
        .strip_prefix("# codelength=")
        .and_then(|r| r.strip_suffix(" bits"))
        .ok_or_else(|| Error::parse(path, 1, "expected '# codelength=<bits> bits'"))?
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad codelength value"))?;

    let mut root: Vec<Option<Slot>> = Vec::new();
    let mut visits = vec![f64::NAN; n_classes];
    let mut seen = vec![false; n_classes];
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (path_str, visit_str, class_str) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => return Err(Error::parse(path, lineno, "expected '<path> <visit> <class>'")),
        };
        let mut steps = Vec::new();
        for part in path_str.split(':') {
            let pos: usize = part
                .parse()
                .ok()
                .filter(|&p| p >= 1)
                .ok_or_else(|| Error::parse(path, lineno, format!("bad path step '{part}'")))?;
            steps.push(pos - 1);
        }
        let visit: f64 = visit_str
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad visit rate '{visit_str}'")))?;
        let class: usize = class_str
            .parse()
            .ok()
            .filter(|&c| c >= 1 && c <= n_classes)
            .ok_or_else(|| Error::parse(path, lineno, format!("bad class id '{class_str}'")))?;
        let class = class - 1;
        if seen[class] {
            return Err(Error::parse(path, lineno, format!("class {} listed twice", class + 1)));
        }
        seen[class] = true;
        visits[class] = visit;

        let mut slots = &mut root;
        for (d, &pos) in steps.iter().enumerate() {
            if slots.len() <= pos {
                slots.resize_with(pos + 1, || None);
            }
            let last = d + 1 == steps.len();
            if last {
                if slots[pos].is_some() {
                    return Err(Error::parse(path, lineno, "tree position used twice"));
                }
                slots[pos] = Some(Slot::Leaf(class as u32));
            } else {
                match slots[pos].get_or_insert_with(|| Slot::Module(Vec::new())) {
                    Slot::Module(children) => slots = children,
                    Slot::Leaf(_) => {
                        return Err(Error::parse(path, lineno, "leaf and module share a position"))
                    }
                }
            }
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::parse(path, 0, format!("class {} missing from tree", missing + 1)));
    }

    fn finish(slots: Vec<Option<Slot>>, path: &Path) -> Result<TreeModule> {
        let mut children = Vec::with_capacity(slots.len());
        for slot in slots {
            match slot {
                None => return Err(Error::parse(path, 0, "gap in tree child positions")),
                Some(Slot::Leaf(class)) => children.push(TreeChild::Leaf(class)),
                Some(Slot::Module(sub)) => children.push(TreeChild::Module(finish(sub, path)?)),
            }
        }
        Ok(TreeModule { children })
    }
    let tree = ClusterTree {
        codelength,
        root: finish(root, path)?,
    };
    Ok((tree, visits))
}

#[cfg(test)]
mod tests {
    use super::*;
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

    /// Independent reference: entropy-weighted form of the two-level map
    /// equation, L = q·H(Q) + Σ_i (q_i + p_i)·H(P_i).
    fn entropy_form(graph: &SimilarityGraph, fl: &FlowDistribution, asg: &[u32]) -> f64 {
        let n_modules = asg.iter().map(|&m| m as usize + 1).max().unwrap();
        let mut q = vec![0.0; n_modules];
        for (e, &f) in graph.edges.iter().zip(&fl.edge_flow) {
            if asg[e.a as usize] != asg[e.b as usize] {
                q[asg[e.a as usize] as usize] += f;
                q[asg[e.b as usize] as usize] += f;
            }
        }
        let q_total: f64 = q.iter().sum();
        let entropy = |probs: &[f64]| -> f64 {
            let total: f64 = probs.iter().sum();
            if total <= 0.0 {
                return 0.0;
            }
            -probs
                .iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| (x / total) * (x / total).log2())
                .sum::<f64>()
        };
        let mut l = q_total * entropy(&q);
        for i in 0..n_modules {
            let mut probs: Vec<f64> = vec![q[i]];
            for (alpha, &m) in asg.iter().enumerate() {
                if m as usize == i {
                    probs.push(fl.visit[alpha]);
                }
            }
            let usage: f64 = probs.iter().sum();
            l += usage * entropy(&probs);
        }
        l
    }

    #[test]
    fn plogp_handles_zero() {
        assert_eq!(plogp(0.0), 0.0);
        assert_eq!(plogp(1.0), 0.0);
        assert_abs_diff_eq!(plogp(0.5), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn path_graph_visit_rates() {
        // A–B–C with unit weights: strengths 1, 2, 1.
        let g = graph(3, &[0.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let fl = flows(&g).unwrap();
        assert_eq!(fl.visit, vec![0.25, 0.5, 0.25]);
        assert_eq!(fl.edge_flow, vec![0.25, 0.25]);
    }

    #[test]
    fn flows_match_power_iteration() {
        // Stationary distribution of the walk found independently by
        // iterating the transition matrix (self-loops step back to the
        // node with probability 2w/strength).
        let g = graph(
            5,
            &[1.0, 0.0, 0.5, 0.0, 2.0],
            &[(0, 1, 2.0), (0, 2, 1.0), (1, 2, 0.5), (2, 3, 3.0), (3, 4, 1.0)],
        );
        let n = g.n_nodes;
        let mut weight = vec![vec![0.0f64; n]; n];
        for e in &g.edges {
            weight[e.a as usize][e.b as usize] += e.weight;
            weight[e.b as usize][e.a as usize] += e.weight;
        }
        for (i, &w) in g.self_loops.iter().enumerate() {
            weight[i][i] += 2.0 * w;
        }
        let strength: Vec<f64> = weight.iter().map(|row| row.iter().sum()).collect();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            let mut next = vec![0.0; n];
            for a in 0..n {
                for b in 0..n {
                    if strength[a] > 0.0 {
                        next[b] += pi[a] * weight[a][b] / strength[a];
                    }
                }
            }
            pi = next;
        }
        let fl = flows(&g).unwrap();
        for (a, b) in fl.visit.iter().zip(&pi) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn massless_graph_is_degenerate() {
        let g = graph(3, &[0.0; 3], &[]);
        assert!(matches!(flows(&g), Err(crate::Error::DegenerateGraph(_))));
    }

    #[test]
    fn one_module_codelength_is_visit_entropy() {
        // Path A–B–C in a single module costs H(1/4, 1/2, 1/4) = 1.5 bits.
        let g = graph(3, &[0.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let fl = flows(&g).unwrap();
        let l = partition_codelength(&g, &fl, &[0, 0, 0]);
        assert_abs_diff_eq!(l, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn two_triangles_with_bridge_hand_value() {
        // Two unit triangles joined by a unit bridge, split at the bridge:
        // index codebook uses 2/7 of steps at 1 bit, each module codebook
        // runs at rate 4/7. Hand value 2.320728 bits.
        let g = graph(
            6,
            &[0.0; 6],
            &[
                (0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0),
                (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0),
                (2, 3, 1.0),
            ],
        );
        let fl = flows(&g).unwrap();
        let l = partition_codelength(&g, &fl, &[0, 0, 0, 1, 1, 1]);
        let q = 1.0 / 7.0;
        let h_index = 1.0; // two equal exit rates
        let module_rate = 4.0f64 / 7.0;
        let h_module = {
            let probs = [1.0 / 14.0, 3.0 / 14.0, 1.0 / 7.0, 1.0 / 7.0];
            let t: f64 = probs.iter().sum();
            -probs.iter().map(|&x| (x / t) * (x / t).log2()).sum::<f64>()
        };
        let hand = q * h_index + 2.0 * module_rate * h_module;
        assert_abs_diff_eq!(l, hand, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 2.3207, epsilon = 5e-5);
    }

    #[test]
    fn entropy_form_agrees_with_plogp_form() {
        use rand::Rng;
        let mut rng = crate::rng::plain_rng(11);
        for _ in 0..50 {
            let n = rng.gen_range(3..9);
            let mut edges = Vec::new();
            for a in 0..n as u32 {
                for b in (a + 1)..n as u32 {
                    if rng.gen_bool(0.6) {
                        edges.push((a, b, rng.gen_range(1..10) as f64 / 3.0));
                    }
                }
            }
            let loops: Vec<f64> = (0..n).map(|_| rng.gen_range(0..3) as f64).collect();
            let g = graph(n, &loops, &edges);
            let fl = match flows(&g) {
                Ok(fl) => fl,
                Err(_) => continue,
            };
            let asg: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3) as u32).collect();
            let a = partition_codelength(&g, &fl, &asg);
            let b = entropy_form(&g, &fl, &asg);
            assert_abs_diff_eq!(a, b, epsilon = 1e-11);
        }
    }

    #[test]
    fn flat_tree_codelength_matches_partition_form() {
        let g = graph(
            6,
            &[0.0; 6],
            &[
                (0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0),
                (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0),
                (2, 3, 1.0),
            ],
        );
        let fl = flows(&g).unwrap();
        let tree = TreeModule {
            children: vec![
                TreeChild::Module(TreeModule {
                    children: vec![TreeChild::Leaf(0), TreeChild::Leaf(1), TreeChild::Leaf(2)],
                }),
                TreeChild::Module(TreeModule {
                    children: vec![TreeChild::Leaf(3), TreeChild::Leaf(4), TreeChild::Leaf(5)],
                }),
            ],
        };
        let flat = partition_codelength(&g, &fl, &[0, 0, 0, 1, 1, 1]);
        assert_abs_diff_eq!(tree_codelength(&tree, &g, &fl), flat, epsilon = 1e-12);
    }

    #[test]
    fn deep_tree_codelength_adds_index_level() {
        // Nesting both triangle modules under one super-module that spans
        // everything reproduces the hand-computable three-level value.
        let g = graph(
            6,
            &[0.0; 6],
            &[
                (0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0),
                (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0),
                (2, 3, 1.0),
            ],
        );
        let fl = flows(&g).unwrap();
        let tree = TreeModule {
            children: vec![TreeChild::Module(TreeModule {
                children: vec![
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(0), TreeChild::Leaf(1), TreeChild::Leaf(2)],
                    }),
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(3), TreeChild::Leaf(4), TreeChild::Leaf(5)],
                    }),
                ],
            })],
        };
        // Root codebook: super enter rate 0 (no flow exits the super), so
        // usage 0 → 0 bits. Super codebook: children rates 1/14 each, own
        // exit 0 → plogp(2/14) − 2·plogp(1/14). Triangle modules: exit 1/14
        // plus leaves, minus plogp(1/14) each.
        let leaf = |x: f64| plogp(x);
        let super_cb = plogp(2.0 / 14.0) - 2.0 * leaf(1.0 / 14.0);
        let module_cb = plogp(1.0 / 14.0 + 0.5)
            - leaf(1.0 / 14.0)
            - (2.0 * leaf(1.0 / 7.0) + leaf(3.0 / 14.0));
        let hand = super_cb + 2.0 * module_cb;
        assert_abs_diff_eq!(tree_codelength(&tree, &g, &fl), hand, epsilon = 1e-12);
    }

    #[test]
    fn projection_orders_groups_by_size() {
        let tree = ClusterTree {
            codelength: 1.0,
            root: TreeModule {
                children: vec![
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(2)],
                    }),
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(0), TreeChild::Leaf(1)],
                    }),
                ],
            },
        };
        let members = vec![vec![0, 2, 5, 7], vec![1, 4, 6], vec![3, 8]];
        let groups = project(&tree, &members);
        assert_eq!(groups, vec![vec![0, 1, 2, 4, 5, 6, 7], vec![3, 8]]);
    }

    #[test]
    fn projection_breaks_size_ties_by_class_id() {
        let tree = ClusterTree {
            codelength: 1.0,
            root: TreeModule {
                children: vec![
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(1)],
                    }),
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(0)],
                    }),
                ],
            },
        };
        let members = vec![vec![9], vec![4]];
        let groups = project(&tree, &members);
        assert_eq!(groups, vec![vec![9], vec![4]]);
    }

    #[test]
    fn tree_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.txt");
        let tree = ClusterTree {
            codelength: 2.3207,
            root: TreeModule {
                children: vec![
                    TreeChild::Module(TreeModule {
                        children: vec![
                            TreeChild::Leaf(0),
                            TreeChild::Module(TreeModule {
                                children: vec![TreeChild::Leaf(2), TreeChild::Leaf(3)],
                            }),
                        ],
                    }),
                    TreeChild::Module(TreeModule {
                        children: vec![TreeChild::Leaf(1)],
                    }),
                ],
            },
        };
        let visit = vec![0.25, 0.25, 0.3, 0.2];
        write_tree_file(&path, &tree, &visit).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# codelength=2.3207 bits\n"));
        assert!(text.contains("1:2:1 0.3 3"));
        assert!(text.contains("2:1 0.25 2"));
        let (back, visits) = read_tree_file(&path, 4).unwrap();
        assert_eq!(back, tree);
        assert_eq!(visits, visit);
    }

    #[test]
    fn tree_file_rejects_missing_class() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.txt");
        std::fs::write(&path, "# codelength=1 bits\n1:1 0.5 1\n").unwrap();
        assert!(read_tree_file(&path, 2).is_err());
    }
}
