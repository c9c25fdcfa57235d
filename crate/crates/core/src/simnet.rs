//! The reduced portfolio-similarity network.
//!
//! Investors with identical rounded portfolio vectors are interchangeable
//! for similarity purposes, so they collapse into one *portfolio class*.
//! The reduced network has one node per class:
//!
//! - a self-loop of weight `n·(n−1)/2` per class (every within-class investor
//!   pair has similarity exactly 1);
//! - an edge of weight `n_k·n_m·s_km` between classes whose canonical
//!   vectors have cosine similarity `s_km >= threshold`.
//!
//! Total edge mass therefore equals the summed similarity over all investor
//! pairs at or above the threshold, which is what the clustering stage
//! actually needs — at a small fraction of the size.
//!
//! Candidate pairs come from an inverted index (stock -> classes holding
//! it); classes with disjoint support are never compared. For a candidate
//! pair the dot product accumulates stock by stock in ascending order,
//! exactly like a direct merge-walk dot product, so the result is
//! bit-identical to the brute-force path.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::vectors::PortfolioVector;

/// A set of investors sharing one rounded portfolio vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioClass {
    pub canonical: PortfolioVector,
    /// Investor indices into the universe, ascending.
    pub members: Vec<u32>,
}

impl PortfolioClass {
    pub fn n(&self) -> u64 {
        self.members.len() as u64
    }

    /// Within-class pair count; the class's self-loop weight.
    pub fn self_loop(&self) -> f64 {
        let n = self.n();
        (n * (n - 1) / 2) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Weighted undirected graph over portfolio classes. Node ids are class
/// indices; `edges` is sorted by (a, b) with a < b.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub n_nodes: usize,
    pub threshold: f64,
    pub self_loops: Vec<f64>,
    pub edges: Vec<GraphEdge>,
}

impl SimilarityGraph {
    /// Self-loop mass plus edge mass: the network's total retained
    /// similarity over investor pairs. Compensated, so it can be compared
    /// against an independently summed all-pairs mass at tight tolerance.
    pub fn total_mass(&self) -> f64 {
        let mut acc = Kahan::default();
        for &w in &self.self_loops {
            acc.add(w);
        }
        for e in &self.edges {
            acc.add(e.weight);
        }
        acc.value()
    }
}

/// Group identical rounded portfolio vectors into classes. Class order is
/// the first appearance of each vector over investors in index order, so a
/// given portfolio list always yields the same classes.
pub fn dedupe(portfolios: &[PortfolioVector]) -> Vec<PortfolioClass> {
    // Rounded entries come out of one shared rounding function, so equal
    // values are bit-equal and the raw bits are a sound key.
    let mut by_key: HashMap<Vec<(u32, u64)>, usize> = HashMap::new();
    let mut classes: Vec<PortfolioClass> = Vec::new();
    for (inv, p) in portfolios.iter().enumerate() {
        let key: Vec<(u32, u64)> = p
            .0
            .entries()
            .iter()
            .map(|&(idx, v)| (idx, v.to_bits()))
            .collect();
        match by_key.entry(key) {
            std::collections::hash_map::Entry::Occupied(e) => {
                classes[*e.get()].members.push(inv as u32);
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(classes.len());
                classes.push(PortfolioClass {
                    canonical: p.clone(),
                    members: vec![inv as u32],
                });
            }
        }
    }
    classes
}

/// Build the reduced similarity network over portfolio classes.
pub fn build_graph(classes: &[PortfolioClass], threshold: f64) -> Result<SimilarityGraph> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "similarity threshold must be in (0, 1], got {threshold}"
        )));
    }
    let n = classes.len();
    let norms: Vec<f64> = classes.iter().map(|c| c.canonical.0.norm()).collect();

    // Inverted index: stock -> (class, value), classes ascending.
    let mut postings: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
    for (k, class) in classes.iter().enumerate() {
        for &(stock, v) in class.canonical.0.entries() {
            postings.entry(stock).or_default().push((k as u32, v));
        }
    }

    // Score class k against every later class sharing a stock. Each chunk
    // owns its scratch; chunks concatenate in order, so the edge list is
    // independent of the thread count.
    let chunk = 512usize;
    let n_chunks = n.div_ceil(chunk);
    let per_chunk: Vec<Vec<GraphEdge>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = (lo + chunk).min(n);
            let mut acc: Vec<f64> = vec![0.0; n];
            let mut touched: Vec<u32> = Vec::new();
            let mut edges: Vec<GraphEdge> = Vec::new();
            for k in lo..hi {
                for &(stock, vk) in classes[k].canonical.0.entries() {
                    let list = &postings[&stock];
                    let start = list.partition_point(|&(c, _)| c <= k as u32);
                    for &(m, vm) in &list[start..] {
                        if acc[m as usize] == 0.0 {
                            touched.push(m);
                        }
                        acc[m as usize] += vk * vm;
                    }
                }
                touched.sort_unstable();
                for &m in &touched {
                    let dot = acc[m as usize];
                    acc[m as usize] = 0.0;
                    let s = dot / (norms[k] * norms[m as usize]);
                    if s >= threshold {
                        let weight = classes[k].n() as f64 * classes[m as usize].n() as f64 * s;
                        edges.push(GraphEdge {
                            a: k as u32,
                            b: m,
                            weight,
                        });
                    }
                }
                touched.clear();
            }
            edges
        })
        .collect();

    let edges: Vec<GraphEdge> = per_chunk.into_iter().flatten().collect();
    let self_loops: Vec<f64> = classes.iter().map(|c| c.self_loop()).collect();
    Ok(SimilarityGraph {
        n_nodes: n,
        threshold,
        self_loops,
        edges,
    })
}

// --- graph persistence -------------------------------------------------------

/// Plain-text edge list. Header `# nodes=<N> threshold=<t>`, then one
/// `k k w` line per node (self-loop, zero included) and one `k m w` line per
/// edge with k < m. Ids are 1-based.
pub fn write_graph_file(path: &Path, graph: &SimilarityGraph) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# nodes={} threshold={}",
        graph.n_nodes, graph.threshold
    );
    for (i, w) in graph.self_loops.iter().enumerate() {
        let _ = writeln!(out, "{} {} {}", i + 1, i + 1, w);
    }
    for e in &graph.edges {
        let _ = writeln!(out, "{} {} {}", e.a + 1, e.b + 1, e.weight);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_graph_file(path: &Path) -> Result<SimilarityGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty graph file"))?;
    let rest = header
        .strip_prefix("# nodes=")
        .ok_or_else(|| Error::parse(path, 1, "expected '# nodes=... threshold=...'"))?;
    let (n_str, t_str) = rest
        .split_once(" threshold=")
        .ok_or_else(|| Error::parse(path, 1, "expected threshold in header"))?;
    let n_nodes: usize = n_str
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad node count '{n_str}'")))?;
    let threshold: f64 = t_str
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad threshold '{t_str}'")))?;
    let mut self_loops = vec![0.0; n_nodes];
    let mut seen_loop = vec![false; n_nodes];
    let mut edges: Vec<GraphEdge> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b, w) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(a), Some(b), Some(w), None) => (a, b, w),
            _ => return Err(Error::parse(path, lineno, "expected 'a b weight'")),
        };
        let a: usize = a
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id '{a}'")))?;
        let b: usize = b
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id '{b}'")))?;
        let w: f64 = w
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad weight '{w}'")))?;
        if a == 0 || b == 0 || a > n_nodes || b > n_nodes {
            return Err(Error::parse(path, lineno, "node id out of range"));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::parse(path, lineno, format!("bad weight {w}")));
        }
        if a == b {
            if seen_loop[a - 1] {
                return Err(Error::parse(path, lineno, "duplicate self-loop line"));
            }
            seen_loop[a - 1] = true;
            self_loops[a - 1] = w;
        } else {
            if a > b {
                return Err(Error::parse(path, lineno, "edges must have a < b"));
            }
            edges.push(GraphEdge {
                a: (a - 1) as u32,
                b: (b - 1) as u32,
                weight: w,
            });
        }
    }
    Ok(SimilarityGraph {
        n_nodes,
        threshold,
        self_loops,
        edges,
    })
}

/// Companion membership table: `class_id,investor_id`, class ids 1-based,
/// rows ordered by class then member.
pub fn write_members_csv(path: &Path, classes: &[PortfolioClass], ids: &[String]) -> Result<()> {
    let mut out = String::from("class_id,investor_id\n");
    for (k, class) in classes.iter().enumerate() {
        for &inv in &class.members {
            let _ = writeln!(out, "{},{}", k + 1, ids[inv as usize]);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read the membership table back as investor-index lists per class.
/// Validates that classes are contiguous from 1 and that every known
/// investor appears exactly once.
pub fn read_members_csv(path: &Path, ids: &[String]) -> Result<Vec<Vec<u32>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, u32> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i as u32))
        .collect();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == "class_id,investor_id" => {}
        _ => return Err(Error::parse(path, 1, "expected membership header")),
    }
    let mut members: Vec<Vec<u32>> = Vec::new();
    let mut seen = vec![false; ids.len()];
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let (class, id) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno, "expected 'class_id,investor_id'"))?;
        let class: usize = class
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad class id '{class}'")))?;
        if class == 0 || class > members.len() + 1 {
            return Err(Error::parse(path, lineno, "class ids must be contiguous from 1"));
        }
        if class == members.len() + 1 {
            members.push(Vec::new());
        }
        let inv = *index
            .get(id)
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown investor '{id}'")))?;
        if seen[inv as usize] {
            return Err(Error::parse(path, lineno, format!("investor '{id}' listed twice")));
        }
        seen[inv as usize] = true;
        members[class - 1].push(inv);
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::parse(
            path,
            0,
            format!("investor '{}' missing from membership table", ids[missing]),
        ));
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::{cosine, SparseVector};

    fn pv(entries: &[(u32, f64)]) -> PortfolioVector {
        PortfolioVector(SparseVector::from_sorted(entries.to_vec()).unwrap())
    }

    /// Reference implementation: score all class pairs directly.
    fn brute_force_graph(classes: &[PortfolioClass], threshold: f64) -> SimilarityGraph {
        let mut edges = Vec::new();
        for k in 0..classes.len() {
            for m in (k + 1)..classes.len() {
                if let Ok(s) = cosine(&classes[k].canonical.0, &classes[m].canonical.0) {
                    if s >= threshold {
                        edges.push(GraphEdge {
                            a: k as u32,
                            b: m as u32,
                            weight: classes[k].n() as f64 * classes[m].n() as f64 * s,
                        });
                    }
                }
            }
        }
        SimilarityGraph {
            n_nodes: classes.len(),
            threshold,
            self_loops: classes.iter().map(|c| c.self_loop()).collect(),
            edges,
        }
    }

    #[test]
    fn dedupe_groups_identical_vectors() {
        // Nine investors over three distinct vectors: class sizes 4, 3, 2.
        let a = pv(&[(0, 1.0)]);
        let b = pv(&[(0, 0.5), (1, 0.5)]);
        let c = pv(&[(2, 1.0)]);
        let portfolios = vec![
            a.clone(), b.clone(), a.clone(), c.clone(), b.clone(),
            a.clone(), b.clone(), a.clone(), c.clone(),
        ];
        let classes = dedupe(&portfolios);
        assert_eq!(classes.len(), 3);
        assert_eq!(classes[0].members, vec![0, 2, 5, 7]);
        assert_eq!(classes[1].members, vec![1, 4, 6]);
        assert_eq!(classes[2].members, vec![3, 8]);
        let total: usize = classes.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, portfolios.len());
    }

    #[test]
    fn self_loop_counts_within_class_pairs() {
        let class = PortfolioClass {
            canonical: pv(&[(0, 1.0)]),
            members: vec![0, 1, 2, 3],
        };
        assert_eq!(class.self_loop(), 6.0);
        let single = PortfolioClass {
            canonical: pv(&[(0, 1.0)]),
            members: vec![9],
        };
        assert_eq!(single.self_loop(), 0.0);
    }

    #[test]
    fn edge_weight_scales_similarity_by_both_class_sizes() {
        // cos((0.6, 0.8), (1.0)) = 0.6 exactly (unit norms).
        let classes = vec![
            PortfolioClass { canonical: pv(&[(0, 0.6), (1, 0.8)]), members: vec![0, 1] },
            PortfolioClass { canonical: pv(&[(0, 1.0)]), members: vec![2, 3, 4] },
        ];
        let g = build_graph(&classes, 0.5).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].weight, 2.0 * 3.0 * 0.6);
        // The worked arithmetic for the weight formula: 2 * 3 * 0.95 = 5.7.
        assert!((2.0 * 3.0 * 0.95 - 5.7_f64).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_pairs_produce_no_edge() {
        let classes = vec![
            PortfolioClass { canonical: pv(&[(0, 0.6), (1, 0.8)]), members: vec![0] },
            PortfolioClass { canonical: pv(&[(0, 1.0)]), members: vec![1] },
        ];
        let g = build_graph(&classes, 0.9).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn threshold_must_be_in_unit_interval() {
        let classes = vec![PortfolioClass { canonical: pv(&[(0, 1.0)]), members: vec![0] }];
        assert!(build_graph(&classes, 0.0).is_err());
        assert!(build_graph(&classes, 1.5).is_err());
        assert!(build_graph(&classes, 1.0).is_ok());
    }

    #[test]
    fn weight_conservation_on_worked_example() {
        // Classes a (n=2), b (n=1), c (n=1); s_ab = 0.95, s_bc = 0.92,
        // s_ac below threshold. Full investor-pair mass:
        // 1 within-a pair + 2 a-b pairs at 0.95 + 1 b-c pair at 0.92 = 3.82.
        let s_ab = 0.95;
        let s_bc = 0.92;
        let full = 1.0 + 2.0 * 1.0 * s_ab + 1.0 * 1.0 * s_bc;
        let g = SimilarityGraph {
            n_nodes: 3,
            threshold: 0.9,
            self_loops: vec![1.0, 0.0, 0.0],
            edges: vec![
                GraphEdge { a: 0, b: 1, weight: 2.0 * 1.0 * s_ab },
                GraphEdge { a: 1, b: 2, weight: 1.0 * 1.0 * s_bc },
            ],
        };
        assert!((g.total_mass() - full).abs() < 1e-12);
        assert!((full - 3.82).abs() < 1e-12);
    }

    #[test]
    fn inverted_index_matches_brute_force_exactly() {
        // Deterministic pseudo-random class set with heavy stock sharing.
        use rand::prelude::*;
        let mut rng = crate::rng::plain_rng(77);
        let mut portfolios = Vec::new();
        for _ in 0..120 {
            let support = rng.gen_range(1..=3);
            let mut idxs: Vec<u32> = (0..10u32).collect();
            idxs.shuffle(&mut rng);
            let mut entries: Vec<(u32, f64)> = idxs[..support]
                .iter()
                .map(|&i| (i, (rng.gen_range(1..=99) as f64) / 100.0))
                .collect();
            entries.sort_by_key(|e| e.0);
            portfolios.push(pv(&entries));
        }
        let classes = dedupe(&portfolios);
        let fast = build_graph(&classes, 0.9).unwrap();
        let brute = brute_force_graph(&classes, 0.9);
        assert_eq!(fast.edges.len(), brute.edges.len());
        for (f, b) in fast.edges.iter().zip(&brute.edges) {
            assert_eq!((f.a, f.b), (b.a, b.b));
            assert_eq!(f.weight, b.weight, "weights must be bit-identical");
        }
    }

    #[test]
    fn empty_canonical_class_is_isolated() {
        let classes = vec![
            PortfolioClass { canonical: PortfolioVector::default(), members: vec![0, 1] },
            PortfolioClass { canonical: pv(&[(0, 1.0)]), members: vec![2] },
        ];
        let g = build_graph(&classes, 0.9).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.self_loops, vec![1.0, 0.0]);
    }

    #[test]
    fn graph_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let g = SimilarityGraph {
            n_nodes: 3,
            threshold: 0.9,
            self_loops: vec![6.0, 0.0, 1.0],
            edges: vec![GraphEdge { a: 0, b: 2, weight: 5.699999999999 }],
        };
        write_graph_file(&path, &g).unwrap();
        let back = read_graph_file(&path).unwrap();
        assert_eq!(back, g);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# nodes=3 threshold=0.9\n"));
        assert!(text.contains("1 3 5.699999999999"));
    }

    #[test]
    fn members_csv_round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let ids: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let classes = vec![
            PortfolioClass { canonical: pv(&[(0, 1.0)]), members: vec![0, 2] },
            PortfolioClass { canonical: pv(&[(1, 1.0)]), members: vec![1] },
        ];
        write_members_csv(&path, &classes, &ids).unwrap();
        let back = read_members_csv(&path, &ids).unwrap();
        assert_eq!(back, vec![vec![0, 2], vec![1]]);
        // A table that misses an investor is rejected.
        std::fs::write(&path, "class_id,investor_id\n1,x\n").unwrap();
        assert!(read_members_csv(&path, &ids).is_err());
    }
}
