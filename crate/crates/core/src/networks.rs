//! Network fragility studies on symmetric line and circular topologies:
//! enumerate sparsity patterns over a class of perturbable entries, compute
//! the stability radius per pattern, and rank the critical edge sets.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::model::{ProblemInstance, SparsityPattern};
use crate::solver::{multistart, SolveResult, SolverConfig};
use crate::{Error, Result};

/// Patterns whose radii differ by less than this are grouped as a symmetry
/// class in the ranking.
pub const TIE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Line,
    Circle,
}

/// A symmetric network with scalar node states: self loops of weight
/// `self_weight` and inter-node couplings of weight `edge_weight`.
#[derive(Clone, Copy, Debug)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub node_count: usize,
    pub self_weight: f64,
    pub edge_weight: f64,
}

impl NetworkSpec {
    pub fn new(topology: Topology, node_count: usize) -> Self {
        Self {
            topology,
            node_count,
            self_weight: -2.5,
            edge_weight: 1.0,
        }
    }
}

/// Which entries of the state matrix a pattern may perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryClass {
    /// Diagonal entries only.
    SelfLoopsOnly,
    /// Off-diagonal entries on the coupling support only.
    OffDiagonalOnly,
    /// Union of both.
    Any,
}

/// How many entries may be perturbed simultaneously, and of which class.
#[derive(Clone, Copy, Debug)]
pub struct EdgePatternQuery {
    pub budget: usize,
    pub class: EntryClass,
}

/// Build the network instance: `A` from the topology weights, `B = C = I`,
/// and a single-entry placeholder pattern to be replaced per query.
pub fn build_network(spec: &NetworkSpec) -> Result<ProblemInstance> {
    let n = spec.node_count;
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "network needs at least 2 nodes, got {n}"
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = spec.self_weight;
        if i + 1 < n {
            a[(i, i + 1)] = spec.edge_weight;
            a[(i + 1, i)] = spec.edge_weight;
        }
    }
    if spec.topology == Topology::Circle {
        a[(0, n - 1)] = spec.edge_weight;
        a[(n - 1, 0)] = spec.edge_weight;
    }
    let eye = DMatrix::identity(n, n);
    let placeholder = SparsityPattern::from_entries(n, n, &[(0, 0)])?;
    ProblemInstance::new(a, eye.clone(), eye, placeholder)
}

/// Entries admissible for a query on the given network.
pub fn admissible_entries(spec: &NetworkSpec, class: EntryClass) -> Vec<(usize, usize)> {
    let n = spec.node_count;
    let adjacent = |i: usize, j: usize| -> bool {
        (i + 1 == j || j + 1 == i)
            || (spec.topology == Topology::Circle
                && ((i == 0 && j == n - 1) || (j == 0 && i == n - 1)))
    };
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let keep = match class {
                EntryClass::SelfLoopsOnly => i == j,
                EntryClass::OffDiagonalOnly => i != j && adjacent(i, j),
                EntryClass::Any => i == j || adjacent(i, j),
            };
            if keep {
                entries.push((i, j));
            }
        }
    }
    entries
}

fn combinations(items: &[(usize, usize)], budget: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        items: &[(usize, usize)],
        budget: usize,
        start: usize,
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if current.len() == budget {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            current.push(items[i]);
            rec(items, budget, i + 1, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, budget, 0, &mut Vec::new(), &mut out);
    out
}

/// Enumerate all admissible entry subsets of the requested size.
pub fn enumerate_patterns(
    spec: &NetworkSpec,
    query: &EdgePatternQuery,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if query.budget == 0 {
        return Err(Error::InvalidInput("budget must be at least 1".into()));
    }
    let entries = admissible_entries(spec, query.class);
    let patterns = combinations(&entries, query.budget);
    if patterns.len() > 10_000 {
        return Err(Error::InvalidInput(format!(
            "{} patterns exceed the enumeration limit",
            patterns.len()
        )));
    }
    Ok(patterns)
}

/// Outcome for one sparsity pattern.
#[derive(Clone, Debug)]
pub struct PatternResult {
    pub entries: Vec<(usize, usize)>,
    /// Best valid stability radius found, if any.
    pub sr: Option<f64>,
    pub omega: f64,
    /// Values of the sparsified optimal perturbation at the pattern entries.
    pub perturbation: Vec<f64>,
    pub error: Option<String>,
}

/// Ranked pattern results, ascending by radius, with ties grouped.
#[derive(Clone, Debug)]
pub struct RankedEdges {
    pub results: Vec<PatternResult>,
    /// Indices into `results` per tie group (symmetry class), best first.
    pub tie_groups: Vec<Vec<usize>>,
}

impl RankedEdges {
    pub fn best(&self) -> Option<&PatternResult> {
        self.results.first()
    }
}

/// Compute the stability radius for every admissible pattern and rank the
/// patterns ascending (the most critical edge set first). Each pattern runs
/// both the standard and the single-eigenvalue solver and keeps the smaller
/// valid radius.
pub fn rank_critical_edges(
    spec: &NetworkSpec,
    query: &EdgePatternQuery,
    config: &SolverConfig,
) -> Result<RankedEdges> {
    let base = build_network(spec)?;
    let (alpha, stable) = base.check_a1();
    if !stable {
        return Err(Error::NotStable { alpha });
    }
    let patterns = enumerate_patterns(spec, query)?;
    let n = spec.node_count;

    let mut outcomes: Vec<(usize, PatternResult)> = patterns
        .par_iter()
        .enumerate()
        .map(|(idx, entries)| {
            let result = (|| -> Result<Option<SolveResult>> {
                let pattern = SparsityPattern::from_entries(n, n, entries)?;
                let inst = base.with_pattern(pattern)?;
                let mut cfg = config.clone();
                cfg.omega_zero_mode = true;
                cfg.seed = config.seed.wrapping_add(idx as u64 * 7919);
                let outcome = multistart(&inst, &cfg)?;
                Ok(outcome.best.map(|i| outcome.results[i].clone()))
            })();
            let pr = match result {
                Ok(Some(best)) => PatternResult {
                    entries: entries.clone(),
                    sr: Some(best.delta_norm),
                    omega: best.omega,
                    perturbation: entries
                        .iter()
                        .map(|&(i, j)| best.sparsified_delta[(i, j)])
                        .collect(),
                    error: None,
                },
                Ok(None) => PatternResult {
                    entries: entries.clone(),
                    sr: None,
                    omega: 0.0,
                    perturbation: Vec::new(),
                    error: Some("no valid local minimum".into()),
                },
                Err(e) => PatternResult {
                    entries: entries.clone(),
                    sr: None,
                    omega: 0.0,
                    perturbation: Vec::new(),
                    error: Some(e.to_string()),
                },
            };
            (idx, pr)
        })
        .collect();
    outcomes.sort_by_key(|(i, _)| *i);
    let mut results: Vec<PatternResult> = outcomes.into_iter().map(|(_, r)| r).collect();
    results.sort_by(|a, b| match (a.sr, b.sr) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    let mut tie_groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match (r.sr, tie_groups.last_mut()) {
            (Some(sr), Some(group)) => {
                let head = results[group[0]].sr.unwrap();
                if (sr - head).abs() < TIE_TOL {
                    group.push(i);
                } else {
                    tie_groups.push(vec![i]);
                }
            }
            (Some(_), None) => tie_groups.push(vec![i]),
            (None, _) => {}
        }
    }
    Ok(RankedEdges {
        results,
        tie_groups,
    })
}

/// CSV export: `pattern_entries,sr,omega_hat,perturbation_entries` with
/// entries as `row:col` pairs (1-based) separated by spaces.
pub fn write_ranking_csv(
    out: &mut impl std::io::Write,
    ranking: &RankedEdges,
) -> std::io::Result<()> {
    use crate::solver::format_float as ff;
    writeln!(out, "pattern_entries,sr,omega_hat,perturbation_entries")?;
    for r in &ranking.results {
        let entries = r
            .entries
            .iter()
            .map(|&(i, j)| format!("{}:{}", i + 1, j + 1))
            .collect::<Vec<_>>()
            .join(" ");
        let sr = r.sr.map(ff).unwrap_or_else(|| "inf".into());
        let pert = r
            .perturbation
            .iter()
            .map(|v| ff(*v))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(out, "{entries},{sr},{},{pert}", ff(r.omega))?;
    }
    Ok(())
}
