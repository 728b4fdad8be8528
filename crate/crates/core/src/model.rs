//! ADCOP instances and the two random benchmark families.
//!
//! An ADCOP assigns every binary constraint two privately-owned cost tables,
//! one per participant, so the cost of an edge under a pair of values is the
//! sum of both sides. Instances are immutable after construction.

use std::collections::btree_map;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{Error, Result};

/// Agents and variables coincide (one variable per agent), so a single index
/// names both.
pub type AgentId = usize;

/// Dense `rows x cols` table of finite non-negative costs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u64>) -> Result<CostMatrix> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "cost table holds {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> CostMatrix {
        CostMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<CostMatrix> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(Error::InvalidInstance("empty cost table".into()));
        }
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch("ragged cost table".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        CostMatrix::new(nrows, ncols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    pub fn entries(&self) -> &[u64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.data.chunks(self.cols).map(<[u64]>::to_vec).collect()
    }

    /// Scales every entry, for cost-invariance experiments.
    pub fn scaled(&self, factor: u64) -> CostMatrix {
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&e| e * factor).collect(),
        }
    }
}

/// A binary constraint between `a < b` with one private cost table per side.
///
/// `cost_ab[d_a][d_b]` is the cost agent `a` incurs, `cost_ba[d_b][d_a]` the
/// cost agent `b` incurs, for the same value pair.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Constraint {
    pub a: AgentId,
    pub b: AgentId,
    pub cost_ab: CostMatrix,
    pub cost_ba: CostMatrix,
}

impl Constraint {
    /// The private table `who` owns in this constraint.
    pub fn own_side(&self, who: AgentId) -> &CostMatrix {
        debug_assert!(who == self.a || who == self.b);
        if who == self.a {
            &self.cost_ab
        } else {
            &self.cost_ba
        }
    }

    pub fn other(&self, who: AgentId) -> AgentId {
        if who == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A (possibly partial) assignment of values to variables.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Assignment(BTreeMap<AgentId, usize>);

impl Assignment {
    pub fn new() -> Assignment {
        Assignment::default()
    }

    pub fn single(var: AgentId, value: usize) -> Assignment {
        let mut a = Assignment::new();
        a.set(var, value);
        a
    }

    pub fn get(&self, var: AgentId) -> Option<usize> {
        self.0.get(&var).copied()
    }

    pub fn set(&mut self, var: AgentId, value: usize) {
        self.0.insert(var, value);
    }

    pub fn contains(&self, var: AgentId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copies every binding of `other` into `self`.
    pub fn merge(&mut self, other: &Assignment) {
        for (&var, &value) in &other.0 {
            self.0.insert(var, value);
        }
    }

    /// The sub-assignment over `vars`; unassigned variables are skipped.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a AgentId>) -> Assignment {
        let mut out = Assignment::new();
        for &var in vars {
            if let Some(v) = self.get(var) {
                out.set(var, v);
            }
        }
        out
    }

    pub fn iter(&self) -> btree_map::Iter<'_, AgentId, usize> {
        self.0.iter()
    }

    /// Dense value vector for a complete assignment over `0..n`.
    pub fn to_values(&self, n: usize) -> Result<Vec<usize>> {
        (0..n)
            .map(|var| {
                self.get(var)
                    .ok_or_else(|| Error::BadAssignment(format!("variable {var} unassigned")))
            })
            .collect()
    }
}

impl FromIterator<(AgentId, usize)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (AgentId, usize)>>(iter: T) -> Assignment {
        Assignment(iter.into_iter().collect())
    }
}

impl fmt::Debug for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// An asymmetric DCOP: one discrete variable per agent and a set of binary
/// constraints, each with a private cost table per side.
#[derive(Clone, Debug)]
pub struct AdcopInstance {
    domains: Vec<usize>,
    constraints: Vec<Constraint>,
    /// Per agent: `(neighbor, constraint index)` sorted by neighbor.
    adjacency: Vec<Vec<(AgentId, usize)>>,
}

impl AdcopInstance {
    pub fn new(domains: Vec<usize>, mut constraints: Vec<Constraint>) -> Result<AdcopInstance> {
        let n = domains.len();
        if n == 0 {
            return Err(Error::InvalidInstance("no agents".into()));
        }
        if let Some(agent) = domains.iter().position(|&d| d == 0) {
            return Err(Error::InvalidInstance(format!(
                "agent {agent} has an empty domain"
            )));
        }
        for c in &mut constraints {
            if c.a == c.b {
                return Err(Error::InvalidInstance(format!(
                    "self-constraint on agent {}",
                    c.a
                )));
            }
            if c.a > c.b {
                // Normalize to a < b.
                std::mem::swap(&mut c.a, &mut c.b);
                std::mem::swap(&mut c.cost_ab, &mut c.cost_ba);
            }
            if c.b >= n {
                return Err(Error::InvalidInstance(format!(
                    "constraint references agent {} but only {n} exist",
                    c.b
                )));
            }
            if c.cost_ab.rows() != domains[c.a]
                || c.cost_ab.cols() != domains[c.b]
                || c.cost_ba.rows() != domains[c.b]
                || c.cost_ba.cols() != domains[c.a]
            {
                return Err(Error::DimensionMismatch(format!(
                    "cost tables of constraint ({}, {}) do not match the domain sizes",
                    c.a, c.b
                )));
            }
        }
        constraints.sort_by_key(|c| (c.a, c.b));
        if constraints.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::InvalidInstance(
                "duplicate constraint between an agent pair".into(),
            ));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (idx, c) in constraints.iter().enumerate() {
            adjacency[c.a].push((c.b, idx));
            adjacency[c.b].push((c.a, idx));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(AdcopInstance {
            domains,
            constraints,
            adjacency,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_size(&self, agent: AgentId) -> usize {
        self.domains[agent]
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// `(neighbor, constraint index)` pairs of `agent`, sorted by neighbor.
    pub fn neighbors(&self, agent: AgentId) -> &[(AgentId, usize)] {
        &self.adjacency[agent]
    }

    pub fn degree(&self, agent: AgentId) -> usize {
        self.adjacency[agent].len()
    }

    pub fn constraint_between(&self, i: AgentId, j: AgentId) -> Option<&Constraint> {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(nb, _)| nb)
            .ok()
            .map(|pos| &self.constraints[self.adjacency[i][pos].1])
    }

    /// `f_ij(d_i, d_j)`: the cost agent `i` privately incurs against `j`.
    pub fn own_cost(&self, i: AgentId, j: AgentId, d_i: usize, d_j: usize) -> u64 {
        let c = self
            .constraint_between(i, j)
            .expect("own_cost on unconstrained pair");
        c.own_side(i).get(d_i, d_j)
    }

    /// Total cost of a complete assignment: both private sides of every
    /// constraint.
    pub fn evaluate(&self, assignment: &Assignment) -> Result<Cost> {
        let values = assignment.to_values(self.agent_count())?;
        for (agent, &v) in values.iter().enumerate() {
            if v >= self.domains[agent] {
                return Err(Error::BadAssignment(format!(
                    "value {v} out of domain for variable {agent}"
                )));
            }
        }
        let mut total = 0u64;
        for c in &self.constraints {
            total += c.cost_ab.get(values[c.a], values[c.b]);
            total += c.cost_ba.get(values[c.b], values[c.a]);
        }
        Ok(Cost::finite(total))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.agent_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut visited = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    visited += 1;
                    stack.push(v);
                }
            }
        }
        visited == n
    }

    /// Every cost of every table multiplied by `factor` (for scale-invariance
    /// checks).
    pub fn scaled(&self, factor: u64) -> AdcopInstance {
        let constraints = self
            .constraints
            .iter()
            .map(|c| Constraint {
                a: c.a,
                b: c.b,
                cost_ab: c.cost_ab.scaled(factor),
                cost_ba: c.cost_ba.scaled(factor),
            })
            .collect();
        AdcopInstance::new(self.domains.clone(), constraints).expect("scaling preserves validity")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<AdcopInstance> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AdcopInstance> {
        let text = std::fs::read_to_string(path)?;
        AdcopInstance::from_json(&text)
    }
}

/// On-disk JSON layout of an instance.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    agents: usize,
    domains: Vec<usize>,
    constraints: Vec<ConstraintFile>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintFile {
    i: usize,
    j: usize,
    fij: Vec<Vec<u64>>,
    fji: Vec<Vec<u64>>,
}

impl From<&AdcopInstance> for InstanceFile {
    fn from(inst: &AdcopInstance) -> InstanceFile {
        InstanceFile {
            agents: inst.agent_count(),
            domains: inst.domains.clone(),
            constraints: inst
                .constraints
                .iter()
                .map(|c| ConstraintFile {
                    i: c.a,
                    j: c.b,
                    fij: c.cost_ab.to_rows(),
                    fji: c.cost_ba.to_rows(),
                })
                .collect(),
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<AdcopInstance> {
        if self.agents != self.domains.len() {
            return Err(Error::InvalidInstance(format!(
                "file declares {} agents but lists {} domains",
                self.agents,
                self.domains.len()
            )));
        }
        let constraints = self
            .constraints
            .into_iter()
            .map(|c| {
                Ok(Constraint {
                    a: c.i,
                    b: c.j,
                    cost_ab: CostMatrix::from_rows(&c.fij)?,
                    cost_ba: CostMatrix::from_rows(&c.fji)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        AdcopInstance::new(self.domains, constraints)
    }
}

/// Generates a connected random ADCOP with uniform integer costs in
/// `[0, max_cost]` on both sides of every constraint.
///
/// The edge set has exactly `round(density * n(n-1)/2)` pairs and always
/// contains a uniformly random spanning tree, so the constraint graph is
/// connected. Fully deterministic in `(parameters, seed)`.
pub fn generate_random_adcop(
    n: usize,
    density: f64,
    domain_size: usize,
    max_cost: u64,
    seed: u64,
) -> Result<AdcopInstance> {
    if max_cost == 0 || max_cost >= u64::MAX {
        return Err(Error::InvalidParameter(
            "max_cost must be a positive finite cost".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_connected_edges(n, density, domain_size, &mut rng)?;
    let constraints = edges
        .into_iter()
        .map(|(a, b)| Constraint {
            a,
            b,
            cost_ab: random_matrix(domain_size, domain_size, &mut rng, |rng| {
                rng.gen_range(0..=max_cost)
            }),
            cost_ba: random_matrix(domain_size, domain_size, &mut rng, |rng| {
                rng.gen_range(0..=max_cost)
            }),
        })
        .collect();
    AdcopInstance::new(vec![domain_size; n], constraints)
}

/// Generates an asymmetric MaxDCSP: each side of each constraint marks every
/// value pair prohibited with probability `tightness`; prohibited pairs cost
/// 1, permitted pairs cost 0.
pub fn generate_max_dcsp(
    n: usize,
    density: f64,
    domain_size: usize,
    tightness: f64,
    seed: u64,
) -> Result<AdcopInstance> {
    if !(0.0..=1.0).contains(&tightness) {
        return Err(Error::InvalidParameter(format!(
            "tightness {tightness} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_connected_edges(n, density, domain_size, &mut rng)?;
    let constraints = edges
        .into_iter()
        .map(|(a, b)| Constraint {
            a,
            b,
            cost_ab: random_matrix(domain_size, domain_size, &mut rng, |rng| {
                u64::from(rng.gen_bool(tightness))
            }),
            cost_ba: random_matrix(domain_size, domain_size, &mut rng, |rng| {
                u64::from(rng.gen_bool(tightness))
            }),
        })
        .collect();
    AdcopInstance::new(vec![domain_size; n], constraints)
}

fn random_matrix(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
    mut entry: impl FnMut(&mut ChaCha8Rng) -> u64,
) -> CostMatrix {
    let data = (0..rows * cols).map(|_| entry(rng)).collect();
    CostMatrix::new(rows, cols, data).expect("sizes match by construction")
}

/// Draws `round(density * n(n-1)/2)` distinct agent pairs containing a
/// uniformly random spanning tree. Errors when the target is below `n - 1`.
fn random_connected_edges(
    n: usize,
    density: f64,
    domain_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(AgentId, AgentId)>> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "at least two agents are required".into(),
        ));
    }
    if domain_size == 0 {
        return Err(Error::InvalidParameter("empty domains".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density {density} outside (0, 1]"
        )));
    }
    let max_edges = n * (n - 1) / 2;
    #[allow(clippy::cast_precision_loss, clippy::cast_sign_loss)]
    let target = (density * max_edges as f64).round() as usize;
    if target < n - 1 {
        return Err(Error::DensityTooLow {
            density,
            edges: target,
            required: n - 1,
            agents: n,
        });
    }

    let mut edges: Vec<(AgentId, AgentId)> = random_spanning_tree(n, rng);
    let in_tree: std::collections::BTreeSet<(AgentId, AgentId)> = edges.iter().copied().collect();
    let mut rest: Vec<(AgentId, AgentId)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|pair| !in_tree.contains(pair))
        .collect();
    rest.shuffle(rng);
    edges.extend(rest.into_iter().take(target - (n - 1)));
    edges.sort_unstable();
    Ok(edges)
}

/// Uniform random labeled tree on `n` vertices via a random Pruefer sequence.
fn random_spanning_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<(AgentId, AgentId)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
        .filter(|&v| degree[v] == 1)
        .map(std::cmp::Reverse)
        .collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let std::cmp::Reverse(leaf) = leaves.pop().expect("a leaf always remains");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.push(std::cmp::Reverse(s));
        }
    }
    let std::cmp::Reverse(u) = leaves.pop().expect("two vertices remain");
    let std::cmp::Reverse(v) = leaves.pop().expect("two vertices remain");
    edges.push((u.min(v), u.max(v)));
    edges
}
