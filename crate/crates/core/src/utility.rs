//! Dense multidimensional cost tables: join, min-projection, slicing and the
//! bounded-dimension drop used by the inference phase.
//!
//! Tables are immutable values; every operation builds a new table and adds
//! one logical operation per written result entry to the caller's counter,
//! which feeds the NCLO metric.

use std::fmt;

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::model::{AgentId, Assignment};

/// Total order on table dimensions: shallowest pseudo-tree depth first,
/// ties to the smaller variable id.
#[derive(Clone, Debug)]
pub struct DimOrder {
    rank: Vec<(usize, AgentId)>,
}

impl DimOrder {
    pub fn from_depths(depths: &[usize]) -> DimOrder {
        DimOrder {
            rank: depths.iter().copied().zip(0..).collect(),
        }
    }

    /// Order by id only — the canonical order when no tree is in play.
    pub fn by_id(n: usize) -> DimOrder {
        DimOrder {
            rank: (0..n).map(|v| (0, v)).collect(),
        }
    }

    pub(crate) fn key(&self, var: AgentId) -> (usize, AgentId) {
        self.rank[var]
    }

    pub fn is_canonical(&self, dims: &[AgentId]) -> bool {
        dims.windows(2).all(|w| self.key(w[0]) < self.key(w[1]))
    }
}

/// Cap on the number of dimensions an inference message may carry.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DimLimit {
    Bounded(usize),
    Unbounded,
}

impl DimLimit {
    pub fn new(k: usize) -> Result<DimLimit> {
        if k == 0 {
            Err(Error::InvalidParameter(
                "dimension limit must be at least 1".into(),
            ))
        } else {
            Ok(DimLimit::Bounded(k))
        }
    }

    pub fn allows(self, dims: usize) -> bool {
        match self {
            DimLimit::Bounded(k) => dims <= k,
            DimLimit::Unbounded => true,
        }
    }

    /// `min(k, other)` as a plain count.
    pub fn cap(self, other: usize) -> usize {
        match self {
            DimLimit::Bounded(k) => k.min(other),
            DimLimit::Unbounded => other,
        }
    }
}

impl fmt::Display for DimLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimLimit::Bounded(k) => write!(f, "{k}"),
            DimLimit::Unbounded => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for DimLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<DimLimit> {
        match s {
            "inf" | "infinity" | "unbounded" => Ok(DimLimit::Unbounded),
            _ => {
                let k: usize = s.parse().map_err(|_| {
                    Error::InvalidParameter(format!("dimension limit `{s}` is not a number"))
                })?;
                DimLimit::new(k)
            }
        }
    }
}

/// Dense cost table over an ordered set of variable dimensions, row-major in
/// dimension order.
#[derive(Clone, PartialEq, Eq)]
pub struct UtilityTable {
    dims: Vec<AgentId>,
    card: Vec<usize>,
    entries: Vec<Cost>,
}

impl UtilityTable {
    pub fn new(dims: Vec<AgentId>, card: Vec<usize>, entries: Vec<Cost>) -> Result<UtilityTable> {
        if dims.len() != card.len() {
            return Err(Error::DimensionMismatch(
                "dims and cardinalities differ in length".into(),
            ));
        }
        let mut sorted = dims.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != dims.len() {
            return Err(Error::DimensionMismatch("repeated dimension".into()));
        }
        let expected: usize = card.iter().product();
        if entries.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a table of size {expected}",
                entries.len()
            )));
        }
        Ok(UtilityTable {
            dims,
            card,
            entries,
        })
    }

    /// Zero-dimensional table holding a single value.
    pub fn scalar(value: Cost) -> UtilityTable {
        UtilityTable {
            dims: Vec::new(),
            card: Vec::new(),
            entries: vec![value],
        }
    }

    pub fn zeros(dims: Vec<AgentId>, card: Vec<usize>) -> UtilityTable {
        let len = card.iter().product();
        UtilityTable {
            dims,
            card,
            entries: vec![Cost::ZERO; len],
        }
    }

    /// Builds a table by evaluating `f` at every index tuple (given in dim
    /// order).
    pub fn from_fn(
        dims: Vec<AgentId>,
        card: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> Cost,
    ) -> UtilityTable {
        let len: usize = card.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            entries.push(f(&idx));
            advance(&mut idx, &card);
        }
        UtilityTable {
            dims,
            card,
            entries,
        }
    }

    pub fn dims(&self) -> &[AgentId] {
        &self.dims
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.card
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Cost] {
        &self.entries
    }

    pub fn has_dim(&self, var: AgentId) -> bool {
        self.dims.contains(&var)
    }

    fn dim_pos(&self, var: AgentId) -> Option<usize> {
        self.dims.iter().position(|&d| d == var)
    }

    fn cardinality_of(&self, var: AgentId) -> Option<usize> {
        self.dim_pos(var).map(|p| self.card[p])
    }

    /// Value at a full index tuple (in dim order).
    pub fn at(&self, index: &[usize]) -> Cost {
        debug_assert_eq!(index.len(), self.dims.len());
        self.entries[self.flat_index(index)]
    }

    /// Value addressed by an assignment covering every dimension.
    pub fn get(&self, assignment: &Assignment) -> Result<Cost> {
        let index = self
            .dims
            .iter()
            .map(|&d| {
                assignment
                    .get(d)
                    .ok_or_else(|| Error::BadAssignment(format!("dimension {d} unassigned")))
            })
            .collect::<Result<Vec<_>>>()?;
        for (pos, &i) in index.iter().enumerate() {
            if i >= self.card[pos] {
                return Err(Error::BadAssignment(format!(
                    "value {i} out of domain for dimension {}",
                    self.dims[pos]
                )));
            }
        }
        Ok(self.at(&index))
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        let mut flat = 0;
        for (pos, &i) in index.iter().enumerate() {
            debug_assert!(i < self.card[pos]);
            flat = flat * self.card[pos] + i;
        }
        flat
    }

    /// Additive join: dimensions are united (kept in `order`), entries are
    /// the sum of both operands under the projected indices.
    pub fn join(&self, other: &UtilityTable, order: &DimOrder, ops: &mut u64) -> Result<UtilityTable> {
        debug_assert!(order.is_canonical(&self.dims) && order.is_canonical(&other.dims));
        for &d in &self.dims {
            if let Some(c) = other.cardinality_of(d) {
                if c != self.cardinality_of(d).unwrap() {
                    return Err(Error::DimensionMismatch(format!(
                        "shared dimension {d} has cardinality {} vs {c}",
                        self.cardinality_of(d).unwrap()
                    )));
                }
            }
        }

        // Merge the two canonical dim lists.
        let mut dims: Vec<AgentId> = self.dims.iter().chain(&other.dims).copied().collect();
        dims.sort_by_key(|&v| order.key(v));
        dims.dedup();
        let card: Vec<usize> = dims
            .iter()
            .map(|&d| {
                self.cardinality_of(d)
                    .or_else(|| other.cardinality_of(d))
                    .unwrap()
            })
            .collect();

        let map_a = index_map(&dims, &self.dims);
        let map_b = index_map(&dims, &other.dims);
        let len: usize = card.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut scratch_a = vec![0usize; self.dims.len()];
        let mut scratch_b = vec![0usize; other.dims.len()];
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            project(&idx, &map_a, &mut scratch_a);
            project(&idx, &map_b, &mut scratch_b);
            entries.push(self.at(&scratch_a) + other.at(&scratch_b));
            advance(&mut idx, &card);
        }
        *ops += len as u64;
        Ok(UtilityTable {
            dims,
            card,
            entries,
        })
    }

    /// Eliminates `out_dim` by minimizing over its values.
    pub fn min_project(&self, out_dim: AgentId, ops: &mut u64) -> Result<UtilityTable> {
        let pos = self.dim_pos(out_dim).ok_or_else(|| {
            Error::DimensionMismatch(format!("dimension {out_dim} not in table"))
        })?;
        let mut dims = self.dims.clone();
        dims.remove(pos);
        let mut card = self.card.clone();
        let removed = card.remove(pos);

        let len: usize = card.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut full = vec![0usize; self.dims.len()];
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            full[..pos].copy_from_slice(&idx[..pos]);
            full[pos + 1..].copy_from_slice(&idx[pos..]);
            let mut best = Cost::INF;
            for v in 0..removed {
                full[pos] = v;
                best = best.min(self.at(&full));
            }
            entries.push(best);
            advance(&mut idx, &card);
        }
        *ops += len as u64;
        Ok(UtilityTable {
            dims,
            card,
            entries,
        })
    }

    /// Restricts the table to a partial assignment; assigned dimensions are
    /// removed. Dimensions absent from the assignment are kept, and bindings
    /// for variables outside the table are ignored.
    pub fn slice(&self, assignment: &Assignment, ops: &mut u64) -> Result<UtilityTable> {
        let mut fixed: Vec<Option<usize>> = Vec::with_capacity(self.dims.len());
        for (pos, &d) in self.dims.iter().enumerate() {
            match assignment.get(d) {
                Some(v) if v >= self.card[pos] => {
                    return Err(Error::BadAssignment(format!(
                        "value {v} out of domain for dimension {d}"
                    )));
                }
                other => fixed.push(other),
            }
        }
        let keep: Vec<usize> = (0..self.dims.len()).filter(|&p| fixed[p].is_none()).collect();
        let dims: Vec<AgentId> = keep.iter().map(|&p| self.dims[p]).collect();
        let card: Vec<usize> = keep.iter().map(|&p| self.card[p]).collect();

        let len: usize = card.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut full = vec![0usize; self.dims.len()];
        for (pos, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                full[pos] = *v;
            }
        }
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            for (slot, &p) in keep.iter().enumerate() {
                full[p] = idx[slot];
            }
            entries.push(self.at(&full));
            advance(&mut idx, &card);
        }
        *ops += len as u64;
        Ok(UtilityTable {
            dims,
            card,
            entries,
        })
    }

    /// Min-projects out the dimensions of the highest ancestors (smallest
    /// depth, ties to the smaller id) until at most `k` remain. The result
    /// bounds the original from below pointwise.
    pub fn drop_to_limit(self, k: DimLimit, order: &DimOrder, ops: &mut u64) -> UtilityTable {
        let mut table = self;
        while !k.allows(table.dims.len()) {
            let victim = *table
                .dims
                .iter()
                .min_by_key(|&&d| order.key(d))
                .expect("table still has dimensions");
            table = table
                .min_project(victim, ops)
                .expect("victim dimension present");
        }
        table
    }
}

impl fmt::Debug for UtilityTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityTable")
            .field("dims", &self.dims)
            .field("card", &self.card)
            .field("entries", &self.entries)
            .finish()
    }
}

/// For each position in `sub`, where that dimension sits in `full`.
fn index_map(full: &[AgentId], sub: &[AgentId]) -> Vec<usize> {
    sub.iter()
        .map(|d| full.iter().position(|f| f == d).expect("sub dims in full"))
        .collect()
}

fn project(full_idx: &[usize], map: &[usize], out: &mut [usize]) {
    for (slot, &src) in map.iter().enumerate() {
        out[slot] = full_idx[src];
    }
}

/// Advances a mixed-radix counter; wraps to all zeros at the end.
fn advance(idx: &mut [usize], card: &[usize]) {
    for pos in (0..idx.len()).rev() {
        idx[pos] += 1;
        if idx[pos] < card[pos] {
            return;
        }
        idx[pos] = 0;
    }
}
