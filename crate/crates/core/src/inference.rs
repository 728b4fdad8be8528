//! Inference phase: bottom-up utility propagation over the pseudo tree.
//!
//! Each non-root agent combines its own private costs toward its parent and
//! pseudo parents with the tables received from its children and ships the
//! result upward, capped at `k` dimensions. Elimination is non-local: a
//! child's variable is minimized out by the parent after the parent joins its
//! own private side of the tree edge, which keeps parents' tables private
//! while still covering both sides of every tree edge.
//!
//! The resulting per-child tables act as look-up tables for the search
//! phase's initial lower bounds.

use std::collections::BTreeMap;

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::model::{AdcopInstance, AgentId, Assignment};
use crate::pseudo_tree::PseudoTree;
use crate::utility::{DimLimit, DimOrder, UtilityTable};

/// One UTIL message: the table a child shipped to its parent.
#[derive(Clone, Debug)]
pub struct UtilShipment {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub table: UtilityTable,
}

/// Outcome of the inference phase.
#[derive(Clone, Debug)]
pub struct InferenceResult {
    /// Per agent: child id -> lower-bound table with the child's variable
    /// already eliminated.
    child_util: Vec<BTreeMap<AgentId, UtilityTable>>,
    /// Shipped UTIL messages in send order.
    pub shipments: Vec<UtilShipment>,
    /// Per-agent logical-operation clocks after the phase.
    pub agent_nclo: Vec<u64>,
    pub util_msg_count: usize,
    /// Total scalar entries shipped.
    pub util_msg_entries: u64,
}

impl InferenceResult {
    /// Bounds that contribute nothing: a zero scalar per (agent, child).
    /// Running the search on these is plain branch-and-bound on the tree.
    pub fn zeros(tree: &PseudoTree) -> InferenceResult {
        let n = tree.agent_count();
        let mut child_util = vec![BTreeMap::new(); n];
        for agent in 0..n {
            for &c in tree.children(agent) {
                child_util[agent].insert(c, UtilityTable::scalar(Cost::ZERO));
            }
        }
        InferenceResult {
            child_util,
            shipments: Vec::new(),
            agent_nclo: vec![0; n],
            util_msg_count: 0,
            util_msg_entries: 0,
        }
    }

    pub fn child_util(&self, agent: AgentId, child: AgentId) -> &UtilityTable {
        &self.child_util[agent][&child]
    }

    pub fn child_utils(&self, agent: AgentId) -> &BTreeMap<AgentId, UtilityTable> {
        &self.child_util[agent]
    }

    /// Initial lower bound for `child` when `agent` takes `value` under a
    /// context covering the child's separator.
    pub fn initial_bound(
        &self,
        agent: AgentId,
        child: AgentId,
        context: &Assignment,
        value: usize,
    ) -> Result<Cost> {
        let mut full = context.clone();
        full.set(agent, value);
        self.child_util(agent, child).get(&full)
    }
}

/// The agent's own private costs toward its parent and pseudo parents,
/// joined into one table over the agent's variable and theirs.
pub fn local_util(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    agent: AgentId,
    ops: &mut u64,
) -> Result<UtilityTable> {
    let parents = tree.all_parents(agent);
    if parents.is_empty() {
        return Err(Error::Protocol {
            agent,
            detail: "local utility is undefined for the root".into(),
        });
    }
    let order = tree.dim_order();
    let mut util: Option<UtilityTable> = None;
    for p in parents {
        let side = side_table(instance, agent, p, &order);
        util = Some(match util {
            None => side,
            Some(t) => t.join(&side, &order, ops)?,
        });
    }
    Ok(util.expect("at least one parent"))
}

/// `f_{owner,other}` as a utility table over the two variables, laid out in
/// canonical dimension order.
fn side_table(
    instance: &AdcopInstance,
    owner: AgentId,
    other: AgentId,
    order: &DimOrder,
) -> UtilityTable {
    let mut dims = [owner, other];
    dims.sort_by_key(|&v| order.key(v));
    let card: Vec<usize> = dims.iter().map(|&v| instance.domain_size(v)).collect();
    let owner_first = dims[0] == owner;
    UtilityTable::from_fn(dims.to_vec(), card, |idx| {
        let (d_owner, d_other) = if owner_first {
            (idx[0], idx[1])
        } else {
            (idx[1], idx[0])
        };
        Cost::finite(instance.own_cost(owner, other, d_owner, d_other))
    })
}

/// Runs the inference phase with non-local elimination: every non-root agent
/// ships its joined utility to its parent, and the parent joins its own side
/// of the tree edge before eliminating the child's variable.
pub fn run_inference(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    k: DimLimit,
) -> Result<InferenceResult> {
    run_phase(instance, tree, k, Elimination::ByParent)
}

/// Local-elimination variant: each agent eliminates its own variable before
/// shipping, and the parent stores the received table as-is. The tree edge's
/// parent side is never folded in, so bounds are one-sided and never tighter
/// than the non-local ones.
pub fn run_inference_local(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    k: DimLimit,
) -> Result<InferenceResult> {
    run_phase(instance, tree, k, Elimination::BySender)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Elimination {
    ByParent,
    BySender,
}

fn run_phase(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    k: DimLimit,
    elimination: Elimination,
) -> Result<InferenceResult> {
    let n = tree.agent_count();
    let order = tree.dim_order();
    let mut child_util: Vec<BTreeMap<AgentId, UtilityTable>> = vec![BTreeMap::new(); n];
    let mut nclo = vec![0u64; n];
    let mut shipments = Vec::with_capacity(n.saturating_sub(1));
    let mut total_entries = 0u64;

    // Children precede parents in reversed preorder, so every child table is
    // ready when its parent's turn comes.
    for &agent in tree.preorder().iter().rev() {
        if agent == tree.root() {
            continue;
        }
        let mut ops = 0u64;
        let mut util = local_util(instance, tree, agent, &mut ops)?;
        for &c in tree.children(agent) {
            util = util.join(&child_util[agent][&c], &order, &mut ops)?;
        }
        if elimination == Elimination::BySender {
            util = util.min_project(agent, &mut ops)?;
        }
        let msg = util.drop_to_limit(k, &order, &mut ops);
        nclo[agent] += ops;
        debug_assert!(msg.dims().len() <= k.cap(tree.separator(agent).len() + 1));

        let parent = tree.parent(agent).expect("non-root agent has a parent");
        total_entries += msg.len() as u64;
        // The receiver's clock catches up with the message stamp before it
        // processes the table.
        nclo[parent] = nclo[parent].max(nclo[agent]);
        let stored = match elimination {
            Elimination::ByParent => {
                let mut parent_ops = 0u64;
                let own_side = side_table(instance, parent, agent, &order);
                let joined = own_side.join(&msg, &order, &mut parent_ops)?;
                let eliminated = joined.min_project(agent, &mut parent_ops)?;
                nclo[parent] += parent_ops;
                eliminated
            }
            Elimination::BySender => msg.clone(),
        };
        child_util[parent].insert(agent, stored);
        shipments.push(UtilShipment {
            sender: agent,
            receiver: parent,
            table: msg,
        });
    }

    Ok(InferenceResult {
        child_util,
        shipments,
        agent_nclo: nclo,
        util_msg_count: n - 1,
        util_msg_entries: total_entries,
    })
}

/// The forward-bounding style lower bound for the subtree rooted at `child`:
/// the sum over subtree agents of their best single-side local cost toward
/// the assigned ancestors. A reference bound the inference tables are
/// expected to dominate at `k = inf`; the solver itself never calls it.
pub fn subtree_lb(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    agent: AgentId,
    child: AgentId,
    context: &Assignment,
    value: usize,
) -> Result<Cost> {
    if tree.parent(child) != Some(agent) {
        return Err(Error::InvalidParameter(format!(
            "agent {child} is not a child of {agent}"
        )));
    }
    let mut ctx = context.clone();
    ctx.set(agent, value);
    let sep: Vec<AgentId> = tree.separator(child).to_vec();
    for &l in &sep {
        if !ctx.contains(l) {
            return Err(Error::BadAssignment(format!(
                "context misses separator variable {l}"
            )));
        }
    }

    // Best own-side cost of the child toward all its (pseudo) parents.
    let mut total = best_single_side(instance, child, &tree.all_parents(child), &ctx);
    // Plus, per descendant, its best own-side cost toward the assigned
    // pseudo parents above the subtree.
    for j in tree.descendants(child) {
        let above: Vec<AgentId> = tree
            .pseudo_parents(j)
            .iter()
            .copied()
            .filter(|l| sep.contains(l))
            .collect();
        total += best_single_side(instance, j, &above, &ctx);
    }
    Ok(total)
}

fn best_single_side(
    instance: &AdcopInstance,
    agent: AgentId,
    targets: &[AgentId],
    ctx: &Assignment,
) -> Cost {
    (0..instance.domain_size(agent))
        .map(|d| {
            targets
                .iter()
                .map(|&l| {
                    let d_l = ctx.get(l).expect("target assigned");
                    Cost::finite(instance.own_cost(agent, l, d, d_l))
                })
                .sum::<Cost>()
        })
        .min()
        .unwrap_or(Cost::ZERO)
}
