//! Search phase: asynchronous branch and bound over the pseudo tree.
//!
//! Each agent walks its domain per child: a child explores one value of the
//! agent at a time, so sibling subtrees may probe different values of the
//! same variable concurrently. Bounds flow in three channels: CPA messages
//! push partial assignments and upper bounds down tree edges, COST_REQ/COST
//! pairs fetch the hidden half of each constraint from (pseudo) parents, and
//! BACKTRACK messages report each subtree's best cost and assignment upward.
//! Initial per-child lower bounds come from the inference phase's tables.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::inference::{run_inference, run_inference_local, InferenceResult};
use crate::model::{AdcopInstance, AgentId, Assignment};
use crate::pseudo_tree::PseudoTree;
use crate::sim::{
    record_privacy, Agent, Message, Metrics, MsgKind, Outbox, Payload, PrivacyEvent, RevealLedger,
    Simulator,
};
use crate::utility::{DimLimit, UtilityTable};

/// Which inference seeds the search.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    /// Non-local elimination: parents fold in their side of each tree edge.
    NonLocal,
    /// Children eliminate their own variable before shipping.
    Local,
    /// No inference phase at all; all initial bounds are zero.
    NoInference,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub cost: Cost,
    pub assignment: Assignment,
    pub metrics: Metrics,
}

/// Extra run products for inspection and tests.
pub struct RunArtifacts {
    /// Delivered messages in delivery order (empty unless tracing was on).
    pub trace: Vec<Message>,
    pub inference: InferenceResult,
    pub ledger: RevealLedger,
}

#[derive(Clone, Copy, Default)]
pub struct SolveOptions {
    pub timeout: Option<Duration>,
    pub trace: bool,
}

pub fn solve_pt_isabb(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    k: DimLimit,
    variant: Variant,
) -> Result<Solution> {
    solve_pt_isabb_detailed(instance, tree, k, variant, SolveOptions::default())
        .map(|(solution, _)| solution)
}

pub fn solve_pt_isabb_detailed(
    instance: &AdcopInstance,
    tree: &PseudoTree,
    k: DimLimit,
    variant: Variant,
    options: SolveOptions,
) -> Result<(Solution, RunArtifacts)> {
    let n = instance.agent_count();
    if tree.agent_count() != n {
        return Err(Error::InvalidParameter(
            "pseudo tree does not match the instance".into(),
        ));
    }
    let inference = match variant {
        Variant::NonLocal => run_inference(instance, tree, k)?,
        Variant::Local => run_inference_local(instance, tree, k)?,
        Variant::NoInference => InferenceResult::zeros(tree),
    };
    let mut ledger = RevealLedger::new(instance);
    for shipment in &inference.shipments {
        record_privacy(
            &mut ledger,
            PrivacyEvent::UtilShipment {
                child: shipment.sender,
                parent: shipment.receiver,
                table: &shipment.table,
            },
        );
    }

    let instance = Arc::new(instance.clone());
    let tree_arc = Arc::new(tree.clone());
    let agents: Vec<Box<dyn Agent>> = (0..n)
        .map(|id| {
            Box::new(SearchAgent::new(
                id,
                Arc::clone(&instance),
                Arc::clone(&tree_arc),
                inference.child_utils(id).clone(),
            )) as Box<dyn Agent>
        })
        .collect();
    let mut sim = Simulator::new(agents);
    for (id, &clock) in inference.agent_nclo.iter().enumerate() {
        sim.seed_clock(id, clock);
    }
    if options.trace {
        sim.enable_trace();
    }
    sim.set_timeout(options.timeout);
    sim.run(&mut ledger)?;

    let (cost, assignment) = sim
        .agent(tree.root())
        .solution()
        .ok_or_else(|| Error::Protocol {
            agent: tree.root(),
            detail: "run finished without a solution at the root".into(),
        })?;

    let mut msgs = sim.counts();
    msgs.add(MsgKind::Util, inference.util_msg_count as u64);
    let metrics = Metrics {
        solution_cost: cost,
        nclo: sim.max_clock(),
        msgs,
        traffic: sim.traffic() + inference.util_msg_entries,
        privacy_loss: ledger.total_loss(),
    };
    let trace = sim.take_trace();
    Ok((
        Solution {
            cost,
            assignment,
            metrics,
        },
        RunArtifacts {
            trace,
            inference,
            ledger,
        },
    ))
}

/// Availability of the other-side costs for one of the agent's values.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum CostState {
    NotRequested,
    /// Number of COST replies still awaited.
    Pending(usize),
    Done,
}

/// What one child is currently doing with respect to the agent's domain.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ChildMode {
    /// Assigned to explore the value once its costs are complete.
    Waiting(usize),
    /// CPA sent; a BACKTRACK for the value is expected.
    Exploring(usize),
    /// No feasible value left for this child.
    Exhausted,
}

#[derive(Clone, Debug)]
struct ChildState {
    mode: ChildMode,
    /// Per own value: current lower bound for this child's subtree.
    lb: Vec<Cost>,
    /// Per own value: upper bound shipped with the CPA for that value.
    ub_sent: Vec<Cost>,
    /// Per own value: whether the child's report is known to be the exact
    /// subtree optimum (it came in strictly under the bound we sent).
    exact: Vec<bool>,
    reported: Vec<bool>,
}

/// Search state for one partial assignment received from the parent.
struct SearchContext {
    cpa: Assignment,
    ub: Cost,
    /// Per value: own-side costs toward all (pseudo) parents, plus the
    /// other-side costs as COST replies arrive.
    high_cost: Vec<Cost>,
    cost_state: Vec<CostState>,
    children: Vec<ChildState>,
    /// Per value: number of children that reported it.
    reports: Vec<usize>,
    /// Per value: all children have reported it (always true on leaves).
    complete: Vec<bool>,
    /// Per value: best known subtree assignment containing it.
    spa: Vec<Assignment>,
    /// Leaves only: the value currently being costed.
    scan: usize,
}

pub struct SearchAgent {
    id: AgentId,
    instance: Arc<AdcopInstance>,
    tree: Arc<PseudoTree>,
    domain: usize,
    parent: Option<AgentId>,
    all_parents: Vec<AgentId>,
    children: Vec<AgentId>,
    child_util: BTreeMap<AgentId, UtilityTable>,
    generation: u64,
    ctx: Option<SearchContext>,
    terminated: bool,
    best: Option<(Cost, Assignment)>,
}

impl SearchAgent {
    pub fn new(
        id: AgentId,
        instance: Arc<AdcopInstance>,
        tree: Arc<PseudoTree>,
        child_util: BTreeMap<AgentId, UtilityTable>,
    ) -> SearchAgent {
        let domain = instance.domain_size(id);
        let parent = tree.parent(id);
        let all_parents = tree.all_parents(id);
        let children = tree.children(id).to_vec();
        SearchAgent {
            id,
            instance,
            tree,
            domain,
            parent,
            all_parents,
            children,
            child_util,
            generation: 0,
            ctx: None,
            terminated: false,
            best: None,
        }
    }

    fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Builds the per-CPA state: own-side costs per value, sliced inference
    /// bounds per child, and empty progress trackers.
    fn new_context(&self, cpa: Assignment, ub: Cost, out: &mut Outbox) -> Result<SearchContext> {
        let mut high_cost = Vec::with_capacity(self.domain);
        for d in 0..self.domain {
            let mut own = Cost::ZERO;
            for &p in &self.all_parents {
                let d_p = cpa.get(p).ok_or_else(|| Error::Protocol {
                    agent: self.id,
                    detail: format!("partial assignment misses parent {p}"),
                })?;
                own += Cost::finite(self.instance.own_cost(self.id, p, d, d_p));
            }
            out.add_ops(self.all_parents.len() as u64);
            high_cost.push(own);
        }

        let mut children = Vec::with_capacity(self.children.len());
        for &c in &self.children {
            let table = &self.child_util[&c];
            let mut ops = 0u64;
            let sliced = table.slice(&cpa, &mut ops)?;
            out.add_ops(ops);
            let lb: Vec<Cost> = match sliced.dims() {
                [] => vec![sliced.at(&[]); self.domain],
                [dim] if *dim == self.id => {
                    (0..self.domain).map(|d| sliced.at(&[d])).collect()
                }
                dims => {
                    return Err(Error::Protocol {
                        agent: self.id,
                        detail: format!(
                            "partial assignment misses separator variables {dims:?} of child {c}"
                        ),
                    });
                }
            };
            children.push(ChildState {
                mode: ChildMode::Waiting(0),
                lb,
                ub_sent: vec![Cost::INF; self.domain],
                exact: vec![false; self.domain],
                reported: vec![false; self.domain],
            });
        }

        let cost_state = if self.all_parents.is_empty() {
            vec![CostState::Done; self.domain]
        } else {
            vec![CostState::NotRequested; self.domain]
        };
        Ok(SearchContext {
            cpa,
            ub,
            high_cost,
            cost_state,
            children,
            reports: vec![0; self.domain],
            complete: vec![self.children.is_empty(); self.domain],
            spa: (0..self.domain).map(|d| Assignment::single(self.id, d)).collect(),
            scan: 0,
        })
    }

    fn lb(ctx: &SearchContext, d: usize) -> Cost {
        ctx.high_cost[d] + ctx.children.iter().map(|c| c.lb[d]).sum::<Cost>()
    }

    /// Smallest value `>= from` whose lower bound is still under the upper
    /// bound. One logical operation per inspected value.
    fn first_feasible(ctx: &SearchContext, from: usize, out: &mut Outbox) -> Option<usize> {
        for d in from..ctx.high_cost.len() {
            out.add_ops(1);
            if Self::lb(ctx, d) < ctx.ub {
                return Some(d);
            }
        }
        None
    }

    fn request_costs(&self, ctx: &mut SearchContext, d: usize, out: &mut Outbox) {
        if ctx.cost_state[d] != CostState::NotRequested {
            return;
        }
        ctx.cost_state[d] = CostState::Pending(self.all_parents.len());
        for &p in &self.all_parents {
            out.send(
                p,
                Payload::CostReq {
                    value: d,
                    generation: self.generation,
                },
            );
        }
    }

    fn send_cpa(&self, ctx: &mut SearchContext, ci: usize, d: usize, out: &mut Outbox) {
        debug_assert_eq!(ctx.cost_state[d], CostState::Done);
        let others: Cost = ctx
            .children
            .iter()
            .enumerate()
            .filter(|&(cj, _)| cj != ci)
            .map(|(_, c)| c.lb[d])
            .sum();
        let ub_child = ctx.ub - ctx.high_cost[d] - others;
        debug_assert!(
            ctx.ub.is_inf() || ub_child + ctx.high_cost[d] + others == ctx.ub,
            "child bound arithmetic must invert"
        );
        let child = self.children[ci];
        let state = &mut ctx.children[ci];
        state.mode = ChildMode::Exploring(d);
        state.ub_sent[d] = ub_child;
        let mut cpa = ctx.cpa.clone();
        cpa.set(self.id, d);
        out.send(child, Payload::Cpa { cpa, ub: ub_child });
    }

    /// Moves child `ci` to its next feasible value at or past `from`:
    /// dispatches it directly when the value's costs are known, otherwise
    /// parks it until they arrive (requesting them at most once).
    fn advance_child(&self, ctx: &mut SearchContext, ci: usize, from: usize, out: &mut Outbox) {
        match Self::first_feasible(ctx, from, out) {
            None => ctx.children[ci].mode = ChildMode::Exhausted,
            Some(d) => match ctx.cost_state[d] {
                CostState::Done => self.send_cpa(ctx, ci, d, out),
                CostState::Pending(_) => ctx.children[ci].mode = ChildMode::Waiting(d),
                CostState::NotRequested => {
                    ctx.children[ci].mode = ChildMode::Waiting(d);
                    self.request_costs(ctx, d, out);
                }
            },
        }
    }

    /// Whether the bound for a value is settled exactly: all other-side
    /// costs in, and every child's report came in strictly under the bound
    /// it was given (so the report is its subtree's true optimum).
    fn value_exact(ctx: &SearchContext, d: usize) -> bool {
        ctx.cost_state[d] == CostState::Done
            && ctx.children.iter().all(|c| c.reported[d] && c.exact[d])
    }

    /// Best completed value: smallest bound, exact bounds preferred on ties,
    /// then the smaller value index.
    fn best_complete(ctx: &SearchContext) -> Option<(usize, Cost, bool)> {
        (0..ctx.high_cost.len())
            .filter(|&d| ctx.complete[d])
            .map(|d| (d, Self::lb(ctx, d), Self::value_exact(ctx, d)))
            .min_by_key(|&(d, lb, exact)| (lb, !exact, d))
    }

    fn backtrack_to_parent(&self, ctx: &SearchContext, out: &mut Outbox) {
        let parent = self.parent.expect("only non-root agents backtrack");
        let explored = ctx.cpa.get(parent).expect("parent assigned in the CPA");
        let payload = match Self::best_complete(ctx) {
            Some((d, lb, _)) if lb.is_finite() => Payload::Backtrack {
                value: explored,
                lb,
                spa: ctx.spa[d].clone(),
                feasible: true,
            },
            _ => Payload::Backtrack {
                value: explored,
                lb: Cost::INF,
                spa: Assignment::new(),
                feasible: false,
            },
        };
        out.send(parent, payload);
    }

    fn finish_root(&mut self, ctx: &SearchContext, out: &mut Outbox) -> Result<()> {
        let (d, lb, _) = Self::best_complete(ctx)
            .filter(|&(_, lb, _)| lb.is_finite())
            .ok_or_else(|| Error::Protocol {
                agent: self.id,
                detail: "no feasible value at the root".into(),
            })?;
        self.best = Some((lb, ctx.spa[d].clone()));
        self.terminated = true;
        for &c in &self.children {
            out.send(c, Payload::Terminate);
        }
        Ok(())
    }

    fn on_cpa(&mut self, cpa: &Assignment, ub: Cost, out: &mut Outbox) -> Result<()> {
        self.generation += 1;
        let mut ctx = self.new_context(cpa.clone(), ub, out)?;
        match Self::first_feasible(&ctx, 0, out) {
            None => self.backtrack_to_parent(&ctx, out),
            Some(d) => {
                if self.is_leaf() {
                    ctx.scan = d;
                } else {
                    for c in &mut ctx.children {
                        c.mode = ChildMode::Waiting(d);
                    }
                }
                self.request_costs(&mut ctx, d, out);
            }
        }
        self.ctx = Some(ctx);
        Ok(())
    }

    fn on_cost_req(
        &self,
        requester: AgentId,
        value: usize,
        generation: u64,
        out: &mut Outbox,
    ) -> Result<()> {
        let via = self
            .tree
            .child_toward(self.id, requester)
            .ok_or_else(|| Error::Protocol {
                agent: self.id,
                detail: format!("cost request from non-descendant {requester}"),
            })?;
        let ci = self.child_index(via)?;
        let ctx = self.ctx.as_ref().ok_or_else(|| Error::Protocol {
            agent: self.id,
            detail: "cost request without an active context".into(),
        })?;
        let ChildMode::Exploring(own_value) = ctx.children[ci].mode else {
            return Err(Error::Protocol {
                agent: self.id,
                detail: format!("cost request on an idle branch via child {via}"),
            });
        };
        // One constraint check.
        out.add_ops(1);
        let cost = Cost::finite(self.instance.own_cost(self.id, requester, own_value, value));
        out.send(
            requester,
            Payload::Cost {
                value,
                cost,
                responder_value: own_value,
                generation,
            },
        );
        Ok(())
    }

    fn on_cost(&mut self, value: usize, cost: Cost, generation: u64, out: &mut Outbox) -> Result<()> {
        if generation != self.generation {
            return Ok(()); // Stale reply from an abandoned partial assignment.
        }
        let mut ctx = self.ctx.take().ok_or_else(|| Error::Protocol {
            agent: self.id,
            detail: "cost reply without an active context".into(),
        })?;
        let result = self.cost_arrived(&mut ctx, value, cost, out);
        self.ctx = Some(ctx);
        result
    }

    fn cost_arrived(
        &mut self,
        ctx: &mut SearchContext,
        value: usize,
        cost: Cost,
        out: &mut Outbox,
    ) -> Result<()> {
        let CostState::Pending(remaining) = ctx.cost_state[value] else {
            return Err(Error::Protocol {
                agent: self.id,
                detail: format!("cost reply for value {value} that is not pending"),
            });
        };
        ctx.high_cost[value] += cost;
        if remaining > 1 {
            ctx.cost_state[value] = CostState::Pending(remaining - 1);
            return Ok(());
        }
        ctx.cost_state[value] = CostState::Done;

        if self.is_leaf() {
            debug_assert_eq!(ctx.scan, value);
            // The bound for this value is now its full two-sided cost.
            ctx.ub = ctx.ub.min(Self::lb(ctx, value));
            match Self::first_feasible(ctx, value + 1, out) {
                Some(next) => {
                    ctx.scan = next;
                    self.request_costs(ctx, next, out);
                }
                None => self.backtrack_to_parent(ctx, out),
            }
            return Ok(());
        }

        if Self::lb(ctx, value) < ctx.ub {
            for ci in 0..ctx.children.len() {
                if ctx.children[ci].mode == ChildMode::Waiting(value) {
                    self.send_cpa(ctx, ci, value, out);
                }
            }
        } else {
            // Proven suboptimal before expansion; move its children along.
            for ci in 0..ctx.children.len() {
                if ctx.children[ci].mode == ChildMode::Waiting(value) {
                    self.advance_child(ctx, ci, value + 1, out);
                }
            }
            self.check_exhausted(ctx, out)?;
        }
        Ok(())
    }

    fn on_backtrack(
        &mut self,
        child: AgentId,
        value: usize,
        lb: Cost,
        spa: &Assignment,
        feasible: bool,
        out: &mut Outbox,
    ) -> Result<()> {
        let ci = self.child_index(child)?;
        let mut ctx = self.ctx.take().ok_or_else(|| Error::Protocol {
            agent: self.id,
            detail: "backtrack without an active context".into(),
        })?;
        let result = self.backtrack_arrived(&mut ctx, ci, value, lb, spa, feasible, out);
        self.ctx = Some(ctx);
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn backtrack_arrived(
        &mut self,
        ctx: &mut SearchContext,
        ci: usize,
        value: usize,
        lb: Cost,
        spa: &Assignment,
        feasible: bool,
        out: &mut Outbox,
    ) -> Result<()> {
        if ctx.children[ci].mode != ChildMode::Exploring(value) {
            return Err(Error::Protocol {
                agent: self.id,
                detail: format!("backtrack for unexplored value {value}"),
            });
        }
        {
            let state = &mut ctx.children[ci];
            state.exact[value] = feasible && lb < state.ub_sent[value];
            state.lb[value] = lb;
            state.reported[value] = true;
        }
        if feasible {
            ctx.spa[value].merge(spa);
        }
        ctx.reports[value] += 1;
        if ctx.reports[value] == ctx.children.len() {
            ctx.complete[value] = true;
            ctx.ub = ctx.ub.min(Self::lb(ctx, value));
        }
        self.advance_child(ctx, ci, value + 1, out);
        self.check_exhausted(ctx, out)
    }

    fn check_exhausted(&mut self, ctx: &SearchContext, out: &mut Outbox) -> Result<()> {
        if !ctx
            .children
            .iter()
            .all(|c| c.mode == ChildMode::Exhausted)
        {
            return Ok(());
        }
        if self.is_root() {
            self.finish_root(ctx, out)
        } else {
            self.backtrack_to_parent(ctx, out);
            Ok(())
        }
    }

    fn child_index(&self, child: AgentId) -> Result<usize> {
        self.children
            .iter()
            .position(|&c| c == child)
            .ok_or_else(|| Error::Protocol {
                agent: self.id,
                detail: format!("{child} is not a child"),
            })
    }
}

impl Agent for SearchAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn start(&mut self, out: &mut Outbox) -> Result<()> {
        if !self.is_root() {
            return Ok(());
        }
        if self.domain == 0 {
            return Err(Error::InvalidInstance(format!(
                "agent {} has an empty domain",
                self.id
            )));
        }
        let mut ctx = self.new_context(Assignment::new(), Cost::INF, out)?;
        if self.is_leaf() {
            // Single-agent problem: nothing to coordinate.
            self.finish_root(&ctx, out)?;
            self.ctx = Some(ctx);
            return Ok(());
        }
        let first = Self::first_feasible(&ctx, 0, out).ok_or_else(|| Error::Protocol {
            agent: self.id,
            detail: "no feasible value at the root".into(),
        })?;
        for ci in 0..ctx.children.len() {
            self.send_cpa(&mut ctx, ci, first, out);
        }
        self.ctx = Some(ctx);
        Ok(())
    }

    fn handle(&mut self, msg: &Message, out: &mut Outbox) -> Result<()> {
        if self.terminated {
            return Ok(());
        }
        match &msg.payload {
            Payload::Cpa { cpa, ub } => self.on_cpa(cpa, *ub, out),
            Payload::CostReq { value, generation } => {
                self.on_cost_req(msg.sender, *value, *generation, out)
            }
            Payload::Cost {
                value,
                cost,
                generation,
                ..
            } => self.on_cost(*value, *cost, *generation, out),
            Payload::Backtrack {
                value,
                lb,
                spa,
                feasible,
            } => self.on_backtrack(msg.sender, *value, *lb, spa, *feasible, out),
            Payload::Terminate => {
                self.terminated = true;
                for &c in &self.children {
                    out.send(c, Payload::Terminate);
                }
                Ok(())
            }
            Payload::Util(_) => Err(Error::Protocol {
                agent: self.id,
                detail: "utility message during the search phase".into(),
            }),
        }
    }

    fn is_terminated(&self) -> bool {
        self.terminated
    }

    fn solution(&self) -> Option<(Cost, Assignment)> {
        self.best.clone()
    }
}
