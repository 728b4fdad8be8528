//! Non-tree baselines: exhaustive enumeration and synchronous branch and
//! bound on a total agent order (SABB).
//!
//! SABB threads a single CPA token through the chain. An agent extends the
//! token with its value, checks its own private side against all earlier
//! constrained agents, fetches their hidden sides via COST_REQ/COST pairs,
//! prunes against the global upper bound and forwards. The last agent turns
//! every surviving token into a new incumbent and broadcasts it to everyone.

use std::sync::Arc;
use std::time::Duration;

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::model::{AdcopInstance, AgentId, Assignment};
use crate::pseudo_tree::PseudoTree;
use crate::search::{Solution, SolveOptions};
use crate::sim::{Agent, Message, Metrics, Outbox, Payload, RevealLedger, Simulator};

pub const DEFAULT_BRUTE_CAP: u128 = 10_000_000;

/// Exact optimum by enumerating every complete assignment. Ties resolve to
/// the lexicographically smallest assignment.
pub fn brute_force_solve(instance: &AdcopInstance) -> Result<(Cost, Assignment)> {
    brute_force_solve_capped(instance, DEFAULT_BRUTE_CAP)
}

pub fn brute_force_solve_capped(
    instance: &AdcopInstance,
    cap: u128,
) -> Result<(Cost, Assignment)> {
    let n = instance.agent_count();
    let size: u128 = instance.domains().iter().map(|&d| d as u128).product();
    if size > cap {
        return Err(Error::BruteForceCap { size, cap });
    }
    let mut values = vec![0usize; n];
    let mut best_cost = u64::MAX;
    let mut best_values = values.clone();
    loop {
        let mut cost = 0u64;
        for c in instance.constraints() {
            cost += c.cost_ab.get(values[c.a], values[c.b]);
            cost += c.cost_ba.get(values[c.b], values[c.a]);
        }
        if cost < best_cost {
            best_cost = cost;
            best_values.copy_from_slice(&values);
        }
        // Odometer over the domains, most significant variable first.
        let mut pos = n;
        loop {
            if pos == 0 {
                let assignment = best_values.iter().copied().enumerate().collect();
                return Ok((Cost::finite(best_cost), assignment));
            }
            pos -= 1;
            values[pos] += 1;
            if values[pos] < instance.domain_size(pos) {
                break;
            }
            values[pos] = 0;
        }
    }
}

/// The chain order SABB runs on: the pseudo tree's depth-first visit order,
/// so chain and tree algorithms see instances the same way.
pub fn chain_order(tree: &PseudoTree) -> Vec<AgentId> {
    tree.preorder().to_vec()
}

pub fn solve_sabb(instance: &AdcopInstance, order: &[AgentId]) -> Result<Solution> {
    solve_sabb_detailed(instance, order, SolveOptions::default()).map(|(s, _)| s)
}

pub fn solve_sabb_detailed(
    instance: &AdcopInstance,
    order: &[AgentId],
    options: SolveOptions,
) -> Result<(Solution, Vec<Message>)> {
    let n = instance.agent_count();
    let mut check = order.to_vec();
    check.sort_unstable();
    if check != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidParameter(
            "order must be a permutation of all agents".into(),
        ));
    }

    let instance_arc = Arc::new(instance.clone());
    let chain = Arc::new(order.to_vec());
    let mut agents: Vec<Option<Box<dyn Agent>>> = (0..n).map(|_| None).collect();
    for (pos, &id) in order.iter().enumerate() {
        agents[id] = Some(Box::new(SabbAgent::new(
            id,
            pos,
            Arc::clone(&instance_arc),
            Arc::clone(&chain),
        )));
    }
    let agents: Vec<Box<dyn Agent>> = agents.into_iter().map(Option::unwrap).collect();

    let mut ledger = RevealLedger::new(instance);
    let mut sim = Simulator::new(agents);
    if options.trace {
        sim.enable_trace();
    }
    sim.set_timeout(options.timeout);
    sim.run(&mut ledger)?;

    let first = order[0];
    let (cost, assignment) = sim.agent(first).solution().ok_or_else(|| Error::Protocol {
        agent: first,
        detail: "chain search finished without an incumbent".into(),
    })?;
    let metrics = Metrics {
        solution_cost: cost,
        nclo: sim.max_clock(),
        msgs: sim.counts(),
        traffic: sim.traffic(),
        privacy_loss: ledger.total_loss(),
    };
    let trace = sim.take_trace();
    Ok((
        Solution {
            cost,
            assignment,
            metrics,
        },
        trace,
    ))
}

/// Timeout-aware wrapper used by the benchmark driver.
pub fn solve_sabb_with_timeout(
    instance: &AdcopInstance,
    order: &[AgentId],
    timeout: Option<Duration>,
) -> Result<Solution> {
    solve_sabb_detailed(
        instance,
        order,
        SolveOptions {
            timeout,
            trace: false,
        },
    )
    .map(|(s, _)| s)
}

/// Token state while the agent waits for other-side costs of one value.
struct AwaitingCosts {
    value: usize,
    own: Cost,
    other: Cost,
    pending: usize,
}

/// Chain context: the token received from the predecessor.
struct SabbCtx {
    cpa: Assignment,
    /// Both-sides cost of the token's partial assignment.
    acc: Cost,
    /// Next own value to try.
    scan: usize,
    /// Value currently extended down the chain, if any.
    current: Option<usize>,
    awaiting: Option<AwaitingCosts>,
}

pub struct SabbAgent {
    id: AgentId,
    pos: usize,
    instance: Arc<AdcopInstance>,
    chain: Arc<Vec<AgentId>>,
    /// Constrained neighbors earlier in the chain.
    earlier: Vec<AgentId>,
    domain: usize,
    ub: Cost,
    best: Option<(Cost, Assignment)>,
    ctx: Option<SabbCtx>,
    terminated: bool,
}

impl SabbAgent {
    pub fn new(
        id: AgentId,
        pos: usize,
        instance: Arc<AdcopInstance>,
        chain: Arc<Vec<AgentId>>,
    ) -> SabbAgent {
        let before: std::collections::BTreeSet<AgentId> = chain[..pos].iter().copied().collect();
        let earlier: Vec<AgentId> = instance
            .neighbors(id)
            .iter()
            .map(|&(nb, _)| nb)
            .filter(|nb| before.contains(nb))
            .collect();
        let domain = instance.domain_size(id);
        SabbAgent {
            id,
            pos,
            instance,
            chain,
            earlier,
            domain,
            ub: Cost::INF,
            best: None,
            ctx: None,
            terminated: false,
        }
    }

    fn is_first(&self) -> bool {
        self.pos == 0
    }

    fn is_last(&self) -> bool {
        self.pos + 1 == self.chain.len()
    }

    fn predecessor(&self) -> AgentId {
        self.chain[self.pos - 1]
    }

    fn successor(&self) -> AgentId {
        self.chain[self.pos + 1]
    }

    /// Works through the agent's remaining values until one is extended down
    /// the chain, costs are requested, or the domain is exhausted.
    fn try_next(&mut self, mut ctx: SabbCtx, out: &mut Outbox) -> Result<()> {
        loop {
            if ctx.scan == self.domain {
                return self.exhausted(out);
            }
            let d = ctx.scan;
            let mut own = Cost::ZERO;
            for &j in &self.earlier {
                let d_j = ctx.cpa.get(j).expect("earlier agents are assigned");
                own += Cost::finite(self.instance.own_cost(self.id, j, d, d_j));
            }
            out.add_ops(self.earlier.len() as u64);
            // Bound comparison.
            out.add_ops(1);
            if ctx.acc + own >= self.ub {
                ctx.scan += 1;
                continue;
            }
            if self.earlier.is_empty() {
                let total = ctx.acc + own;
                if self.step(&mut ctx, d, total, out) {
                    continue;
                }
                self.ctx = Some(ctx);
                return Ok(());
            }
            ctx.awaiting = Some(AwaitingCosts {
                value: d,
                own,
                other: Cost::ZERO,
                pending: self.earlier.len(),
            });
            for &j in &self.earlier {
                out.send(
                    j,
                    Payload::CostReq {
                        value: d,
                        generation: 0,
                    },
                );
            }
            self.ctx = Some(ctx);
            return Ok(());
        }
    }

    /// Extends the token with value `d` of total cost `total`. Returns true
    /// when scanning should continue (incumbent recorded at the last agent).
    fn step(&mut self, ctx: &mut SabbCtx, d: usize, total: Cost, out: &mut Outbox) -> bool {
        let mut extended = ctx.cpa.clone();
        extended.set(self.id, d);
        if self.is_last() {
            self.ub = total;
            self.best = Some((total, extended.clone()));
            for &other in self.chain.iter() {
                if other != self.id {
                    out.send(
                        other,
                        Payload::Cpa {
                            cpa: extended.clone(),
                            ub: total,
                        },
                    );
                }
            }
            ctx.scan += 1;
            true
        } else {
            ctx.current = Some(d);
            out.send(
                self.successor(),
                Payload::Cpa {
                    cpa: extended,
                    ub: total,
                },
            );
            false
        }
    }

    fn exhausted(&mut self, out: &mut Outbox) -> Result<()> {
        if self.is_first() {
            self.terminated = true;
            for &other in self.chain.iter() {
                if other != self.id {
                    out.send(other, Payload::Terminate);
                }
            }
            if self.best.is_none() {
                return Err(Error::Protocol {
                    agent: self.id,
                    detail: "search ended without any incumbent".into(),
                });
            }
            Ok(())
        } else {
            out.send(
                self.predecessor(),
                Payload::Backtrack {
                    value: 0,
                    lb: Cost::INF,
                    spa: Assignment::new(),
                    feasible: false,
                },
            );
            Ok(())
        }
    }

    fn on_incumbent(&mut self, cpa: &Assignment, cost: Cost) {
        if cost < self.ub {
            self.ub = cost;
            self.best = Some((cost, cpa.clone()));
        }
    }

    fn on_cost(&mut self, value: usize, cost: Cost, out: &mut Outbox) -> Result<()> {
        let mut ctx = self.ctx.take().ok_or_else(|| Error::Protocol {
            agent: self.id,
            detail: "cost reply without a token".into(),
        })?;
        let Some(awaiting) = ctx.awaiting.as_mut() else {
            return Err(Error::Protocol {
                agent: self.id,
                detail: "cost reply while not awaiting costs".into(),
            });
        };
        if awaiting.value != value {
            return Err(Error::Protocol {
                agent: self.id,
                detail: format!("cost reply for value {value} instead of {}", awaiting.value),
            });
        }
        awaiting.other += cost;
        awaiting.pending -= 1;
        if awaiting.pending > 0 {
            self.ctx = Some(ctx);
            return Ok(());
        }
        let AwaitingCosts {
            value, own, other, ..
        } = ctx.awaiting.take().expect("awaiting state present");
        let total = ctx.acc + own + other;
        out.add_ops(1);
        if total >= self.ub {
            ctx.scan += 1;
            self.try_next(ctx, out)
        } else if self.step(&mut ctx, value, total, out) {
            self.try_next(ctx, out)
        } else {
            self.ctx = Some(ctx);
            Ok(())
        }
    }
}

impl Agent for SabbAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn start(&mut self, out: &mut Outbox) -> Result<()> {
        if !self.is_first() {
            return Ok(());
        }
        let ctx = SabbCtx {
            cpa: Assignment::new(),
            acc: Cost::ZERO,
            scan: 0,
            current: None,
            awaiting: None,
        };
        self.try_next(ctx, out)
    }

    fn handle(&mut self, msg: &Message, out: &mut Outbox) -> Result<()> {
        if self.terminated {
            return Ok(());
        }
        match &msg.payload {
            Payload::Cpa { cpa, ub } => {
                if !self.is_last() && msg.sender == *self.chain.last().unwrap() {
                    self.on_incumbent(cpa, *ub);
                    Ok(())
                } else {
                    // Token from the predecessor; `ub` carries the token's
                    // accumulated two-sided cost.
                    let ctx = SabbCtx {
                        cpa: cpa.clone(),
                        acc: *ub,
                        scan: 0,
                        current: None,
                        awaiting: None,
                    };
                    self.try_next(ctx, out)
                }
            }
            Payload::CostReq { value, .. } => {
                let current = self
                    .ctx
                    .as_ref()
                    .and_then(|c| c.current)
                    .ok_or_else(|| Error::Protocol {
                        agent: self.id,
                        detail: "cost request while holding no assignment".into(),
                    })?;
                out.add_ops(1);
                let cost =
                    Cost::finite(self.instance.own_cost(self.id, msg.sender, current, *value));
                out.send(
                    msg.sender,
                    Payload::Cost {
                        value: *value,
                        cost,
                        responder_value: current,
                        generation: 0,
                    },
                );
                Ok(())
            }
            Payload::Cost { value, cost, .. } => self.on_cost(*value, *cost, out),
            Payload::Backtrack { .. } => {
                let mut ctx = self.ctx.take().ok_or_else(|| Error::Protocol {
                    agent: self.id,
                    detail: "backtrack without a token".into(),
                })?;
                ctx.current = None;
                ctx.scan += 1;
                self.try_next(ctx, out)
            }
            Payload::Terminate => {
                self.terminated = true;
                Ok(())
            }
            Payload::Util(_) => Err(Error::Protocol {
                agent: self.id,
                detail: "utility message during chain search".into(),
            }),
        }
    }

    fn is_terminated(&self) -> bool {
        self.terminated
    }

    fn solution(&self) -> Option<(Cost, Assignment)> {
        if self.is_first() {
            self.best.clone()
        } else {
            None
        }
    }
}
