//! Deterministic message-passing simulator and run metrics.
//!
//! Agents are single-threaded state machines that react to one message at a
//! time and communicate only through the simulator's queues. The scheduler
//! always delivers the globally oldest message (ties broken by sender id,
//! then receiver id, then send order), so a run is a pure function of its
//! inputs. NCLO follows the usual convention: a receiver fast-forwards its
//! logical clock to the message stamp before processing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::model::{AdcopInstance, AgentId, Assignment};
use crate::utility::UtilityTable;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum MsgKind {
    Util,
    Cpa,
    CostReq,
    Cost,
    Backtrack,
    Terminate,
}

impl MsgKind {
    pub const ALL: [MsgKind; 6] = [
        MsgKind::Util,
        MsgKind::Cpa,
        MsgKind::CostReq,
        MsgKind::Cost,
        MsgKind::Backtrack,
        MsgKind::Terminate,
    ];

    fn index(self) -> usize {
        match self {
            MsgKind::Util => 0,
            MsgKind::Cpa => 1,
            MsgKind::CostReq => 2,
            MsgKind::Cost => 3,
            MsgKind::Backtrack => 4,
            MsgKind::Terminate => 5,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Payload {
    /// Utility table shipped child-to-parent during inference.
    Util(UtilityTable),
    /// Extended partial assignment plus the receiver's upper bound.
    Cpa { cpa: Assignment, ub: Cost },
    /// Request for the receiver's private cost against the sender's `value`.
    CostReq { value: usize, generation: u64 },
    /// Reply: the responder's own-side cost, echoing the request generation.
    /// `responder_value` is the responder's assignment on that branch; the
    /// requester already knows it from its partial assignment.
    Cost {
        value: usize,
        cost: Cost,
        responder_value: usize,
        generation: u64,
    },
    /// Report for one explored value of the receiver: best subtree cost and
    /// assignment, or infeasibility under the given bound.
    Backtrack {
        value: usize,
        lb: Cost,
        spa: Assignment,
        feasible: bool,
    },
    Terminate,
}

impl Payload {
    pub fn kind(&self) -> MsgKind {
        match self {
            Payload::Util(_) => MsgKind::Util,
            Payload::Cpa { .. } => MsgKind::Cpa,
            Payload::CostReq { .. } => MsgKind::CostReq,
            Payload::Cost { .. } => MsgKind::Cost,
            Payload::Backtrack { .. } => MsgKind::Backtrack,
            Payload::Terminate => MsgKind::Terminate,
        }
    }

    /// Size in scalar units; `n` is the number of agents (a CPA carries one
    /// assignment slot per agent plus the bound).
    pub fn size(&self, n: usize) -> u64 {
        match self {
            Payload::Util(table) => table.len() as u64,
            Payload::Cpa { .. } => n as u64 + 1,
            Payload::CostReq { .. } | Payload::Cost { .. } => 2,
            Payload::Backtrack { .. } => 3,
            Payload::Terminate => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Message {
    pub sender: AgentId,
    pub receiver: AgentId,
    /// Sender's NCLO clock when the message was sent.
    pub stamp: u64,
    pub payload: Payload,
}

/// Per-kind message counters.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct MsgCounts([u64; 6]);

impl MsgCounts {
    pub fn record(&mut self, kind: MsgKind) {
        self.0[kind.index()] += 1;
    }

    pub fn add(&mut self, kind: MsgKind, count: u64) {
        self.0[kind.index()] += count;
    }

    pub fn get(&self, kind: MsgKind) -> u64 {
        self.0[kind.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn merge(&mut self, other: &MsgCounts) {
        for (slot, v) in self.0.iter_mut().zip(other.0) {
            *slot += v;
        }
    }
}

/// End-of-run measurements for one simulated solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub solution_cost: Cost,
    /// Non-concurrent logical operations: maximum agent clock at the end.
    pub nclo: u64,
    pub msgs: MsgCounts,
    /// Total scalar units shipped across all messages.
    pub traffic: u64,
    /// Fraction of private cost-table entries revealed, weighted by level.
    pub privacy_loss: f64,
}

/// How much of a single private table entry the counterpart has learned.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum RevealLevel {
    None,
    /// The counterpart knows whether the entry is zero.
    Feasibility,
    Exact,
}

impl RevealLevel {
    fn weight(self) -> f64 {
        match self {
            RevealLevel::None => 0.0,
            RevealLevel::Feasibility => 0.5,
            RevealLevel::Exact => 1.0,
        }
    }
}

/// Revelation level of every entry of every directed constraint side.
///
/// The side `(owner, counterpart)` is the table `f_{owner,counterpart}`;
/// levels only ever escalate.
#[derive(Clone, Debug)]
pub struct RevealLedger {
    sides: BTreeMap<(AgentId, AgentId), SideLedger>,
}

#[derive(Clone, Debug)]
struct SideLedger {
    cols: usize,
    levels: Vec<RevealLevel>,
}

impl RevealLedger {
    pub fn new(instance: &AdcopInstance) -> RevealLedger {
        let mut sides = BTreeMap::new();
        for c in instance.constraints() {
            sides.insert(
                (c.a, c.b),
                SideLedger {
                    cols: c.cost_ab.cols(),
                    levels: vec![RevealLevel::None; c.cost_ab.rows() * c.cost_ab.cols()],
                },
            );
            sides.insert(
                (c.b, c.a),
                SideLedger {
                    cols: c.cost_ba.cols(),
                    levels: vec![RevealLevel::None; c.cost_ba.rows() * c.cost_ba.cols()],
                },
            );
        }
        RevealLedger { sides }
    }

    fn escalate(
        &mut self,
        owner: AgentId,
        counterpart: AgentId,
        d_owner: usize,
        d_counterpart: usize,
        level: RevealLevel,
    ) {
        let side = self
            .sides
            .get_mut(&(owner, counterpart))
            .expect("ledger side exists for every constraint");
        let slot = &mut side.levels[d_owner * side.cols + d_counterpart];
        *slot = (*slot).max(level);
    }

    /// Weighted revealed fraction of the single directed side
    /// `f_{owner,counterpart}`.
    pub fn side_loss(&self, owner: AgentId, counterpart: AgentId) -> f64 {
        let side = &self.sides[&(owner, counterpart)];
        let sum: f64 = side.levels.iter().map(|l| l.weight()).sum();
        sum / side.levels.len() as f64
    }

    /// Weighted revealed fraction over all directed sides of all constraints.
    pub fn total_loss(&self) -> f64 {
        let mut sum = 0.0;
        let mut entries = 0usize;
        for side in self.sides.values() {
            sum += side.levels.iter().map(|l| l.weight()).sum::<f64>();
            entries += side.levels.len();
        }
        if entries == 0 {
            0.0
        } else {
            sum / entries as f64
        }
    }
}

/// A protocol step that may leak private cost information.
pub enum PrivacyEvent<'a> {
    /// A COST reply exposes one exact entry of the responder's table.
    CostReply {
        owner: AgentId,
        counterpart: AgentId,
        owner_value: usize,
        counterpart_value: usize,
    },
    /// A utility table shipped over a tree edge lets the parent identify the
    /// child-side value pairs whose entries are zero.
    UtilShipment {
        child: AgentId,
        parent: AgentId,
        table: &'a UtilityTable,
    },
    /// A complete-solution broadcast reveals assignments but no cost-table
    /// entries.
    IncumbentBroadcast,
}

pub fn record_privacy(ledger: &mut RevealLedger, event: PrivacyEvent<'_>) {
    match event {
        PrivacyEvent::CostReply {
            owner,
            counterpart,
            owner_value,
            counterpart_value,
        } => {
            ledger.escalate(
                owner,
                counterpart,
                owner_value,
                counterpart_value,
                RevealLevel::Exact,
            );
        }
        PrivacyEvent::UtilShipment {
            child,
            parent,
            table,
        } => {
            // A zero entry means every summand is zero, in particular the
            // child's private cost against the parent at that value pair.
            // Entry-level knowledge needs both dimensions to have survived
            // any dimension dropping.
            if !(table.has_dim(child) && table.has_dim(parent)) {
                return;
            }
            let mut scratch = 0u64;
            let mut pair = table.clone();
            for dim in table.dims().to_vec() {
                if dim != child && dim != parent {
                    pair = pair
                        .min_project(dim, &mut scratch)
                        .expect("dimension present");
                }
            }
            let (rows, cols) = (pair.cardinalities()[0], pair.cardinalities()[1]);
            let parent_first = pair.dims()[0] == parent;
            for r in 0..rows {
                for c in 0..cols {
                    if pair.at(&[r, c]) == Cost::ZERO {
                        let (d_child, d_parent) = if parent_first { (c, r) } else { (r, c) };
                        ledger.escalate(child, parent, d_child, d_parent, RevealLevel::Feasibility);
                    }
                }
            }
        }
        PrivacyEvent::IncumbentBroadcast => {}
    }
}

/// Outgoing-message buffer and logical clock handed to an agent while it
/// processes one message.
pub struct Outbox {
    agent: AgentId,
    /// The agent's NCLO clock; handlers advance it as they perform logical
    /// operations.
    pub nclo: u64,
    queued: Vec<Message>,
}

impl Outbox {
    pub fn send(&mut self, receiver: AgentId, payload: Payload) {
        self.queued.push(Message {
            sender: self.agent,
            receiver,
            stamp: self.nclo,
            payload,
        });
    }

    pub fn add_ops(&mut self, ops: u64) {
        self.nclo += ops;
    }
}

/// A message-driven agent. Implementations must eventually terminate and
/// must not expect messages that can never arrive.
pub trait Agent {
    fn id(&self) -> AgentId;

    /// Called once, in agent-id order, before any message is delivered.
    fn start(&mut self, out: &mut Outbox) -> Result<()>;

    fn handle(&mut self, msg: &Message, out: &mut Outbox) -> Result<()>;

    fn is_terminated(&self) -> bool;

    /// The solved cost and assignment, where this agent holds one.
    fn solution(&self) -> Option<(Cost, Assignment)> {
        None
    }
}

#[derive(PartialEq, Eq)]
struct Queued {
    /// (send step, sender, receiver, send sequence) — popping the minimum
    /// yields oldest-first delivery with the documented tie-breaks and
    /// per-edge FIFO order.
    key: (u64, AgentId, AgentId, u64),
    msg: Message,
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl PartialEq for Message {
    fn eq(&self, other: &Self) -> bool {
        self.sender == other.sender && self.receiver == other.receiver && self.stamp == other.stamp
    }
}

impl Eq for Message {}

/// Drives a set of agents to quiescence, accounting messages, traffic,
/// privacy events and NCLO clocks along the way.
pub struct Simulator {
    agents: Vec<Box<dyn Agent>>,
    clocks: Vec<u64>,
    queue: BinaryHeap<Reverse<Queued>>,
    counts: MsgCounts,
    traffic: u64,
    step: u64,
    seq: u64,
    trace: Option<Vec<Message>>,
    timeout: Option<Duration>,
}

impl Simulator {
    pub fn new(agents: Vec<Box<dyn Agent>>) -> Simulator {
        for (slot, agent) in agents.iter().enumerate() {
            assert_eq!(agent.id(), slot, "agents must be registered in id order");
        }
        let n = agents.len();
        Simulator {
            agents,
            clocks: vec![0; n],
            queue: BinaryHeap::new(),
            counts: MsgCounts::default(),
            traffic: 0,
            step: 0,
            seq: 0,
            trace: None,
            timeout: None,
        }
    }

    /// Pre-loads an agent's clock, e.g. with logical operations spent in an
    /// earlier protocol phase.
    pub fn seed_clock(&mut self, agent: AgentId, nclo: u64) {
        self.clocks[agent] = nclo;
    }

    /// Records every delivered message for post-run inspection.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }

    pub fn trace(&self) -> &[Message] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<Message> {
        self.trace.take().unwrap_or_default()
    }

    pub fn counts(&self) -> MsgCounts {
        self.counts
    }

    pub fn traffic(&self) -> u64 {
        self.traffic
    }

    pub fn clocks(&self) -> &[u64] {
        &self.clocks
    }

    pub fn max_clock(&self) -> u64 {
        self.clocks.iter().copied().max().unwrap_or(0)
    }

    pub fn agent(&self, id: AgentId) -> &dyn Agent {
        self.agents[id].as_ref()
    }

    /// Runs to quiescence: calls every agent's `start`, then delivers
    /// messages oldest-first until the queues drain. Errors if agents are
    /// still running when no message is left (deadlock) or on timeout.
    pub fn run(&mut self, ledger: &mut RevealLedger) -> Result<()> {
        let begun = Instant::now();
        let n = self.agents.len();
        for id in 0..n {
            let mut out = Outbox {
                agent: id,
                nclo: self.clocks[id],
                queued: Vec::new(),
            };
            self.agents[id].start(&mut out)?;
            self.clocks[id] = out.nclo;
            self.flush(out.queued, ledger);
        }
        while let Some(Reverse(next)) = self.queue.pop() {
            self.step += 1;
            if self.step % 1024 == 0 {
                if let Some(limit) = self.timeout {
                    if begun.elapsed() > limit {
                        return Err(Error::Timeout(limit));
                    }
                }
            }
            let msg = next.msg;
            let id = msg.receiver;
            let mut out = Outbox {
                agent: id,
                nclo: self.clocks[id].max(msg.stamp),
                queued: Vec::new(),
            };
            self.agents[id].handle(&msg, &mut out)?;
            self.clocks[id] = out.nclo;
            if let Some(trace) = &mut self.trace {
                trace.push(msg);
            }
            self.flush(out.queued, ledger);
        }
        let waiting = self.agents.iter().filter(|a| !a.is_terminated()).count();
        if waiting > 0 {
            return Err(Error::Deadlock { waiting });
        }
        Ok(())
    }

    fn flush(&mut self, outgoing: Vec<Message>, ledger: &mut RevealLedger) {
        for msg in outgoing {
            self.counts.record(msg.payload.kind());
            self.traffic += msg.payload.size(self.agents.len());
            if let Payload::Cost {
                value,
                responder_value,
                ..
            } = msg.payload
            {
                record_privacy(
                    ledger,
                    PrivacyEvent::CostReply {
                        owner: msg.sender,
                        counterpart: msg.receiver,
                        owner_value: responder_value,
                        counterpart_value: value,
                    },
                );
            }
            self.seq += 1;
            self.queue.push(Reverse(Queued {
                key: (self.step, msg.sender, msg.receiver, self.seq),
                msg,
            }));
        }
    }
}
