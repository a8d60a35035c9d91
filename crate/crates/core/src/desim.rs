//! Deterministic discrete-event engine.
//!
//! Requests enter at a node, wait in that node's FIFO queue, are served, then
//! cross a [`NetworkLink`] to the next node until a node with no outgoing route
//! completes them. Events are totally ordered by `(time, sequence)`; the sequence
//! number is assigned at scheduling time, so simultaneous events run in the order
//! they were scheduled.
//!
//! A centralized node's service time grows linearly with the registered user
//! count through its `contention_coefficient`, mirroring the monolith model's
//! `alpha * n` term.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::analytic::sample_gaussian;
use crate::domain::{NoiseSpec, UserCount, UserId};
use crate::recsys::ShardMap;
use crate::rng::RngStream;

pub type NodeId = usize;
pub type RequestId = u64;

pub const DEFAULT_EVENT_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesimError {
    #[error("cannot schedule at t={time} before the clock at t={now}")]
    TimeInPast { time: f64, now: f64 },
    #[error("event time {0} is not finite")]
    InvalidTime(f64),
    #[error("event budget of {budget} exhausted with events still pending")]
    NonTermination { budget: u64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("user {0} is not registered")]
    UnknownUser(UserId),
    #[error("invalid node {node}: {reason}")]
    InvalidNode { node: NodeId, reason: &'static str },
    #[error("invalid link {from}->{to}: {reason}")]
    InvalidLink {
        from: NodeId,
        to: NodeId,
        reason: &'static str,
    },
    #[error("inter-arrival time must be finite and non-negative, got {0}")]
    InvalidInterArrival(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    ServiceStart,
    ServiceEnd,
    NetworkDeliver,
    /// Opaque token handed to [`SimHook::on_control`].
    Control(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
    pub request_id: Option<RequestId>,
    pub node_id: Option<NodeId>,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Future event list with a monotone clock.
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    now: f64,
    next_sequence: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(
        &mut self,
        time: f64,
        kind: EventKind,
        request_id: Option<RequestId>,
        node_id: Option<NodeId>,
    ) -> Result<u64, DesimError> {
        if !time.is_finite() {
            return Err(DesimError::InvalidTime(time));
        }
        if time < self.now {
            return Err(DesimError::TimeInPast {
                time,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(SimEvent {
            time,
            sequence,
            kind,
            request_id,
            node_id,
        });
        Ok(sequence)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<SimEvent> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }
}

/// A service station with a FIFO queue and `concurrency` identical servers.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceNode {
    pub name: String,
    pub service_time: f64,
    pub contention_coefficient: f64,
    pub concurrency: u32,
    pub sidecar_overhead: f64,
    pub sidecar_enabled: bool,
    pub jitter: NoiseSpec,
    queue: VecDeque<RequestId>,
    busy: u32,
}

impl ServiceNode {
    pub fn new(name: impl Into<String>, service_time: f64) -> Self {
        Self {
            name: name.into(),
            service_time,
            contention_coefficient: 0.0,
            concurrency: 1,
            sidecar_overhead: 0.0,
            sidecar_enabled: false,
            jitter: NoiseSpec::NONE,
            queue: VecDeque::new(),
            busy: 0,
        }
    }

    pub fn with_contention(mut self, coefficient: f64) -> Self {
        self.contention_coefficient = coefficient;
        self
    }

    pub fn with_concurrency(mut self, servers: u32) -> Self {
        self.concurrency = servers;
        self
    }

    pub fn with_sidecar(mut self, overhead: f64) -> Self {
        self.sidecar_overhead = overhead;
        self.sidecar_enabled = true;
        self
    }

    pub fn with_jitter(mut self, jitter: NoiseSpec) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn validate(&self, id: NodeId) -> Result<(), DesimError> {
        let bad = |reason| Err(DesimError::InvalidNode { node: id, reason });
        if !(self.service_time.is_finite() && self.service_time >= 0.0) {
            return bad("service_time must be finite and >= 0");
        }
        if !(self.contention_coefficient.is_finite() && self.contention_coefficient >= 0.0) {
            return bad("contention_coefficient must be finite and >= 0");
        }
        if !(self.sidecar_overhead.is_finite() && self.sidecar_overhead >= 0.0) {
            return bad("sidecar_overhead must be finite and >= 0");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be >= 1");
        }
        Ok(())
    }
}

/// Deterministic part of a node's service time for `active_users` registered users.
pub fn effective_service_time(node: &ServiceNode, active_users: UserCount) -> f64 {
    let base = node.service_time + node.contention_coefficient * active_users.as_f64();
    if node.sidecar_enabled {
        base + node.sidecar_overhead
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkLink {
    pub from: NodeId,
    pub to: NodeId,
    pub latency: f64,
}

impl NetworkLink {
    pub fn new(from: NodeId, to: NodeId, latency: f64) -> Self {
        Self { from, to, latency }
    }

    /// A zero-latency link between co-located components.
    pub fn local(from: NodeId, to: NodeId) -> Self {
        Self::new(from, to, 0.0)
    }
}

/// Where a request goes after service at a node.
#[derive(Debug, Clone, PartialEq)]
pub enum Route {
    Terminal,
    Link(NetworkLink),
    /// One link per shard, indexed by the user's shard.
    Sharded {
        map: ShardMap,
        links: Vec<NetworkLink>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub node: NodeId,
    pub arrived: f64,
    pub started: f64,
    pub finished: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub request_id: RequestId,
    pub user: UserId,
    pub arrival_time: f64,
    pub completion_time: f64,
    pub hops: Vec<Hop>,
}

impl Completion {
    pub fn path(&self) -> Vec<NodeId> {
        self.hops.iter().map(|h| h.node).collect()
    }

    pub fn latency(&self) -> f64 {
        self.completion_time - self.arrival_time
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub completed: Vec<Completion>,
    /// No loss model exists, so this stays empty.
    pub dropped: Vec<RequestId>,
    pub events_processed: u64,
}

/// Per-request latencies `completion - arrival`, ordered by request id.
pub fn collect_latencies(trace: &SimTrace) -> Vec<f64> {
    let mut rows: Vec<(RequestId, f64)> = trace
        .completed
        .iter()
        .map(|c| (c.request_id, c.latency()))
        .collect();
    rows.sort_by_key(|r| r.0);
    rows.into_iter().map(|r| r.1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestInfo {
    pub id: RequestId,
    pub user: UserId,
    pub entry: NodeId,
}

/// Observer callbacks invoked from inside the event loop.
pub trait SimHook {
    /// A request has entered the system at its entry node.
    fn on_arrival(&mut self, _now: f64, _request: &RequestInfo) {}
    fn on_control(&mut self, _now: f64, _token: u64) {}
    fn on_complete(&mut self, _completion: &Completion) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoHook;

impl SimHook for NoHook {}

#[derive(Debug, Clone)]
struct InFlight {
    user: UserId,
    arrival: f64,
    hops: Vec<Hop>,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct Engine<H: SimHook = NoHook> {
    queue: EventQueue,
    nodes: Vec<ServiceNode>,
    routes: Vec<Route>,
    users: UserCount,
    rng: RngStream,
    requests: Vec<InFlight>,
    completed: Vec<Completion>,
    processed: u64,
    budget: u64,
    event_log: Option<Vec<SimEvent>>,
    hook: H,
}

impl Engine<NoHook> {
    pub fn new(
        nodes: Vec<ServiceNode>,
        routes: Vec<Route>,
        users: UserCount,
        seed: u64,
    ) -> Result<Self, DesimError> {
        Engine::with_hook(nodes, routes, users, seed, NoHook)
    }
}

impl<H: SimHook> Engine<H> {
    /// `routes[i]` is the outgoing route of `nodes[i]`. Jitter draws come from a
    /// stream seeded with `seed`, consumed in event order.
    pub fn with_hook(
        nodes: Vec<ServiceNode>,
        routes: Vec<Route>,
        users: UserCount,
        seed: u64,
        hook: H,
    ) -> Result<Self, DesimError> {
        if routes.len() != nodes.len() {
            return Err(DesimError::UnknownNode(nodes.len().min(routes.len())));
        }
        for (id, node) in nodes.iter().enumerate() {
            node.validate(id)?;
        }
        let check = |id: NodeId, l: &NetworkLink| -> Result<(), DesimError> {
            let bad = |reason| {
                Err(DesimError::InvalidLink {
                    from: l.from,
                    to: l.to,
                    reason,
                })
            };
            if l.from != id {
                return bad("link does not leave its owning node");
            }
            if l.to >= nodes.len() {
                return bad("link target does not exist");
            }
            if !(l.latency.is_finite() && l.latency >= 0.0) {
                return bad("latency must be finite and >= 0");
            }
            Ok(())
        };
        for (id, route) in routes.iter().enumerate() {
            match route {
                Route::Terminal => {}
                Route::Link(l) => check(id, l)?,
                Route::Sharded { map, links } => {
                    if links.len() != map.num_shards() as usize {
                        return Err(DesimError::InvalidNode {
                            node: id,
                            reason: "sharded route needs one link per shard",
                        });
                    }
                    for l in links {
                        check(id, l)?;
                    }
                }
            }
        }
        Ok(Self {
            queue: EventQueue::new(),
            nodes,
            routes,
            users,
            rng: RngStream::new(seed),
            requests: Vec::new(),
            completed: Vec::new(),
            processed: 0,
            budget: DEFAULT_EVENT_BUDGET,
            event_log: None,
            hook,
        })
    }

    pub fn set_event_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    /// Keep a copy of every extracted event, retrievable via [`event_log`](Self::event_log).
    pub fn record_events(&mut self, on: bool) {
        self.event_log = on.then(Vec::new);
    }

    pub fn event_log(&self) -> Option<&[SimEvent]> {
        self.event_log.as_deref()
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    pub fn node(&self, id: NodeId) -> Option<&ServiceNode> {
        self.nodes.get(id)
    }

    pub fn registered_users(&self) -> UserCount {
        self.users
    }

    pub fn hook(&self) -> &H {
        &self.hook
    }

    pub fn hook_mut(&mut self) -> &mut H {
        &mut self.hook
    }

    pub fn into_hook(self) -> H {
        self.hook
    }

    pub fn schedule(
        &mut self,
        time: f64,
        kind: EventKind,
        request_id: Option<RequestId>,
        node_id: Option<NodeId>,
    ) -> Result<u64, DesimError> {
        self.queue.schedule(time, kind, request_id, node_id)
    }

    pub fn schedule_control(&mut self, time: f64, token: u64) -> Result<u64, DesimError> {
        self.schedule(time, EventKind::Control(token), None, None)
    }

    pub fn inject_request(
        &mut self,
        time: f64,
        entry: NodeId,
        user: UserId,
    ) -> Result<RequestId, DesimError> {
        if entry >= self.nodes.len() {
            return Err(DesimError::UnknownNode(entry));
        }
        if user >= self.users.get() {
            return Err(DesimError::UnknownUser(user));
        }
        let id = self.requests.len() as RequestId;
        self.schedule(time, EventKind::Arrival, Some(id), Some(entry))?;
        self.requests.push(InFlight {
            user,
            arrival: time,
            hops: Vec::new(),
            done: false,
        });
        Ok(id)
    }

    /// Request `i` (zero-based within this call) arrives at `i * inter_arrival`.
    /// Users are assigned round-robin by request id.
    pub fn inject_workload(
        &mut self,
        request_count: u64,
        inter_arrival: f64,
        entry: NodeId,
    ) -> Result<Vec<RequestId>, DesimError> {
        if !(inter_arrival.is_finite() && inter_arrival >= 0.0) {
            return Err(DesimError::InvalidInterArrival(inter_arrival));
        }
        (0..request_count)
            .map(|i| {
                let user = self.requests.len() as u64 % self.users.get();
                self.inject_request(i as f64 * inter_arrival, entry, user)
            })
            .collect()
    }

    fn enqueue(&mut self, req: RequestId, node: NodeId) -> Result<(), DesimError> {
        let now = self.now();
        self.requests[req as usize].hops.push(Hop {
            node,
            arrived: now,
            started: f64::NAN,
            finished: f64::NAN,
        });
        self.nodes[node].queue.push_back(req);
        self.try_start(node)
    }

    fn try_start(&mut self, node: NodeId) -> Result<(), DesimError> {
        let now = self.now();
        loop {
            let n = &mut self.nodes[node];
            if n.busy >= n.concurrency {
                return Ok(());
            }
            let Some(req) = n.queue.pop_front() else {
                return Ok(());
            };
            n.busy += 1;
            self.queue
                .schedule(now, EventKind::ServiceStart, Some(req), Some(node))?;
        }
    }

    fn current_hop(&mut self, req: RequestId) -> &mut Hop {
        self.requests[req as usize]
            .hops
            .last_mut()
            .expect("request has entered a node")
    }

    fn handle(&mut self, ev: SimEvent) -> Result<(), DesimError> {
        let now = ev.time;
        match ev.kind {
            EventKind::Control(token) => {
                self.hook.on_control(now, token);
                Ok(())
            }
            EventKind::Arrival => {
                let (req, node) = endpoints(&ev);
                let info = RequestInfo {
                    id: req,
                    user: self.requests[req as usize].user,
                    entry: node,
                };
                self.hook.on_arrival(now, &info);
                self.enqueue(req, node)
            }
            EventKind::NetworkDeliver => {
                let (req, node) = endpoints(&ev);
                self.enqueue(req, node)
            }
            EventKind::ServiceStart => {
                let (req, node) = endpoints(&ev);
                self.current_hop(req).started = now;
                let n = &self.nodes[node];
                let mut service = effective_service_time(n, self.users);
                if !n.jitter.is_zero() {
                    let jitter = n.jitter;
                    service = (service + sample_gaussian(&mut self.rng, jitter)).max(0.0);
                }
                self.queue
                    .schedule(now + service, EventKind::ServiceEnd, Some(req), Some(node))?;
                Ok(())
            }
            EventKind::ServiceEnd => {
                let (req, node) = endpoints(&ev);
                self.current_hop(req).finished = now;
                self.nodes[node].busy -= 1;
                let user = self.requests[req as usize].user;
                let next = match &self.routes[node] {
                    Route::Terminal => None,
                    Route::Link(l) => Some(*l),
                    Route::Sharded { map, links } => {
                        let shard = map.shard_of(user).ok_or(DesimError::UnknownUser(user))?;
                        Some(links[shard as usize])
                    }
                };
                match next {
                    Some(link) => {
                        self.queue.schedule(
                            now + link.latency,
                            EventKind::NetworkDeliver,
                            Some(req),
                            Some(link.to),
                        )?;
                    }
                    None => self.complete(req, now),
                }
                self.try_start(node)
            }
        }
    }

    fn complete(&mut self, req: RequestId, now: f64) {
        let r = &mut self.requests[req as usize];
        r.done = true;
        let c = Completion {
            request_id: req,
            user: r.user,
            arrival_time: r.arrival,
            completion_time: now,
            hops: std::mem::take(&mut r.hops),
        };
        self.hook.on_complete(&c);
        self.completed.push(c);
    }

    /// Processes one event. Returns `None` once the event list is empty.
    pub fn step(&mut self) -> Result<Option<SimEvent>, DesimError> {
        if self.queue.is_empty() {
            return Ok(None);
        }
        if self.processed >= self.budget {
            return Err(DesimError::NonTermination {
                budget: self.budget,
            });
        }
        let ev = self.queue.pop().expect("queue is non-empty");
        self.processed += 1;
        if let Some(log) = &mut self.event_log {
            log.push(ev);
        }
        self.handle(ev)?;
        Ok(Some(ev))
    }

    /// Runs until no events remain and returns everything completed so far.
    pub fn run_until_drained(&mut self) -> Result<SimTrace, DesimError> {
        while self.step()?.is_some() {}
        debug_assert!(self.requests.iter().all(|r| r.done));
        Ok(SimTrace {
            completed: std::mem::take(&mut self.completed),
            dropped: Vec::new(),
            events_processed: self.processed,
        })
    }
}

fn endpoints(ev: &SimEvent) -> (RequestId, NodeId) {
    (
        ev.request_id.expect("request event carries a request id"),
        ev.node_id.expect("request event carries a node id"),
    )
}
