//! Service graphs and deployment plans for the canonical scenarios.
//!
//! A [`ServiceGraph`] is the logical pipeline: which roles exist and how a request
//! flows between them. A [`DeploymentPlan`] places it: per-node costs, link
//! latencies and, for microservices, the shard map. [`instantiate`] turns the
//! pair into a runnable [`Engine`].
//!
//! Three scenarios are provided:
//!
//! * monolith: `Gateway -> central store`, the store paying `alpha` per registered user;
//! * microservice: `Gateway -> shard_i`, each shard co-locating its users' vectors and
//!   paying `t_local` instead;
//! * three-layer: the microservice online path followed by a ranking hop, with
//!   nearline, offline and monitoring components beside the request path.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::control_plane::{
    apply_preference_update, ControlEvent, ControlEventKind, EventBus, KeyValues, Registry,
    VersionId,
};
use crate::desim::{
    Completion, DesimError, Engine, NetworkLink, NodeId, RequestId, RequestInfo, Route,
    ServiceNode, SimHook,
};
use crate::domain::{
    validate_params, DomainError, ItemVector, LatencyModelParams, NoiseSpec, Score, UserCount,
    UserId,
};
use crate::recsys::{
    assign_shards, random_item, PreferenceStore, RecsysError, ShardMap, ShardedStore,
};
use crate::rng::RngStream;

pub const DEFAULT_RANKING_TIME: f64 = 0.5;

pub const PREFERENCE_TOPIC: &str = "preferences";
pub const MODEL_TOPIC: &str = "models";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("invalid service graph: {0}")]
    InvalidGraph(String),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("store does not match the deployment: {0}")]
    StoreMismatch(String),
    #[error(transparent)]
    Recsys(RecsysError),
    #[error(transparent)]
    Desim(#[from] DesimError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl From<RecsysError> for TopologyError {
    fn from(e: RecsysError) -> Self {
        match e {
            RecsysError::UnknownUser(u) => TopologyError::UnknownUser(u),
            other => TopologyError::Recsys(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Gateway,
    PreferenceStoreNode,
    InferenceNode,
    RankingNode,
    NearlineProcessor,
    OfflineTrainer,
    Monitor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalNode {
    pub role: Role,
    pub name: String,
    pub shard: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// A request travels along this edge.
    Request,
    /// Events or observations flow along this edge, never requests.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceGraph {
    nodes: Vec<LogicalNode>,
    edges: Vec<Edge>,
}

impl ServiceGraph {
    pub fn new(nodes: Vec<LogicalNode>, edges: Vec<Edge>) -> Result<Self, TopologyError> {
        let g = Self { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let bad = |m: &str| Err(TopologyError::InvalidGraph(m.to_owned()));
        let gateways = self
            .nodes
            .iter()
            .filter(|n| n.role == Role::Gateway)
            .count();
        if gateways != 1 {
            return bad("exactly one gateway is required");
        }
        if self
            .edges
            .iter()
            .any(|e| e.from >= self.nodes.len() || e.to >= self.nodes.len())
        {
            return bad("edge references a missing node");
        }
        // Kahn's algorithm over request edges: acyclic iff every node gets removed.
        let mut indegree = vec![0usize; self.nodes.len()];
        for e in self.request_edges() {
            indegree[e.to] += 1;
        }
        let mut ready: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&i| indegree[i] == 0)
            .collect();
        let mut removed = 0;
        while let Some(n) = ready.pop() {
            removed += 1;
            for e in self.request_edges().filter(|e| e.from == n) {
                indegree[e.to] -= 1;
                if indegree[e.to] == 0 {
                    ready.push(e.to);
                }
            }
        }
        if removed != self.nodes.len() {
            return bad("request path contains a cycle");
        }
        if indegree[self.gateway()] != 0 {
            return bad("gateway must be the entry point");
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[LogicalNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn request_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Request)
    }

    pub fn gateway(&self) -> NodeId {
        self.nodes
            .iter()
            .position(|n| n.role == Role::Gateway)
            .expect("validated graph has a gateway")
    }

    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.role == role)
            .map(|(i, _)| i)
    }

    /// Whether any request can ever visit `node`.
    pub fn on_request_path(&self, node: NodeId) -> bool {
        let mut stack = vec![self.gateway()];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(n) = stack.pop() {
            if n == node {
                return true;
            }
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.request_edges().filter(|e| e.from == n).map(|e| e.to));
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeploymentStyle {
    Monolith,
    Microservice,
}

/// Physical cost model of one graph node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePlacement {
    pub service_time: f64,
    pub contention_coefficient: f64,
    pub concurrency: u32,
    pub jitter: NoiseSpec,
    pub sidecar_overhead: Option<f64>,
}

impl NodePlacement {
    pub fn fixed(service_time: f64) -> Self {
        Self {
            service_time,
            contention_coefficient: 0.0,
            concurrency: 1,
            jitter: NoiseSpec::NONE,
            sidecar_overhead: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub style: DeploymentStyle,
    pub users: UserCount,
    pub shard_map: Option<ShardMap>,
    /// Indexed like the graph's nodes.
    pub placements: Vec<NodePlacement>,
    /// Latency of each request edge; missing edges are co-located (0 ms).
    pub link_latency: BTreeMap<(NodeId, NodeId), f64>,
}

impl DeploymentPlan {
    /// Sets the gateway's own service time (0 by default).
    pub fn with_gateway_time(mut self, graph: &ServiceGraph, ms: f64) -> Self {
        self.placements[graph.gateway()].service_time = ms;
        self
    }

    /// Adds a sidecar to every node on the request path.
    pub fn with_sidecar(mut self, graph: &ServiceGraph, overhead: f64) -> Self {
        for (i, p) in self.placements.iter_mut().enumerate() {
            if graph.on_request_path(i) {
                p.sidecar_overhead = Some(overhead);
            }
        }
        self
    }

    pub fn with_link_latency(mut self, from: NodeId, to: NodeId, ms: f64) -> Self {
        self.link_latency.insert((from, to), ms);
        self
    }

    fn latency(&self, from: NodeId, to: NodeId) -> f64 {
        self.link_latency.get(&(from, to)).copied().unwrap_or(0.0)
    }
}

fn node(role: Role, name: impl Into<String>, shard: Option<u32>) -> LogicalNode {
    LogicalNode {
        role,
        name: name.into(),
        shard,
    }
}

fn request(from: NodeId, to: NodeId) -> Edge {
    Edge {
        from,
        to,
        kind: EdgeKind::Request,
    }
}

fn control(from: NodeId, to: NodeId) -> Edge {
    Edge {
        from,
        to,
        kind: EdgeKind::Control,
    }
}

/// Gateway in front of one centralized store that every request reaches over the network.
pub fn build_monolith(
    n: UserCount,
    p: &LatencyModelParams,
) -> Result<(ServiceGraph, DeploymentPlan), TopologyError> {
    let p = validate_params(*p)?;
    let graph = ServiceGraph::new(
        vec![
            node(Role::Gateway, "gateway", None),
            node(Role::PreferenceStoreNode, "central", None),
        ],
        vec![request(0, 1)],
    )?;
    let central = NodePlacement {
        service_time: p.t_comp,
        contention_coefficient: p.alpha,
        jitter: p.mono_noise(),
        ..NodePlacement::fixed(0.0)
    };
    let plan = DeploymentPlan {
        style: DeploymentStyle::Monolith,
        users: n,
        shard_map: None,
        placements: vec![NodePlacement::fixed(0.0), central],
        link_latency: BTreeMap::new(),
    };
    Ok((graph, plan))
}

fn shard_nodes(num_shards: u32) -> Vec<LogicalNode> {
    (0..num_shards)
        .map(|s| node(Role::InferenceNode, format!("shard-{s}"), Some(s)))
        .collect()
}

fn shard_placement(p: &LatencyModelParams) -> NodePlacement {
    NodePlacement {
        service_time: p.t_comp + p.t_local,
        jitter: p.micro_noise(),
        ..NodePlacement::fixed(0.0)
    }
}

/// Gateway routing each request to the shard that holds its user's vector.
pub fn build_microservice(
    n: UserCount,
    num_shards: u32,
    p: &LatencyModelParams,
) -> Result<(ServiceGraph, DeploymentPlan), TopologyError> {
    let p = validate_params(*p)?;
    let map = assign_shards(n, num_shards)?;
    let mut nodes = vec![node(Role::Gateway, "gateway", None)];
    nodes.extend(shard_nodes(num_shards));
    let edges = (1..=num_shards as usize).map(|s| request(0, s)).collect();
    let graph = ServiceGraph::new(nodes, edges)?;
    let mut placements = vec![NodePlacement::fixed(0.0)];
    placements.extend((0..num_shards).map(|_| shard_placement(&p)));
    let plan = DeploymentPlan {
        style: DeploymentStyle::Microservice,
        users: n,
        shard_map: Some(map),
        placements,
        link_latency: BTreeMap::new(),
    };
    Ok((graph, plan))
}

/// Online path `Gateway -> inference shard -> ranking`, with the nearline
/// processor, offline trainer and monitor attached by control edges only.
pub fn build_three_layer(
    n: UserCount,
    num_shards: u32,
    p: &LatencyModelParams,
) -> Result<(ServiceGraph, DeploymentPlan), TopologyError> {
    let p = validate_params(*p)?;
    let map = assign_shards(n, num_shards)?;
    let k = num_shards as usize;
    let ranking = k + 1;
    let nearline = k + 2;
    let trainer = k + 3;
    let monitor = k + 4;

    let mut nodes = vec![node(Role::Gateway, "gateway", None)];
    nodes.extend(shard_nodes(num_shards));
    nodes.push(node(Role::RankingNode, "ranking", None));
    nodes.push(node(Role::NearlineProcessor, "nearline", None));
    nodes.push(node(Role::OfflineTrainer, "offline-trainer", None));
    nodes.push(node(Role::Monitor, "monitor", None));

    let mut edges: Vec<Edge> = (1..=k).map(|s| request(0, s)).collect();
    edges.extend((1..=k).map(|s| request(s, ranking)));
    edges.extend((1..=k).map(|s| control(nearline, s)));
    edges.extend((1..=k).map(|s| control(trainer, s)));
    edges.push(control(ranking, monitor));
    let graph = ServiceGraph::new(nodes, edges)?;

    let mut placements = vec![NodePlacement::fixed(0.0)];
    placements.extend((0..num_shards).map(|_| shard_placement(&p)));
    placements.push(NodePlacement::fixed(DEFAULT_RANKING_TIME));
    placements.extend([NodePlacement::fixed(0.0); 3]);
    let plan = DeploymentPlan {
        style: DeploymentStyle::Microservice,
        users: n,
        shard_map: Some(map),
        placements,
        link_latency: BTreeMap::new(),
    };
    Ok((graph, plan))
}

/// Builds a runnable engine for a graph and its plan.
pub fn instantiate<H: SimHook>(
    graph: &ServiceGraph,
    plan: &DeploymentPlan,
    seed: u64,
    hook: H,
) -> Result<Engine<H>, TopologyError> {
    if plan.placements.len() != graph.nodes().len() {
        return Err(TopologyError::InvalidGraph(
            "plan does not cover every node".into(),
        ));
    }
    let nodes = graph
        .nodes()
        .iter()
        .zip(&plan.placements)
        .map(|(n, p)| {
            let mut s = ServiceNode::new(n.name.clone(), p.service_time)
                .with_contention(p.contention_coefficient)
                .with_concurrency(p.concurrency)
                .with_jitter(p.jitter);
            if let Some(o) = p.sidecar_overhead {
                s = s.with_sidecar(o);
            }
            s
        })
        .collect();
    let mut routes = Vec::with_capacity(graph.nodes().len());
    for id in 0..graph.nodes().len() {
        let outs: Vec<NodeId> = graph
            .request_edges()
            .filter(|e| e.from == id)
            .map(|e| e.to)
            .collect();
        let link = |to| NetworkLink::new(id, to, plan.latency(id, to));
        let route = match outs.as_slice() {
            [] => Route::Terminal,
            [to] => Route::Link(link(*to)),
            many => {
                let map = plan.shard_map.ok_or_else(|| {
                    TopologyError::InvalidGraph("fan-out without a shard map".into())
                })?;
                let mut by_shard = vec![None; map.num_shards() as usize];
                for &to in many {
                    let s = graph.nodes()[to].shard.ok_or_else(|| {
                        TopologyError::InvalidGraph("fan-out target is not a shard".into())
                    })?;
                    let slot = by_shard.get_mut(s as usize).ok_or_else(|| {
                        TopologyError::InvalidGraph("shard index out of range".into())
                    })?;
                    *slot = Some(link(to));
                }
                let links = by_shard
                    .into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| {
                        TopologyError::InvalidGraph("a shard has no incoming edge".into())
                    })?;
                Route::Sharded { map, links }
            }
        };
        routes.push(route);
    }
    Ok(Engine::with_hook(nodes, routes, plan.users, seed, hook)?)
}

/// Read path of a deployment: where a user's vector lives and how it is scored.
#[derive(Debug, Clone, PartialEq)]
pub enum ServingView {
    Central(PreferenceStore),
    Sharded(ShardedStore),
}

impl ServingView {
    pub fn new(plan: &DeploymentPlan, store: &PreferenceStore) -> Result<Self, TopologyError> {
        match (plan.style, plan.shard_map) {
            (DeploymentStyle::Monolith, _) => Ok(Self::Central(store.clone())),
            (DeploymentStyle::Microservice, Some(map)) => {
                Ok(Self::Sharded(ShardedStore::partition(store, map)?))
            }
            (DeploymentStyle::Microservice, None) => Err(TopologyError::InvalidGraph(
                "microservice plan without a shard map".into(),
            )),
        }
    }

    pub fn score(&self, user: UserId, v: &ItemVector) -> Result<Score, TopologyError> {
        Ok(match self {
            Self::Central(s) => s.score_user(user, v)?,
            Self::Sharded(s) => s.score_user(user, v)?,
        })
    }
}

/// The score the gateway returns for `(user, v)` under this deployment.
pub fn functional_result(
    graph: &ServiceGraph,
    plan: &DeploymentPlan,
    store: &PreferenceStore,
    user_id: UserId,
    v: &ItemVector,
) -> Result<Score, TopologyError> {
    if plan.placements.len() != graph.nodes().len() {
        return Err(TopologyError::InvalidGraph(
            "plan does not cover every node".into(),
        ));
    }
    ServingView::new(plan, store)?.score(user_id, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Monolith,
    Microservice,
    ThreeLayer,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::Monolith,
        Scenario::Microservice,
        Scenario::ThreeLayer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Monolith => "monolith",
            Scenario::Microservice => "microservice",
            Scenario::ThreeLayer => "three_layer",
        }
    }

    pub fn build(
        self,
        n: UserCount,
        num_shards: u32,
        p: &LatencyModelParams,
    ) -> Result<(ServiceGraph, DeploymentPlan), TopologyError> {
        match self {
            Scenario::Monolith => build_monolith(n, p),
            Scenario::Microservice => build_microservice(n, num_shards, p),
            Scenario::ThreeLayer => build_three_layer(n, num_shards, p),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| TopologyError::UnknownScenario(s.to_owned()))
    }
}

/// What a served request saw: its score and the state it was served from.
#[derive(Debug, Clone, PartialEq)]
pub struct ServedRequest {
    pub request_id: RequestId,
    pub user: UserId,
    pub arrival_time: f64,
    pub score: Score,
    pub model_version: Option<VersionId>,
    pub store_version: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorTap {
    pub completions: u64,
    pub latencies: Vec<f64>,
}

#[derive(Debug, Clone)]
enum ControlAction {
    Publish {
        topic: &'static str,
        event: ControlEvent,
    },
    NearlineDrain,
    Train {
        score: f64,
    },
    Rollback {
        version: VersionId,
    },
}

/// Simulation hook for the three-layer scenario.
///
/// Requests are scored at their arrival event against the store version and
/// model version current at that instant. Preference updates travel through the
/// bus and only take effect at a nearline drain point.
#[derive(Debug, Clone)]
pub struct ThreeLayerRuntime {
    plan: DeploymentPlan,
    store: Arc<PreferenceStore>,
    view: Arc<ServingView>,
    store_version: u64,
    bus: EventBus,
    registry: Registry,
    item_rng: RngStream,
    fixed_item: Option<ItemVector>,
    actions: BTreeMap<u64, ControlAction>,
    next_token: u64,
    served: Vec<ServedRequest>,
    published_models: Vec<VersionId>,
    monitor: MonitorTap,
}

impl ThreeLayerRuntime {
    /// `store` must hold exactly the users `0..plan.users`.
    pub fn new(
        plan: &DeploymentPlan,
        store: Arc<PreferenceStore>,
        item_seed: u64,
    ) -> Result<Self, TopologyError> {
        if store.len() as u64 != plan.users.get() {
            return Err(TopologyError::StoreMismatch(format!(
                "store has {} users, deployment registers {}",
                store.len(),
                plan.users
            )));
        }
        let view = Arc::new(ServingView::new(plan, &store)?);
        Ok(Self::with_view(plan, store, view, item_seed))
    }

    /// Reuses an already partitioned view of `store`.
    pub fn with_view(
        plan: &DeploymentPlan,
        store: Arc<PreferenceStore>,
        view: Arc<ServingView>,
        item_seed: u64,
    ) -> Self {
        Self {
            plan: plan.clone(),
            store,
            view,
            store_version: 0,
            bus: EventBus::new(),
            registry: Registry::new(),
            item_rng: RngStream::new(item_seed),
            fixed_item: None,
            actions: BTreeMap::new(),
            next_token: 0,
            served: Vec::new(),
            published_models: Vec::new(),
            monitor: MonitorTap::default(),
        }
    }

    /// Score every request against `v` instead of drawing a random item.
    pub fn with_fixed_item(mut self, v: ItemVector) -> Self {
        self.fixed_item = Some(v);
        self
    }

    pub fn served(&self) -> &[ServedRequest] {
        &self.served
    }

    pub fn store(&self) -> &PreferenceStore {
        &self.store
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn bus(&self) -> &EventBus {
        &self.bus
    }

    pub fn monitor(&self) -> &MonitorTap {
        &self.monitor
    }

    pub fn published_models(&self) -> &[VersionId] {
        &self.published_models
    }

    fn plan_action(&mut self, action: ControlAction) -> u64 {
        let token = self.next_token;
        self.next_token += 1;
        self.actions.insert(token, action);
        token
    }

    fn nearline_drain(&mut self) {
        let mut updates = Vec::new();
        self.bus.drain(PREFERENCE_TOPIC, |ev| {
            if let ControlEventKind::PreferenceUpdate { user_id, vector } = &ev.kind {
                updates.push((*user_id, vector.clone()));
            }
        });
        if !updates.is_empty() {
            let mut store = (*self.store).clone();
            for (user, vector) in updates {
                store = apply_preference_update(&store, user, &vector)
                    .expect("update validated when scheduled");
            }
            self.view = Arc::new(
                ServingView::new(&self.plan, &store).expect("plan already accepted this store"),
            );
            self.store = Arc::new(store);
            self.store_version += 1;
        }
        let published = &mut self.published_models;
        self.bus.drain(MODEL_TOPIC, |ev| {
            if let ControlEventKind::ModelPublished { version_id } = ev.kind {
                published.push(version_id);
            }
        });
    }
}

impl SimHook for ThreeLayerRuntime {
    fn on_arrival(&mut self, now: f64, request: &RequestInfo) {
        let item = match &self.fixed_item {
            Some(v) => v.clone(),
            None => random_item(self.store.dimension(), &mut self.item_rng)
                .expect("store dimension is at least 1"),
        };
        let score = self
            .view
            .score(request.user, &item)
            .expect("engine only admits registered users");
        self.served.push(ServedRequest {
            request_id: request.id,
            user: request.user,
            arrival_time: now,
            score,
            model_version: self.registry.active_id(),
            store_version: self.store_version,
        });
    }

    fn on_control(&mut self, now: f64, token: u64) {
        let Some(action) = self.actions.remove(&token) else {
            return;
        };
        match action {
            ControlAction::Publish { topic, event } => self.bus.publish(topic, event),
            ControlAction::NearlineDrain => self.nearline_drain(),
            ControlAction::Train { score } => {
                let version = self.registry.register_model(
                    KeyValues::from([("trainer".to_owned(), "offline".to_owned())]),
                    KeyValues::new(),
                    score,
                    now,
                );
                self.bus
                    .publish(MODEL_TOPIC, ControlEvent::model_published(version, now));
            }
            ControlAction::Rollback { version } => {
                // Unknown targets were rejected when scheduled.
                let _ = self.registry.rollback(version);
            }
        }
    }

    fn on_complete(&mut self, c: &Completion) {
        self.monitor.completions += 1;
        self.monitor.latencies.push(c.latency());
    }
}

impl Engine<ThreeLayerRuntime> {
    /// Publishes a preference update onto the bus at `time`.
    pub fn schedule_preference_update(
        &mut self,
        time: f64,
        user: UserId,
        vector: Vec<f64>,
    ) -> Result<(), TopologyError> {
        let store = self.hook().store();
        if store.get(user).is_none() {
            return Err(TopologyError::UnknownUser(user));
        }
        if vector.len() != store.dimension() {
            return Err(RecsysError::DimensionMismatch {
                expected: store.dimension(),
                actual: vector.len(),
            }
            .into());
        }
        let event = ControlEvent::preference_update(user, vector, time);
        let token = self.hook_mut().plan_action(ControlAction::Publish {
            topic: PREFERENCE_TOPIC,
            event,
        });
        self.schedule_control(time, token)?;
        Ok(())
    }

    /// The nearline processor drains the bus at `time`.
    pub fn schedule_nearline_drain(&mut self, time: f64) -> Result<(), TopologyError> {
        let token = self.hook_mut().plan_action(ControlAction::NearlineDrain);
        self.schedule_control(time, token)?;
        Ok(())
    }

    /// The offline trainer registers a new model version at `time`.
    pub fn schedule_model_training(&mut self, time: f64, score: f64) -> Result<(), TopologyError> {
        let token = self.hook_mut().plan_action(ControlAction::Train { score });
        self.schedule_control(time, token)?;
        Ok(())
    }

    /// Rolls the registry back at `time`. The target must exist by then; targets
    /// that do not are ignored.
    pub fn schedule_rollback(
        &mut self,
        time: f64,
        version: VersionId,
    ) -> Result<(), TopologyError> {
        let token = self
            .hook_mut()
            .plan_action(ControlAction::Rollback { version });
        self.schedule_control(time, token)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{eval_micro, eval_mono};
    use crate::desim::{collect_latencies, NoHook};
    use crate::domain::PreferenceVector;
    use crate::recsys::generate_store;

    fn users(n: u64) -> UserCount {
        UserCount::new(n).unwrap()
    }

    fn quiet() -> LatencyModelParams {
        LatencyModelParams::default().without_noise()
    }

    fn one_request(graph: &ServiceGraph, plan: &DeploymentPlan) -> f64 {
        let mut e = instantiate(graph, plan, 0, NoHook).unwrap();
        e.inject_request(0.0, graph.gateway(), 0).unwrap();
        collect_latencies(&e.run_until_drained().unwrap())[0]
    }

    #[test]
    fn monolith_reproduces_linear_model() {
        let (g, plan) = build_monolith(users(1000), &quiet()).unwrap();
        assert_eq!(g.nodes().len(), 2);
        assert_eq!(one_request(&g, &plan), 25.0);
        let flat = LatencyModelParams {
            alpha: 0.0,
            ..quiet()
        };
        let (g, plan) = build_monolith(users(1), &flat).unwrap();
        assert_eq!(one_request(&g, &plan), 5.0);
    }

    #[test]
    fn microservice_is_flat() {
        for (n, shards) in [(1000, 10), (1000, 1), (10, 10), (1_000_000, 10)] {
            let (g, plan) = build_microservice(users(n), shards, &quiet()).unwrap();
            assert_eq!(plan.style, DeploymentStyle::Microservice);
            assert_eq!(one_request(&g, &plan), 7.0, "n={n} shards={shards}");
        }
    }

    #[test]
    fn three_layer_adds_ranking_hop() {
        let (g, plan) = build_three_layer(users(1000), 10, &quiet()).unwrap();
        assert_eq!(one_request(&g, &plan), 7.5);
        assert_eq!(g.nodes_with_role(Role::Monitor).count(), 1);
        let monitor = g.nodes_with_role(Role::Monitor).next().unwrap();
        assert!(!g.on_request_path(monitor));
        let ranking = g.nodes_with_role(Role::RankingNode).next().unwrap();
        assert!(g.on_request_path(ranking));
    }

    #[test]
    fn zero_noise_matches_closed_form_bit_exact() {
        let p = quiet();
        for n in [1, 7, 100, 500, 1000, 2000, 5000, 10_000, 123_457] {
            let (g, plan) = build_monolith(users(n), &p).unwrap();
            assert_eq!(
                one_request(&g, &plan).to_bits(),
                eval_mono(users(n), &p, 0.0).to_bits()
            );
            let (g, plan) = build_microservice(users(n), 10, &p).unwrap();
            assert_eq!(
                one_request(&g, &plan).to_bits(),
                eval_micro(&p, 0.0).to_bits()
            );
        }
    }

    #[test]
    fn sidecar_and_gateway_costs_add_up() {
        let (g, plan) = build_microservice(users(10), 2, &quiet()).unwrap();
        let plan = plan.with_sidecar(&g, 0.5).with_gateway_time(&g, 1.0);
        // gateway 1.0 + 0.5 sidecar, shard 7.0 + 0.5 sidecar
        assert_eq!(one_request(&g, &plan), 9.0);
        let (g, plan) = build_monolith(users(10), &quiet()).unwrap();
        let plan = plan.with_link_latency(0, 1, 3.0);
        assert_eq!(one_request(&g, &plan), 3.0 + (5.0 + 0.02 * 10.0));
    }

    #[test]
    fn graph_validation() {
        let two_gateways = ServiceGraph::new(
            vec![
                node(Role::Gateway, "a", None),
                node(Role::Gateway, "b", None),
            ],
            vec![],
        );
        assert!(matches!(two_gateways, Err(TopologyError::InvalidGraph(_))));
        let cycle = ServiceGraph::new(
            vec![
                node(Role::Gateway, "g", None),
                node(Role::InferenceNode, "a", None),
                node(Role::RankingNode, "b", None),
            ],
            vec![request(0, 1), request(1, 2), request(2, 1)],
        );
        assert!(matches!(cycle, Err(TopologyError::InvalidGraph(_))));
        let dangling = ServiceGraph::new(vec![node(Role::Gateway, "g", None)], vec![request(0, 3)]);
        assert!(matches!(dangling, Err(TopologyError::InvalidGraph(_))));
    }

    #[test]
    fn zero_shards_rejected() {
        assert!(matches!(
            build_microservice(users(10), 0, &quiet()),
            Err(TopologyError::Recsys(RecsysError::NoShards))
        ));
    }

    #[test]
    fn scores_invariant_across_deployments() {
        let store = PreferenceStore::from_vectors(
            3,
            (0..4).map(|u| PreferenceVector::new(u, vec![1.0, 2.0, 3.0]).unwrap()),
        )
        .unwrap();
        let v = ItemVector::new(vec![4.0, 5.0, 6.0]).unwrap();
        for sc in Scenario::ALL {
            let (g, plan) = sc.build(users(4), 3, &quiet()).unwrap();
            assert_eq!(
                functional_result(&g, &plan, &store, 2, &v).unwrap().value(),
                32.0
            );
            assert_eq!(
                functional_result(&g, &plan, &store, 9, &v),
                Err(TopologyError::UnknownUser(9))
            );
        }
        let big = generate_store(users(97), 16, &mut RngStream::new(3)).unwrap();
        let mut rng = RngStream::new(4);
        let deployments: Vec<_> = Scenario::ALL
            .iter()
            .map(|sc| sc.build(users(97), 7, &quiet()).unwrap())
            .collect();
        for _ in 0..200 {
            let user = rng.next_u64() % 97;
            let v = random_item(16, &mut rng).unwrap();
            let scores: Vec<u64> = deployments
                .iter()
                .map(|(g, p)| {
                    functional_result(g, p, &big, user, &v)
                        .unwrap()
                        .value()
                        .to_bits()
                })
                .collect();
            assert!(scores.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.as_str().parse::<Scenario>().unwrap(), sc);
        }
        assert!(matches!(
            "analytic_sweep".parse::<Scenario>(),
            Err(TopologyError::UnknownScenario(_))
        ));
    }

    fn runtime_engine(n: u64) -> Engine<ThreeLayerRuntime> {
        let (g, plan) = build_three_layer(users(n), 2, &quiet()).unwrap();
        let store = PreferenceStore::from_vectors(
            2,
            (0..n).map(|u| PreferenceVector::new(u, vec![1.0, 0.0]).unwrap()),
        )
        .unwrap();
        let rt = ThreeLayerRuntime::new(&plan, Arc::new(store), 0)
            .unwrap()
            .with_fixed_item(ItemVector::new(vec![1.0, 1.0]).unwrap());
        instantiate(&g, &plan, 0, rt).unwrap()
    }

    #[test]
    fn nearline_freshness() {
        let mut e = runtime_engine(5);
        e.inject_request(0.0, 0, 3).unwrap();
        e.schedule_preference_update(10.0, 3, vec![9.0, 9.0])
            .unwrap();
        // Published but not yet drained: still the old vector.
        e.inject_request(20.0, 0, 3).unwrap();
        e.schedule_nearline_drain(30.0).unwrap();
        e.inject_request(40.0, 0, 3).unwrap();
        let trace = e.run_until_drained().unwrap();
        assert_eq!(collect_latencies(&trace), vec![7.5, 7.5, 7.5]);
        let rt = e.hook();
        let scores: Vec<f64> = rt.served().iter().map(|s| s.score.value()).collect();
        assert_eq!(scores, vec![1.0, 1.0, 18.0]);
        assert_eq!(rt.served()[2].store_version, 1);
        assert_eq!(rt.monitor().completions, 3);
    }

    #[test]
    fn drain_and_arrival_at_same_instant_follow_schedule_order() {
        let mut e = runtime_engine(4);
        e.schedule_preference_update(0.0, 1, vec![2.0, 2.0])
            .unwrap();
        e.inject_request(5.0, 0, 1).unwrap();
        e.schedule_nearline_drain(5.0).unwrap();
        e.inject_request(5.0, 0, 1).unwrap();
        e.run_until_drained().unwrap();
        let scores: Vec<f64> = e.hook().served().iter().map(|s| s.score.value()).collect();
        assert_eq!(scores, vec![1.0, 4.0]);
    }

    #[test]
    fn model_versions_follow_arrival_time() {
        let mut e = runtime_engine(3);
        e.inject_request(0.0, 0, 0).unwrap();
        e.schedule_model_training(1.0, 0.7).unwrap();
        e.inject_request(2.0, 0, 0).unwrap();
        e.schedule_model_training(3.0, 0.8).unwrap();
        e.inject_request(4.0, 0, 0).unwrap();
        e.schedule_rollback(5.0, 1).unwrap();
        e.inject_request(6.0, 0, 0).unwrap();
        e.schedule_nearline_drain(7.0).unwrap();
        e.run_until_drained().unwrap();
        let rt = e.hook();
        let versions: Vec<_> = rt.served().iter().map(|s| s.model_version).collect();
        assert_eq!(versions, vec![None, Some(1), Some(2), Some(1)]);
        assert_eq!(rt.registry().version_ids(), vec![1, 2]);
        assert_eq!(rt.published_models(), &[1, 2]);
    }

    #[test]
    fn runtime_rejects_bad_updates() {
        let mut e = runtime_engine(3);
        assert_eq!(
            e.schedule_preference_update(0.0, 8, vec![1.0, 1.0]),
            Err(TopologyError::UnknownUser(8))
        );
        assert!(matches!(
            e.schedule_preference_update(0.0, 1, vec![1.0]),
            Err(TopologyError::Recsys(RecsysError::DimensionMismatch { .. }))
        ));
        let (_, plan) = build_three_layer(users(3), 2, &quiet()).unwrap();
        let small =
            PreferenceStore::from_vectors(2, [PreferenceVector::new(0, vec![0.0, 0.0]).unwrap()])
                .unwrap();
        assert!(matches!(
            ThreeLayerRuntime::new(&plan, Arc::new(small), 0),
            Err(TopologyError::StoreMismatch(_))
        ));
    }

    #[test]
    fn three_layer_without_events_equals_microservice_plus_ranking() {
        for n in [3, 50, 1000] {
            let (g3, p3) = build_three_layer(users(n), 4, &quiet()).unwrap();
            let (gm, pm) = build_microservice(users(n), 4, &quiet()).unwrap();
            assert_eq!(
                one_request(&g3, &p3),
                one_request(&gm, &pm) + DEFAULT_RANKING_TIME
            );
        }
    }
}
