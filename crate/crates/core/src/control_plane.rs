//! Model registry and in-memory event bus.
//!
//! The registry is append-only: versions are numbered `1, 2, ...` and never change
//! once registered; rollback only moves the active pointer. The bus keeps one FIFO
//! per topic and per subscriber, so each subscriber sees every event exactly once
//! and in publish order.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::domain::UserId;
use crate::recsys::{PreferenceStore, RecsysError};

pub type VersionId = u64;
pub type KeyValues = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("unknown model version {0}")]
    UnknownVersion(VersionId),
    #[error("unknown subscriber {0}")]
    UnknownSubscriber(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelVersion {
    pub version_id: VersionId,
    pub metadata: KeyValues,
    pub training_config: KeyValues,
    pub performance_score: f64,
    pub created_at: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    versions: Vec<ModelVersion>,
    active: Option<VersionId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new version and makes it active.
    pub fn register_model(
        &mut self,
        metadata: KeyValues,
        training_config: KeyValues,
        performance_score: f64,
        created_at: f64,
    ) -> VersionId {
        let version_id = self.versions.last().map_or(1, |v| v.version_id + 1);
        self.versions.push(ModelVersion {
            version_id,
            metadata,
            training_config,
            performance_score,
            created_at,
        });
        self.active = Some(version_id);
        version_id
    }

    pub fn rollback(&mut self, target: VersionId) -> Result<(), ControlError> {
        if self.get(target).is_none() {
            return Err(ControlError::UnknownVersion(target));
        }
        self.active = Some(target);
        Ok(())
    }

    pub fn get(&self, id: VersionId) -> Option<&ModelVersion> {
        // Ids are gap-free from 1, so the id doubles as an index.
        let idx = usize::try_from(id.checked_sub(1)?).ok()?;
        self.versions.get(idx)
    }

    pub fn active_id(&self) -> Option<VersionId> {
        self.active
    }

    pub fn active(&self) -> Option<&ModelVersion> {
        self.active.and_then(|id| self.get(id))
    }

    pub fn versions(&self) -> &[ModelVersion] {
        &self.versions
    }

    pub fn version_ids(&self) -> Vec<VersionId> {
        self.versions.iter().map(|v| v.version_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlEventKind {
    PreferenceUpdate { user_id: UserId, vector: Vec<f64> },
    ModelPublished { version_id: VersionId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEvent {
    pub kind: ControlEventKind,
    pub publish_time: f64,
}

impl ControlEvent {
    pub fn preference_update(user_id: UserId, vector: Vec<f64>, publish_time: f64) -> Self {
        Self {
            kind: ControlEventKind::PreferenceUpdate { user_id, vector },
            publish_time,
        }
    }

    pub fn model_published(version_id: VersionId, publish_time: f64) -> Self {
        Self {
            kind: ControlEventKind::ModelPublished { version_id },
            publish_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriberId(usize);

#[derive(Debug, Clone, Default)]
struct Topic {
    /// `queues[0]` is the topic's default consumer, used by [`EventBus::drain`].
    queues: Vec<VecDeque<ControlEvent>>,
}

/// Topic-based FIFO bus. Delivery happens only at explicit drain points.
#[derive(Debug, Clone, Default)]
pub struct EventBus {
    topics: BTreeMap<String, Topic>,
    subscribers: Vec<(String, usize)>,
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    fn topic_mut(&mut self, topic: &str) -> &mut Topic {
        self.topics
            .entry(topic.to_owned())
            .or_insert_with(|| Topic {
                queues: vec![VecDeque::new()],
            })
    }

    /// Adds a subscriber that receives every event published to `topic` from now on.
    pub fn subscribe(&mut self, topic: &str) -> SubscriberId {
        let t = self.topic_mut(topic);
        t.queues.push(VecDeque::new());
        let slot = t.queues.len() - 1;
        self.subscribers.push((topic.to_owned(), slot));
        SubscriberId(self.subscribers.len() - 1)
    }

    pub fn publish(&mut self, topic: &str, event: ControlEvent) {
        let t = self.topic_mut(topic);
        let (last, rest) = t
            .queues
            .split_last_mut()
            .expect("topic has a default queue");
        for q in rest {
            q.push_back(event.clone());
        }
        last.push_back(event);
    }

    pub fn pending(&self, topic: &str) -> usize {
        self.topics.get(topic).map_or(0, |t| t.queues[0].len())
    }

    /// Delivers the default consumer's queued events in publish order.
    pub fn drain(&mut self, topic: &str, handler: impl FnMut(&ControlEvent)) -> usize {
        let batch = match self.topics.get_mut(topic) {
            Some(t) => std::mem::take(&mut t.queues[0]),
            None => return 0,
        };
        deliver(batch, handler)
    }

    /// Like [`drain`](Self::drain), but the handler may publish back into the bus.
    /// Events published during the drain are queued for the next drain.
    pub fn drain_reentrant(
        &mut self,
        topic: &str,
        mut handler: impl FnMut(&mut EventBus, &ControlEvent),
    ) -> usize {
        let batch = match self.topics.get_mut(topic) {
            Some(t) => std::mem::take(&mut t.queues[0]),
            None => return 0,
        };
        let count = batch.len();
        for ev in &batch {
            handler(self, ev);
        }
        count
    }

    pub fn drain_subscriber(
        &mut self,
        sub: SubscriberId,
        handler: impl FnMut(&ControlEvent),
    ) -> Result<usize, ControlError> {
        let (topic, slot) = self
            .subscribers
            .get(sub.0)
            .cloned()
            .ok_or(ControlError::UnknownSubscriber(sub.0))?;
        let t = self
            .topics
            .get_mut(&topic)
            .expect("subscriber topic exists");
        let batch = std::mem::take(&mut t.queues[slot]);
        Ok(deliver(batch, handler))
    }
}

fn deliver(batch: VecDeque<ControlEvent>, mut handler: impl FnMut(&ControlEvent)) -> usize {
    let count = batch.len();
    batch.iter().for_each(&mut handler);
    count
}

/// Applies a nearline preference update, producing a new store version.
pub fn apply_preference_update(
    store: &PreferenceStore,
    user_id: UserId,
    vector: &[f64],
) -> Result<PreferenceStore, RecsysError> {
    store.with_replaced(user_id, vector.to_vec())
}
