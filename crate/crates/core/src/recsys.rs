//! Inner-product scoring over centralized or sharded preference stores.
//!
//! Results never depend on the deployment: a sharded store holds the very same
//! vectors as the centralized one and scores with the same arithmetic.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{DomainError, ItemVector, PreferenceVector, Score, UserCount, UserId};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecsysError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k = {k} is outside 1..={len}")]
    KTooLarge { k: usize, len: usize },
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("duplicate user {0}")]
    DuplicateUser(UserId),
    #[error("shard count must be at least 1")]
    NoShards,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// `sum_j u_j * v_j`, accumulated left to right.
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b)
}

pub fn score(u: &PreferenceVector, v: &ItemVector) -> Result<Score, RecsysError> {
    if u.dimension() != v.dimension() {
        return Err(RecsysError::DimensionMismatch {
            expected: u.dimension(),
            actual: v.dimension(),
        });
    }
    Ok(Score::new(dot(u.components(), v.components()))?)
}

/// User vectors of one shared dimension, keyed by user id.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceStore {
    dimension: usize,
    vectors: BTreeMap<UserId, PreferenceVector>,
}

impl PreferenceStore {
    pub fn new(dimension: usize) -> Result<Self, RecsysError> {
        if dimension == 0 {
            return Err(DomainError::EmptyVector.into());
        }
        Ok(Self {
            dimension,
            vectors: BTreeMap::new(),
        })
    }

    pub fn from_vectors(
        dimension: usize,
        vectors: impl IntoIterator<Item = PreferenceVector>,
    ) -> Result<Self, RecsysError> {
        let mut store = Self::new(dimension)?;
        for v in vectors {
            store.insert(v)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, v: PreferenceVector) -> Result<(), RecsysError> {
        if v.dimension() != self.dimension {
            return Err(RecsysError::DimensionMismatch {
                expected: self.dimension,
                actual: v.dimension(),
            });
        }
        if self.vectors.contains_key(&v.user_id()) {
            return Err(RecsysError::DuplicateUser(v.user_id()));
        }
        self.vectors.insert(v.user_id(), v);
        Ok(())
    }

    /// Copy of this store with `user`'s vector replaced. `self` is left untouched.
    pub fn with_replaced(&self, user: UserId, components: Vec<f64>) -> Result<Self, RecsysError> {
        if !self.vectors.contains_key(&user) {
            return Err(RecsysError::UnknownUser(user));
        }
        if components.len() != self.dimension {
            return Err(RecsysError::DimensionMismatch {
                expected: self.dimension,
                actual: components.len(),
            });
        }
        let mut next = self.clone();
        next.vectors
            .insert(user, PreferenceVector::new(user, components)?);
        Ok(next)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, user: UserId) -> Option<&PreferenceVector> {
        self.vectors.get(&user)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PreferenceVector> {
        self.vectors.values()
    }

    pub fn score_user(&self, user: UserId, v: &ItemVector) -> Result<Score, RecsysError> {
        let u = self.get(user).ok_or(RecsysError::UnknownUser(user))?;
        score(u, v)
    }
}

/// Modular placement: user `i` lives on shard `i mod num_shards`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardMap {
    num_users: u64,
    num_shards: u32,
}

pub fn assign_shards(n: UserCount, num_shards: u32) -> Result<ShardMap, RecsysError> {
    if num_shards == 0 {
        return Err(RecsysError::NoShards);
    }
    Ok(ShardMap {
        num_users: n.get(),
        num_shards,
    })
}

impl ShardMap {
    pub fn num_shards(&self) -> u32 {
        self.num_shards
    }

    pub fn num_users(&self) -> u64 {
        self.num_users
    }

    /// Shard of a registered user, `None` for ids outside `0..num_users`.
    pub fn shard_of(&self, user: UserId) -> Option<u32> {
        (user < self.num_users).then(|| (user % u64::from(self.num_shards)) as u32)
    }

    pub fn shard_sizes(&self) -> Vec<u64> {
        let k = u64::from(self.num_shards);
        (0..k)
            .map(|s| self.num_users / k + u64::from(s < self.num_users % k))
            .collect()
    }
}

/// A preference store split across shards according to a [`ShardMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShardedStore {
    map: ShardMap,
    shards: Vec<PreferenceStore>,
}

impl ShardedStore {
    /// Users in `store` outside the shard map's range are rejected.
    pub fn partition(store: &PreferenceStore, map: ShardMap) -> Result<Self, RecsysError> {
        let mut shards = vec![PreferenceStore::new(store.dimension())?; map.num_shards as usize];
        for v in store.iter() {
            let s = map
                .shard_of(v.user_id())
                .ok_or(RecsysError::UnknownUser(v.user_id()))?;
            shards[s as usize].insert(v.clone())?;
        }
        Ok(Self { map, shards })
    }

    pub fn shard(&self, index: u32) -> Option<&PreferenceStore> {
        self.shards.get(index as usize)
    }

    pub fn shard_map(&self) -> ShardMap {
        self.map
    }

    pub fn score_user(&self, user: UserId, v: &ItemVector) -> Result<Score, RecsysError> {
        let s = self
            .map
            .shard_of(user)
            .ok_or(RecsysError::UnknownUser(user))?;
        self.shards[s as usize].score_user(user, v)
    }
}

/// Scored users, best first; ties go to the smaller user id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList(Vec<(UserId, Score)>);

impl RankedList {
    pub fn entries(&self) -> &[(UserId, Score)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn user_ids(&self) -> Vec<UserId> {
        self.0.iter().map(|(u, _)| *u).collect()
    }
}

fn rank_order(a: &(UserId, Score), b: &(UserId, Score)) -> std::cmp::Ordering {
    b.1.value().total_cmp(&a.1.value()).then(a.0.cmp(&b.0))
}

pub fn top_k(store: &PreferenceStore, v: &ItemVector, k: usize) -> Result<RankedList, RecsysError> {
    if k == 0 || k > store.len() {
        return Err(RecsysError::KTooLarge {
            k,
            len: store.len(),
        });
    }
    if v.dimension() != store.dimension() {
        return Err(RecsysError::DimensionMismatch {
            expected: store.dimension(),
            actual: v.dimension(),
        });
    }
    let mut scored = store
        .iter()
        .map(|u| Ok((u.user_id(), score(u, v)?)))
        .collect::<Result<Vec<_>, RecsysError>>()?;
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    Ok(RankedList(scored))
}

/// `n` users `0..n` with components uniform in `[-1, 1)`, drawn user by user.
pub fn generate_store(
    n: UserCount,
    d: usize,
    rng: &mut RngStream,
) -> Result<PreferenceStore, RecsysError> {
    let mut store = PreferenceStore::new(d)?;
    for user in 0..n.get() {
        let components = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        store.insert(PreferenceVector::new(user, components)?)?;
    }
    Ok(store)
}

pub fn random_item(d: usize, rng: &mut RngStream) -> Result<ItemVector, RecsysError> {
    Ok(ItemVector::new(
        (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )?)
}
