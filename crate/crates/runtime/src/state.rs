//! Shared state-variable store.

use std::collections::BTreeMap;
use std::sync::RwLock;
use std::time::{Duration, Instant};

use rdis_core::{Env, StateVar};

use crate::error::RuntimeError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateValue {
    pub value: f64,
    pub age: Duration,
}

/// Values with their last update time. Every read takes the lock once, so
/// a multi-variable snapshot never mixes two updates.
#[derive(Debug)]
pub struct StateStore {
    values: RwLock<BTreeMap<String, (f64, Instant)>>,
}

impl StateStore {
    pub fn new(vars: &[StateVar], now: Instant) -> Self {
        Self {
            values: RwLock::new(vars.iter().map(|v| (v.name.clone(), (v.initial, now))).collect()),
        }
    }

    pub fn snapshot(&self, names: &[&str]) -> Result<BTreeMap<String, StateValue>, RuntimeError> {
        let now = Instant::now();
        let map = self.values.read().expect("state lock poisoned");
        names
            .iter()
            .map(|n| {
                let (value, at) = map.get(*n).ok_or_else(|| RuntimeError::UnknownState(n.to_string()))?;
                Ok((
                    n.to_string(),
                    StateValue {
                        value: *value,
                        age: now.saturating_duration_since(*at),
                    },
                ))
            })
            .collect()
    }

    pub fn snapshot_all(&self) -> BTreeMap<String, StateValue> {
        let now = Instant::now();
        let map = self.values.read().expect("state lock poisoned");
        map.iter()
            .map(|(k, (value, at))| {
                (
                    k.clone(),
                    StateValue {
                        value: *value,
                        age: now.saturating_duration_since(*at),
                    },
                )
            })
            .collect()
    }

    /// Binds every variable into `env`.
    pub fn bind_into(&self, env: &mut Env) {
        let map = self.values.read().expect("state lock poisoned");
        for (k, (v, _)) in map.iter() {
            env.bind(k.clone(), *v);
        }
    }

    /// Applies several updates under one write lock. Unknown names are
    /// ignored; validation guarantees they do not occur.
    pub fn set_many(&self, updates: &[(String, f64)]) {
        let now = Instant::now();
        let mut map = self.values.write().expect("state lock poisoned");
        for (k, v) in updates {
            if let Some(slot) = map.get_mut(k) {
                *slot = (*v, now);
            }
        }
    }
}
