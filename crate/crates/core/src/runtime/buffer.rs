//! Tick-stamped queue between inference and the control loop.

use crate::action::Action;
use crate::tap::TapCommand;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    /// Tick at which the entry is meant to execute.
    pub tick: u64,
    pub action: Action,
    pub tap: TapCommand,
    pub generation: u64,
    /// Tick of the observation the inference was conditioned on.
    pub obs_tick: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ActionBuffer {
    pending: VecDeque<BufferEntry>,
    generation: u64,
}

impl ActionBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Installs a fresh window as the next generation. Unconsumed entries of
    /// older generations are dropped. Entries must be in increasing tick
    /// order. Returns the new generation.
    pub fn install(&mut self, entries: impl IntoIterator<Item = BufferEntry>) -> u64 {
        self.generation += 1;
        self.pending.clear();
        let mut last = None;
        for mut e in entries {
            assert!(last.is_none_or(|t| e.tick > t), "buffer entries out of tick order");
            last = Some(e.tick);
            e.generation = self.generation;
            self.pending.push_back(e);
        }
        self.generation
    }

    /// Entry for `tick`, discarding anything scheduled earlier.
    pub fn pop(&mut self, tick: u64) -> Option<BufferEntry> {
        while self.pending.front().is_some_and(|e| e.tick < tick) {
            self.pending.pop_front();
        }
        if self.pending.front().is_some_and(|e| e.tick == tick) {
            self.pending.pop_front()
        } else {
            None
        }
    }
}
