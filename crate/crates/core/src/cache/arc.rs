//! Adaptive Replacement Cache (Megiddo & Modha).
//!
//! `t1`/`t2` hold resident experts seen once / at least twice, `b1`/`b2` are
//! their ghost lists. Every list is ordered LRU (front) to MRU (back). The
//! target size `p` of `t1` moves on ghost hits.
//!
//! When the list REPLACE would take from has only pinned experts, the
//! victim comes from the other list instead; ghost lists are trimmed
//! afterwards so `|t1|+|b1| <= c` and the total stays within `2c`.

use std::collections::VecDeque;

use super::EvictionPolicy;
use crate::trace::ExpertId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    New,
    /// New expert while `t1` alone fills the cache: drop its LRU without a ghost.
    NewDropT1,
    GhostB1,
    GhostB2,
}

#[derive(Debug, Clone)]
pub struct ArcPolicy {
    c: usize,
    p: f64,
    t1: VecDeque<ExpertId>,
    t2: VecDeque<ExpertId>,
    b1: VecDeque<ExpertId>,
    b2: VecDeque<ExpertId>,
    pending: Option<Origin>,
}

fn remove(list: &mut VecDeque<ExpertId>, e: ExpertId) -> bool {
    match list.iter().position(|&x| x == e) {
        Some(i) => {
            list.remove(i);
            true
        }
        None => false,
    }
}

fn take_lru(list: &mut VecDeque<ExpertId>, candidates: &[ExpertId]) -> Option<ExpertId> {
    let i = list.iter().position(|e| candidates.binary_search(e).is_ok())?;
    list.remove(i)
}

impl ArcPolicy {
    pub fn new(capacity: usize) -> Self {
        Self {
            c: capacity,
            p: 0.0,
            t1: VecDeque::new(),
            t2: VecDeque::new(),
            b1: VecDeque::new(),
            b2: VecDeque::new(),
            pending: None,
        }
    }

    pub fn target(&self) -> f64 {
        self.p
    }

    /// `(|t1|, |t2|, |b1|, |b2|)`
    pub fn list_sizes(&self) -> (usize, usize, usize, usize) {
        (self.t1.len(), self.t2.len(), self.b1.len(), self.b2.len())
    }

    fn replace(&mut self, candidates: &[ExpertId], incoming_from_b2: bool) -> ExpertId {
        let t1 = self.t1.len() as f64;
        let prefer_t1 = !self.t1.is_empty() && ((incoming_from_b2 && t1 == self.p) || t1 > self.p);
        let from_t1 = |s: &mut Self| take_lru(&mut s.t1, candidates).inspect(|&v| s.b1.push_back(v));
        let from_t2 = |s: &mut Self| take_lru(&mut s.t2, candidates).inspect(|&v| s.b2.push_back(v));
        let victim =
            if prefer_t1 { from_t1(self).or_else(|| from_t2(self)) } else { from_t2(self).or_else(|| from_t1(self)) };
        victim.expect("a candidate is resident in t1 or t2")
    }

    fn trim_ghosts(&mut self) {
        while self.t1.len() + self.b1.len() > self.c && !self.b1.is_empty() {
            self.b1.pop_front();
        }
        while self.t1.len() + self.t2.len() + self.b1.len() + self.b2.len() > 2 * self.c && !self.b2.is_empty() {
            self.b2.pop_front();
        }
    }
}

impl EvictionPolicy for ArcPolicy {
    fn name(&self) -> &'static str {
        "arc"
    }

    fn on_hit(&mut self, expert: ExpertId, _pos: usize) {
        if !remove(&mut self.t1, expert) {
            remove(&mut self.t2, expert);
        }
        self.t2.push_back(expert);
    }

    fn on_miss(&mut self, expert: ExpertId, _pos: usize) {
        let (b1, b2) = (self.b1.len() as f64, self.b2.len() as f64);
        let c = self.c as f64;
        if self.b1.contains(&expert) {
            self.p = (self.p + (b2 / b1).max(1.0)).min(c);
            remove(&mut self.b1, expert);
            self.pending = Some(Origin::GhostB1);
        } else if self.b2.contains(&expert) {
            self.p = (self.p - (b1 / b2).max(1.0)).max(0.0);
            remove(&mut self.b2, expert);
            self.pending = Some(Origin::GhostB2);
        } else if self.t1.len() + self.b1.len() == self.c {
            if self.t1.len() < self.c {
                self.b1.pop_front();
                self.pending = Some(Origin::New);
            } else {
                self.pending = Some(Origin::NewDropT1);
            }
        } else {
            let total = self.t1.len() + self.t2.len() + self.b1.len() + self.b2.len();
            if total == 2 * self.c {
                self.b2.pop_front();
            }
            self.pending = Some(Origin::New);
        }
    }

    fn choose_victim(&mut self, _incoming: ExpertId, candidates: &[ExpertId], _pos: usize) -> ExpertId {
        let victim = match self.pending {
            Some(Origin::NewDropT1) => match take_lru(&mut self.t1, candidates) {
                Some(v) => v,
                None => self.replace(candidates, false),
            },
            Some(origin) => self.replace(candidates, origin == Origin::GhostB2),
            None => unreachable!("choose_victim without on_miss"),
        };
        self.trim_ghosts();
        victim
    }

    fn on_insert(&mut self, expert: ExpertId, _pos: usize) {
        match self.pending.take() {
            Some(Origin::GhostB1 | Origin::GhostB2) => self.t2.push_back(expert),
            _ => self.t1.push_back(expert),
        }
        self.trim_ghosts();
    }
}
