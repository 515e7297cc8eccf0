//! Per-slot MaxWeight link scheduling on the conflict graph.
//!
//! [`lgs_schedule`] is the distributed local greedy scheduler used by every
//! routing scheme. [`greedy_schedule`] and [`exact_mwis`] exist as references.

use crate::error::{Error, Result};
use crate::topology::{ConflictGraph, LinkId};

/// Largest instance [`exact_mwis`] accepts.
pub const EXACT_MWIS_CAP: usize = 24;

/// Set of simultaneously active links.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub active: Vec<bool>,
}

impl Schedule {
    pub fn empty(n: usize) -> Self {
        Self {
            active: vec![false; n],
        }
    }

    pub fn is_active(&self, e: LinkId) -> bool {
        self.active[e]
    }

    pub fn active_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(e, &on)| on.then_some(e))
    }

    pub fn len(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, utility: &[f64]) -> f64 {
        self.active_links().map(|e| utility[e]).sum()
    }

    /// No two active links conflict.
    pub fn is_independent(&self, cg: &ConflictGraph) -> bool {
        self.active_links()
            .all(|e| cg.neighbors(e).iter().all(|&f| !self.active[f]))
    }

    /// Every inactive positive-utility link has an active conflicting neighbor.
    pub fn is_maximal(&self, cg: &ConflictGraph, utility: &[f64]) -> bool {
        (0..self.active.len()).all(|e| {
            self.active[e] || utility[e] <= 0.0 || cg.neighbors(e).iter().any(|&f| self.active[f])
        })
    }
}

/// `a` beats `b`: higher utility, lower index on ties.
#[inline]
fn dominates(utility: &[f64], a: LinkId, b: LinkId) -> bool {
    utility[a] > utility[b] || (utility[a] == utility[b] && a < b)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Undecided,
    Active,
    Inactive,
}

/// Local greedy scheduler, run as synchronous rounds.
///
/// In each round every undecided link that dominates all of its undecided
/// conflicting neighbors joins the schedule and silences those neighbors.
/// Zero-utility links never activate.
pub fn lgs_schedule(cg: &ConflictGraph, utility: &[f64]) -> Schedule {
    let n = cg.vertex_count();
    debug_assert_eq!(utility.len(), n);
    let mut state: Vec<State> = utility
        .iter()
        .map(|&u| if u > 0.0 { State::Undecided } else { State::Inactive })
        .collect();
    let mut undecided: Vec<LinkId> = (0..n).filter(|&e| state[e] == State::Undecided).collect();
    let mut winners = Vec::new();
    while !undecided.is_empty() {
        winners.clear();
        for &e in &undecided {
            let local_max = cg
                .neighbors(e)
                .iter()
                .all(|&f| state[f] != State::Undecided || dominates(utility, e, f));
            if local_max {
                winners.push(e);
            }
        }
        for &e in &winners {
            state[e] = State::Active;
        }
        for &e in &winners {
            for &f in cg.neighbors(e) {
                if state[f] == State::Undecided {
                    state[f] = State::Inactive;
                }
            }
        }
        undecided.retain(|&e| state[e] == State::Undecided);
    }
    let schedule = Schedule {
        active: state.iter().map(|&s| s == State::Active).collect(),
    };
    debug_assert!(schedule.is_independent(cg));
    schedule
}

/// Centralized greedy maximal scheduler: descending utility, lower index first.
pub fn greedy_schedule(cg: &ConflictGraph, utility: &[f64]) -> Schedule {
    let n = cg.vertex_count();
    let mut order: Vec<LinkId> = (0..n).filter(|&e| utility[e] > 0.0).collect();
    order.sort_by(|&a, &b| utility[b].total_cmp(&utility[a]).then(a.cmp(&b)));
    let mut active = vec![false; n];
    for e in order {
        if cg.neighbors(e).iter().all(|&f| !active[f]) {
            active[e] = true;
        }
    }
    let schedule = Schedule { active };
    debug_assert!(schedule.is_independent(cg));
    schedule
}

/// Exact maximum-weight independent set by branch and bound.
///
/// Among optimal sets, the one whose sorted member list is lexicographically
/// smallest is returned. Zero-utility vertices are never included.
pub fn exact_mwis(cg: &ConflictGraph, utility: &[f64]) -> Result<Schedule> {
    let n = cg.vertex_count();
    if n > EXACT_MWIS_CAP {
        return Err(Error::TooLarge {
            cap: EXACT_MWIS_CAP,
            got: n,
        });
    }
    let masks: Vec<u32> = (0..n)
        .map(|e| cg.neighbors(e).iter().fold(0u32, |m, &f| m | (1 << f)))
        .collect();
    let positive: u32 = (0..n)
        .filter(|&e| utility[e] > 0.0)
        .fold(0, |m, e| m | (1 << e));

    struct Search<'a> {
        utility: &'a [f64],
        masks: &'a [u32],
        best_weight: f64,
        best_set: u32,
    }

    impl Search<'_> {
        fn remaining(&self, candidates: u32) -> f64 {
            let mut m = candidates;
            let mut total = 0.0;
            while m != 0 {
                let e = m.trailing_zeros() as usize;
                total += self.utility[e];
                m &= m - 1;
            }
            total
        }

        // Include-first DFS over ascending indices visits sets in
        // lexicographic order, so keeping the first optimum implements the tie-break.
        fn go(&mut self, candidates: u32, chosen: u32, weight: f64) {
            if candidates == 0 {
                if weight > self.best_weight {
                    self.best_weight = weight;
                    self.best_set = chosen;
                }
                return;
            }
            if weight + self.remaining(candidates) <= self.best_weight {
                return;
            }
            let e = candidates.trailing_zeros() as usize;
            let rest = candidates & !(1 << e);
            self.go(rest & !self.masks[e], chosen | (1 << e), weight + self.utility[e]);
            self.go(rest, chosen, weight);
        }
    }

    let mut search = Search {
        utility,
        masks: &masks,
        best_weight: 0.0,
        best_set: 0,
    };
    search.go(positive, 0, 0.0);
    let schedule = Schedule {
        active: (0..n).map(|e| search.best_set & (1 << e) != 0).collect(),
    };
    debug_assert!(schedule.is_independent(cg));
    Ok(schedule)
}
