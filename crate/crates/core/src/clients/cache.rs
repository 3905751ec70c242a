use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg::{Stmt, Stmts, SuperGraph};
use crate::lattice::{Analysis, AnalysisError, Direction, Fact};

/// Abstract must-cache state.
///
/// `Reached(sets)` holds, per cache set, the blocks guaranteed to be cached
/// together with an upper bound on their LRU age. `Unreached` is the top
/// element: the state of a program point no execution has reached yet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheFact {
    Unreached,
    Reached(Vec<BTreeMap<u64, u32>>),
}

impl CacheFact {
    pub fn empty(sets: usize) -> Self {
        CacheFact::Reached(vec![BTreeMap::new(); sets])
    }

    /// Age bound of `block`, if it is guaranteed to be cached.
    pub fn age(&self, block: u64) -> Option<u32> {
        match self {
            CacheFact::Unreached => None,
            CacheFact::Reached(sets) => {
                let set = (block % sets.len() as u64) as usize;
                sets[set].get(&block).copied()
            }
        }
    }

    /// Whether an access to `block` from this state is a guaranteed hit.
    pub fn must_hit(&self, block: u64) -> bool {
        self.age(block).is_some()
    }
}

impl fmt::Display for CacheFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheFact::Unreached => f.write_str("unreached"),
            CacheFact::Reached(sets) => {
                f.write_str("[")?;
                for (i, set) in sets.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    let mut blocks: Vec<_> = set.iter().collect();
                    blocks.sort_by_key(|(b, age)| (**age, **b));
                    for (j, (b, age)) in blocks.into_iter().enumerate() {
                        if j > 0 {
                            f.write_str(" ")?;
                        }
                        write!(f, "b{b}@{age}")?;
                    }
                }
                f.write_str("]")
            }
        }
    }
}

impl Fact for CacheFact {
    /// `F <= G` iff every block guaranteed by `G` is guaranteed by `F` with
    /// at most the same age bound, i.e. `F` is the meet of `F` and `G`.
    fn leq(&self, other: &Self) -> bool {
        match (self, other) {
            (_, CacheFact::Unreached) => true,
            (CacheFact::Unreached, CacheFact::Reached(_)) => false,
            (CacheFact::Reached(f), CacheFact::Reached(g)) => {
                f.len() == g.len()
                    && f.iter().zip(g).all(|(fs, gs)| {
                        fs.iter()
                            .all(|(b, fa)| gs.get(b).is_some_and(|ga| ga <= fa))
                    })
            }
        }
    }
}

/// LRU must-cache analysis for a set-associative cache with `sets` sets of
/// `assoc` lines; block `b` maps to set `b mod sets`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MustCache {
    sets: usize,
    assoc: u32,
}

impl MustCache {
    pub const DEFAULT_SETS: usize = 4;
    pub const DEFAULT_ASSOC: u32 = 2;

    /// Returns `None` unless both dimensions are at least 1.
    pub fn new(sets: usize, assoc: u32) -> Option<Self> {
        (sets >= 1 && assoc >= 1).then_some(MustCache { sets, assoc })
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn assoc(&self) -> u32 {
        self.assoc
    }

    /// Abstract effect of one access.
    pub fn access(&self, fact: &CacheFact, block: u64) -> CacheFact {
        let CacheFact::Reached(sets) = fact else {
            return CacheFact::Unreached;
        };
        let mut sets = sets.clone();
        let set = &mut sets[(block % self.sets as u64) as usize];
        let old = set.get(&block).copied();
        let aged = set
            .iter()
            .filter(|(b, _)| **b != block)
            .map(|(b, age)| match old {
                Some(o) if *age >= o => (*b, *age),
                _ => (*b, age + 1),
            })
            .filter(|(_, age)| *age < self.assoc);
        let mut next: BTreeMap<u64, u32> = aged.collect();
        next.insert(block, 0);
        *set = next;
        CacheFact::Reached(sets)
    }
}

impl Default for MustCache {
    fn default() -> Self {
        MustCache {
            sets: Self::DEFAULT_SETS,
            assoc: Self::DEFAULT_ASSOC,
        }
    }
}

impl Analysis for MustCache {
    type Fact = CacheFact;

    fn name(&self) -> &str {
        "cache"
    }

    fn direction(&self) -> Direction {
        Direction::Decreasing
    }

    fn initial(&self) -> CacheFact {
        CacheFact::Unreached
    }

    /// Program start: the cache holds nothing we know of.
    fn entry_fact(&self) -> CacheFact {
        CacheFact::empty(self.sets)
    }

    fn combine(&self, a: &CacheFact, b: &CacheFact) -> CacheFact {
        match (a, b) {
            (CacheFact::Unreached, x) | (x, CacheFact::Unreached) => x.clone(),
            (CacheFact::Reached(xs), CacheFact::Reached(ys)) => CacheFact::Reached(
                xs.iter()
                    .zip(ys)
                    .map(|(x, y)| {
                        x.iter()
                            .filter_map(|(b, ax)| y.get(b).map(|ay| (*b, *ax.max(ay))))
                            .collect()
                    })
                    .collect(),
            ),
        }
    }

    fn transfer(&self, stmts: &Stmts, input: &CacheFact) -> Result<CacheFact, AnalysisError> {
        let mut fact = input.clone();
        for stmt in stmts.iter() {
            if let Stmt::Access { block } = stmt {
                fact = self.access(&fact, *block);
            }
        }
        Ok(fact)
    }

    fn params(&self) -> String {
        format!("sets={},assoc={}", self.sets, self.assoc)
    }

    fn height_hint(&self, graph: &SuperGraph) -> usize {
        let accesses: usize = graph
            .vertices()
            .values()
            .map(|a| {
                a.stmts
                    .iter()
                    .filter(|s| matches!(s, Stmt::Access { .. }))
                    .count()
            })
            .sum();
        accesses * (self.assoc as usize + 1) + 2
    }
}

/// Concrete LRU cache with the same geometry, used as a reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteLru {
    assoc: usize,
    /// Per set, most recently used first.
    sets: Vec<Vec<u64>>,
}

impl ConcreteLru {
    pub fn new(cache: &MustCache) -> Self {
        ConcreteLru {
            assoc: cache.assoc as usize,
            sets: vec![Vec::new(); cache.sets],
        }
    }

    /// Perform an access; returns whether it hit.
    pub fn access(&mut self, block: u64) -> bool {
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(block % n) as usize];
        let hit = match set.iter().position(|b| *b == block) {
            Some(i) => {
                set.remove(i);
                true
            }
            None => false,
        };
        set.insert(0, block);
        set.truncate(self.assoc);
        hit
    }

    /// LRU age of `block`, if cached.
    pub fn age(&self, block: u64) -> Option<u32> {
        let n = self.sets.len() as u64;
        self.sets[(block % n) as usize]
            .iter()
            .position(|b| *b == block)
            .map(|p| p as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::parse_stmts;

    fn one_set() -> MustCache {
        MustCache::new(1, 2).unwrap()
    }

    #[test]
    fn single_access_from_empty() {
        let c = MustCache::default();
        let out = c
            .transfer(&parse_stmts("access 0").unwrap(), &c.entry_fact())
            .unwrap();
        assert_eq!(out.age(0), Some(0));
    }

    #[test]
    fn straight_line_hit() {
        let c = one_set();
        let mut f = c.entry_fact();
        f = c.access(&f, 0);
        f = c.access(&f, 1);
        assert!(f.must_hit(0));
        f = c.access(&f, 0);
        assert_eq!(f.age(0), Some(0));
        assert_eq!(f.age(1), Some(1));
    }

    #[test]
    fn eviction_beyond_associativity() {
        let c = one_set();
        let mut f = c.entry_fact();
        for b in [0, 1, 2] {
            f = c.access(&f, b);
        }
        assert!(!f.must_hit(0));
        assert_eq!(f.age(2), Some(0));
        assert_eq!(f.age(1), Some(1));
    }

    #[test]
    fn meet_keeps_common_blocks_at_max_age() {
        let c = one_set();
        let e = c.entry_fact();
        let left = c.access(&c.access(&e, 1), 0);
        let right = c.access(&c.access(&e, 0), 1);
        let m = c.merge(&[&left, &right], &c.initial());
        assert_eq!(m.age(0), Some(1));
        assert_eq!(m.age(1), Some(1));
        let other = c.access(&e, 2);
        let m = c.merge(&[&left, &other], &c.initial());
        assert!(!m.must_hit(0));
        assert_eq!(c.merge(&[&left], &CacheFact::Unreached), left);
    }

    #[test]
    fn leq_order() {
        let c = one_set();
        let e = c.entry_fact();
        let a0 = c.access(&e, 0);
        assert!(e.leq(&a0));
        assert!(!a0.leq(&e));
        assert!(a0.leq(&CacheFact::Unreached));
        assert!(!CacheFact::Unreached.leq(&a0));
    }

    #[test]
    fn concrete_lru() {
        let c = one_set();
        let mut lru = ConcreteLru::new(&c);
        assert!(!lru.access(0));
        assert!(!lru.access(1));
        assert!(lru.access(0));
        assert!(!lru.access(2));
        assert_eq!(lru.age(1), None);
        assert_eq!(lru.age(0), Some(1));
    }
}
