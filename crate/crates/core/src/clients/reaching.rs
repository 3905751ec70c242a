use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg::{Stmt, Stmts, SuperGraph};
use crate::lattice::{Analysis, AnalysisError, Direction, Fact};

/// A named definition of a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Definition {
    pub def_id: String,
    pub var: String,
}

impl Definition {
    pub fn new(def_id: impl Into<String>, var: impl Into<String>) -> Self {
        Definition {
            def_id: def_id.into(),
            var: var.into(),
        }
    }
}

/// Set of definitions that may reach a program point.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReachingFact(pub BTreeSet<Definition>);

impl ReachingFact {
    pub fn def_ids(&self) -> BTreeSet<&str> {
        self.0.iter().map(|d| d.def_id.as_str()).collect()
    }
}

impl FromIterator<Definition> for ReachingFact {
    fn from_iter<T: IntoIterator<Item = Definition>>(iter: T) -> Self {
        ReachingFact(iter.into_iter().collect())
    }
}

impl fmt::Display for ReachingFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}({})", d.def_id, d.var)?;
        }
        f.write_str("}")
    }
}

impl Fact for ReachingFact {
    fn leq(&self, other: &Self) -> bool {
        self.0.is_subset(&other.0)
    }
}

/// Reaching definitions: union merge, `def v d` kills every definition of
/// `v` and generates `d`. Other statements leave the fact unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReachingDefs;

impl Analysis for ReachingDefs {
    type Fact = ReachingFact;

    fn name(&self) -> &str {
        "rd"
    }

    fn direction(&self) -> Direction {
        Direction::Increasing
    }

    fn initial(&self) -> ReachingFact {
        ReachingFact::default()
    }

    fn combine(&self, a: &ReachingFact, b: &ReachingFact) -> ReachingFact {
        ReachingFact(a.0.union(&b.0).cloned().collect())
    }

    fn transfer(&self, stmts: &Stmts, input: &ReachingFact) -> Result<ReachingFact, AnalysisError> {
        let mut fact = input.clone();
        for stmt in stmts.iter() {
            if let Stmt::Def { var, def_id } = stmt {
                fact.0.retain(|d| &d.var != var);
                fact.0.insert(Definition::new(def_id.clone(), var.clone()));
            }
        }
        Ok(fact)
    }

    fn height_hint(&self, graph: &SuperGraph) -> usize {
        let defs: usize = graph
            .vertices()
            .values()
            .map(|a| {
                a.stmts
                    .iter()
                    .filter(|s| matches!(s, Stmt::Def { .. }))
                    .count()
            })
            .sum();
        defs + 2
    }
}
