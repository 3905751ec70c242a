//! The analysis contract: fact lattices, merge, transfer and propagation.
//!
//! A client analysis is a value implementing [`Analysis`]. The engine only
//! ever talks to facts through this trait, so every algorithm in the crate
//! (the partitioned engines, the sequential oracle, the incremental pipeline)
//! is generic over it.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{Stmts, SuperGraph};

/// Which way facts move during fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Facts grow; merge is join and the initial element is bottom.
    Increasing,
    /// Facts shrink; merge is meet and the initial element is top.
    Decreasing,
}

impl Direction {
    /// `true` when `old -> new` is a step in this direction (or no step).
    pub fn is_forward_step<F: Fact>(self, old: &F, new: &F) -> bool {
        match self {
            Direction::Increasing => old.leq(new),
            Direction::Decreasing => new.leq(old),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "increasing" => Ok(Direction::Increasing),
            "decreasing" => Ok(Direction::Decreasing),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// An element of a client lattice.
///
/// Equality must be an equivalence and [`Fact::leq`] a partial order. Facts
/// are values: the engine clones them whenever they cross a partition.
pub trait Fact:
    Clone + Eq + fmt::Debug + fmt::Display + Send + Sync + Serialize + DeserializeOwned
{
    /// Lattice partial order.
    fn leq(&self, other: &Self) -> bool;
}

/// Serialize a fact to the byte form kept in fact stores.
pub fn encode_fact<F: Fact>(fact: &F) -> Vec<u8> {
    // Client facts are plain data (sets, maps, integers); bincode cannot fail on them.
    bincode::serialize(fact).expect("fact serialization is infallible for plain data")
}

/// Inverse of [`encode_fact`].
pub fn decode_fact<F: Fact>(bytes: &[u8]) -> Result<F, bincode::Error> {
    bincode::deserialize(bytes)
}

/// Errors raised by a client analysis while interpreting statements.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("malformed statement: {0}")]
    Malformed(String),
}

/// Identifies which analysis produced a set of stored facts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    pub analysis: String,
    pub direction: Direction,
    /// Analysis parameters that change the meaning of facts (e.g. cache geometry).
    pub params: String,
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{};{}", self.analysis, self.direction, self.params)
    }
}

impl FromStr for Fingerprint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ';');
        let analysis = parts.next().filter(|a| !a.is_empty());
        let direction = parts.next();
        let params = parts.next();
        match (analysis, direction, params) {
            (Some(analysis), Some(direction), Some(params)) => Ok(Fingerprint {
                analysis: analysis.to_string(),
                direction: direction.parse()?,
                params: params.to_string(),
            }),
            _ => Err(format!("malformed fingerprint `{s}`")),
        }
    }
}

/// A monotone forward dataflow analysis.
///
/// All methods must be pure and deterministic; the engine calls them from
/// several worker threads at once.
pub trait Analysis: Send + Sync {
    type Fact: Fact;

    /// Short stable name, used in store fingerprints.
    fn name(&self) -> &str;

    fn direction(&self) -> Direction;

    /// Bottom for increasing analyses, top for decreasing ones. This is the
    /// identity of [`Analysis::combine`] and the value of never-reached slots.
    fn initial(&self) -> Self::Fact;

    /// Value flowing into entry vertices. Defaults to [`Analysis::initial`].
    fn entry_fact(&self) -> Self::Fact {
        self.initial()
    }

    /// Binary join (increasing) or meet (decreasing).
    fn combine(&self, a: &Self::Fact, b: &Self::Fact) -> Self::Fact;

    /// `old_in ⊗ (⊗ pred_facts)`. Merging the empty set returns `old_in`.
    fn merge(&self, pred_facts: &[&Self::Fact], old_in: &Self::Fact) -> Self::Fact {
        pred_facts
            .iter()
            .fold(old_in.clone(), |acc, fact| self.combine(&acc, fact))
    }

    fn transfer(&self, stmts: &Stmts, input: &Self::Fact) -> Result<Self::Fact, AnalysisError>;

    /// Whether a freshly computed OUT must be pushed to successors. `None`
    /// means the vertex has never been computed, which always propagates.
    ///
    /// Overriding this with anything other than inequality is allowed but the
    /// fixed-point guarantees of the engine are only established for inequality.
    fn propagate(&self, old: Option<&Self::Fact>, new: &Self::Fact) -> bool {
        old != Some(new)
    }

    /// Parameters folded into the fingerprint.
    fn params(&self) -> String {
        String::new()
    }

    fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            analysis: self.name().to_string(),
            direction: self.direction(),
            params: self.params(),
        }
    }

    /// Rough lattice height on `graph`, used to bound the sequential worklist.
    fn height_hint(&self, _graph: &SuperGraph) -> usize {
        64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_round_trip() {
        let fp = Fingerprint {
            analysis: "cache".into(),
            direction: Direction::Decreasing,
            params: "sets=4,assoc=2".into(),
        };
        assert_eq!(fp.to_string().parse::<Fingerprint>().unwrap(), fp);
        assert!("nodir".parse::<Fingerprint>().is_err());
        assert!("rd;sideways;".parse::<Fingerprint>().is_err());
    }
}
