use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg::{Operand, Stmt, Stmts, SuperGraph};
use crate::lattice::{Analysis, AnalysisError, Direction, Fact};

/// Value of a variable in the flat constant lattice. Bottom (no value yet)
/// is represented by the variable being absent from the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstValue {
    Const(i64),
    Top,
}

impl ConstValue {
    fn join(self, other: ConstValue) -> ConstValue {
        if self == other {
            self
        } else {
            ConstValue::Top
        }
    }
}

impl fmt::Display for ConstValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstValue::Const(c) => write!(f, "{c}"),
            ConstValue::Top => f.write_str("T"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstFact(pub BTreeMap<String, ConstValue>);

impl ConstFact {
    pub fn get(&self, var: &str) -> Option<ConstValue> {
        self.0.get(var).copied()
    }
}

impl<S: Into<String>> FromIterator<(S, ConstValue)> for ConstFact {
    fn from_iter<T: IntoIterator<Item = (S, ConstValue)>>(iter: T) -> Self {
        ConstFact(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for ConstFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (var, val)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{var}={val}")?;
        }
        f.write_str("]")
    }
}

impl Fact for ConstFact {
    fn leq(&self, other: &Self) -> bool {
        self.0.iter().all(|(var, val)| match other.0.get(var) {
            Some(ConstValue::Top) => true,
            Some(o) => o == val,
            None => false,
        })
    }
}

/// Constant propagation over `i64` with wrapping `+`, `-` and `*`.
///
/// Reading a variable with no value yet yields no value; `def v d` makes `v`
/// unknown.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstProp;

/// `None` is bottom.
fn eval(env: &ConstFact, op: &Operand) -> Option<ConstValue> {
    match op {
        Operand::Const(c) => Some(ConstValue::Const(*c)),
        Operand::Var(v) => env.get(v),
    }
}

fn apply_op(op: &str, l: i64, r: i64) -> Result<i64, AnalysisError> {
    match op {
        "+" => Ok(l.wrapping_add(r)),
        "-" => Ok(l.wrapping_sub(r)),
        "*" => Ok(l.wrapping_mul(r)),
        other => Err(AnalysisError::UnknownOperator(other.to_string())),
    }
}

impl Analysis for ConstProp {
    type Fact = ConstFact;

    fn name(&self) -> &str {
        "cp"
    }

    fn direction(&self) -> Direction {
        Direction::Increasing
    }

    fn initial(&self) -> ConstFact {
        ConstFact::default()
    }

    fn combine(&self, a: &ConstFact, b: &ConstFact) -> ConstFact {
        let mut out = a.clone();
        for (var, val) in &b.0 {
            out.0
                .entry(var.clone())
                .and_modify(|cur| *cur = cur.join(*val))
                .or_insert(*val);
        }
        out
    }

    fn transfer(&self, stmts: &Stmts, input: &ConstFact) -> Result<ConstFact, AnalysisError> {
        let mut env = input.clone();
        for stmt in stmts.iter() {
            let (dst, value) = match stmt {
                Stmt::Def { var, .. } => (var, Some(ConstValue::Top)),
                Stmt::Assign { dst, value } => (dst, eval(&env, value)),
                Stmt::AssignOp { dst, lhs, op, rhs } => {
                    // Reject the operator even when the operands carry no value.
                    apply_op(op, 0, 0)?;
                    let value = match (eval(&env, lhs), eval(&env, rhs)) {
                        (None, _) | (_, None) => None,
                        (Some(ConstValue::Const(l)), Some(ConstValue::Const(r))) => {
                            Some(ConstValue::Const(apply_op(op, l, r)?))
                        }
                        _ => Some(ConstValue::Top),
                    };
                    (dst, value)
                }
                Stmt::Use { .. } | Stmt::Access { .. } => continue,
            };
            match value {
                Some(v) => {
                    env.0.insert(dst.clone(), v);
                }
                None => {
                    env.0.remove(dst);
                }
            }
        }
        Ok(env)
    }

    fn height_hint(&self, graph: &SuperGraph) -> usize {
        let vars: BTreeSet<&str> = graph
            .vertices()
            .values()
            .flat_map(|a| a.stmts.iter())
            .filter_map(|s| match s {
                Stmt::Def { var, .. } => Some(var.as_str()),
                Stmt::Assign { dst, .. } | Stmt::AssignOp { dst, .. } => Some(dst.as_str()),
                _ => None,
            })
            .collect();
        2 * vars.len() + 2
    }
}
