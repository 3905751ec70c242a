//! The two dataflow vertex programs.

use crate::cfg::{Stmts, VertexId};
use crate::lattice::Analysis;

use super::runtime::{Ctx, Outcome, VertexProgram};
use super::EngineError;

pub(crate) struct VertexState<F> {
    pub input: F,
    /// `None` until the vertex is computed for the first time.
    pub out: Option<F>,
}

fn transfer<A: Analysis>(
    analysis: &A,
    id: VertexId,
    stmts: &Stmts,
    input: &A::Fact,
) -> Result<A::Fact, EngineError> {
    analysis
        .transfer(stmts, input)
        .map_err(|source| EngineError::Analysis { vertex: id, source })
}

/// Gather-all: every activation re-merges the full predecessor OUT set, read
/// from the snapshot published at the previous barrier, starting from the
/// initial (or entry) element.
pub(crate) struct Classic<'a, A: Analysis> {
    pub analysis: &'a A,
    pub stmts: Vec<&'a Stmts>,
    pub entry: Vec<bool>,
}

impl<A: Analysis> VertexProgram for Classic<'_, A> {
    type State = VertexState<A::Fact>;
    type Msg = ();
    type Pub = A::Fact;

    fn compute(
        &self,
        ctx: &Ctx<'_, A::Fact>,
        state: &mut Self::State,
        _inbox: &[(VertexId, ())],
    ) -> Result<Outcome<(), A::Fact>, EngineError> {
        let a = self.analysis;
        let base = if self.entry[ctx.idx] {
            a.entry_fact()
        } else {
            a.initial()
        };
        let preds: Vec<&A::Fact> = ctx.pred_published().collect();
        let input = a.merge(&preds, &base);
        let out = transfer(a, ctx.id, self.stmts[ctx.idx], &input)?;
        state.input = input;
        let mut outcome = Outcome::quiet();
        outcome.pulls = preds.len();
        if a.propagate(state.out.as_ref(), &out) {
            state.out = Some(out.clone());
            outcome.publish = Some(out);
            outcome.activate_successors = true;
            outcome.updated = true;
        }
        Ok(outcome)
    }
}

/// Delta messages: an activation merges only the facts received since the
/// last barrier into the retained IN, and pushes a changed OUT to every
/// successor.
pub(crate) struct Optimized<'a, A: Analysis> {
    pub analysis: &'a A,
    pub stmts: Vec<&'a Stmts>,
    pub trace: bool,
    pub drop_last_message: bool,
}

impl<A: Analysis> VertexProgram for Optimized<'_, A> {
    type State = VertexState<A::Fact>;
    type Msg = A::Fact;
    type Pub = A::Fact;

    fn compute(
        &self,
        ctx: &Ctx<'_, A::Fact>,
        state: &mut Self::State,
        inbox: &[(VertexId, A::Fact)],
    ) -> Result<Outcome<A::Fact, A::Fact>, EngineError> {
        let a = self.analysis;
        let mut received: Vec<&A::Fact> = inbox.iter().map(|(_, f)| f).collect();
        if self.drop_last_message {
            received.pop();
        }
        let input = a.merge(&received, &state.input);
        let out = transfer(a, ctx.id, self.stmts[ctx.idx], &input)?;
        state.input = input;
        let mut outcome = Outcome::quiet();
        if a.propagate(state.out.as_ref(), &out) {
            if self.trace {
                outcome.publish = Some(out.clone());
            }
            outcome.broadcast = Some(out.clone());
            outcome.updated = true;
            state.out = Some(out);
        }
        Ok(outcome)
    }
}
