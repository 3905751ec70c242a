//! Bundled analyses and the runtime selection of one of them.

mod cache;
mod constprop;
#[cfg(feature = "fault-injection")]
mod diverge;
mod reaching;

use std::fmt;

pub use cache::{CacheFact, ConcreteLru, MustCache};
pub use constprop::{ConstFact, ConstProp, ConstValue};
#[cfg(feature = "fault-injection")]
pub use diverge::{Diverge, Level};
pub use reaching::{Definition, ReachingDefs, ReachingFact};

use crate::lattice::{Analysis, Fingerprint};

/// An analysis chosen at runtime, e.g. from a command line or a store
/// fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum ClientSpec {
    Reaching,
    ConstProp,
    Cache(MustCache),
    /// Non-monotone analysis used to exercise non-convergence handling.
    #[cfg(feature = "fault-injection")]
    Diverge,
}

impl ClientSpec {
    /// `rd`, `cp` or `cache` (with the given geometry).
    pub fn from_name(name: &str, sets: usize, assoc: u32) -> Result<Self, String> {
        match name {
            "rd" => Ok(ClientSpec::Reaching),
            "cp" => Ok(ClientSpec::ConstProp),
            "cache" => MustCache::new(sets, assoc)
                .map(ClientSpec::Cache)
                .ok_or_else(|| "cache sets and associativity must be at least 1".to_string()),
            #[cfg(feature = "fault-injection")]
            "diverge" => Ok(ClientSpec::Diverge),
            other => Err(format!(
                "unknown analysis `{other}` (expected rd, cp or cache)"
            )),
        }
    }

    pub fn from_fingerprint(fp: &Fingerprint) -> Result<Self, String> {
        let (sets, assoc) = if fp.analysis == "cache" {
            parse_geometry(&fp.params)
                .ok_or_else(|| format!("bad cache parameters `{}`", fp.params))?
        } else {
            (MustCache::DEFAULT_SETS, MustCache::DEFAULT_ASSOC)
        };
        let spec = Self::from_name(&fp.analysis, sets, assoc)?;
        if spec.fingerprint() != *fp {
            return Err(format!("unsupported fingerprint `{fp}`"));
        }
        Ok(spec)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        match self {
            ClientSpec::Reaching => ReachingDefs.fingerprint(),
            ClientSpec::ConstProp => ConstProp.fingerprint(),
            ClientSpec::Cache(c) => c.fingerprint(),
            #[cfg(feature = "fault-injection")]
            ClientSpec::Diverge => Diverge.fingerprint(),
        }
    }
}

impl fmt::Display for ClientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.fingerprint())
    }
}

fn parse_geometry(params: &str) -> Option<(usize, u32)> {
    let mut sets = None;
    let mut assoc = None;
    for part in params.split(',') {
        match part.split_once('=')? {
            ("sets", v) => sets = v.parse().ok(),
            ("assoc", v) => assoc = v.parse().ok(),
            _ => return None,
        }
    }
    Some((sets?, assoc?))
}

/// Evaluate `$body` with `$a` bound to the concrete analysis selected by
/// `$spec`.
macro_rules! with_client {
    ($spec:expr, |$a:ident| $body:expr) => {
        match $spec {
            $crate::clients::ClientSpec::Reaching => {
                let $a = &$crate::clients::ReachingDefs;
                $body
            }
            $crate::clients::ClientSpec::ConstProp => {
                let $a = &$crate::clients::ConstProp;
                $body
            }
            $crate::clients::ClientSpec::Cache(c) => {
                let $a = &c;
                $body
            }
            #[cfg(feature = "fault-injection")]
            $crate::clients::ClientSpec::Diverge => {
                let $a = &$crate::clients::Diverge;
                $body
            }
        }
    };
}

pub(crate) use with_client;
