//! Persistent IN/OUT facts between runs.
//!
//! A store keeps serialized facts keyed by `(vertex, slot)` and is tagged
//! with the fingerprint of the analysis that produced them. Writes go
//! through [`WriteBatch`]es, which become visible all at once; the file
//! backend writes a complete new snapshot next to the old one and renames it
//! into place.
//!
//! Snapshot layout (little endian):
//!
//! ```text
//! "FSTR" | u32 version | u32 len | fingerprint (utf-8) | u64 count
//! count x ( u64 vertex | u8 slot | u32 len | fact bytes )
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cfg::VertexId;
use crate::lattice::{decode_fact, encode_fact, Analysis, Fingerprint};

const MAGIC: &[u8; 4] = b"FSTR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    In,
    Out,
}

impl Slot {
    fn tag(self) -> u8 {
        match self {
            Slot::In => 0,
            Slot::Out => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Slot> {
        match tag {
            0 => Some(Slot::In),
            1 => Some(Slot::Out),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoreKey {
    pub vertex: VertexId,
    pub slot: Slot,
}

impl StoreKey {
    pub fn input(vertex: VertexId) -> Self {
        StoreKey {
            vertex,
            slot: Slot::In,
        }
    }

    pub fn output(vertex: VertexId) -> Self {
        StoreKey {
            vertex,
            slot: Slot::Out,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::In => "IN",
            Slot::Out => "OUT",
        })
    }
}

impl fmt::Display for StoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.vertex, self.slot)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store holds facts of `{found}`, not `{expected}`")]
    WrongAnalysis {
        expected: Box<Fingerprint>,
        found: Box<Fingerprint>,
    },
    #[error("cannot decode fact at {0}")]
    Decode(StoreKey),
    #[error("corrupt store file: {0}")]
    Corrupt(String),
    #[error("store I/O error: {0}")]
    Io(#[from] io::Error),
}

/// Changes committed together.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriteBatch {
    /// Drop every existing entry first.
    pub clear: bool,
    /// Vertices whose slots are both removed.
    pub purge: BTreeSet<VertexId>,
    pub deletes: Vec<StoreKey>,
    /// Applied last, in order; a later duplicate wins.
    pub puts: Vec<(StoreKey, Vec<u8>)>,
}

impl WriteBatch {
    pub fn put<A: Analysis>(&mut self, key: StoreKey, fact: &A::Fact) {
        self.puts.push((key, encode_fact(fact)));
    }

    pub fn is_empty(&self) -> bool {
        !self.clear && self.purge.is_empty() && self.deletes.is_empty() && self.puts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Backend {
    Memory,
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct FactStore {
    backend: Backend,
    fingerprint: Fingerprint,
    entries: BTreeMap<StoreKey, Vec<u8>>,
    fail_next_commit: bool,
}

impl FactStore {
    pub fn in_memory(fingerprint: Fingerprint) -> Self {
        FactStore {
            backend: Backend::Memory,
            fingerprint,
            entries: BTreeMap::new(),
            fail_next_commit: false,
        }
    }

    /// Create (or replace) an empty store file.
    pub fn create(path: impl AsRef<Path>, fingerprint: Fingerprint) -> Result<Self, StoreError> {
        let store = FactStore {
            backend: Backend::File(path.as_ref().to_path_buf()),
            fingerprint,
            entries: BTreeMap::new(),
            fail_next_commit: false,
        };
        store.persist(&store.entries, false)?;
        Ok(store)
    }

    /// Create (or atomically replace) a store file holding exactly the puts
    /// of `batch`.
    pub fn create_with(
        path: impl AsRef<Path>,
        fingerprint: Fingerprint,
        batch: WriteBatch,
    ) -> Result<Self, StoreError> {
        let mut store = FactStore {
            backend: Backend::File(path.as_ref().to_path_buf()),
            fingerprint,
            entries: BTreeMap::new(),
            fail_next_commit: false,
        };
        let entries = batch.puts.into_iter().collect();
        store.persist(&entries, false)?;
        store.entries = entries;
        Ok(store)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let (fingerprint, entries) = decode_snapshot(&bytes)?;
        Ok(FactStore {
            backend: Backend::File(path.to_path_buf()),
            fingerprint,
            entries,
            fail_next_commit: false,
        })
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Memory => None,
            Backend::File(p) => Some(p),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = StoreKey> + '_ {
        self.entries.keys().copied()
    }

    pub fn vertices(&self) -> BTreeSet<VertexId> {
        self.entries.keys().map(|k| k.vertex).collect()
    }

    /// Serialized fact at `key`.
    pub fn raw(&self, key: StoreKey) -> Option<&[u8]> {
        self.entries.get(&key).map(Vec::as_slice)
    }

    /// The snapshot encoding of the current contents.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_snapshot(&self.fingerprint, &self.entries)
    }

    pub fn check<A: Analysis>(&self, analysis: &A) -> Result<(), StoreError> {
        let expected = analysis.fingerprint();
        if expected == self.fingerprint {
            Ok(())
        } else {
            Err(StoreError::WrongAnalysis {
                expected: Box::new(expected),
                found: Box::new(self.fingerprint.clone()),
            })
        }
    }

    /// Positional lookup; absent keys yield `None`.
    pub fn batch_get<A: Analysis>(
        &self,
        analysis: &A,
        keys: &[StoreKey],
    ) -> Result<Vec<Option<A::Fact>>, StoreError> {
        self.check(analysis)?;
        keys.iter()
            .map(|k| match self.entries.get(k) {
                None => Ok(None),
                Some(bytes) => decode_fact(bytes)
                    .map(Some)
                    .map_err(|_| StoreError::Decode(*k)),
            })
            .collect()
    }

    pub fn get<A: Analysis>(
        &self,
        analysis: &A,
        key: StoreKey,
    ) -> Result<Option<A::Fact>, StoreError> {
        Ok(self.batch_get(analysis, &[key])?.pop().flatten())
    }

    pub fn batch_put<A: Analysis>(
        &mut self,
        analysis: &A,
        pairs: &[(StoreKey, A::Fact)],
    ) -> Result<(), StoreError> {
        self.check(analysis)?;
        let mut batch = WriteBatch::default();
        for (k, f) in pairs {
            batch.put::<A>(*k, f);
        }
        self.commit(batch)
    }

    pub fn purge(&mut self, vertices: &BTreeSet<VertexId>) -> Result<(), StoreError> {
        self.commit(WriteBatch {
            purge: vertices.clone(),
            ..WriteBatch::default()
        })
    }

    /// Apply `batch` atomically: either all of it becomes visible (and
    /// durable, for file stores) or none of it does.
    pub fn commit(&mut self, batch: WriteBatch) -> Result<(), StoreError> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut next = if batch.clear {
            BTreeMap::new()
        } else {
            self.entries.clone()
        };
        next.retain(|k, _| !batch.purge.contains(&k.vertex));
        for k in &batch.deletes {
            next.remove(k);
        }
        for (k, bytes) in batch.puts {
            next.insert(k, bytes);
        }
        let fail = std::mem::take(&mut self.fail_next_commit);
        self.persist(&next, fail)?;
        self.entries = next;
        Ok(())
    }

    /// Make the next commit fail after writing its temporary file but before
    /// replacing the snapshot.
    #[cfg(feature = "fault-injection")]
    pub fn fail_next_commit(&mut self) {
        self.fail_next_commit = true;
    }

    fn persist(&self, entries: &BTreeMap<StoreKey, Vec<u8>>, fail: bool) -> Result<(), StoreError> {
        let Backend::File(path) = &self.backend else {
            return if fail { Err(injected()) } else { Ok(()) };
        };
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(&encode_snapshot(&self.fingerprint, entries))?;
            file.sync_all()?;
        }
        if fail {
            return Err(injected());
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

fn injected() -> StoreError {
    StoreError::Io(io::Error::other("injected commit failure"))
}

fn encode_snapshot(fingerprint: &Fingerprint, entries: &BTreeMap<StoreKey, Vec<u8>>) -> Vec<u8> {
    let fp = fingerprint.to_string();
    let mut out =
        Vec::with_capacity(32 + fp.len() + entries.values().map(|v| v.len() + 13).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(fp.len() as u32).to_le_bytes());
    out.extend_from_slice(fp.as_bytes());
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (k, v) in entries {
        out.extend_from_slice(&k.vertex.0.to_le_bytes());
        out.push(k.slot.tag());
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        out.extend_from_slice(v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| StoreError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

type Snapshot = (Fingerprint, BTreeMap<StoreKey, Vec<u8>>);

fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, StoreError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(StoreError::Corrupt("not a fact store".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(StoreError::Corrupt(format!(
            "unsupported version {version}"
        )));
    }
    let len = r.u32()? as usize;
    let fp = std::str::from_utf8(r.take(len)?)
        .map_err(|_| StoreError::Corrupt("fingerprint is not utf-8".into()))?;
    let fingerprint: Fingerprint = fp.parse().map_err(StoreError::Corrupt)?;
    let count = r.u64()?;
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let vertex = VertexId(r.u64()?);
        let tag = r.u8()?;
        let slot = Slot::from_tag(tag)
            .ok_or_else(|| StoreError::Corrupt(format!("bad slot tag {tag}")))?;
        let len = r.u32()? as usize;
        let value = r.take(len)?.to_vec();
        if entries.insert(StoreKey { vertex, slot }, value).is_some() {
            return Err(StoreError::Corrupt(format!(
                "duplicate record for vertex {vertex}"
            )));
        }
    }
    if r.pos != bytes.len() {
        return Err(StoreError::Corrupt("trailing bytes".into()));
    }
    Ok((fingerprint, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{ConstProp, ReachingDefs, ReachingFact};

    #[test]
    fn snapshot_round_trip() {
        let mut s = FactStore::in_memory(ReachingDefs.fingerprint());
        s.batch_put(
            &ReachingDefs,
            &[(StoreKey::input(VertexId(3)), ReachingFact::default())],
        )
        .unwrap();
        let (fp, entries) = decode_snapshot(&s.to_bytes()).unwrap();
        assert_eq!(fp, ReachingDefs.fingerprint());
        assert_eq!(entries, s.entries);
    }

    #[test]
    fn wrong_analysis_rejected() {
        let s = FactStore::in_memory(ReachingDefs.fingerprint());
        assert!(matches!(
            s.batch_get(&ConstProp, &[StoreKey::input(VertexId(1))]),
            Err(StoreError::WrongAnalysis { .. })
        ));
    }

    #[test]
    fn corrupt_inputs() {
        let s = FactStore::in_memory(ReachingDefs.fingerprint());
        let good = s.to_bytes();
        assert!(decode_snapshot(&good[..good.len() - 1]).is_err());
        assert!(decode_snapshot(b"NOPE").is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_snapshot(&extra).is_err());
    }

    #[test]
    fn undecodable_fact() {
        let mut s = FactStore::in_memory(ReachingDefs.fingerprint());
        let key = StoreKey::output(VertexId(1));
        s.commit(WriteBatch {
            puts: vec![(key, vec![0xff; 3])],
            ..WriteBatch::default()
        })
        .unwrap();
        assert!(matches!(s.get(&ReachingDefs, key), Err(StoreError::Decode(k)) if k == key));
    }
}
