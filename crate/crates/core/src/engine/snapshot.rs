//! Session snapshots.
//!
//! A snapshot is a single JSON document:
//!
//! ```text
//! {"format":"ocsis-session","version":1,"set_hash":"<sha256 hex>","state":{...}}
//! ```
//!
//! `state` is the complete session image including the event log. The
//! procedure set itself is not stored; it is referenced by the SHA-256 of
//! its canonical text and must be supplied again on restore.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Session, SessionState};
use crate::dsl::ProcedureSet;

pub const SNAPSHOT_FORMAT: &str = "ocsis-session";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotError {
    #[error("snapshot was taken against procedure set {expected}, got {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("unsupported snapshot version {0}")]
    VersionUnsupported(u64),
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    format: String,
    version: u32,
    set_hash: String,
    state: SessionState,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u64,
}

impl Snapshot {
    pub fn set_hash(&self) -> &str {
        &self.set_hash
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("snapshot serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let header: Header =
            serde_json::from_slice(bytes).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(SnapshotError::Malformed(format!("unknown format `{}`", header.format)));
        }
        if header.version != u64::from(SNAPSHOT_VERSION) {
            return Err(SnapshotError::VersionUnsupported(header.version));
        }
        serde_json::from_slice(bytes).map_err(|e| SnapshotError::Malformed(e.to_string()))
    }
}

impl Session {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            set_hash: self.set.content_hash(),
            state: self.st.clone(),
        }
    }

    pub fn restore(set: ProcedureSet, snapshot: &Snapshot) -> Result<Session, SnapshotError> {
        let actual = set.content_hash();
        if actual != snapshot.set_hash {
            return Err(SnapshotError::HashMismatch { expected: snapshot.set_hash.clone(), actual });
        }
        check_shape(&set, &snapshot.state)?;
        Ok(Session::from_parts(set, snapshot.state.clone()))
    }
}

/// Rejects images whose indices do not fit the set, so a hand-edited
/// snapshot cannot make the engine panic later.
fn check_shape(set: &ProcedureSet, st: &SessionState) -> Result<(), SnapshotError> {
    let bad = |what: &str| Err(SnapshotError::Malformed(format!("{what} does not match the procedure set")));
    let n = set.procedures.len();
    if !grid_matches(set, &st.statuses, true)
        || !grid_matches(set, &st.contradicted, true)
        || !grid_matches(set, &st.branch_latch, false)
    {
        return bad("status grid");
    }
    if st.trigger_latch.len() != n || st.completed.len() != n || st.raised.len() != n {
        return bad("procedure flags");
    }
    let frame_ok = |f: &super::Frame| {
        f.proc < n && f.iblock < set.procedures[f.proc].iblocks.len()
    };
    if !st.stack.iter().all(frame_ok)
        || !st.deferred.iter().all(|d| d.proc < n && d.frame.as_ref().is_none_or(frame_ok))
        || !st.popups.iter().chain(&st.ready).all(|&p| p < n)
    {
        return bad("stack");
    }
    Ok(())
}

fn grid_matches<T>(set: &ProcedureSet, g: &[Vec<Vec<T>>], per_action: bool) -> bool {
    g.len() == set.procedures.len()
        && g.iter().zip(&set.procedures).all(|(gp, p)| {
            gp.len() == p.iblocks.len()
                && gp.iter().zip(&p.iblocks).all(|(gb, b)| {
                    gb.len() == if per_action { b.actions.len() } else { b.abnormal.len() }
                })
        })
}
