//! On-disk session store. Each session lives in `<root>/<id>/` as a JSON
//! record plus the raw little-endian `f32` energy image; an in-memory cache
//! fronts the directory. Expiry is checked on every access, so the periodic
//! sweep only reclaims disk space.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use gaitworks_core::classifier::Prediction;
use gaitworks_core::gait_repr::{EnergyImage, EnergyKind, Provenance};
use gaitworks_core::Representation;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::StartupError;

const RECORD_FILE: &str = "session.json";
const ENERGY_FILE: &str = "energy.f32";
const ID_HEX_LEN: usize = 32;

/// Classification outcome for one detected cycle of an archive upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: String,
    pub probabilities: Vec<f32>,
}

/// Everything the explanation endpoints need about one processed upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub created_at_ms: u64,
    pub expires_at_ms: u64,
    pub representation: Representation,
    pub prediction: Prediction,
    pub provenance: Provenance,
    pub cycles: Vec<CycleResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub record: SessionRecord,
    pub energy: EnergyImage,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.record.id
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Lowercase hex of 128 random bits.
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn valid_id(id: &str) -> bool {
    id.len() == ID_HEX_LEN && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

pub struct SessionStore {
    root: PathBuf,
    ttl: Duration,
    cache: Mutex<HashMap<String, Arc<Session>>>,
    _temp: Option<tempfile::TempDir>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore")
            .field("root", &self.root)
            .field("ttl", &self.ttl)
            .finish()
    }
}

impl SessionStore {
    /// Opens (creating if needed) a store rooted at `dir`, or at a fresh
    /// temporary directory removed on drop.
    pub fn open(dir: Option<&Path>, ttl: Duration) -> Result<Self, StartupError> {
        let (root, temp) = match dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|source| StartupError::SessionDir {
                    path: d.to_path_buf(),
                    source,
                })?;
                (d.to_path_buf(), None)
            }
            None => {
                let t = tempfile::Builder::new()
                    .prefix("gaitworks-sessions-")
                    .tempdir()
                    .map_err(|source| StartupError::SessionDir {
                        path: std::env::temp_dir(),
                        source,
                    })?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        Ok(Self {
            root,
            ttl,
            cache: Mutex::new(HashMap::new()),
            _temp: temp,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Persists a new session and returns it. The directory appears under
    /// its final name only once fully written.
    pub fn create(
        &self,
        representation: Representation,
        energy: EnergyImage,
        prediction: Prediction,
        cycles: Vec<CycleResult>,
    ) -> std::io::Result<Arc<Session>> {
        let created = now_ms();
        let id = new_session_id();
        let record = SessionRecord {
            id: id.clone(),
            created_at_ms: created,
            expires_at_ms: created.saturating_add(self.ttl.as_millis() as u64),
            representation,
            prediction,
            provenance: energy.provenance,
            cycles,
        };
        let staging = self.root.join(format!(".staging-{id}"));
        std::fs::create_dir_all(&staging)?;
        let write = || -> std::io::Result<()> {
            let json = serde_json::to_vec_pretty(&record).map_err(std::io::Error::other)?;
            std::fs::write(staging.join(RECORD_FILE), json)?;
            let raw: Vec<u8> = energy.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            std::fs::write(staging.join(ENERGY_FILE), raw)?;
            std::fs::rename(&staging, self.root.join(&id))
        };
        if let Err(e) = write() {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
        let session = Arc::new(Session { record, energy });
        self.cache
            .lock()
            .expect("session cache poisoned")
            .insert(id, session.clone());
        Ok(session)
    }

    fn load(&self, id: &str) -> Option<Session> {
        let dir = self.root.join(id);
        let record: SessionRecord =
            serde_json::from_slice(&std::fs::read(dir.join(RECORD_FILE)).ok()?).ok()?;
        let raw = std::fs::read(dir.join(ENERGY_FILE)).ok()?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let kind = EnergyKind::from(record.representation);
        let energy = EnergyImage::from_data(kind, data)
            .ok()?
            .with_provenance(record.provenance);
        Some(Session { record, energy })
    }

    /// The live session with this id; expired sessions are removed and
    /// reported as absent.
    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        if !valid_id(id) {
            return None;
        }
        let cached = self.cache.lock().expect("session cache poisoned").get(id).cloned();
        let session = match cached {
            Some(s) => s,
            None => {
                let s = Arc::new(self.load(id)?);
                self.cache
                    .lock()
                    .expect("session cache poisoned")
                    .insert(id.to_string(), s.clone());
                s
            }
        };
        if now_ms() >= session.record.expires_at_ms {
            self.remove(id);
            return None;
        }
        Some(session)
    }

    fn remove(&self, id: &str) {
        self.cache.lock().expect("session cache poisoned").remove(id);
        let _ = std::fs::remove_dir_all(self.root.join(id));
    }

    /// Deletes every expired session; returns how many were removed.
    pub fn sweep(&self) -> usize {
        let now = now_ms();
        let Ok(entries) = std::fs::read_dir(&self.root) else {
            return 0;
        };
        let mut removed = 0;
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if !valid_id(&name) {
                continue;
            }
            let expired = std::fs::read(entry.path().join(RECORD_FILE))
                .ok()
                .and_then(|b| serde_json::from_slice::<SessionRecord>(&b).ok())
                .is_none_or(|r| now >= r.expires_at_ms);
            if expired {
                self.remove(&name);
                removed += 1;
            }
        }
        removed
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.root)
            .map(|d| {
                d.flatten()
                    .filter(|e| valid_id(&e.file_name().to_string_lossy()))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
