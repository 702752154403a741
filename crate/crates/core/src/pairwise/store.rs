//! Rating storage.
//!
//! A directory-backed store holds three files:
//!
//! - `tasks.json`: the sampled tasks, sealed mapping included
//! - `ratings.jsonl`: append-only log, one rating per line, synced per write
//! - `snapshot.json`: all ratings up to some log line, rewritten atomically
//!
//! Opening replays the log past the snapshot. A torn final log line (crash
//! mid-write) is dropped.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::{tally, BlindTask, PairTask, PairwiseError, PairwiseSummary, Rating};

const TASKS_FILE: &str = "tasks.json";
const LOG_FILE: &str = "ratings.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";
/// Ratings between snapshots.
const SNAPSHOT_EVERY: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTask {
    pub task: Option<BlindTask>,
    /// Tasks this rater has not rated yet.
    pub remaining: usize,
    /// Tasks this rater has rated.
    pub rated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingAck {
    pub task_id: String,
    pub rater_id: String,
    /// True when this exact judgment was already stored.
    pub duplicate: bool,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    log_lines: usize,
    ratings: Vec<Rating>,
}

struct Inner {
    ratings: Vec<Rating>,
    /// (task_id, rater_id) -> index into `ratings`
    rated: HashMap<(String, String), usize>,
    log: Option<File>,
    since_snapshot: usize,
}

pub struct PairwiseStore {
    tasks: Vec<PairTask>,
    by_id: HashMap<String, usize>,
    dir: Option<PathBuf>,
    inner: RwLock<Inner>,
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> PairwiseError {
    PairwiseError::Corrupt(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

impl PairwiseStore {
    fn with_tasks(tasks: Vec<PairTask>, dir: Option<PathBuf>) -> Result<Self, PairwiseError> {
        let mut by_id = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if by_id.insert(t.task_id.clone(), i).is_some() {
                return Err(PairwiseError::Corrupt(format!("duplicate task id `{}`", t.task_id)));
            }
        }
        Ok(Self {
            tasks,
            by_id,
            dir,
            inner: RwLock::new(Inner { ratings: Vec::new(), rated: HashMap::new(), log: None, since_snapshot: 0 }),
        })
    }

    pub fn in_memory(tasks: Vec<PairTask>) -> Result<Self, PairwiseError> {
        Self::with_tasks(tasks, None)
    }

    /// Opens `dir`, creating it with `tasks` when it holds no store yet. An
    /// existing store must have been created from the same tasks.
    pub fn open_or_create(dir: &Path, tasks: Vec<PairTask>) -> Result<Self, PairwiseError> {
        let tasks_path = dir.join(TASKS_FILE);
        if tasks_path.exists() {
            let store = Self::open(dir)?;
            if store.tasks != tasks {
                return Err(PairwiseError::Corrupt(format!(
                    "{} holds a different task set; use a fresh directory",
                    dir.display()
                )));
            }
            return Ok(store);
        }
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_vec_pretty(&tasks).map_err(std::io::Error::from)?;
        write_atomic(&tasks_path, &json)?;
        Self::open(dir)
    }

    pub fn open(dir: &Path) -> Result<Self, PairwiseError> {
        let tasks_path = dir.join(TASKS_FILE);
        let text = std::fs::read_to_string(&tasks_path)?;
        let tasks: Vec<PairTask> = serde_json::from_str(&text).map_err(|e| corrupt(&tasks_path, e))?;
        let store = Self::with_tasks(tasks, Some(dir.to_path_buf()))?;

        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let snapshot = if snapshot_path.exists() {
            let text = std::fs::read_to_string(&snapshot_path)?;
            serde_json::from_str(&text).map_err(|e| corrupt(&snapshot_path, e))?
        } else {
            Snapshot { log_lines: 0, ratings: Vec::new() }
        };

        let log_path = dir.join(LOG_FILE);
        let mut ratings = snapshot.ratings;
        let mut valid_bytes = 0u64;
        if log_path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&log_path)?).lines().collect::<Result<_, _>>()?;
            let ends_cleanly = std::fs::read(&log_path)?.last().is_none_or(|&b| b == b'\n');
            for (i, line) in lines.iter().enumerate() {
                let last = i + 1 == lines.len();
                if i >= snapshot.log_lines {
                    match serde_json::from_str::<Rating>(line) {
                        Ok(r) => ratings.push(r),
                        Err(_) if last && !ends_cleanly => break,
                        Err(e) => return Err(corrupt(&log_path, format!("line {}: {e}", i + 1))),
                    }
                }
                valid_bytes += line.len() as u64 + 1;
            }
            if lines.len() < snapshot.log_lines {
                return Err(corrupt(&log_path, "shorter than the snapshot says"));
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        // drop a torn tail so the next append starts on a fresh line
        if log.metadata()?.len() > valid_bytes {
            log.set_len(valid_bytes)?;
        }

        {
            let mut inner = store.inner.write();
            for r in ratings {
                if !store.by_id.contains_key(&r.task_id) {
                    return Err(PairwiseError::Corrupt(format!("rating for unknown task `{}`", r.task_id)));
                }
                let idx = inner.ratings.len();
                inner.rated.insert((r.task_id.clone(), r.rater_id.clone()), idx);
                inner.ratings.push(r);
            }
            inner.log = Some(log);
        }
        Ok(store)
    }

    pub fn tasks(&self) -> &[PairTask] {
        &self.tasks
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// First task in order that `rater` has not rated.
    pub fn next_task(&self, rater: &str) -> NextTask {
        let inner = self.inner.read();
        let is_rated = |t: &PairTask| inner.rated.contains_key(&(t.task_id.clone(), rater.to_string()));
        let rated = self.tasks.iter().filter(|t| is_rated(t)).count();
        NextTask {
            task: self.tasks.iter().find(|t| !is_rated(t)).map(PairTask::blind),
            remaining: self.tasks.len() - rated,
            rated,
        }
    }

    pub fn blind_task(&self, task_id: &str) -> Option<BlindTask> {
        self.by_id.get(task_id).map(|&i| self.tasks[i].blind())
    }

    /// Stores a complete rating. Resubmitting the same judgment is a no-op;
    /// a different one for the same task and rater is rejected.
    pub fn record_rating(&self, mut rating: Rating) -> Result<RatingAck, PairwiseError> {
        if rating.rater_id.trim().is_empty() {
            return Err(PairwiseError::EmptyRater);
        }
        if !self.by_id.contains_key(&rating.task_id) {
            return Err(PairwiseError::UnknownTask(rating.task_id));
        }
        let missing = rating.missing_criteria();
        if !missing.is_empty() {
            return Err(PairwiseError::MissingCriterion(missing));
        }

        let mut inner = self.inner.write();
        let key = (rating.task_id.clone(), rating.rater_id.clone());
        if let Some(&idx) = inner.rated.get(&key) {
            if inner.ratings[idx].same_judgment(&rating) {
                return Ok(RatingAck { task_id: key.0, rater_id: key.1, duplicate: true });
            }
            return Err(PairwiseError::AlreadyRated { task_id: key.0, rater_id: key.1 });
        }
        if rating.timestamp.is_none() {
            rating.timestamp = Some(chrono::Utc::now());
        }
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(&rating).map_err(std::io::Error::from)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        let idx = inner.ratings.len();
        inner.ratings.push(rating);
        inner.rated.insert(key.clone(), idx);
        inner.since_snapshot += 1;
        if inner.since_snapshot >= SNAPSHOT_EVERY {
            self.write_snapshot(&mut inner)?;
        }
        Ok(RatingAck { task_id: key.0, rater_id: key.1, duplicate: false })
    }

    fn write_snapshot(&self, inner: &mut Inner) -> Result<(), PairwiseError> {
        if let Some(dir) = &self.dir {
            let snapshot = Snapshot { log_lines: inner.ratings.len(), ratings: inner.ratings.clone() };
            let json = serde_json::to_vec(&snapshot).map_err(std::io::Error::from)?;
            write_atomic(&dir.join(SNAPSHOT_FILE), &json)?;
        }
        inner.since_snapshot = 0;
        Ok(())
    }

    /// Writes a snapshot now. No-op for in-memory stores.
    pub fn snapshot(&self) -> Result<(), PairwiseError> {
        let mut inner = self.inner.write();
        self.write_snapshot(&mut inner)
    }

    /// Every stored rating, in arrival order.
    pub fn export(&self) -> Vec<Rating> {
        self.inner.read().ratings.clone()
    }

    pub fn rating_count(&self) -> usize {
        self.inner.read().ratings.len()
    }

    pub fn tally(&self) -> Result<PairwiseSummary, PairwiseError> {
        let inner = self.inner.read();
        tally(&self.tasks, &inner.ratings)
    }

    /// Distinct raters seen so far.
    pub fn raters(&self) -> Vec<String> {
        let inner = self.inner.read();
        let set: HashSet<&str> = inner.ratings.iter().map(|r| r.rater_id.as_str()).collect();
        let mut v: Vec<String> = set.into_iter().map(str::to_string).collect();
        v.sort();
        v
    }
}
