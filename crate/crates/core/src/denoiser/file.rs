//! Directory-based query protocol for externally served models.
//!
//! The client writes `req_<uuid>.drcgrid` (the noisy grid) and then
//! `req_<uuid>.json` (`{"t": int, "schedule_id": string}`). A responder picks
//! up the manifest, removes both request files and publishes
//! `resp_<uuid>.drcgrid` holding the predicted noise. All files are written
//! via rename, so a visible file is always complete.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::denoiser::Denoiser;
use crate::error::{DrcError, Result};
use crate::gridio::{read_grid, write_atomic, write_grid};
use crate::numerics::Grid;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestManifest {
    pub t: usize,
    pub schedule_id: String,
}

#[derive(Debug)]
pub struct FileDenoiser {
    dir: PathBuf,
    schedule_id: String,
    timeout: Duration,
    poll: Duration,
    // one exchange in flight per instance
    exchange: Mutex<()>,
}

impl FileDenoiser {
    pub fn new(dir: impl Into<PathBuf>, schedule_id: impl Into<String>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| DrcError::io(&dir, e))?;
        Ok(Self {
            dir,
            schedule_id: schedule_id.into(),
            timeout: Duration::from_secs(30),
            poll: Duration::from_millis(2),
            exchange: Mutex::new(()),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_poll_interval(mut self, poll: Duration) -> Self {
        self.poll = poll;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Sends one query and blocks until the response arrives or the timeout
    /// elapses.
    pub fn roundtrip(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        let _guard = self.exchange.lock().unwrap_or_else(|p| p.into_inner());
        let id = Uuid::new_v4().simple().to_string();
        let req_grid = self.dir.join(format!("req_{id}.drcgrid"));
        let req_manifest = self.dir.join(format!("req_{id}.json"));
        let resp = self.dir.join(format!("resp_{id}.drcgrid"));

        write_grid(&req_grid, x_t)?;
        let manifest = RequestManifest {
            t,
            schedule_id: self.schedule_id.clone(),
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| DrcError::Format(e.to_string()))?;
        write_atomic(&req_manifest, &json)?;

        let deadline = Instant::now() + self.timeout;
        loop {
            if resp.exists() {
                break;
            }
            if Instant::now() >= deadline {
                let _ = fs::remove_file(&req_manifest);
                let _ = fs::remove_file(&req_grid);
                return Err(DrcError::Timeout(self.timeout, resp));
            }
            thread::sleep(self.poll);
        }
        let out = read_grid(&resp);
        let _ = fs::remove_file(&resp);
        let out = out?;
        if out.shape() != x_t.shape() {
            return Err(DrcError::Format(format!(
                "response shape {:?} does not match request {:?}",
                out.shape(),
                x_t.shape()
            )));
        }
        Ok(out)
    }
}

impl Denoiser for FileDenoiser {
    fn predict_eps(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        self.roundtrip(x_t, t)
    }
}

/// Answers every request currently pending in `dir`; returns how many were
/// served.
pub fn serve_pending(
    dir: &Path,
    handler: &dyn Fn(&Grid, &RequestManifest) -> Result<Grid>,
) -> Result<usize> {
    let mut manifests: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DrcError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("req_") && n.ends_with(".json"))
        })
        .collect();
    manifests.sort();
    let mut served = 0;
    for manifest_path in manifests {
        let stem = manifest_path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_start_matches("req_").to_string())
            .unwrap_or_default();
        let raw = match fs::read(&manifest_path) {
            Ok(raw) => raw,
            // picked up by a concurrent responder
            Err(_) => continue,
        };
        let manifest: RequestManifest = serde_json::from_slice(&raw)
            .map_err(|e| DrcError::Format(format!("{}: {e}", manifest_path.display())))?;
        let grid_path = dir.join(format!("req_{stem}.drcgrid"));
        let x_t = read_grid(&grid_path)?;
        let _ = fs::remove_file(&manifest_path);
        let _ = fs::remove_file(&grid_path);
        let eps = handler(&x_t, &manifest)?;
        write_grid(&dir.join(format!("resp_{stem}.drcgrid")), &eps)?;
        served += 1;
    }
    Ok(served)
}

/// Serves `den` from `dir` until `stop` is set.
pub fn serve(dir: &Path, den: &dyn Denoiser, stop: &AtomicBool, poll: Duration) -> Result<usize> {
    let handler = |x: &Grid, m: &RequestManifest| den.predict_eps(x, m.t);
    let mut total = 0;
    while !stop.load(Ordering::Relaxed) {
        let n = serve_pending(dir, &handler)?;
        total += n;
        if n == 0 {
            thread::sleep(poll);
        }
    }
    Ok(total)
}
