//! Append-only response cache: one `{digest}.json` file per request key.

use std::fs;
use std::path::{Path, PathBuf};

use super::ChatResponse;

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("create '{}': {e}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<ChatResponse> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Write-then-rename so concurrent writers never expose partial files.
    pub fn put(&self, key: &str, response: &ChatResponse) -> Result<(), String> {
        let final_path = self.path_for(key);
        let tmp_path = self
            .dir
            .join(format!(".{key}.{}.tmp", std::process::id()));
        let bytes = serde_json::to_vec(response).map_err(|e| e.to_string())?;
        fs::write(&tmp_path, bytes).map_err(|e| format!("write '{}': {e}", tmp_path.display()))?;
        fs::rename(&tmp_path, &final_path)
            .map_err(|e| format!("rename to '{}': {e}", final_path.display()))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(|e| e.ok())
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
