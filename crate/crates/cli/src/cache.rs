//! On-disk cache of Jost tables keyed by profile, branch, grid, shift and
//! window.

use std::path::PathBuf;

use log::{info, warn};
use qwalk::coin::CoinField;
use qwalk::dispersion::{Branch, XiGrid};
use qwalk::jost::{JostRow, JostTable};
use qwalk::lattice::Window;
use qwalk::Execution;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{sha256_hex, VERSION};
use crate::error::CliResult;
use crate::output::write_atomic;

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    rows: Vec<JostRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
    /// A file existed under the key but did not match it.
    Stale,
}

pub struct JostCache {
    dir: PathBuf,
}

impl JostCache {
    pub fn new(dir: PathBuf) -> Self {
        JostCache { dir }
    }

    fn key(profile: &Value, branch: Branch, grid: XiGrid, window: Window) -> String {
        let doc = json!({
            "version": VERSION,
            "profile": profile,
            "branch": branch.name(),
            "grid": grid.n,
            "delta": grid.delta,
            "window": [window.min, window.max],
        });
        sha256_hex(&serde_json::to_vec(&doc).expect("plain data"))
    }

    /// Loads the table if cached, otherwise solves and stores it.
    pub fn table(
        &self,
        coin: &CoinField,
        profile: &Value,
        branch: Branch,
        grid: XiGrid,
        window: Window,
        exec: Execution,
    ) -> CliResult<(JostTable, Lookup)> {
        let key = Self::key(profile, branch, grid, window);
        let path = self.dir.join(format!("jost-{}.json", &key[..32]));
        let mut lookup = Lookup::Miss;
        if let Ok(bytes) = std::fs::read(&path) {
            match serde_json::from_slice::<Entry>(&bytes) {
                Ok(e) if e.key == key => {
                    match JostTable::restore(coin, branch, grid, window, &e.rows) {
                        Ok(t) => {
                            info!("jost cache hit {}", path.display());
                            return Ok((t, Lookup::Hit));
                        }
                        Err(err) => warn!("discarding cache entry {}: {err}", path.display()),
                    }
                }
                _ => warn!("stale cache entry {}; recomputing", path.display()),
            }
            lookup = Lookup::Stale;
        }
        info!("jost cache miss; solving {} columns", grid.n);
        let table = JostTable::solve(coin, branch, grid, window, exec)?;
        let entry = Entry {
            key,
            rows: table.rows(coin),
        };
        write_atomic(&path, &serde_json::to_vec(&entry)?)?;
        Ok((table, lookup))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qwalk::coin::CoinPoint;
    use qwalk::C64;

    #[test]
    fn miss_hit_and_stale() {
        let dir = tempfile::tempdir().unwrap();
        let cache = JostCache::new(dir.path().to_path_buf());
        let a0 = C64::new(0.6, 0.0);
        let coin = CoinField::from_entries(
            a0,
            [(0, CoinPoint::reduced(C64::new(0.2, 0.1), 0.3).unwrap())],
        )
        .unwrap();
        let profile = json!({"tag": 1});
        let grid = XiGrid::real(16).unwrap();
        let w = Window::centered(3);
        let run = || {
            cache
                .table(
                    &coin,
                    &profile,
                    Branch::Plus,
                    grid,
                    w,
                    Execution::Sequential,
                )
                .unwrap()
        };
        let (a, l1) = run();
        let (b, l2) = run();
        assert_eq!((l1, l2), (Lookup::Miss, Lookup::Hit));
        assert_eq!(a.rows(&coin), b.rows(&coin));
        let file = std::fs::read_dir(dir.path())
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .path();
        std::fs::write(&file, b"{\"key\":\"other\",\"rows\":[]}").unwrap();
        let (c, l3) = run();
        assert_eq!(l3, Lookup::Stale);
        assert_eq!(c.rows(&coin), a.rows(&coin));
    }
}
