use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Key-value run description. Any field can also be given as a flag, and the
/// flag wins. Relative paths are taken relative to the manifest's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub domains: Option<PathBuf>,
    pub toplist: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub pfx2as: Option<PathBuf>,
    pub as2org: Option<PathBuf>,
    pub geo: Option<PathBuf>,
    pub anycast: Option<PathBuf>,
    pub ca_owners: Option<PathBuf>,
    pub countries: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub layers: Option<String>,
    pub min_sites: Option<u64>,
    pub max_malformed: Option<f64>,
    pub address_policy: Option<String>,
    pub format: Option<String>,
    pub resolver: Option<String>,
    pub max_inflight: Option<usize>,
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut m: Manifest = toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in m.paths_mut() {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(m)
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 13] {
        [
            &mut self.domains,
            &mut self.toplist,
            &mut self.measurements,
            &mut self.pfx2as,
            &mut self.as2org,
            &mut self.geo,
            &mut self.anycast,
            &mut self.ca_owners,
            &mut self.countries,
            &mut self.records,
            &mut self.stats,
            &mut self.rules,
            &mut self.out,
        ]
    }
}
