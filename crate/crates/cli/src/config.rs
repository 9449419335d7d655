//! Config files. Each loader picks TOML or JSON from the file extension.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use privclean_core::accountant::{unbounded, AccountantMode, PrivacyParams};
use privclean_core::cleaners::DatasetSource;
use privclean_core::query::DataBinding;
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub fn load_file<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(anyhow::Error::from),
        Some("toml") => toml::from_str(&text).map_err(anyhow::Error::from),
        _ => bail!(
            "{}: config files must end in .toml or .json",
            path.display()
        ),
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

/// Directory that relative paths inside a config file resolve against.
pub fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    pub source: DatasetSource,
    /// Expected attribute names; checked against the loaded header.
    #[serde(default)]
    pub attributes: Option<Vec<String>>,
}

impl DatasetEntry {
    pub fn load(&self, base: &Path) -> anyhow::Result<DataBinding> {
        let data = self
            .source
            .load(Some(base))
            .with_context(|| format!("loading dataset `{}`", self.id))?;
        if let Some(want) = &self.attributes {
            let got = data.schema().attributes();
            if got != want.as_slice() {
                bail!(
                    "dataset `{}` has attributes {got:?}, config expects {want:?}",
                    self.id
                );
            }
        }
        Ok(data)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionDefaults {
    #[serde(default = "default_budget", with = "unbounded")]
    pub budget: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub mode: AccountantMode,
}

fn default_budget() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    3e-7
}

impl Default for SessionDefaults {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            delta: default_delta(),
            mode: AccountantMode::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Base seed for session noise. Without one every session draws its
    /// seed from the OS. A fixed seed makes runs reproducible and should
    /// only be used for experiments: whoever knows it can strip the noise.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub defaults: SessionDefaults,
    /// Where closed sessions leave their JSON-lines traces.
    #[serde(default)]
    pub trace_dir: Option<PathBuf>,
    pub datasets: Vec<DatasetEntry>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

pub const PORT_ENV: &str = "PRIVCLEAN_PORT";
pub const SEED_ENV: &str = "PRIVCLEAN_SEED";

impl ServiceConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.datasets.is_empty() {
            bail!("no datasets registered");
        }
        let mut ids: Vec<&str> = self.datasets.iter().map(|d| d.id.as_str()).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            bail!("dataset id `{}` registered twice", w[0]);
        }
        PrivacyParams::new(self.defaults.budget, self.defaults.delta)?;
        self.defaults.mode.validate()?;
        Ok(())
    }

    /// Applies `PRIVCLEAN_PORT` and `PRIVCLEAN_SEED` from the environment.
    pub fn apply_env(&mut self) -> anyhow::Result<()> {
        self.apply_overrides(std::env::var(PORT_ENV).ok(), std::env::var(SEED_ENV).ok())
    }

    pub fn apply_overrides(
        &mut self,
        port: Option<String>,
        seed: Option<String>,
    ) -> anyhow::Result<()> {
        if let Some(port) = port {
            let port: u16 = port
                .parse()
                .with_context(|| format!("{PORT_ENV}={port} is not a port"))?;
            let host = self
                .listen
                .rsplit_once(':')
                .map_or(self.listen.as_str(), |(h, _)| h);
            self.listen = format!("{host}:{port}");
        }
        if let Some(seed) = seed {
            self.seed = Some(
                seed.parse()
                    .with_context(|| format!("{SEED_ENV}={seed} is not a u64"))?,
            );
        }
        Ok(())
    }
}
