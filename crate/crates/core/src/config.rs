//! Declarative experiment configuration (JSON).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chem::{DEFAULT_NBITS, DEFAULT_RADIUS};
use crate::dataset::sha256_hex;
use crate::error::{Error, Result};
use crate::fusion::{AlignmentConfig, LateFusionConfig};
use crate::tabular::{GprGrid, PcaSelection};

/// Number of seeds used when neither the config nor the command line lists any.
pub const DEFAULT_SEED_COUNT: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Morgan,
    Seq,
    Gin,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Morgan, Modality::Seq, Modality::Gin];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Morgan => "morgan",
            Modality::Seq => "seq",
            Modality::Gin => "gin",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown modality '{s}' (expected morgan, seq or gin)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Morgan,
    Seq,
    Gin,
    Concat,
    Average,
    AlignedConcat,
    AlignedAverage,
    Late,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Morgan,
        Strategy::Seq,
        Strategy::Gin,
        Strategy::Concat,
        Strategy::Average,
        Strategy::AlignedConcat,
        Strategy::AlignedAverage,
        Strategy::Late,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Morgan => "morgan",
            Strategy::Seq => "seq",
            Strategy::Gin => "gin",
            Strategy::Concat => "concat",
            Strategy::Average => "average",
            Strategy::AlignedConcat => "aligned-concat",
            Strategy::AlignedAverage => "aligned-average",
            Strategy::Late => "late",
        }
    }

    /// Modalities consumed, in branch order (sequence branch first for two-branch strategies).
    pub fn modalities(self, fusion: [Modality; 2]) -> Vec<Modality> {
        match self {
            Strategy::Morgan => vec![Modality::Morgan],
            Strategy::Seq => vec![Modality::Seq],
            Strategy::Gin => vec![Modality::Gin],
            _ => fusion.to_vec(),
        }
    }

    pub fn is_aligned(self) -> bool {
        matches!(self, Strategy::AlignedConcat | Strategy::AlignedAverage)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Strategy::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown pipeline '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerprintConfig {
    pub radius: u32,
    pub nbits: usize,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig {
            radius: DEFAULT_RADIUS,
            nbits: DEFAULT_NBITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Embedding CSV per modality tag (`seq`, `gin`, `morgan`).
    pub embeddings: BTreeMap<String, PathBuf>,
    pub gin_checkpoint: Option<PathBuf>,
    pub pipeline: Option<String>,
    /// Branches of the two-modality strategies: sequence first, graph second.
    pub fusion_modalities: [Modality; 2],
    pub fingerprint: FingerprintConfig,
    pub pca: PcaSelection,
    pub gpr: GprGrid,
    /// Fit the dielectric constant on a log scale.
    pub log_k: bool,
    pub alignment: AlignmentConfig,
    pub late_fusion: LateFusionConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            embeddings: BTreeMap::new(),
            gin_checkpoint: None,
            pipeline: None,
            fusion_modalities: [Modality::Seq, Modality::Gin],
            fingerprint: FingerprintConfig::default(),
            pca: PcaSelection::default(),
            gpr: GprGrid::default(),
            log_k: false,
            alignment: AlignmentConfig::default(),
            late_fusion: LateFusionConfig::default(),
            seeds: Vec::new(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    pub fn rebase(&mut self, base: &Path) {
        self.dataset = resolve(base, &self.dataset);
        for p in self.embeddings.values_mut() {
            *p = resolve(base, p);
        }
        if let Some(p) = &mut self.gin_checkpoint {
            *p = resolve(base, p);
        }
        self.output_dir = resolve(base, &self.output_dir);
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.pipeline
            .as_deref()
            .ok_or_else(|| Error::Config("no pipeline selected".into()))?
            .parse()
    }

    pub fn validate(&self) -> Result<()> {
        let strategy = self.strategy()?;
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("dataset path is not set".into()));
        }
        for tag in self.embeddings.keys() {
            tag.parse::<Modality>()?;
        }
        if self.fusion_modalities[0] == self.fusion_modalities[1] {
            return Err(Error::Config(
                "fusion_modalities must name two different modalities".into(),
            ));
        }
        if self.fingerprint.nbits == 0 {
            return Err(Error::Config("fingerprint.nbits must be positive".into()));
        }
        match self.pca {
            PcaSelection::Components(0) => {
                return Err(Error::Config("pca.components must be positive".into()))
            }
            PcaSelection::VarianceTarget(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(Error::Config(format!(
                    "pca.variance_target {t} outside (0, 1]"
                )))
            }
            _ => {}
        }
        self.gpr.validate()?;
        self.alignment.validate()?;
        self.late_fusion
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        for m in strategy.modalities(self.fusion_modalities) {
            let has_table = self.embeddings.contains_key(m.tag());
            let ok = match m {
                Modality::Morgan => true,
                Modality::Gin => has_table || self.gin_checkpoint.is_some(),
                Modality::Seq => has_table,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "pipeline '{strategy}' needs an embedding table for modality '{m}'"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, output directory excluded.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(
            serde_json::to_string(&c)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

/// Seeds from the config, else `fallback, fallback+1, ...` (5 values), where
/// `fallback` comes from the environment when set and 0 otherwise.
pub fn resolve_seeds(configured: &[u64], fallback: Option<&str>) -> Result<Vec<u64>> {
    if !configured.is_empty() {
        return Ok(configured.to_vec());
    }
    let base = match fallback {
        Some(s) => s.trim().parse::<u64>().map_err(|_| {
            Error::Config(format!("fallback seed '{s}' is not a non-negative integer"))
        })?,
        None => 0,
    };
    Ok((0..DEFAULT_SEED_COUNT)
        .map(|i| base.wrapping_add(i))
        .collect())
}
