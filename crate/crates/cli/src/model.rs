//! Self-contained decomposition file.

use std::path::Path;
use std::sync::Arc;

use cat_anova::{
    CoefficientVector, ColumnBasis, Decomposition64, Distribution64, HyperGrid, IndexKey, OrderingStrategy,
    SelectedBasis, SelectionConfig64,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Codebook, FeatureCodes};
use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "cat-anova-decomposition";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BasisName {
    Hierarchical,
    ClosedForm,
}

impl From<BasisName> for ColumnBasis {
    fn from(name: BasisName) -> Self {
        match name {
            BasisName::Hierarchical => ColumnBasis::Hierarchical,
            BasisName::ClosedForm => ColumnBasis::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum StoredOrdering {
    Canonical,
    VarianceRanked { ranking: Vec<usize> },
    Neighborhood { adjacency: Vec<Vec<usize>> },
}

impl StoredOrdering {
    pub fn from_strategy(ordering: &OrderingStrategy) -> Self {
        match ordering {
            OrderingStrategy::Canonical => Self::Canonical,
            OrderingStrategy::VarianceRanked { ranking } => Self::VarianceRanked {
                ranking: ranking.clone(),
            },
            OrderingStrategy::Neighborhood { adjacency } => Self::Neighborhood {
                adjacency: adjacency.as_ref().clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub max_order: usize,
    pub rank_budget: Option<usize>,
    pub rank_tolerance: f64,
    pub ordering: StoredOrdering,
    pub prune_inactive: bool,
    pub prune_threshold: f64,
    pub basis: BasisName,
}

impl StoredConfig {
    pub fn from_config(config: &SelectionConfig64) -> Self {
        Self {
            max_order: config.max_order,
            rank_budget: config.rank_budget,
            rank_tolerance: config.rank_tolerance,
            ordering: StoredOrdering::from_strategy(&config.ordering),
            prune_inactive: config.prune_inactive,
            prune_threshold: config.prune_threshold,
            basis: match config.basis {
                ColumnBasis::Hierarchical => BasisName::Hierarchical,
                ColumnBasis::ClosedForm => BasisName::ClosedForm,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSupport {
    pub rows: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSelection {
    pub achieved_rank: usize,
    pub scanned: usize,
    pub pruned_features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTerm {
    pub subset: Vec<usize>,
    pub levels: Vec<u32>,
    pub coefficient: f64,
}

/// Everything needed to answer queries without the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub format: String,
    pub version: u32,
    pub target: String,
    pub features: Vec<FeatureCodes>,
    pub config: StoredConfig,
    pub support: StoredSupport,
    pub selection: StoredSelection,
    pub terms: Vec<StoredTerm>,
}

/// SHA-256 over the cardinalities, the rows and the weight bit patterns,
/// all little-endian.
pub fn support_digest(cardinalities: &[u32], rows: &[Vec<u32>], weights: &[f64]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((cardinalities.len() as u64).to_le_bytes());
    for &n in cardinalities {
        hasher.update(n.to_le_bytes());
    }
    hasher.update((rows.len() as u64).to_le_bytes());
    for row in rows {
        for &x in row {
            hasher.update(x.to_le_bytes());
        }
    }
    for &w in weights {
        hasher.update(w.to_bits().to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

impl DecompositionFile {
    pub fn new(target: &str, codebook: &Codebook, config: &SelectionConfig64, dec: &Decomposition64) -> Self {
        let dist = dec.distribution();
        let rows: Vec<Vec<u32>> = dist.rows().map(<[u32]>::to_vec).collect();
        let weights = dist.weights().to_vec();
        let sha256 = support_digest(&codebook.cardinalities(), &rows, &weights);
        let selection = dec.selection();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            target: target.into(),
            features: codebook.features().to_vec(),
            config: StoredConfig::from_config(config),
            support: StoredSupport { rows, weights, sha256 },
            selection: StoredSelection {
                achieved_rank: selection.achieved_rank,
                scanned: selection.scanned,
                pruned_features: selection.pruned_features.clone(),
            },
            terms: dec
                .coefficients()
                .iter()
                .map(|(key, c)| StoredTerm {
                    subset: key.subset().to_vec(),
                    levels: key.levels().to_vec(),
                    coefficient: c,
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: not a decomposition file: {e}", path.display())))?;
        if file.format != FORMAT {
            return Err(CliError::Data(format!(
                "{}: unexpected format '{}'",
                path.display(),
                file.format
            )));
        }
        if file.version != VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported version {} (expected {VERSION})",
                path.display(),
                file.version
            )));
        }
        Ok(file)
    }

    pub fn codebook(&self) -> CliResult<Codebook> {
        Codebook::new(self.features.clone())
    }

    /// Rebuilds the decomposition, checking the support digest first.
    pub fn restore(&self) -> CliResult<(Codebook, Decomposition64)> {
        let codebook = self.codebook()?;
        let cards = codebook.cardinalities();
        let digest = support_digest(&cards, &self.support.rows, &self.support.weights);
        if digest != self.support.sha256 {
            return Err(CliError::Data(format!(
                "support digest mismatch: file says {}, contents hash to {digest}",
                self.support.sha256
            )));
        }
        let grid = HyperGrid::new(cards)?;
        let dist = Distribution64::from_support(grid, &self.support.rows, &self.support.weights)?;
        let keys: Vec<IndexKey> = self
            .terms
            .iter()
            .map(|t| IndexKey::new(dist.grid(), t.subset.clone(), t.levels.clone()))
            .collect::<Result<_, _>>()?;
        let coefficients = CoefficientVector {
            keys: keys.clone(),
            values: self.terms.iter().map(|t| t.coefficient).collect(),
        };
        let selection = SelectedBasis {
            keys,
            achieved_rank: self.selection.achieved_rank,
            scanned: self.selection.scanned,
            pruned_features: self.selection.pruned_features.clone(),
        };
        let dec = Decomposition64::assemble(Arc::new(dist), selection, self.config.basis.into(), coefficients)?;
        Ok((codebook, dec))
    }
}
