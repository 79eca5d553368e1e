use nalgebra::DMatrix;

use crate::chem::{morgan_fingerprint, parse_smiles};
use crate::config::{FingerprintConfig, Modality, RunConfig};
use crate::dataset::{DatasetTable, ElastomerRecord};
use crate::embedding::{read_embedding_table, EmbeddingTable};
use crate::error::{Error, Result};
use crate::gin::{load_checkpoint, GinModel};

/// Where one modality's feature vectors come from: a precomputed table,
/// something that computes them from SMILES, or both.
#[derive(Debug, Clone)]
pub struct FeatureSource {
    pub modality: Modality,
    pub table: Option<EmbeddingTable>,
    fingerprint: Option<FingerprintConfig>,
    encoder: Option<GinModel>,
}

impl FeatureSource {
    pub fn from_table(modality: Modality, table: EmbeddingTable) -> Self {
        FeatureSource {
            modality,
            table: Some(table),
            fingerprint: None,
            encoder: None,
        }
    }

    pub fn fingerprint(config: FingerprintConfig) -> Self {
        FeatureSource {
            modality: Modality::Morgan,
            table: None,
            fingerprint: Some(config),
            encoder: None,
        }
    }

    pub fn encoder(model: GinModel) -> Self {
        FeatureSource {
            modality: Modality::Gin,
            table: None,
            fingerprint: None,
            encoder: Some(model),
        }
    }

    pub fn load(config: &RunConfig, modality: Modality) -> Result<Self> {
        let table = match config.embeddings.get(modality.tag()) {
            Some(path) => {
                let mut t = read_embedding_table(path)?;
                t.source_tag = modality.tag().to_string();
                Some(t)
            }
            None => None,
        };
        let mut source = FeatureSource {
            modality,
            table,
            fingerprint: None,
            encoder: None,
        };
        match modality {
            Modality::Morgan => source.fingerprint = Some(config.fingerprint),
            Modality::Gin => {
                if let Some(path) = &config.gin_checkpoint {
                    source.encoder = Some(load_checkpoint(path)?);
                }
            }
            Modality::Seq => {}
        }
        if source.table.is_none() && !source.can_compute() {
            return Err(Error::Config(format!(
                "no embedding table for modality '{modality}'"
            )));
        }
        Ok(source)
    }

    pub fn can_compute(&self) -> bool {
        self.fingerprint.is_some() || self.encoder.is_some()
    }

    /// Computes a vector directly from SMILES.
    pub fn compute(&self, smiles: &str) -> Result<Vec<f64>> {
        if let Some(fp) = &self.fingerprint {
            let graph = parse_smiles(smiles)?;
            return Ok(morgan_fingerprint(&graph, fp.radius, fp.nbits)?.to_dense());
        }
        if let Some(model) = &self.encoder {
            return model.encode(&parse_smiles(smiles)?);
        }
        Err(Error::Config(format!(
            "modality '{}' has no encoder for new SMILES; only table ids can be used",
            self.modality
        )))
    }

    /// Table row when present, else computed from the record's SMILES.
    pub fn record_vector(&self, record: &ElastomerRecord) -> Result<Vec<f64>> {
        if let Some(table) = &self.table {
            if let Some(v) = table.get(&record.id) {
                return Ok(v.to_vec());
            }
            if !self.can_compute() {
                return Err(Error::MissingIds {
                    tag: table.source_tag.clone(),
                    ids: vec![record.id.clone()],
                });
            }
        }
        self.compute(&record.smiles)
    }

    /// One row per dataset record, in dataset order.
    pub fn matrix(&self, dataset: &DatasetTable) -> Result<DMatrix<f64>> {
        if let Some(table) = &self.table {
            return table.align_to_dataset(dataset);
        }
        let rows = dataset
            .records
            .iter()
            .map(|r| self.compute(&r.smiles))
            .collect::<Result<Vec<_>>>()?;
        rows_to_matrix(&rows)
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(
            "feature rows have different lengths".into(),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}
