use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::ParamLayout;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::model::{ChainConfig, ModelSpec, PriorSpec};

/// Retained states of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// One flattened parameter vector per retained iteration.
    pub params: Vec<Vec<f64>>,
    /// Latent exposure effects of the stored individuals per retained
    /// iteration; unexposed individuals get a fresh draw from the current
    /// effect mixture.
    pub z1: Vec<Vec<f64>>,
    /// Residual-weight proposals rejected because the last component weight
    /// fell below the floor.
    pub rejected_weight_proposals: u64,
}

/// Output of [`run_chains`](super::run_chains).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub layout: ParamLayout,
    pub model: ModelSpec,
    pub prior: PriorSpec,
    pub config: ChainConfig,
    /// Row indices of the individuals whose latent effects are stored.
    pub z1_individuals: Vec<usize>,
    pub chains: Vec<ChainDraws>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    layout: ParamLayout,
    model: ModelSpec,
    prior: PriorSpec,
    config: ChainConfig,
    z1_individuals: Vec<usize>,
    rejected_weight_proposals: Vec<u64>,
    parameter_names: Vec<String>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.params.len()).sum()
    }

    /// Every retained parameter row, chain by chain.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flat_map(|c| c.params.iter().map(|r| r.as_slice()))
    }

    /// Per-chain trace of a named parameter.
    pub fn parameter(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let idx = self.layout.index_of(name)?;
        Ok(self.map_rows(|row| row[idx]))
    }

    /// Per-chain trace of a function of the parameter row.
    pub fn map_rows<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.params.iter().map(|r| f(r)).collect()).collect()
    }

    pub fn effect_mixtures(&self) -> Result<Vec<GaussianMixture>> {
        self.rows().map(|r| self.layout.effect_mixture(r)).collect()
    }

    /// All stored latent exposure effects across chains and iterations.
    pub fn pooled_z1(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.z1.iter().flatten().copied()).collect()
    }

    pub fn rejected_weight_proposals(&self) -> u64 {
        self.chains.iter().map(|c| c.rejected_weight_proposals).sum()
    }

    /// Writes `draws.json`, one `chain_<k>.csv` per chain and `z1.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            layout: self.layout.clone(),
            model: self.model.clone(),
            prior: self.prior.clone(),
            config: self.config.clone(),
            z1_individuals: self.z1_individuals.clone(),
            rejected_weight_proposals: self.chains.iter().map(|c| c.rejected_weight_proposals).collect(),
            parameter_names: self.layout.names(),
        };
        let path = dir.join("draws.json");
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;

        let names = self.layout.names();
        for (k, chain) in self.chains.iter().enumerate() {
            let path = dir.join(format!("chain_{k}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::parse(&path, e.to_string()))?;
            w.write_record(&names).map_err(|e| Error::parse(&path, e.to_string()))?;
            for row in &chain.params {
                w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| Error::parse(&path, e.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }

        let path = dir.join("z1.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::parse(&path, e.to_string()))?;
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.z1_individuals.iter().map(|i| format!("i_{i}")));
        w.write_record(&header).map_err(|e| Error::parse(&path, e.to_string()))?;
        for (k, chain) in self.chains.iter().enumerate() {
            for (t, row) in chain.z1.iter().enumerate() {
                let mut rec = vec![k.to_string(), t.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(|e| Error::parse(&path, e.to_string()))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("draws.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
        if meta.parameter_names != meta.layout.names() {
            return Err(Error::parse(&path, "parameter names do not match the layout"));
        }
        let width = meta.layout.len();
        let mut chains = Vec::new();
        for (k, rejected) in meta.rejected_weight_proposals.iter().enumerate() {
            let path = dir.join(format!("chain_{k}.csv"));
            let params = read_rows(&path, width)?;
            chains.push(ChainDraws { params, z1: Vec::new(), rejected_weight_proposals: *rejected });
        }
        let path = dir.join("z1.csv");
        let rows = read_rows(&path, 2 + meta.z1_individuals.len())?;
        for row in rows {
            let k = row[0] as usize;
            let chain = chains
                .get_mut(k)
                .ok_or_else(|| Error::parse(&path, format!("chain index {k} out of range")))?;
            chain.z1.push(row[2..].to_vec());
        }
        Ok(Self {
            layout: meta.layout,
            model: meta.model,
            prior: meta.prior,
            config: meta.config,
            z1_individuals: meta.z1_individuals,
            chains,
        })
    }
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::parse(path, format!("cannot open: {e}")),
        _ => Error::parse(path, e.to_string()),
    })?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != width {
            return Err(Error::parse(path, format!("line {}: expected {width} fields, found {}", line + 2, rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", line + 2)))?;
        out.push(row);
    }
    Ok(out)
}
