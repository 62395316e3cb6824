use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetManifest, NormRecord, Sample};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::geometry::Graph;
use crate::operators::{DataDims, ModelInput};

/// Largest lattice extent handed to grid-family models by default.
const MAX_GRID: usize = 32;

/// Maps raw dataset values to the units models train in, and back.
///
/// Coordinates go affinely from the manifest bounds to the unit cube;
/// parameters, loads and (for normalized datasets) fields are min-max scaled
/// with statistics from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub params: Option<NormRecord>,
    pub loads: Option<NormRecord>,
    pub field: Option<NormRecord>,
}

impl Normalizer {
    pub fn fit(ds: &Dataset, train: &[usize]) -> Result<Normalizer> {
        let m = &ds.manifest;
        let rows = |f: fn(&Sample) -> &[f32]| -> Vec<&[f32]> { train.iter().map(|&i| f(&ds.samples[i])).collect() };
        if let Some(&i) = train.iter().find(|&&i| i >= ds.samples.len()) {
            return Err(Error::Input(format!("train index {i} out of range")));
        }
        let params = match m.geo_dim {
            0 => None,
            w => Some(NormRecord::fit(w, rows(|s| &s.params))?),
        };
        let loads = match m.load_dim {
            0 => None,
            w => Some(NormRecord::fit(w, rows(|s| &s.loads))?),
        };
        let field = if m.normalized {
            Some(crate::data::normalize_fields(&ds.samples, train)?)
        } else {
            None
        };
        Ok(Normalizer {
            lo: m.grid.lo,
            hi: m.grid.hi,
            params,
            loads,
            field,
        })
    }

    pub fn coord(&self, p: [f32; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] as f64 - self.lo[a]) / (self.hi[a] - self.lo[a]))
    }

    pub fn field_to_model(&self, raw: &[f64]) -> Vec<f64> {
        match &self.field {
            Some(r) => r.apply_rows(raw),
            None => raw.to_vec(),
        }
    }

    pub fn field_from_model(&self, vals: &[f64]) -> Vec<f64> {
        match &self.field {
            Some(r) => r.invert_rows(vals),
            None => vals.to_vec(),
        }
    }

    pub fn prepare(&self, s: &Sample) -> Result<PreparedSample> {
        let vec = |rec: &Option<NormRecord>, v: &[f32]| -> Vec<f64> {
            let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            match rec {
                Some(r) => r.apply_rows(&v),
                None => v,
            }
        };
        let coords: Vec<[f64; 3]> = s.coords.iter().map(|&p| self.coord(p)).collect();
        let truth = s.field_f64();
        let edges = match &s.edges {
            // stored as (source, target); lists hold each receiver's senders
            Some(e) => {
                let pairs: Vec<(usize, usize)> = e.iter().map(|&[a, b]| (b as usize, a as usize)).collect();
                Some(Graph::from_edges(coords.len(), &pairs)?)
            }
            None => None,
        };
        Ok(PreparedSample {
            target: self.field_to_model(&truth),
            geometry: Arc::new(coords.clone()),
            coords,
            params: vec(&self.params, &s.params),
            loads: vec(&self.loads, &s.loads),
            truth,
            channels: s.channels,
            edges,
        })
    }
}

/// Model dimensions for a dataset (coordinates already in the unit cube).
pub fn data_dims(m: &DatasetManifest) -> DataDims {
    let mut d = DataDims::new(m.geo_dim, m.load_dim, m.channels);
    d.grid = m.grid.shape.map(|n| n.clamp(2, MAX_GRID));
    d
}

/// One sample in model units, ready for repeated forward passes.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub coords: Vec<[f64; 3]>,
    pub params: Vec<f64>,
    pub loads: Vec<f64>,
    /// Field in model units, `N x channels`.
    pub target: Vec<f64>,
    /// Field in dataset units.
    pub truth: Vec<f64>,
    pub channels: usize,
    pub edges: Option<Graph>,
    pub geometry: Arc<Vec<[f64; 3]>>,
}

impl PreparedSample {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Model input over all points, or over `subset` (stored edges are only
    /// usable for the full cloud).
    pub fn input(&self, subset: Option<&[usize]>) -> ModelInput {
        let mut inp = ModelInput::new(Vec::new(), self.params.clone(), self.loads.clone());
        inp.geometry = Some(Arc::clone(&self.geometry));
        match subset {
            None => {
                inp.coords = self.coords.clone();
                inp.edges = self.edges.clone();
            }
            Some(idx) => inp.coords = idx.iter().map(|&i| self.coords[i]).collect(),
        }
        inp
    }

    pub fn target_rows(&self, subset: Option<&[usize]>) -> Tensor {
        let c = self.channels;
        let data = match subset {
            None => self.target.clone(),
            Some(idx) => idx.iter().flat_map(|&i| self.target[i * c..(i + 1) * c].iter().copied()).collect(),
        };
        let rows = data.len() / c;
        Tensor::matrix(rows, c, data).expect("target shape")
    }
}
