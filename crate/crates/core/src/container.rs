//! Flat binary container: magic, JSON header length, JSON header, then
//! little-endian `f64` blocks in header order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::UniformGrid;

const MAGIC: &[u8; 8] = b"PRDMFT01";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("not a container file")]
    BadMagic,
    #[error("missing entry {0}")]
    Missing(String),
    #[error("block {name} has {actual} values, shape needs {expected}")]
    Shape {
        name: String,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    model_hash: String,
    grid: Option<UniformGrid>,
    meta: BTreeMap<String, serde_json::Value>,
    blocks: Vec<BlockHeader>,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub model_hash: String,
    pub grid: Option<UniformGrid>,
    pub meta: BTreeMap<String, serde_json::Value>,
    blocks: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Container {
    pub fn new(kind: &str, model_hash: &str, grid: &UniformGrid) -> Self {
        let mut c = Self::new_without_grid(kind, model_hash);
        c.grid = Some(grid.clone());
        c
    }

    pub fn new_without_grid(kind: &str, model_hash: &str) -> Self {
        Self {
            kind: kind.to_string(),
            model_hash: model_hash.to_string(),
            grid: None,
            meta: BTreeMap::new(),
            blocks: Vec::new(),
        }
    }

    pub fn grid(&self) -> Result<UniformGrid, ContainerError> {
        self.grid.clone().ok_or(ContainerError::Missing("grid".into()))
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "block {name}");
        self.blocks.push((name.to_string(), shape, data));
    }

    /// Stores a matrix column-major with shape `[rows, cols]`.
    pub fn push_matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.push(name, vec![m.nrows(), m.ncols()], m.as_slice().to_vec());
    }

    pub fn block(&self, name: &str) -> Result<(&[usize], &[f64]), ContainerError> {
        self.blocks
            .iter()
            .find(|b| b.0 == name)
            .map(|b| (b.1.as_slice(), b.2.as_slice()))
            .ok_or_else(|| ContainerError::Missing(name.to_string()))
    }

    /// Block names and shapes in storage order.
    pub fn blocks(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.blocks.iter().map(|b| (b.0.as_str(), b.1.as_slice()))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>, ContainerError> {
        let (shape, data) = self.block(name)?;
        if shape.len() != 2 {
            return Err(ContainerError::Shape {
                name: name.to_string(),
                expected: 2,
                actual: shape.len(),
            });
        }
        Ok(DMatrix::from_column_slice(shape[0], shape[1], data))
    }

    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        let header = Header {
            kind: self.kind.clone(),
            model_hash: self.model_hash.clone(),
            grid: self.grid.clone(),
            meta: self.meta.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockHeader {
                    name: b.0.clone(),
                    shape: b.1.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, _, data) in &self.blocks {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for b in header.blocks {
            let n: usize = b.shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push((b.name, b.shape, data));
        }
        Ok(Self {
            kind: header.kind,
            model_hash: header.model_hash,
            grid: header.grid,
            meta: header.meta,
            blocks,
        })
    }
}
