//! Versioned binary checkpoints: the training configuration, the concept vocabulary by
//! name, and every named parameter tensor.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Model, TrainConfig};
use crate::encoder::ConceptVocab;
use crate::error::{Error, Result};
use crate::kg::{write_str, ByteReader, KnowledgeGraph};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Model {
    pub fn save(&self, path: &Path, kg: &KnowledgeGraph) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w, kg).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: &mut W, kg: &KnowledgeGraph) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let config = serde_json::to_string(&self.config).expect("config serializes");
        write_str(w, &config)?;
        w.write_all(&(self.relations as u64).to_le_bytes())?;
        let concepts = self.vocab.concepts();
        w.write_all(&(concepts.len() as u64).to_le_bytes())?;
        for c in concepts {
            write_str(w, kg.concept_name(*c).unwrap_or_default())?;
        }
        w.write_all(&(self.store.len() as u64).to_le_bytes())?;
        for (_, name, t) in self.store.iter() {
            write_str(w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for d in t.shape() {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Rebuilds the model against `kg`, which must contain every vocabulary concept.
    pub fn load(path: &Path, kg: &KnowledgeGraph) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, kg)
    }

    pub fn to_bytes(&self, kg: &KnowledgeGraph) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out, kg).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8], kg: &KnowledgeGraph) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let config: TrainConfig =
            serde_json::from_str(&r.string()?).map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let relations = r.u64()? as usize;
        let n = r.u64()? as usize;
        let mut concepts = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let id = kg
                .concept_id(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint concept {name:?} is not in the knowledge graph")))?;
            concepts.push(id);
        }
        let mut model = Model::new(config, ConceptVocab::new(concepts), relations)?;
        let count = r.u64()? as usize;
        if count != model.store.len() {
            return Err(Error::Format(format!(
                "checkpoint has {count} tensors, configuration implies {}",
                model.store.len()
            )));
        }
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(shape, data)?;
            let id = model
                .store
                .id(&name)
                .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
            if !model.store.get(id).same_shape(&t) {
                return Err(Error::Format(format!("tensor {name} has shape {:?}", t.shape())));
            }
            *model.store.get_mut(id) = t;
        }
        if !r.done() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(model)
    }
}
