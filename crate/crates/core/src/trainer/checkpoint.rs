use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use cmr_autograd::Tensor;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::adversarial::DiscriminatorConfig;
use crate::cascade::GeneratorConfig;
use crate::error::{ensure, Error, Result};

const META_KEY: &str = "config";

/// Network configuration stored next to the weights so a checkpoint can be
/// rebuilt without the experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Name of the curriculum stage that produced the weights.
    pub stage: String,
    pub steps: u64,
}

/// Every parameter of both networks as little-endian f64 tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, meta: CheckpointMeta) -> Self {
        Self {
            meta,
            tensors: model.tensors(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let raw = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                (k.clone(), t.shape().to_vec(), raw)
            })
            .collect();
        let views = bytes
            .iter()
            .map(|(k, s, raw)| {
                TensorView::new(Dtype::F64, s.clone(), raw)
                    .map(|v| (k.as_str(), v))
                    .map_err(|e| Error::Data(format!("tensor `{k}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = serde_json::to_string(&self.meta).map_err(|e| Error::Data(e.to_string()))?;
        let info = HashMap::from([(META_KEY.to_string(), meta)]);
        safetensors::serialize(views, Some(info)).map_err(|e| Error::Data(format!("checkpoint encode: {e}")))
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (_, header) =
            SafeTensors::read_metadata(buf).map_err(|e| Error::Data(format!("checkpoint header: {e}")))?;
        let meta = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY))
            .ok_or_else(|| Error::Data(format!("checkpoint has no `{META_KEY}` metadata")))?;
        let meta: CheckpointMeta =
            serde_json::from_str(meta).map_err(|e| Error::Data(format!("checkpoint config: {e}")))?;
        let st = SafeTensors::deserialize(buf).map_err(|e| Error::Data(format!("checkpoint body: {e}")))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            ensure!(
                view.dtype() == Dtype::F64,
                Data,
                "tensor `{name}` has dtype {:?}, expected F64",
                view.dtype()
            );
            let data = view
                .data()
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.insert(name, Tensor::new(view.shape(), data));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

impl Model {
    /// Rebuilds both networks from the stored configuration and loads the
    /// weights strictly.
    pub fn from_checkpoint(ckpt: &Checkpoint, seed: u64) -> Result<Self> {
        let model = Model::new(&ckpt.meta.generator, &ckpt.meta.discriminator, seed)?;
        model.load(&ckpt.tensors)?;
        Ok(model)
    }
}
