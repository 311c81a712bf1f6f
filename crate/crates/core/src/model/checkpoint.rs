use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InputScaling, ModelParams, Topology};
use crate::nn::{Archive, Tensor};
use crate::{Error, Result};

const FORMAT: &str = "murmur-model";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    seed: u64,
    topology: Topology,
    scaling: InputScaling,
    bn_momentum: f64,
    bn_eps: f64,
    params: Vec<String>,
}

impl ModelParams {
    pub fn to_archive(&self) -> Archive {
        let (momentum, eps) = self.bn.first().map_or((0.1, 1e-5), |s| (s.momentum, s.eps));
        let manifest = Manifest {
            format: FORMAT.into(),
            seed: self.seed,
            topology: self.topology.clone(),
            scaling: self.scaling.clone(),
            bn_momentum: momentum,
            bn_eps: eps,
            params: self.names.clone(),
        };
        let mut arrays: Vec<(String, Tensor)> = self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect();
        for (i, s) in self.bn.iter().enumerate() {
            let n = i + 1;
            let c = s.running_mean.len();
            arrays.push((format!("cnn.bn{n}.running_mean"), Tensor::new([c], s.running_mean.clone()).expect("1-d")));
            arrays.push((format!("cnn.bn{n}.running_var"), Tensor::new([c], s.running_var.clone()).expect("1-d")));
        }
        Archive {
            manifest: serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
            arrays,
        }
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&archive.manifest)
            .map_err(|e| Error::Corrupt(format!("checkpoint manifest: {e}")))?;
        if manifest.format != FORMAT {
            return Err(Error::Corrupt(format!("not a model checkpoint (format {:?})", manifest.format)));
        }
        let mut model = ModelParams::zeros(manifest.topology).map_err(|e| Error::Corrupt(e.to_string()))?;
        if model.names != manifest.params {
            return Err(Error::Corrupt("parameter list does not match the recorded topology".into()));
        }
        let fetch = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let t = archive
                .get(name)
                .ok_or_else(|| Error::Corrupt(format!("checkpoint lacks array {name}")))?;
            if t.shape() != shape {
                return Err(Error::Corrupt(format!("array {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::Corrupt(format!("array {name} holds non-finite values")));
            }
            Ok(t.clone())
        };
        for i in 0..model.tensors.len() {
            let shape = model.tensors[i].shape().to_vec();
            model.tensors[i] = fetch(&model.names[i], &shape)?;
        }
        for (i, s) in model.bn.iter_mut().enumerate() {
            let n = i + 1;
            let c = s.running_mean.len();
            s.running_mean = fetch(&format!("cnn.bn{n}.running_mean"), &[c])?.into_data();
            s.running_var = fetch(&format!("cnn.bn{n}.running_var"), &[c])?.into_data();
            s.momentum = manifest.bn_momentum;
            s.eps = manifest.bn_eps;
        }
        if !manifest.scaling.is_finite() || manifest.scaling.ceps_mean.len() != manifest.scaling.ceps_std.len() {
            return Err(Error::Corrupt("input scaling is malformed".into()));
        }
        model.scaling = manifest.scaling;
        model.seed = manifest.seed;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::read(path)?)
    }
}
