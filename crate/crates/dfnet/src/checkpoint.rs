//! Single-file checkpoints: every parameter plus a manifest describing the
//! architecture, checked on load.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneKind;
use crate::error::{Error, Result};
use crate::model::{DfNet, DfNetConfig};
use crate::params::ParamStore;

const MANIFEST_KEY: &str = "hypsam.manifest";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub backbone: BackboneKind,
    pub kernels: usize,
    pub kernel_size: usize,
    pub channels: usize,
    pub reduction: usize,
    pub resolution: usize,
}

impl Manifest {
    pub fn of(cfg: &DfNetConfig) -> Self {
        Self {
            backbone: cfg.backbone,
            kernels: cfg.kernels,
            kernel_size: cfg.kernel_size,
            channels: cfg.channels,
            reduction: cfg.reduction,
            resolution: cfg.resolution,
        }
    }

    pub fn config(&self) -> DfNetConfig {
        DfNetConfig {
            backbone: self.backbone,
            pretrained: false,
            channels: self.channels,
            kernels: self.kernels,
            kernel_size: self.kernel_size,
            reduction: self.reduction,
            resolution: self.resolution,
        }
    }

    /// Fields that differ from `other`, as `name: ours != theirs`.
    pub fn differences(&self, other: &Manifest) -> Vec<String> {
        let mut d = Vec::new();
        let mut cmp = |name: &str, a: String, b: String| {
            if a != b {
                d.push(format!("{name}: {a} != {b}"));
            }
        };
        cmp(
            "backbone",
            self.backbone.name().into(),
            other.backbone.name().into(),
        );
        cmp(
            "kernels",
            self.kernels.to_string(),
            other.kernels.to_string(),
        );
        cmp(
            "kernel_size",
            self.kernel_size.to_string(),
            other.kernel_size.to_string(),
        );
        cmp(
            "channels",
            self.channels.to_string(),
            other.channels.to_string(),
        );
        cmp(
            "reduction",
            self.reduction.to_string(),
            other.reduction.to_string(),
        );
        cmp(
            "resolution",
            self.resolution.to_string(),
            other.resolution.to_string(),
        );
        d
    }
}

pub fn save(net: &DfNet, path: &Path) -> Result<()> {
    let tensors = net.store().snapshot()?;
    let manifest = serde_json::to_string(&Manifest::of(net.config()))?;
    let meta = HashMap::from([(MANIFEST_KEY.to_string(), manifest)]);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    safetensors::serialize_to_file(&tensors, Some(meta), path)?;
    Ok(())
}

fn incompatible(path: &Path, reason: impl Into<String>) -> Error {
    Error::CheckpointIncompatible {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn manifest_from(buf: &[u8], path: &Path) -> Result<Manifest> {
    let (_, meta) =
        SafeTensors::read_metadata(buf).map_err(|e| incompatible(path, e.to_string()))?;
    let raw = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(MANIFEST_KEY))
        .ok_or_else(|| incompatible(path, "no manifest"))?;
    serde_json::from_str(raw).map_err(|e| incompatible(path, format!("unreadable manifest: {e}")))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let buf = std::fs::read(path)?;
    manifest_from(&buf, path)
}

/// Restores a network. With `expected`, the manifest must agree with it.
/// Every parameter the architecture needs must be present and every stored
/// tensor must be used.
pub fn load(
    path: &Path,
    expected: Option<&Manifest>,
    dtype: DType,
    device: &Device,
) -> Result<DfNet> {
    let buf = std::fs::read(path)?;
    let manifest = manifest_from(&buf, path)?;
    if let Some(exp) = expected {
        let diff = exp.differences(&manifest);
        if !diff.is_empty() {
            return Err(incompatible(path, diff.join(", ")));
        }
    }
    let tensors = candle_core::safetensors::load_buffer(&buf, device)?;
    let count = tensors.len();
    let store = ParamStore::new(0);
    for (k, v) in tensors {
        store.insert(&k, &v.to_dtype(dtype)?)?;
    }
    store.set_strict(true);
    let net = DfNet::build(manifest.config(), store, dtype, device).map_err(|e| {
        incompatible(
            path,
            format!("parameters do not match the architecture: {e}"),
        )
    })?;
    if net.store().len() != count {
        return Err(incompatible(path, "unexpected extra tensors"));
    }
    net.store().set_strict(false);
    Ok(net)
}
