//! A named, seeded parameter store that plugs into `candle_nn::VarBuilder`.
//!
//! candle's CPU random generator cannot be seeded, so parameters are created
//! here instead: each one is drawn from a ChaCha stream keyed by the store seed
//! and a hash of the parameter name, which makes initialization reproducible
//! and independent of construction order.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use candle_core::{DType, Device, Shape, Tensor, Var};
use candle_nn::init::{FanInOut, NormalOrUniform};
use candle_nn::var_builder::SimpleBackend;
use candle_nn::{Init, VarBuilder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

#[derive(Default)]
struct Inner {
    vars: BTreeMap<String, Var>,
    seed: u64,
    /// Prefix rewrites applied to a name before hashing it for initialization.
    aliases: Vec<(String, String)>,
    strict: bool,
}

#[derive(Clone, Default)]
pub struct ParamStore {
    inner: Arc<Mutex<Inner>>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn sample_init(init: Init, shape: &Shape, seed: u64) -> Vec<f64> {
    let n = shape.elem_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |mean: f64, std: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let d = Normal::new(mean, std.max(0.0)).expect("finite standard deviation");
        (0..n).map(|_| d.sample(rng)).collect()
    };
    let uniform = |lo: f64, up: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        if up <= lo {
            return vec![lo; n];
        }
        let d = Uniform::new(lo, up).expect("non-empty range");
        (0..n).map(|_| d.sample(rng)).collect()
    };
    match init {
        Init::Const(v) => vec![v; n],
        Init::Randn { mean, stdev } => normal(mean, stdev, &mut rng),
        Init::Uniform { lo, up } => uniform(lo, up, &mut rng),
        Init::Kaiming {
            dist,
            fan,
            non_linearity,
        } => {
            let fan = match fan {
                FanInOut::FanIn => FanInOut::FanIn.for_shape(shape),
                FanInOut::FanOut => FanInOut::FanOut.for_shape(shape),
            };
            let std = non_linearity.gain() / (fan.max(1) as f64).sqrt();
            match dist {
                NormalOrUniform::Normal => normal(0.0, std, &mut rng),
                NormalOrUniform::Uniform => {
                    let bound = 3f64.sqrt() * std;
                    uniform(-bound, bound, &mut rng)
                }
            }
        }
    }
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                seed,
                ..Inner::default()
            })),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Parameters under `from` are initialized exactly like the same-named
    /// parameters under `to`.
    pub fn with_init_alias(self, from: &str, to: &str) -> Self {
        self.lock().aliases.push((from.to_owned(), to.to_owned()));
        self
    }

    /// In strict mode, requesting an absent parameter is an error instead of
    /// creating it.
    pub fn set_strict(&self, strict: bool) {
        self.lock().strict = strict;
    }

    pub fn var_builder(&self, dtype: DType, device: &Device) -> VarBuilder<'static> {
        VarBuilder::from_backend(Box::new(self.clone()), dtype, device.clone())
    }

    /// Inserts or overwrites a parameter.
    pub fn insert(&self, name: &str, tensor: &Tensor) -> Result<()> {
        let mut inner = self.lock();
        match inner.vars.get(name) {
            Some(var) if var.dims() == tensor.dims() => var.set(&tensor.to_dtype(var.dtype())?)?,
            Some(var) => {
                return Err(Error::ShapeMismatch {
                    context: "parameter overwrite",
                    expected: var.dims().to_vec(),
                    found: tensor.dims().to_vec(),
                })
            }
            None => {
                inner
                    .vars
                    .insert(name.to_owned(), Var::from_tensor(&tensor.copy()?)?);
            }
        }
        Ok(())
    }

    /// All parameters sorted by name.
    pub fn vars(&self) -> Vec<(String, Var)> {
        self.lock()
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.lock().vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<Tensor> {
        self.lock().vars.get(name).map(|v| v.as_tensor().clone())
    }

    /// Total element count of the parameters whose names start with `prefix`.
    pub fn count_params(&self, prefix: &str) -> usize {
        self.lock()
            .vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Detached copies of every tensor, for serialization.
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        self.lock()
            .vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().detach().copy()?)))
            .collect()
    }
}

impl SimpleBackend for ParamStore {
    fn get(
        &self,
        s: Shape,
        name: &str,
        h: Init,
        dtype: DType,
        dev: &Device,
    ) -> candle_core::Result<Tensor> {
        let mut inner = self.lock();
        if let Some(var) = inner.vars.get(name) {
            if var.shape() != &s {
                candle_core::bail!(
                    "parameter {name} has shape {:?}, requested {:?}",
                    var.shape(),
                    s
                );
            }
            if var.dtype() != dtype {
                candle_core::bail!(
                    "parameter {name} has dtype {:?}, requested {dtype:?}",
                    var.dtype()
                );
            }
            return Ok(var.as_tensor().clone());
        }
        if inner.strict {
            candle_core::bail!("parameter {name} is missing");
        }
        let key = inner
            .aliases
            .iter()
            .find_map(|(from, to)| {
                name.strip_prefix(from.as_str())
                    .map(|rest| format!("{to}{rest}"))
            })
            .unwrap_or_else(|| name.to_owned());
        let values = sample_init(h, &s, inner.seed ^ fnv1a(&key));
        let var = Var::from_tensor(&Tensor::from_vec(values, s, dev)?.to_dtype(dtype)?)?;
        let t = var.as_tensor().clone();
        inner.vars.insert(name.to_owned(), var);
        Ok(t)
    }

    fn get_unchecked(
        &self,
        name: &str,
        dtype: DType,
        _dev: &Device,
    ) -> candle_core::Result<Tensor> {
        match self.lock().vars.get(name) {
            Some(v) => v.as_tensor().to_dtype(dtype),
            None => candle_core::bail!("parameter {name} is missing"),
        }
    }

    fn contains_tensor(&self, name: &str) -> bool {
        self.lock().vars.contains_key(name)
    }
}
