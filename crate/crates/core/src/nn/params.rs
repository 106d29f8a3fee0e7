use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::CheckpointTensor;
use crate::error::{Error, Result};

/// Initialization rule for a parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// N(0, 2 / fan_in), for convolutions followed by ReLU.
    HeNormal { fan_in: usize },
    /// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    Xavier { fan_in: usize, fan_out: usize },
    Normal { std: f64 },
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// Running statistics are stored alongside weights but are not trained.
    pub trainable: bool,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter registry. Shapes are known as soon as a model is
/// described; values exist only after [`ParamStore::materialize`], which lets
/// full-scale graphs be counted without allocating their weights.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    values: Vec<Vec<f64>>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: String, shape: Vec<usize>, init: Init, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::config(format!("parameter {name} has degenerate shape {shape:?}")));
        }
        let id = ParamId(self.specs.len());
        self.by_name.insert(name.clone(), id);
        self.specs.push(ParamSpec {
            name,
            shape,
            init,
            trainable,
        });
        self.values.push(Vec::new());
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.specs.len()).map(ParamId)
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn is_materialized(&self) -> bool {
        self.specs.iter().zip(&self.values).all(|(s, v)| v.len() == s.numel())
    }

    /// Sum of trainable tensor sizes.
    pub fn trainable_count(&self) -> u64 {
        self.specs.iter().filter(|s| s.trainable).map(|s| s.numel() as u64).sum()
    }

    /// Draws every value from its init rule. Each tensor gets its own ChaCha
    /// stream keyed by its registration index, so values depend only on
    /// `(seed, index)`.
    pub fn materialize(&mut self, seed: u64) {
        for (i, spec) in self.specs.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let n = spec.numel();
            self.values[i] = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal { std } => normals(&mut rng, n, std),
                Init::HeNormal { fan_in } => normals(&mut rng, n, (2.0 / fan_in as f64).sqrt()),
                Init::Xavier { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-a..a)).collect()
                }
            };
        }
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn set_value(&mut self, id: ParamId, value: Vec<f64>) -> Result<()> {
        let spec = &self.specs[id.0];
        if value.len() != spec.numel() {
            return Err(Error::Shape {
                op: "set_value",
                lhs: spec.shape.clone(),
                rhs: vec![value.len()],
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    /// All materialized tensors in registration order.
    pub fn to_checkpoint(&self) -> Vec<CheckpointTensor> {
        self.specs
            .iter()
            .zip(&self.values)
            .map(|(s, v)| CheckpointTensor {
                name: s.name.clone(),
                shape: s.shape.clone(),
                data: v.clone(),
            })
            .collect()
    }

    /// Copies tensors whose names match; names absent from `tensors` keep
    /// their current values. Any shape mismatch aborts the load and lists
    /// every offending tensor. Returns how many tensors were loaded.
    pub fn load_matching(&mut self, tensors: &[CheckpointTensor]) -> Result<usize> {
        let mut bad = Vec::new();
        let mut hits = Vec::new();
        for t in tensors {
            if let Some(id) = self.find(&t.name) {
                let spec = &self.specs[id.0];
                if spec.shape != t.shape {
                    bad.push(format!("{} (model {:?}, file {:?})", t.name, spec.shape, t.shape));
                } else {
                    hits.push((id, t));
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::Load(format!("shape mismatch for {}", bad.join(", "))));
        }
        for (id, t) in &hits {
            self.values[id.0] = t.data.clone();
        }
        Ok(hits.len())
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * std).collect()
}

/// Hierarchical name prefix used while registering a model's parameters.
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl<'a> Scope<'a> {
    pub fn root(store: &'a mut ParamStore) -> Self {
        Scope {
            store,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: &str) -> Scope<'_> {
        Scope {
            prefix: self.join(name),
            store: self.store,
        }
    }

    pub fn name(&self) -> &str {
        &self.prefix
    }

    fn join(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let full = self.join(name);
        self.store.register(full, shape.to_vec(), init, true)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let full = self.join(name);
        self.store.register(full, shape.to_vec(), init, false)
    }
}
