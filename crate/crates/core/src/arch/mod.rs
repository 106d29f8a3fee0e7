//! Model zoo: slice-wise 2-D encoders with Transformer, FC or Bi-LSTM
//! aggregation, multi-view variants, and whole-volume 3-D baselines.

mod aggregator;
mod config;
mod encoder;

use std::collections::BTreeMap;

pub use aggregator::{Aggregator, FcAggregator, LstmAggregator, TransformerAggregator};
pub use config::{parse_dims, EncoderSpec, Family, InitSource, ModelConfig, StackShape, FULL_GRID, TOY_GRID};
pub use encoder::{BlockKind, Encoder};

use crate::checkpoint;
use crate::data::View;
use crate::error::{Error, Result};
use crate::nn::{Forward, LayerCost, Linear, ParamStore, Scope, Tracer};
use crate::tensor::Tensor;

/// One sample: a `[k, C, H, W]` slice stack per view.
pub type Views = BTreeMap<View, Tensor>;

/// An instantiated architecture: block structure plus its parameter store.
///
/// The layer list returned by [`Model::layers`] is validated at build time,
/// so every layer's input shape matches its predecessor's output.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    /// One shared encoder, or one per view (keyed by view).
    encoders: Vec<(Option<View>, Encoder)>,
    pub aggregator: Aggregator,
}

/// Builds and initializes a model. Convolutions are He-normal, linear
/// layers Xavier, biases zero, tokens N(0, 0.02); with
/// [`InitSource::WeightsFile`] every tensor whose name matches is then
/// overwritten from the checkpoint.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    let mut model = Model::plan(cfg)?;
    model.store.materialize(seed);
    if let InitSource::WeightsFile(path) = &cfg.init {
        let tensors = checkpoint::load(path)?;
        model.store.load_matching(&tensors)?;
    }
    Ok(model)
}

impl Model {
    /// Builds the structure without allocating parameter values; enough for
    /// cost analysis at any scale.
    pub fn plan(cfg: &ModelConfig) -> Result<Model> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut root = Scope::root(&mut store);
        let classes = cfg.num_classes;
        let f = cfg.family;
        let (encoders, aggregator) = if f.is_volumetric() {
            let kind = if f == Family::Conv3d {
                BlockKind::Bottleneck3d
            } else {
                BlockKind::Factorized
            };
            let enc = Encoder::new(&mut root, "encoder", &cfg.encoder, kind)?;
            let head = Linear::new(&mut root, "head", enc.out_dim, classes)?;
            (vec![(None, enc)], Aggregator::Linear(head))
        } else {
            let encoders = if f == Family::MultiviewIndividual {
                cfg.views
                    .iter()
                    .map(|&v| Ok((Some(v), Encoder::new(&mut root, &format!("encoder.{v}"), &cfg.encoder, BlockKind::Bottleneck2d)?)))
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![(None, Encoder::new(&mut root, "encoder", &cfg.encoder, BlockKind::Bottleneck2d)?)]
            };
            let feat = cfg.encoder.out_dim();
            let k = cfg.input(cfg.views[0])?.slices;
            let agg = match f {
                Family::Fc2d => Aggregator::Fc(FcAggregator::new(&mut root, k, feat, cfg.fc_hidden, classes)?),
                Family::BiLstm2d => Aggregator::Lstm(LstmAggregator::new(
                    &mut root,
                    feat,
                    cfg.lstm_hidden,
                    cfg.lstm_layers,
                    classes,
                )?),
                _ => {
                    let views = cfg
                        .views
                        .iter()
                        .map(|&v| Ok((v, cfg.input(v)?.slices)))
                        .collect::<Result<Vec<_>>>()?;
                    Aggregator::Transformer(TransformerAggregator::new(
                        &mut root,
                        feat,
                        &views,
                        &cfg.attention(),
                        cfg.trf_blocks,
                        classes,
                    )?)
                }
            };
            (encoders, agg)
        };
        let model = Model {
            cfg: cfg.clone(),
            store,
            encoders,
            aggregator,
        };
        model.layers()?;
        Ok(model)
    }

    pub fn encoder_for(&self, view: View) -> &Encoder {
        self.encoders
            .iter()
            .find(|(v, _)| v.is_none() || *v == Some(view))
            .map(|(_, e)| e)
            .expect("validated views have an encoder")
    }

    pub fn feature_dim(&self) -> usize {
        self.encoders[0].1.out_dim
    }

    pub fn param_count(&self) -> u64 {
        self.store.trainable_count()
    }

    /// Static per-layer walk: shapes, fresh parameters and MACs for one
    /// sample. Slice encoders are repeated once per slice.
    pub fn layers(&self) -> Result<Vec<LayerCost>> {
        let cfg = &self.cfg;
        let mut tr = Tracer::new(&self.store);
        let c = cfg.encoder.in_channels;
        match &self.aggregator {
            Aggregator::Linear(head) => {
                let s = cfg.input(cfg.views[0])?;
                let h = self.encoders[0].1.trace(&mut tr, &[c, s.slices, s.height, s.width])?;
                head.trace(&mut tr, &[1, h[0]])?;
            }
            agg => {
                for &v in &cfg.views {
                    let s = cfg.input(v)?;
                    let enc = self.encoder_for(v);
                    tr.repeated(s.slices as u64, |tr| enc.trace(tr, &[c, s.height, s.width]))?;
                }
                let feat = self.feature_dim();
                match agg {
                    Aggregator::Transformer(t) => t.trace(&mut tr, feat)?,
                    Aggregator::Fc(fc) => fc.trace(&mut tr)?,
                    Aggregator::Lstm(l) => l.trace(&mut tr, cfg.input(cfg.views[0])?.slices)?,
                    Aggregator::Linear(_) => unreachable!(),
                };
            }
        }
        let missing = tr.untraced_params();
        if missing != 0 {
            return Err(Error::config(format!("{missing} parameters not reached by the layer walk")));
        }
        Ok(tr.finish())
    }

    fn check_stack(&self, view: View, x: &Tensor) -> Result<()> {
        let s = self.cfg.input(view)?;
        let want = [s.slices, self.cfg.encoder.in_channels, s.height, s.width];
        if x.shape() != want {
            return Err(Error::Shape {
                op: "slice stack",
                lhs: x.shape().to_vec(),
                rhs: want.to_vec(),
            });
        }
        Ok(())
    }

    /// Applies the view's encoder to every slice: `[k, C, H, W]` to `[k, f]`.
    pub fn forward_slicewise(&self, f: &Forward, view: View, slices: &Tensor) -> Result<Tensor> {
        if self.cfg.family.is_volumetric() {
            return Err(Error::config("volumetric models have no slice-wise encoder"));
        }
        self.check_stack(view, slices)?;
        self.encoder_for(view).forward(f, slices)
    }

    /// Logits `[B, classes]`. All slices of one view across the batch go
    /// through the encoder in a single call.
    pub fn logits(&self, f: &Forward, batch: &[Views]) -> Result<Tensor> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let cfg = &self.cfg;
        for sample in batch {
            for &v in &cfg.views {
                let x = sample.get(&v).ok_or_else(|| Error::MissingView(v.to_string()))?;
                self.check_stack(v, x)?;
            }
        }
        if let Aggregator::Linear(head) = &self.aggregator {
            let v = cfg.views[0];
            let s = cfg.input(v)?;
            let vols = batch
                .iter()
                .map(|b| b[&v].reshape(&[1, 1, s.slices, s.height, s.width]))
                .collect::<Result<Vec<_>>>()?;
            let feats = self.encoders[0].1.forward(f, &Tensor::concat(&vols, 0)?)?;
            return head.forward(f, &feats);
        }
        let mut per_view = Vec::new();
        for &v in &cfg.views {
            let stacks: Vec<Tensor> = batch.iter().map(|b| b[&v].clone()).collect();
            let feats = self.encoder_for(v).forward(f, &Tensor::concat(&stacks, 0)?)?;
            per_view.push((v, cfg.input(v)?.slices, feats));
        }
        let rows = (0..batch.len())
            .map(|b| {
                let feats = per_view
                    .iter()
                    .map(|(v, k, all)| Ok((*v, all.slice(0, b * k, (b + 1) * k)?)))
                    .collect::<Result<Vec<_>>>()?;
                match &self.aggregator {
                    Aggregator::Transformer(t) => t.forward(f, &feats),
                    Aggregator::Fc(fc) => fc.forward(f, &feats[0].1),
                    Aggregator::Lstm(l) => l.forward(f, &feats[0].1),
                    Aggregator::Linear(_) => unreachable!(),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat(&rows, 0)
    }

    /// Class probabilities `[B, classes]`.
    pub fn probabilities(&self, f: &Forward, batch: &[Views]) -> Result<Tensor> {
        self.logits(f, batch)?.softmax(1)
    }
}

/// The classic ImageNet ResNet-50 (3-channel 224x224 input, 1000-way head),
/// used only to pin the encoder layout against its published size.
pub fn reference_resnet50() -> Result<(ParamStore, Vec<LayerCost>)> {
    let mut store = ParamStore::new();
    let spec = EncoderSpec {
        in_channels: 3,
        ..EncoderSpec::resnet50()
    };
    let mut root = Scope::root(&mut store);
    let enc = Encoder::new(&mut root, "encoder", &spec, BlockKind::Bottleneck2d)?;
    let fc = Linear::new(&mut root, "fc", enc.out_dim, 1000)?;
    let mut tr = Tracer::new(&store);
    let h = enc.trace(&mut tr, &[3, 224, 224])?;
    fc.trace(&mut tr, &[1, h[0]])?;
    let layers = tr.finish();
    Ok((store, layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(layers: &[LayerCost]) -> (u64, u64) {
        layers.iter().fold((0, 0), |(p, m), l| (p + l.params, m + l.macs))
    }

    #[test]
    fn resnet50_reference_size() {
        let (store, layers) = reference_resnet50().unwrap();
        let (p, m) = total(&layers);
        assert_eq!(p, 25_557_032);
        assert_eq!(p, store.trainable_count());
        assert!((m as f64 / 4.089e9 - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn toy_models_run_for_every_family() {
        for family in Family::ALL {
            let cfg = ModelConfig::toy(family);
            let model = build_model(&cfg, 3).unwrap();
            let sample: Views = cfg
                .views
                .iter()
                .map(|&v| {
                    let s = cfg.inputs[&v];
                    let n = s.slices * s.height * s.width;
                    let data = (0..n).map(|i| ((i * 7919) % 255) as f64 / 255.0).collect();
                    (v, Tensor::new(data, &[s.slices, 1, s.height, s.width]).unwrap())
                })
                .collect();
            let logits = model.logits(&Forward::eval(&model.store), &[sample.clone(), sample]).unwrap();
            assert_eq!(logits.shape(), &[2, 3], "{family}");
            let (p, _) = total(&model.layers().unwrap());
            assert_eq!(p, model.param_count(), "{family}");
        }
    }

    #[test]
    fn missing_view_is_named() {
        let cfg = ModelConfig::toy(Family::MultiviewShared);
        let model = build_model(&cfg, 0).unwrap();
        let s = cfg.inputs[&View::Sag];
        let mut sample = Views::new();
        sample.insert(View::Sag, Tensor::zeros(&[s.slices, 1, s.height, s.width]));
        match model.logits(&Forward::eval(&model.store), &[sample]) {
            Err(Error::MissingView(v)) => assert_eq!(v, "cor"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slice_count_mismatch_is_a_shape_error() {
        let model = build_model(&ModelConfig::toy(Family::Trf2d), 0).unwrap();
        let x = Tensor::zeros(&[5, 1, 32, 32]);
        let err = model.forward_slicewise(&Forward::eval(&model.store), View::Sag, &x).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn invalid_configs_fail_at_build() {
        let mut cfg = ModelConfig::toy(Family::Trf2d);
        cfg.trf_dim = 30;
        assert!(Model::plan(&cfg).is_err());
        let mut cfg = ModelConfig::toy(Family::Fc2d);
        cfg.encoder.stage_blocks.pop();
        assert!(Model::plan(&cfg).is_err());
    }
}
