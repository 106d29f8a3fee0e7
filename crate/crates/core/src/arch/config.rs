use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{reprojected_grid, stack_extents, View};
use crate::error::{Error, Result};
use crate::kv::KvEntries;
use crate::nn::AttentionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "2d_trf")]
    Trf2d,
    #[serde(rename = "2d_fc")]
    Fc2d,
    #[serde(rename = "2d_bilstm")]
    BiLstm2d,
    #[serde(rename = "2d_trf_multiview_shared")]
    MultiviewShared,
    #[serde(rename = "2d_trf_multiview_individual")]
    MultiviewIndividual,
    #[serde(rename = "conv2plus1d")]
    Conv2Plus1d,
    #[serde(rename = "conv3d")]
    Conv3d,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Trf2d,
        Family::Fc2d,
        Family::BiLstm2d,
        Family::MultiviewShared,
        Family::MultiviewIndividual,
        Family::Conv2Plus1d,
        Family::Conv3d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Trf2d => "2d_trf",
            Family::Fc2d => "2d_fc",
            Family::BiLstm2d => "2d_bilstm",
            Family::MultiviewShared => "2d_trf_multiview_shared",
            Family::MultiviewIndividual => "2d_trf_multiview_individual",
            Family::Conv2Plus1d => "conv2plus1d",
            Family::Conv3d => "conv3d",
        }
    }

    pub fn is_multiview(self) -> bool {
        matches!(self, Family::MultiviewShared | Family::MultiviewIndividual)
    }

    /// Whole-volume CNNs (no slice-wise encoder).
    pub fn is_volumetric(self) -> bool {
        matches!(self, Family::Conv2Plus1d | Family::Conv3d)
    }

    pub fn uses_transformer(self) -> bool {
        matches!(self, Family::Trf2d | Family::MultiviewShared | Family::MultiviewIndividual)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown model family '{s}'")))
    }
}

/// `slices x height x width` of one view's input stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackShape {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
}

impl StackShape {
    pub fn new(slices: usize, height: usize, width: usize) -> Self {
        StackShape { slices, height, width }
    }
}

impl fmt::Display for StackShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.slices, self.height, self.width)
    }
}

impl FromStr for StackShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims = parse_dims(s)?;
        match dims[..] {
            [k, h, w] => Ok(StackShape::new(k, h, w)),
            _ => Err(Error::config(format!("expected KxHxW, got '{s}'"))),
        }
    }
}

/// Parses `AxBx..` into positive extents.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.trim()
        .split('x')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::config(format!("bad extent '{p}' in '{s}'"))),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub in_channels: usize,
    pub stem_width: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_pool: bool,
    pub stage_widths: Vec<usize>,
    pub stage_blocks: Vec<usize>,
    pub expansion: usize,
}

impl EncoderSpec {
    pub fn resnet50() -> Self {
        EncoderSpec {
            in_channels: 1,
            stem_width: 64,
            stem_kernel: 7,
            stem_stride: 2,
            stem_pool: true,
            stage_widths: vec![64, 128, 256, 512],
            stage_blocks: vec![3, 4, 6, 3],
            expansion: 4,
        }
    }

    pub fn toy() -> Self {
        EncoderSpec {
            in_channels: 1,
            stem_width: 8,
            stem_kernel: 7,
            stem_stride: 2,
            stem_pool: true,
            stage_widths: vec![4, 8],
            stage_blocks: vec![1, 1],
            expansion: 4,
        }
    }

    /// Feature width after global pooling, for bottleneck encoders.
    pub fn out_dim(&self) -> usize {
        self.stage_widths.last().copied().unwrap_or(0) * self.expansion
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitSource {
    Random,
    WeightsFile(PathBuf),
}

impl fmt::Display for InitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSource::Random => f.write_str("random"),
            InitSource::WeightsFile(p) => write!(f, "weights:{}", p.display()),
        }
    }
}

/// Declarative description of one compared architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub views: Vec<View>,
    pub inputs: BTreeMap<View, StackShape>,
    pub encoder: EncoderSpec,
    pub trf_dim: usize,
    pub trf_blocks: usize,
    pub trf_heads: usize,
    pub trf_mlp_ratio: f64,
    pub trf_dropout: f64,
    pub fc_hidden: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub num_classes: usize,
    pub init: InitSource,
}

/// Preprocessed full-resolution grid: 160x160x64 voxels at 0.74/0.74/1.4 mm.
pub const FULL_GRID: ([usize; 3], [f64; 3]) = ([160, 160, 64], [0.74, 0.74, 1.4]);

/// Grid behind the toy preset: 32x32x8 voxels at the same spacing.
pub const TOY_GRID: ([usize; 3], [f64; 3]) = ([32, 32, 8], [0.74, 0.74, 1.4]);

fn view_inputs(views: &[View], dims: [usize; 3], spacing: [f64; 3]) -> BTreeMap<View, StackShape> {
    views
        .iter()
        .map(|&v| {
            let (d, _) = reprojected_grid(dims, spacing, v);
            let (k, h, w) = stack_extents(d, v);
            (v, StackShape::new(k, h, w))
        })
        .collect()
}

fn default_views(family: Family) -> Vec<View> {
    if family.is_multiview() {
        View::ALL.to_vec()
    } else {
        vec![View::Sag]
    }
}

impl ModelConfig {
    /// Full-scale configuration (ResNet-50 encoder, d = 2048, 4 blocks, 8
    /// heads) on 160x160x64 preprocessed volumes.
    pub fn full_scale(family: Family) -> Self {
        let views = default_views(family);
        ModelConfig {
            family,
            inputs: view_inputs(&views, FULL_GRID.0, FULL_GRID.1),
            views,
            encoder: EncoderSpec::resnet50(),
            trf_dim: 2048,
            trf_blocks: 4,
            trf_heads: 8,
            trf_mlp_ratio: 1.0,
            trf_dropout: 0.1,
            fc_hidden: 512,
            lstm_hidden: 256,
            lstm_layers: 1,
            num_classes: 3,
            init: InitSource::Random,
        }
    }

    /// Toy configuration: two-stage encoder of width <= 32, d = 32, 2 blocks,
    /// 4 heads, 8 slices of 32x32.
    pub fn toy(family: Family) -> Self {
        Self::toy_for_grid(family, TOY_GRID.0, TOY_GRID.1)
    }

    /// Toy configuration whose input stacks are cut from volumes of `dims`
    /// and `spacing` (sagittal slices along the last axis).
    pub fn toy_for_grid(family: Family, dims: [usize; 3], spacing: [f64; 3]) -> Self {
        let views = default_views(family);
        ModelConfig {
            family,
            inputs: view_inputs(&views, dims, spacing),
            views,
            encoder: EncoderSpec::toy(),
            trf_dim: 32,
            trf_blocks: 2,
            trf_heads: 4,
            trf_mlp_ratio: 1.0,
            trf_dropout: 0.1,
            fc_hidden: 32,
            lstm_hidden: 16,
            lstm_layers: 1,
            num_classes: 3,
            init: InitSource::Random,
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            dim: self.trf_dim,
            heads: self.trf_heads,
            mlp_ratio: self.trf_mlp_ratio,
            dropout: self.trf_dropout,
        }
    }

    pub fn input(&self, view: View) -> Result<StackShape> {
        self.inputs
            .get(&view)
            .copied()
            .ok_or_else(|| Error::config(format!("no input shape for view {view}")))
    }

    /// Checks everything that can be checked without building the graph.
    pub fn validate(&self) -> Result<()> {
        let f = self.family;
        if self.views.is_empty() {
            return Err(Error::config("views must be non-empty"));
        }
        let mut seen = self.views.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.views.len() {
            return Err(Error::config("views must not repeat"));
        }
        if f.is_multiview() && self.views.len() < 2 {
            return Err(Error::config(format!("{f} needs at least two views")));
        }
        if !f.is_multiview() && self.views.len() != 1 {
            return Err(Error::config(format!("{f} takes exactly one view")));
        }
        for v in &self.views {
            self.input(*v)?;
        }
        if f.is_volumetric() && self.encoder.in_channels != 1 {
            return Err(Error::config(format!("{f} takes single-channel volumes")));
        }
        let e = &self.encoder;
        if e.in_channels == 0 || e.stem_width == 0 || e.stem_kernel == 0 || e.expansion == 0 {
            return Err(Error::config("encoder widths, kernel and expansion must be positive"));
        }
        if !(1..=2).contains(&e.stem_stride) {
            return Err(Error::config("stem_stride must be 1 or 2"));
        }
        if e.stage_widths.is_empty() || e.stage_widths.len() != e.stage_blocks.len() {
            return Err(Error::config("stage_widths and stage_blocks must be non-empty and equally long"));
        }
        if e.stage_widths.iter().chain(&e.stage_blocks).any(|&v| v == 0) {
            return Err(Error::config("stage widths and block counts must be positive"));
        }
        if self.num_classes != 3 {
            return Err(Error::config(format!("num_classes must be 3, got {}", self.num_classes)));
        }
        match f {
            Family::Trf2d | Family::MultiviewShared | Family::MultiviewIndividual => {
                self.attention().validate()?;
                if self.trf_blocks == 0 {
                    return Err(Error::config("trf_blocks must be positive"));
                }
            }
            Family::Fc2d if self.fc_hidden == 0 => return Err(Error::config("fc_hidden must be positive")),
            Family::BiLstm2d if self.lstm_hidden == 0 || self.lstm_layers == 0 => {
                return Err(Error::config("lstm_hidden and lstm_layers must be positive"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Parses a `key = value` config. `family` is required; `preset`
    /// (`toy` or `full`, default `toy`) picks the starting values that the
    /// remaining keys override. Unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvEntries::parse(text)?;
        let mut take = |key: &str| kv.take(key);
        let family: Family = take("family")
            .ok_or_else(|| Error::config("missing required key 'family'"))?
            .parse()?;
        let (mut cfg, grid) = match take("preset").as_deref() {
            None | Some("toy") => (ModelConfig::toy(family), TOY_GRID),
            Some("full") => (ModelConfig::full_scale(family), FULL_GRID),
            Some(other) => return Err(Error::config(format!("unknown preset '{other}'"))),
        };
        let preset_inputs = view_inputs(&View::ALL, grid.0, grid.1);
        if let Some(v) = take("views") {
            cfg.views = v.split(',').map(str::parse).collect::<Result<_>>()?;
        }
        let slice_count = take("slice_count").map(|v| num::<usize>("slice_count", &v)).transpose()?;
        let slice_shape = take("slice_shape").map(|v| parse_dims(&v)).transpose()?;
        if let Some(shape) = &slice_shape {
            if shape.len() != 2 {
                return Err(Error::config("slice_shape must be HxW"));
            }
        }
        for v in cfg.views.clone() {
            let mut s = preset_inputs[&v];
            if let Some(k) = slice_count {
                s.slices = k;
            }
            if let Some(hw) = &slice_shape {
                s.height = hw[0];
                s.width = hw[1];
            }
            cfg.inputs.insert(v, s);
        }
        cfg.inputs.retain(|v, _| cfg.views.contains(v));
        for v in View::ALL {
            if let Some(s) = take(&format!("input.{v}")) {
                if !cfg.views.contains(&v) {
                    return Err(Error::config(format!("input.{v} given but view {v} is not enabled")));
                }
                cfg.inputs.insert(v, s.parse()?);
            }
        }
        let e = &mut cfg.encoder;
        set(&mut take, "in_channels", &mut e.in_channels)?;
        set(&mut take, "stem_width", &mut e.stem_width)?;
        set(&mut take, "stem_kernel", &mut e.stem_kernel)?;
        set(&mut take, "stem_stride", &mut e.stem_stride)?;
        set(&mut take, "stem_pool", &mut e.stem_pool)?;
        set(&mut take, "expansion", &mut e.expansion)?;
        if let Some(v) = take("stage_widths") {
            e.stage_widths = list(&v)?;
        }
        if let Some(v) = take("stage_blocks") {
            e.stage_blocks = list(&v)?;
        }
        set(&mut take, "trf_dim", &mut cfg.trf_dim)?;
        set(&mut take, "trf_blocks", &mut cfg.trf_blocks)?;
        set(&mut take, "trf_heads", &mut cfg.trf_heads)?;
        set(&mut take, "trf_mlp_ratio", &mut cfg.trf_mlp_ratio)?;
        set(&mut take, "trf_dropout", &mut cfg.trf_dropout)?;
        set(&mut take, "fc_hidden", &mut cfg.fc_hidden)?;
        set(&mut take, "lstm_hidden", &mut cfg.lstm_hidden)?;
        set(&mut take, "lstm_layers", &mut cfg.lstm_layers)?;
        set(&mut take, "num_classes", &mut cfg.num_classes)?;
        if let Some(v) = take("init") {
            cfg.init = match v.as_str() {
                "random" => InitSource::Random,
                w => match w.strip_prefix("weights:") {
                    Some(p) if !p.trim().is_empty() => InitSource::WeightsFile(PathBuf::from(p.trim())),
                    _ => return Err(Error::config(format!("init must be 'random' or 'weights:<path>', got '{w}'"))),
                },
            };
        }
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every field as `key = value` lines; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let e = &self.encoder;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("family", self.family.to_string());
        kv("views", self.views.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","));
        for v in &self.views {
            kv(&format!("input.{v}"), self.inputs[v].to_string());
        }
        kv("in_channels", e.in_channels.to_string());
        kv("stem_width", e.stem_width.to_string());
        kv("stem_kernel", e.stem_kernel.to_string());
        kv("stem_stride", e.stem_stride.to_string());
        kv("stem_pool", e.stem_pool.to_string());
        kv("stage_widths", join(&e.stage_widths));
        kv("stage_blocks", join(&e.stage_blocks));
        kv("expansion", e.expansion.to_string());
        kv("trf_dim", self.trf_dim.to_string());
        kv("trf_blocks", self.trf_blocks.to_string());
        kv("trf_heads", self.trf_heads.to_string());
        kv("trf_mlp_ratio", self.trf_mlp_ratio.to_string());
        kv("trf_dropout", self.trf_dropout.to_string());
        kv("fc_hidden", self.fc_hidden.to_string());
        kv("lstm_hidden", self.lstm_hidden.to_string());
        kv("lstm_layers", self.lstm_layers.to_string());
        kv("num_classes", self.num_classes.to_string());
        kv("init", self.init.to_string());
        out
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{v}'")))
}

fn set<T: FromStr>(take: &mut impl FnMut(&str) -> Option<String>, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = take(key) {
        *slot = num(key, &v)?;
    }
    Ok(())
}

fn list(v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| num("list", p.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for family in Family::ALL {
            for cfg in [ModelConfig::toy(family), ModelConfig::full_scale(family)] {
                let back = ModelConfig::parse(&cfg.to_text()).unwrap();
                assert_eq!(back, cfg);
            }
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ModelConfig::parse("family = 2d_trf\ntrf_depth = 4\n").unwrap_err();
        assert!(err.to_string().contains("trf_depth"), "{err}");
    }

    #[test]
    fn overrides_apply_on_preset() {
        let cfg = ModelConfig::parse(
            "# comment\nfamily = 2d_fc\npreset = full\nfc_hidden = 256  # smaller\nslice_count = 32\n",
        )
        .unwrap();
        assert_eq!(cfg.fc_hidden, 256);
        assert_eq!(cfg.encoder, EncoderSpec::resnet50());
        assert_eq!(cfg.inputs[&View::Sag], StackShape::new(32, 160, 160));
    }

    #[test]
    fn view_count_rules() {
        assert!(ModelConfig::parse("family = 2d_trf\nviews = sag,cor\n").is_err());
        assert!(ModelConfig::parse("family = 2d_trf_multiview_shared\nviews = sag\n").is_err());
        assert!(ModelConfig::parse("family = 2d_trf_multiview_shared\nviews = sag,ax\n").is_ok());
        assert!(ModelConfig::parse("family = 2d_trf\ntrf_heads = 5\n").is_err());
    }

    #[test]
    fn full_scale_multiview_inputs() {
        let cfg = ModelConfig::full_scale(Family::MultiviewShared);
        assert_eq!(cfg.inputs[&View::Sag], StackShape::new(64, 160, 160));
        assert_eq!(cfg.inputs[&View::Cor], StackShape::new(160, 116, 88));
        assert_eq!(cfg.inputs[&View::Ax], StackShape::new(160, 116, 88));
    }
}
