//! Network architecture descriptions: the preset family, a line-oriented
//! text format, shape inference, parameter counting and initialization.
//!
//! The text format has one layer per line; `#` starts a comment:
//!
//! ```text
//! name VB
//! conv 3x3 3 64
//! conv 3x3 64 64 pad        # pad 1 on every side
//! conv 3x4 64 64 pad=0,1    # explicit per-axis padding
//! pool 1x3
//! flatten                   # optional, inserted before the first fc
//! fc 2048
//! fc out                    # output layer, width supplied per language
//! softmax
//! untie 2                   # number of per-language fc layers
//! ```

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::ops::{Padding, PoolParams};
use crate::tensor::Tensor;

/// Width of every hidden fully connected layer in the preset family.
pub const HIDDEN_FC_WIDTH: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FcWidth {
    Fixed(usize),
    /// Supplied per language when the network is built.
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv {
        k_t: usize,
        k_f: usize,
        in_maps: usize,
        out_maps: usize,
        pad: Padding,
    },
    Pool(PoolParams),
    Flatten,
    Fc(FcWidth),
    Softmax,
}

impl LayerSpec {
    pub fn conv3(in_maps: usize, out_maps: usize, pad: Padding) -> Self {
        LayerSpec::Conv {
            k_t: 3,
            k_f: 3,
            in_maps,
            out_maps,
            pad,
        }
    }

    pub fn pool(time: usize, freq: usize) -> Self {
        LayerSpec::Pool(PoolParams::new(time, freq))
    }

    pub fn fc(width: usize) -> Self {
        LayerSpec::Fc(FcWidth::Fixed(width))
    }

    pub fn is_weight_layer(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc(_))
    }

    /// Every conv and hidden fc is followed by a ReLU; the output fc is not.
    pub fn has_relu(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc(FcWidth::Fixed(_)))
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                k_t,
                k_f,
                in_maps,
                out_maps,
                pad,
            } => {
                write!(f, "conv {k_t}x{k_f} {in_maps} {out_maps}")?;
                match *pad {
                    Padding { time: 0, freq: 0 } => Ok(()),
                    Padding { time: 1, freq: 1 } => write!(f, " pad"),
                    Padding { time, freq } => write!(f, " pad={time},{freq}"),
                }
            }
            LayerSpec::Pool(p) => write!(f, "pool {}x{}", p.time, p.freq),
            LayerSpec::Flatten => write!(f, "flatten"),
            LayerSpec::Fc(FcWidth::Fixed(w)) => write!(f, "fc {w}"),
            LayerSpec::Fc(FcWidth::Output) => write!(f, "fc out"),
            LayerSpec::Softmax => write!(f, "softmax"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Number of trailing fc layers (output included) that are per-language.
    pub untied_fc: usize,
}

/// Channels × time × frequency of one network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputGeometry {
    pub channels: usize,
    pub time: usize,
    pub freq: usize,
}

impl InputGeometry {
    pub fn new(channels: usize, time: usize, freq: usize) -> Result<Self> {
        if channels == 0 || time == 0 || freq == 0 {
            return Err(Error::contract(format!(
                "input geometry {channels}x{time}x{freq} has a zero extent"
            )));
        }
        Ok(Self { channels, time, freq })
    }

    pub fn numel(&self) -> usize {
        self.channels * self.time * self.freq
    }
}

impl fmt::Display for InputGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.time, self.freq)
    }
}

impl FromStr for InputGeometry {
    type Err = Error;

    /// `CxTxF`, e.g. `3x17x40`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('x').collect();
        let bad = || Error::Config(format!("geometry '{s}' is not of the form CxTxF"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        InputGeometry::new(n[0], n[1], n[2])
    }
}

/// The column families of the very deep architecture table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Classic { maps: usize },
    Vb { extra_fc: bool },
    Vc { extra_fc: bool },
    Vd { extra_fc: bool },
    Wd { extra_fc: bool },
}

impl Preset {
    pub const NAMES: [&'static str; 9] = ["classic", "VB", "VBX", "VC", "VCX", "VD", "VDX", "WD", "WDX"];

    pub fn from_name(name: &str) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let (base, extra_fc) = match lower.strip_suffix('x') {
            Some(b) if matches!(b, "vb" | "vc" | "vd" | "wd") => (b, true),
            _ => (lower.as_str(), false),
        };
        Ok(match base {
            "classic" | "classic512" => Preset::Classic { maps: 512 },
            "classic256" => Preset::Classic { maps: 256 },
            "vb" => Preset::Vb { extra_fc },
            "vc" => Preset::Vc { extra_fc },
            "vd" => Preset::Vd { extra_fc },
            "wd" => Preset::Wd { extra_fc },
            _ => {
                return Err(Error::NotFound(format!(
                    "architecture preset '{name}' (known: {})",
                    Preset::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> String {
        let x = |b: bool| if b { "X" } else { "" };
        match *self {
            Preset::Classic { maps: 512 } => "classic".into(),
            Preset::Classic { maps } => format!("classic{maps}"),
            Preset::Vb { extra_fc } => format!("VB{}", x(extra_fc)),
            Preset::Vc { extra_fc } => format!("VC{}", x(extra_fc)),
            Preset::Vd { extra_fc } => format!("VD{}", x(extra_fc)),
            Preset::Wd { extra_fc } => format!("WD{}", x(extra_fc)),
        }
    }

    pub fn build(&self) -> ArchConfig {
        use LayerSpec as L;
        let none = Padding::NONE;
        let same = Padding::SAME3;
        let (convs, extra_fc) = match *self {
            Preset::Classic { maps } => (
                vec![
                    L::Conv { k_t: 9, k_f: 9, in_maps: 3, out_maps: maps, pad: none },
                    L::pool(1, 3),
                    L::Conv { k_t: 3, k_f: 4, in_maps: maps, out_maps: maps, pad: none },
                ],
                false,
            ),
            Preset::Vb { extra_fc } => (
                vec![
                    L::conv3(3, 64, none),
                    L::conv3(64, 64, none),
                    L::pool(1, 3),
                    L::conv3(64, 128, none),
                    L::conv3(128, 128, none),
                    L::pool(2, 2),
                ],
                extra_fc,
            ),
            Preset::Vc { extra_fc } => (
                vec![
                    L::conv3(3, 64, none),
                    L::conv3(64, 64, none),
                    L::pool(1, 2),
                    L::conv3(64, 128, none),
                    L::conv3(128, 128, none),
                    L::pool(2, 2),
                    L::conv3(128, 256, same),
                    L::conv3(256, 256, same),
                    L::pool(1, 2),
                ],
                extra_fc,
            ),
            Preset::Vd { extra_fc } => (
                vec![
                    L::conv3(3, 64, same),
                    L::conv3(64, 64, same),
                    L::pool(1, 2),
                    L::conv3(64, 128, same),
                    L::conv3(128, 128, same),
                    L::pool(1, 2),
                    L::conv3(128, 256, same),
                    L::conv3(256, 256, same),
                    L::pool(2, 2),
                    L::conv3(256, 512, same),
                    L::conv3(512, 512, same),
                    L::pool(2, 2),
                ],
                extra_fc,
            ),
            Preset::Wd { extra_fc } => (
                vec![
                    L::conv3(3, 64, same),
                    L::conv3(64, 64, same),
                    L::pool(1, 2),
                    L::conv3(64, 128, same),
                    L::conv3(128, 128, same),
                    L::pool(1, 2),
                    L::conv3(128, 256, same),
                    L::conv3(256, 256, same),
                    L::conv3(256, 256, same),
                    L::pool(2, 2),
                    L::conv3(256, 512, same),
                    L::conv3(512, 512, same),
                    L::conv3(512, 512, same),
                    L::pool(2, 2),
                ],
                extra_fc,
            ),
        };
        let mut layers = convs;
        layers.push(L::Flatten);
        let hidden = if extra_fc { 3 } else { 2 };
        layers.extend(std::iter::repeat(L::fc(HIDDEN_FC_WIDTH)).take(hidden));
        layers.push(L::Fc(FcWidth::Output));
        layers.push(L::Softmax);
        let untied_fc = hidden;
        ArchConfig {
            name: self.name(),
            layers,
            untied_fc,
        }
    }
}

impl ArchConfig {
    /// Preset name or architecture text.
    pub fn parse(text_or_preset: &str) -> Result<Self> {
        let trimmed = text_or_preset.trim();
        if !trimmed.contains('\n') && !trimmed.contains(' ') && !trimmed.is_empty() {
            return Ok(Preset::from_name(trimmed)?.build());
        }
        Self::parse_text(text_or_preset)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut layers = Vec::new();
        let mut untie: Option<(usize, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let layer = match tokens[0] {
                "name" => {
                    if tokens.len() != 2 {
                        return Err(err("expected `name NAME`".into()));
                    }
                    name = tokens[1].to_string();
                    continue;
                }
                "untie" => {
                    let n = match tokens.as_slice() {
                        [_, n] => n.parse().map_err(|_| err(format!("bad untie count '{n}'")))?,
                        _ => return Err(err("expected `untie N`".into())),
                    };
                    untie = Some((n, line_no));
                    continue;
                }
                "conv" => parse_conv(&tokens).map_err(err)?,
                "pool" => match tokens.as_slice() {
                    [_, size] => {
                        let (t, f) = parse_pair(size).map_err(err)?;
                        if t == 0 || f == 0 {
                            return Err(err("pool extents must be positive".into()));
                        }
                        LayerSpec::pool(t, f)
                    }
                    _ => return Err(err("expected `pool TxF`".into())),
                },
                "flatten" if tokens.len() == 1 => LayerSpec::Flatten,
                "softmax" if tokens.len() == 1 => LayerSpec::Softmax,
                "fc" => match tokens.as_slice() {
                    [_, "out"] => LayerSpec::Fc(FcWidth::Output),
                    [_, w] => match w.parse::<usize>() {
                        Ok(w) if w > 0 => LayerSpec::fc(w),
                        _ => return Err(err(format!("bad fc width '{w}'"))),
                    },
                    _ => return Err(err("expected `fc WIDTH` or `fc out`".into())),
                },
                other => return Err(err(format!("unknown layer '{other}'"))),
            };
            layers.push((layer, line_no));
        }

        // an implicit flatten sits in front of the first fc
        if !layers.iter().any(|(l, _)| *l == LayerSpec::Flatten) {
            if let Some(pos) = layers.iter().position(|(l, _)| matches!(l, LayerSpec::Fc(_))) {
                let line = layers[pos].1;
                layers.insert(pos, (LayerSpec::Flatten, line));
            }
        }
        validate_order(&layers)?;
        let fc_count = layers.iter().filter(|(l, _)| matches!(l, LayerSpec::Fc(_))).count();
        let untied_fc = match untie {
            None => fc_count - 1,
            Some((n, line)) => {
                if n == 0 || n >= fc_count {
                    return Err(Error::Parse {
                        line,
                        message: format!("untie count must be in 1..={} (the first fc is always shared)", fc_count - 1),
                    });
                }
                n
            }
        };
        Ok(ArchConfig {
            name,
            layers: layers.into_iter().map(|(l, _)| l).collect(),
            untied_fc,
        })
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count()
    }

    pub fn fc_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Fc(_))).count()
    }

    /// Index of the first layer that belongs to the per-language heads.
    pub fn untie_boundary(&self) -> usize {
        let shared_fc = self.fc_count() - self.untied_fc;
        let mut seen = 0;
        for (i, l) in self.layers.iter().enumerate() {
            if matches!(l, LayerSpec::Fc(_)) {
                if seen == shared_fc {
                    return i;
                }
                seen += 1;
            }
        }
        self.layers.len()
    }

    /// Replaces the input map count of the first convolution.
    pub fn with_input_channels(mut self, channels: usize) -> Self {
        if let Some(LayerSpec::Conv { in_maps, .. }) =
            self.layers.iter_mut().find(|l| matches!(l, LayerSpec::Conv { .. }))
        {
            *in_maps = channels;
        }
        self
    }

    /// Divides every feature-map count and hidden fc width by `divisor`
    /// (rounding down, never below 1). The input map count is left alone.
    pub fn scaled_down(mut self, divisor: usize) -> Self {
        let div = |v: usize| (v / divisor.max(1)).max(1);
        let mut first = true;
        for l in &mut self.layers {
            match l {
                LayerSpec::Conv { in_maps, out_maps, .. } => {
                    if !first {
                        *in_maps = div(*in_maps);
                    }
                    *out_maps = div(*out_maps);
                    first = false;
                }
                LayerSpec::Fc(FcWidth::Fixed(w)) => *w = div(*w),
                _ => {}
            }
        }
        self.name = format!("{}/{}", self.name, divisor);
        self
    }

    pub fn with_untied_fc(mut self, untied: usize) -> Result<Self> {
        let fc = self.fc_count();
        if untied == 0 || untied > fc {
            return Err(Error::contract(format!("cannot untie {untied} of {fc} fc layers")));
        }
        if untied == fc {
            return Err(Error::contract(
                "untying the first fully connected layer is rejected: it causes strong degradation; \
                 the first fc stays shared",
            ));
        }
        self.untied_fc = untied;
        Ok(self)
    }

    /// Text form accepted by [`ArchConfig::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = format!("name {}\n", self.name);
        for l in &self.layers {
            out.push_str(&l.to_string());
            out.push('\n');
        }
        out.push_str(&format!("untie {}\n", self.untied_fc));
        out
    }
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected AxB, got '{s}'"))?;
    let a = a.parse().map_err(|_| format!("bad extent '{a}'"))?;
    let b = b.parse().map_err(|_| format!("bad extent '{b}'"))?;
    Ok((a, b))
}

fn parse_conv(tokens: &[&str]) -> std::result::Result<LayerSpec, String> {
    if tokens.len() < 4 || tokens.len() > 5 {
        return Err("expected `conv KHxKW IN OUT [pad|pad=T,F]`".into());
    }
    let (k_t, k_f) = parse_pair(tokens[1])?;
    if k_t == 0 || k_f == 0 {
        return Err("kernel extents must be positive".into());
    }
    let maps = |s: &str| match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("bad map count '{s}'")),
    };
    let in_maps = maps(tokens[2])?;
    let out_maps = maps(tokens[3])?;
    let pad = match tokens.get(4) {
        None => Padding::NONE,
        Some(&"pad") => Padding::SAME3,
        Some(p) => {
            let spec = p.strip_prefix("pad=").ok_or_else(|| format!("bad padding '{p}'"))?;
            let (t, f) = spec.split_once(',').ok_or_else(|| format!("expected pad=T,F, got '{p}'"))?;
            Padding::new(
                t.parse().map_err(|_| format!("bad padding '{t}'"))?,
                f.parse().map_err(|_| format!("bad padding '{f}'"))?,
            )
        }
    };
    Ok(LayerSpec::Conv {
        k_t,
        k_f,
        in_maps,
        out_maps,
        pad,
    })
}

fn validate_order(layers: &[(LayerSpec, usize)]) -> Result<()> {
    let last_line = layers.last().map_or(1, |(_, l)| *l);
    let softmaxes: Vec<usize> = layers
        .iter()
        .enumerate()
        .filter(|(_, (l, _))| *l == LayerSpec::Softmax)
        .map(|(i, _)| i)
        .collect();
    match softmaxes.as_slice() {
        [i] if *i == layers.len() - 1 => {}
        [] => return Err(Error::Parse { line: last_line, message: "missing softmax".into() }),
        _ => {
            let offending = if softmaxes.len() > 1 { softmaxes[1] } else { softmaxes[0] };
            let (_, line) = layers[offending];
            return Err(Error::Parse {
                line,
                message: "exactly one softmax is allowed, as the final layer".into(),
            });
        }
    }
    let n = layers.len();
    if n < 2 || layers[n - 2].0 != LayerSpec::Fc(FcWidth::Output) {
        return Err(Error::Parse {
            line: layers[n - 1].1,
            message: "softmax must be preceded by `fc out`".into(),
        });
    }
    let mut dense = false;
    for (i, (l, line)) in layers.iter().enumerate() {
        match l {
            LayerSpec::Conv { .. } | LayerSpec::Pool(_) if dense => {
                return Err(Error::Parse { line: *line, message: "conv/pool after flatten".into() })
            }
            LayerSpec::Flatten if dense => {
                return Err(Error::Parse { line: *line, message: "duplicate flatten".into() })
            }
            LayerSpec::Flatten => dense = true,
            LayerSpec::Fc(FcWidth::Output) if i != n - 2 => {
                return Err(Error::Parse {
                    line: *line,
                    message: "`fc out` must be the last fc".into(),
                })
            }
            _ => {}
        }
    }
    if layers.iter().filter(|(l, _)| matches!(l, LayerSpec::Fc(_))).count() < 2 {
        return Err(Error::Parse {
            line: last_line,
            message: "need at least one shared fc before the output fc".into(),
        });
    }
    Ok(())
}

/// Output of one layer: feature maps before the flatten, a width after.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    Maps { channels: usize, time: usize, freq: usize },
    Width(usize),
}

impl fmt::Display for LayerShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerShape::Maps { channels, time, freq } => write!(f, "{channels}x{time}x{freq}"),
            LayerShape::Width(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeReport {
    /// Output shape after each layer, aligned with `ArchConfig::layers`.
    pub layers: Vec<LayerShape>,
    pub flatten_width: usize,
}

fn layer_label(index: usize, layer: &LayerSpec) -> String {
    format!("layer {index} ({layer})")
}

/// Walks the layer list applying the conv and pool shape rules.
///
/// `output_width` resolves `fc out`; pass `None` to report it as zero.
pub fn infer_shapes(config: &ArchConfig, geom: InputGeometry, output_width: Option<usize>) -> Result<ShapeReport> {
    let mut cur = LayerShape::Maps {
        channels: geom.channels,
        time: geom.time,
        freq: geom.freq,
    };
    let mut shapes = Vec::with_capacity(config.layers.len());
    let mut flatten_width = 0;
    for (i, layer) in config.layers.iter().enumerate() {
        cur = match (*layer, cur) {
            (
                LayerSpec::Conv { k_t, k_f, in_maps, out_maps, pad },
                LayerShape::Maps { channels, time, freq },
            ) => {
                if in_maps != channels {
                    return Err(Error::dim(format!("input maps of {}", layer_label(i, layer)), in_maps, channels));
                }
                let (pt, pf) = (time + 2 * pad.time, freq + 2 * pad.freq);
                if pt < k_t || pf < k_f {
                    return Err(Error::infeasible(
                        layer_label(i, layer),
                        format!("input {time}x{freq} (padded {pt}x{pf}) is smaller than the {k_t}x{k_f} kernel"),
                    ));
                }
                LayerShape::Maps {
                    channels: out_maps,
                    time: pt - k_t + 1,
                    freq: pf - k_f + 1,
                }
            }
            (LayerSpec::Pool(p), LayerShape::Maps { channels, time, freq }) => {
                let (t, f) = (time / p.time, freq / p.freq);
                if t == 0 || f == 0 {
                    return Err(Error::infeasible(
                        layer_label(i, layer),
                        format!("input {time}x{freq} is smaller than the {}x{} pool", p.time, p.freq),
                    ));
                }
                LayerShape::Maps { channels, time: t, freq: f }
            }
            (LayerSpec::Flatten, LayerShape::Maps { channels, time, freq }) => {
                flatten_width = channels * time * freq;
                LayerShape::Width(flatten_width)
            }
            (LayerSpec::Fc(FcWidth::Fixed(w)), LayerShape::Width(_)) => LayerShape::Width(w),
            (LayerSpec::Fc(FcWidth::Output), LayerShape::Width(_)) => LayerShape::Width(output_width.unwrap_or(0)),
            (LayerSpec::Softmax, s @ LayerShape::Width(_)) => s,
            _ => {
                return Err(Error::contract(format!(
                    "{} cannot follow a {cur} activation",
                    layer_label(i, layer)
                )))
            }
        };
        shapes.push(cur);
    }
    Ok(ShapeReport {
        layers: shapes,
        flatten_width,
    })
}

/// Shape of the weight and bias tensors of a weight layer, given its input shape.
fn weight_shapes(layer: &LayerSpec, input: LayerShape, output_width: usize) -> Option<(Vec<usize>, usize)> {
    match (*layer, input) {
        (LayerSpec::Conv { k_t, k_f, in_maps, out_maps, .. }, _) => Some((vec![out_maps, in_maps, k_t, k_f], out_maps)),
        (LayerSpec::Fc(w), LayerShape::Width(fan_in)) => {
            let out = match w {
                FcWidth::Fixed(w) => w,
                FcWidth::Output => output_width,
            };
            Some((vec![fan_in, out], out))
        }
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerParamCount {
    pub index: usize,
    pub layer: LayerSpec,
    pub weights: usize,
    pub biases: usize,
}

impl LayerParamCount {
    pub fn total(&self) -> usize {
        self.weights + self.biases
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<LayerParamCount>,
    pub conv_total: usize,
    pub fc_total: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.conv_total + self.fc_total
    }
}

/// `(layer index, layer, weight shape, bias length)` for every weight layer.
pub(crate) fn weight_layers(
    config: &ArchConfig,
    geom: InputGeometry,
    output_width: usize,
) -> Result<Vec<(usize, LayerSpec, Vec<usize>, usize)>> {
    let report = infer_shapes(config, geom, Some(output_width))?;
    let mut prev = LayerShape::Maps {
        channels: geom.channels,
        time: geom.time,
        freq: geom.freq,
    };
    let mut out = Vec::new();
    for (i, (layer, shape)) in config.layers.iter().zip(&report.layers).enumerate() {
        if let Some((w, b)) = weight_shapes(layer, prev, output_width) {
            out.push((i, *layer, w, b));
        }
        prev = *shape;
    }
    Ok(out)
}

pub fn count_params(config: &ArchConfig, geom: InputGeometry, output_width: usize) -> Result<ParamCount> {
    let mut per_layer = Vec::new();
    let (mut conv_total, mut fc_total) = (0, 0);
    for (index, layer, w, b) in weight_layers(config, geom, output_width)? {
        let c = LayerParamCount {
            index,
            layer,
            weights: w.iter().product(),
            biases: b,
        };
        if matches!(layer, LayerSpec::Conv { .. }) {
            conv_total += c.total();
        } else {
            fc_total += c.total();
        }
        per_layer.push(c);
    }
    Ok(ParamCount {
        per_layer,
        conv_total,
        fc_total,
    })
}

/// Half-width of the uniform initialization range: `(kW·kH·inMaps)^(-1/2)`.
/// Fully connected layers use `kW = kH = 1` and their fan-in as `inMaps`.
pub fn init_bound(k_t: usize, k_f: usize, in_maps: usize) -> f64 {
    1.0 / ((k_t * k_f * in_maps) as f64).sqrt()
}

/// Draws a weight tensor uniformly in `[-a, a]` for the given layer.
pub(crate) fn init_weight(shape: &[usize], layer: &LayerSpec, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let bound = match *layer {
        LayerSpec::Conv { k_t, k_f, in_maps, .. } => init_bound(k_t, k_f, in_maps),
        _ => init_bound(1, 1, shape[0]),
    } as f32;
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(shape.to_vec(), |_| dist.sample(rng))
}

/// Parameters for a single-output network: `layer{i}.w` / `layer{i}.b`
/// per weight layer in layer order. Biases start at zero.
pub fn init_params(config: &ArchConfig, geom: InputGeometry, output_width: usize, seed: u64) -> Result<ParamStore<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (i, layer, w, b) in weight_layers(config, geom, output_width)? {
        store.insert(format!("layer{i}.w"), init_weight(&w, &layer, &mut rng));
        store.insert(format!("layer{i}.b"), Tensor::zeros([b]));
    }
    Ok(store)
}
