//! Shared convolutional stem with per-language fully connected heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{init_weight, weight_layers, ArchConfig, FcWidth, InputGeometry, LayerSpec};
use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::{Padding, PoolParams};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Binding {
    Conv { w: ParamId, b: ParamId, pad: Padding },
    Pool(PoolParams),
    Flatten,
    Fc { w: ParamId, b: ParamId, relu: bool },
    Softmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageHead {
    pub id: u16,
    pub classes: usize,
    layers: Vec<Binding>,
}

/// Layers below the untie boundary are shared by every language; the rest
/// are replicated once per language, each ending in its own output layer.
#[derive(Clone, Debug)]
pub struct MultilingualNetwork {
    config: ArchConfig,
    geometry: InputGeometry,
    params: ParamStore<f32>,
    stem: Vec<Binding>,
    heads: Vec<LanguageHead>,
    shared_params: usize,
}

/// Convenience for [`MultilingualNetwork::new`] with an explicit untie count.
pub fn partition_network(
    config: &ArchConfig,
    untied_fc: usize,
    geometry: InputGeometry,
    languages: &[(u16, usize)],
    seed: u64,
) -> Result<MultilingualNetwork> {
    MultilingualNetwork::new(&config.clone().with_untied_fc(untied_fc)?, geometry, languages, seed)
}

impl MultilingualNetwork {
    /// `languages` lists `(id, output classes)`; heads are kept in id order.
    /// Weights are drawn from one stream seeded by `seed`: stem first, then
    /// each head in id order.
    pub fn new(config: &ArchConfig, geometry: InputGeometry, languages: &[(u16, usize)], seed: u64) -> Result<Self> {
        if languages.is_empty() {
            return Err(Error::contract("network needs at least one language"));
        }
        let mut langs = languages.to_vec();
        langs.sort_unstable_by_key(|l| l.0);
        if langs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::contract("duplicate language id"));
        }
        config.clone().with_untied_fc(config.untied_fc)?;
        let boundary = config.untie_boundary();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();

        let stem_weights = weight_layers(config, geometry, langs[0].1)?;
        let mut stem_params = std::collections::HashMap::new();
        for (i, layer, w, b) in stem_weights.into_iter().filter(|e| e.0 < boundary) {
            let wid = params.insert(format!("shared.layer{i}.w"), init_weight(&w, &layer, &mut rng));
            let bid = params.insert(format!("shared.layer{i}.b"), Tensor::zeros([b]));
            stem_params.insert(i, (wid, bid));
        }
        let shared_params = params.len();
        let stem = bind(&config.layers[..boundary], 0, &stem_params);

        let mut heads = Vec::with_capacity(langs.len());
        for &(id, classes) in &langs {
            if classes == 0 {
                return Err(Error::contract(format!("language {id} has no classes")));
            }
            let mut ids = std::collections::HashMap::new();
            for (i, layer, w, b) in weight_layers(config, geometry, classes)?.into_iter().filter(|e| e.0 >= boundary) {
                let wid = params.insert(format!("lang{id}.layer{i}.w"), init_weight(&w, &layer, &mut rng));
                let bid = params.insert(format!("lang{id}.layer{i}.b"), Tensor::zeros([b]));
                ids.insert(i, (wid, bid));
            }
            heads.push(LanguageHead {
                id,
                classes,
                layers: bind(&config.layers[boundary..], boundary, &ids),
            });
        }
        Ok(Self {
            config: config.clone(),
            geometry,
            params,
            stem,
            heads,
            shared_params,
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn geometry(&self) -> InputGeometry {
        self.geometry
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn heads(&self) -> &[LanguageHead] {
        &self.heads
    }

    /// `(id, classes)` in id order.
    pub fn languages(&self) -> Vec<(u16, usize)> {
        self.heads.iter().map(|h| (h.id, h.classes)).collect()
    }

    pub fn language_index(&self, id: u16) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.id == id)
            .ok_or_else(|| Error::NotFound(format!("language {id} has no head")))
    }

    /// Number of weight layers in the shared stem and in each head.
    pub fn weight_layer_split(&self) -> (usize, usize) {
        let count = |b: &[Binding]| b.iter().filter(|l| matches!(l, Binding::Conv { .. } | Binding::Fc { .. })).count();
        (count(&self.stem), count(&self.heads[0].layers))
    }

    pub fn is_shared(&self, id: ParamId) -> bool {
        id.0 < self.shared_params
    }

    pub fn shared_param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.shared_params).map(ParamId)
    }

    pub fn head_param_ids(&self, language: u16) -> Result<Vec<ParamId>> {
        let prefix = format!("lang{language}.");
        self.language_index(language)?;
        Ok(self
            .params
            .iter()
            .filter(|(_, p)| p.name.starts_with(&prefix))
            .map(|(id, _)| id)
            .collect())
    }

    /// Records the forward pass for one language and returns the logits.
    pub fn forward<'a>(&'a self, tape: &mut Tape<'a, f32>, input: Var, language: u16) -> Result<Var> {
        let head = &self.heads[self.language_index(language)?];
        let mut x = input;
        for b in self.stem.iter().chain(&head.layers) {
            x = match *b {
                Binding::Conv { w, b, pad } => {
                    let (w, b) = (tape.param(&self.params, w), tape.param(&self.params, b));
                    let y = tape.conv2d(x, w, b, pad)?;
                    tape.relu(y)
                }
                Binding::Pool(p) => tape.maxpool2d(x, p)?,
                Binding::Flatten => tape.flatten(x)?,
                Binding::Fc { w, b, relu } => {
                    let (w, b) = (tape.param(&self.params, w), tape.param(&self.params, b));
                    let y = tape.affine(x, w, b)?;
                    if relu {
                        tape.relu(y)
                    } else {
                        y
                    }
                }
                Binding::Softmax => x,
            };
        }
        Ok(x)
    }

    /// Mean cross-entropy of a batch, recorded on `tape`.
    pub fn loss<'a>(&'a self, tape: &mut Tape<'a, f32>, inputs: &'a Tensor<f32>, targets: &[usize], language: u16) -> Result<Var> {
        let x = tape.constant(inputs);
        let logits = self.forward(tape, x, language)?;
        tape.softmax_xent(logits, targets)
    }

    /// Logits for a batch `N × C × T × F`.
    pub fn logits(&self, inputs: &Tensor<f32>, language: u16) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.constant(inputs);
        let y = self.forward(&mut tape, x, language)?;
        Ok(tape.to_tensor(y))
    }

    /// Replaces parameter values by name; every parameter must be supplied
    /// with its exact shape.
    pub fn load_params<'b>(&mut self, mut lookup: impl FnMut(&str) -> Option<(&'b [usize], &'b [f32])>) -> Result<()> {
        for p in self.params.iter_mut() {
            let (shape, data) = lookup(&p.name).ok_or_else(|| Error::incompatible("parameter set", &p.name, "missing"))?;
            if shape != p.tensor.shape() {
                return Err(Error::incompatible(
                    format!("shape of {}", p.name),
                    format!("{:?}", p.tensor.shape()),
                    format!("{shape:?}"),
                ));
            }
            p.tensor.data_mut().copy_from_slice(data);
            p.tensor.clear_grad();
        }
        Ok(())
    }
}

fn bind(layers: &[LayerSpec], offset: usize, ids: &std::collections::HashMap<usize, (ParamId, ParamId)>) -> Vec<Binding> {
    layers
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let i = k + offset;
            match *l {
                LayerSpec::Conv { pad, .. } => {
                    let (w, b) = ids[&i];
                    Binding::Conv { w, b, pad }
                }
                LayerSpec::Pool(p) => Binding::Pool(p),
                LayerSpec::Flatten => Binding::Flatten,
                LayerSpec::Fc(width) => {
                    let (w, b) = ids[&i];
                    Binding::Fc {
                        w,
                        b,
                        relu: width != FcWidth::Output,
                    }
                }
                LayerSpec::Softmax => Binding::Softmax,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ArchConfig, InputGeometry) {
        let cfg = ArchConfig::parse("VBX").unwrap().scaled_down(16);
        (cfg, InputGeometry::new(3, 11, 40).unwrap())
    }

    #[test]
    fn vbx_untie_three() {
        let (cfg, g) = small();
        let net = partition_network(&cfg, 3, g, &[(0, 5), (1, 7)], 1).unwrap();
        assert_eq!(net.weight_layer_split(), (5, 3));
        assert_eq!(net.languages(), vec![(0, 5), (1, 7)]);
    }

    #[test]
    fn untie_one_keeps_only_output_per_language() {
        let (cfg, g) = small();
        let net = partition_network(&cfg, 1, g, &[(0, 5)], 1).unwrap();
        assert_eq!(net.weight_layer_split(), (7, 1));
    }

    #[test]
    fn untying_first_fc_rejected() {
        let (cfg, g) = small();
        let err = partition_network(&cfg, 4, g, &[(0, 5)], 1).unwrap_err();
        assert!(err.to_string().contains("strong degradation"), "{err}");
    }

    #[test]
    fn heads_are_disjoint_and_sized() {
        let (cfg, g) = small();
        let net = partition_network(&cfg, 2, g, &[(3, 4), (9, 6)], 1).unwrap();
        let a = net.head_param_ids(3).unwrap();
        let b = net.head_param_ids(9).unwrap();
        assert!(a.iter().all(|id| !b.contains(id) && !net.is_shared(*id)));
        let x = Tensor::zeros([2, 3, 11, 40]);
        assert_eq!(net.logits(&x, 9).unwrap().shape(), &[2, 6]);
        assert!(matches!(net.logits(&x, 5), Err(Error::NotFound(_))));
    }

    #[test]
    fn stem_init_independent_of_language_count() {
        let (cfg, g) = small();
        let one = partition_network(&cfg, 3, g, &[(0, 5)], 11).unwrap();
        let two = partition_network(&cfg, 3, g, &[(0, 5), (1, 5)], 11).unwrap();
        for id in one.shared_param_ids() {
            assert_eq!(one.params().get(id), two.params().get(id));
        }
    }
}
