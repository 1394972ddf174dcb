//! Search-space definition and random configuration sampling.
//!
//! Ranges, scales and categories follow the published exploration table:
//! learning rate and its decay are log-uniform, everything else is uniform
//! (integers inclusive). Full-scale experiment counts per family are 1000
//! (DNN), 256 (CNN) and 128 for each LSTM variant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::ModelFamily;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamKind {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    IntUniform { lo: i64, hi: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamCategory {
    Learning,
    Regularisation,
    Architecture,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub category: ParamCategory,
}

impl ParamSpec {
    fn log(name: &'static str, lo: f64, hi: f64, category: ParamCategory) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::LogUniform { lo, hi },
            category,
        }
    }

    fn real(name: &'static str, lo: f64, hi: f64, category: ParamCategory) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Uniform { lo, hi },
            category,
        }
    }

    fn int(name: &'static str, lo: i64, hi: i64, category: ParamCategory) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::IntUniform { lo, hi },
            category,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ParamKind::LogUniform { lo, hi } => {
                let u = rng.gen_range(lo.log10()..=hi.log10());
                10f64.powf(u)
            }
            ParamKind::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            ParamKind::IntUniform { lo, hi } => rng.gen_range(lo..=hi) as f64,
        }
    }

    /// Transform a raw value into the coordinate in which it was sampled
    /// uniformly (log10 for log-scaled parameters).
    pub fn to_uniform_coord(&self, value: f64) -> f64 {
        match self.kind {
            ParamKind::LogUniform { .. } => value.log10(),
            _ => value,
        }
    }

    /// Bounds in the uniform coordinate; integer parameters get unit-width
    /// boxes `[lo, hi + 1)`.
    pub fn uniform_bounds(&self) -> (f64, f64) {
        match self.kind {
            ParamKind::LogUniform { lo, hi } => (lo.log10(), hi.log10()),
            ParamKind::Uniform { lo, hi } => (lo, hi),
            ParamKind::IntUniform { lo, hi } => (lo as f64, (hi + 1) as f64),
        }
    }
}

/// One family's sampling space.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub family: ModelFamily,
    pub params: Vec<ParamSpec>,
}

use ParamCategory::{Architecture, Learning, Regularisation};

impl SearchSpace {
    pub fn for_family(family: ModelFamily) -> Self {
        let params = match family {
            ModelFamily::Dnn => vec![
                ParamSpec::log("lr", 1e-4, 1e-1, Learning),
                ParamSpec::log("lr_decay", 1e-5, 1e-3, Learning),
                ParamSpec::real("momentum", 0.0, 0.99, Regularisation),
                ParamSpec::real("max_in", 0.5, 4.0, Regularisation),
                ParamSpec::int("layers", 1, 5, Architecture),
                ParamSpec::int("units", 64, 2048, Architecture),
            ],
            ModelFamily::Cnn => vec![
                ParamSpec::log("lr", 1e-4, 1e-1, Learning),
                ParamSpec::log("lr_decay", 1e-5, 1e-3, Learning),
                ParamSpec::real("momentum", 0.0, 0.99, Regularisation),
                ParamSpec::real("max_in", 0.5, 4.0, Regularisation),
                ParamSpec::int("layers", 1, 3, Architecture),
                ParamSpec::int("units", 64, 2048, Architecture),
                ParamSpec::int("conv_layers", 1, 3, Architecture),
                ParamSpec::int("kw1", 3, 9, Architecture),
                ParamSpec::int("kw2", 3, 5, Architecture),
                ParamSpec::int("kw3", 3, 3, Architecture),
                ParamSpec::int("nf1", 16, 128, Architecture),
                ParamSpec::int("nf2", 16, 128, Architecture),
                ParamSpec::int("nf3", 16, 128, Architecture),
            ],
            ModelFamily::LstmF => vec![
                ParamSpec::log("lr", 1e-3, 1e-1, Learning),
                ParamSpec::int("unroll", 8, 64, Learning),
                ParamSpec::real("max_in", 0.5, 4.0, Regularisation),
                ParamSpec::real("p_carry", 0.0, 1.0, Regularisation),
                ParamSpec::int("layers", 1, 3, Architecture),
                ParamSpec::int("units", 64, 384, Architecture),
            ],
            ModelFamily::LstmS => vec![
                ParamSpec::log("lr", 1e-3, 1e-1, Learning),
                ParamSpec::int("unroll", 32, 196, Learning),
                ParamSpec::real("max_in", 0.5, 4.0, Regularisation),
                ParamSpec::real("p_carry", 0.0, 1.0, Regularisation),
                ParamSpec::int("layers", 1, 3, Architecture),
                ParamSpec::int("units", 64, 384, Architecture),
            ],
            ModelFamily::BLstmS => vec![
                ParamSpec::log("lr", 1e-3, 1e-1, Learning),
                ParamSpec::int("unroll", 32, 196, Learning),
                ParamSpec::real("max_in", 0.5, 4.0, Regularisation),
                ParamSpec::real("p_carry", 0.0, 1.0, Regularisation),
                ParamSpec::int("layers", 1, 1, Architecture),
                ParamSpec::int("units", 64, 384, Architecture),
            ],
        };
        SearchSpace { family, params }
    }

    /// Experiment count per family in the published full-scale protocol.
    pub fn full_scale_experiments(family: ModelFamily) -> usize {
        match family {
            ModelFamily::Dnn => 1000,
            ModelFamily::Cnn => 256,
            ModelFamily::LstmF | ModelFamily::LstmS | ModelFamily::BLstmS => 128,
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Draw one configuration; every value lands inside its bounds and
    /// constraints (fixed parameters have collapsed ranges).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Hyperparameters {
        let mut h = Hyperparameters::empty(self.family);
        for spec in &self.params {
            h.set(spec.name, spec.sample(rng));
        }
        h
    }
}

/// One sampled configuration covering every searched field of its family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub family: ModelFamily,
    pub lr: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub max_in_norm: f64,
    pub p_carry: f64,
    /// Mini-batch unroll length L (samples, or frames for the frame LSTM).
    pub unroll: usize,
    pub layers: usize,
    pub units: usize,
    pub conv_layers: usize,
    pub kernel_widths: [usize; 3],
    pub num_filters: [usize; 3],
}

impl Hyperparameters {
    fn empty(family: ModelFamily) -> Self {
        Hyperparameters {
            family,
            lr: 0.0,
            lr_decay: 0.0,
            momentum: 0.0,
            max_in_norm: 1.0,
            p_carry: 0.0,
            unroll: 0,
            layers: 1,
            units: 1,
            conv_layers: 0,
            kernel_widths: [0; 3],
            num_filters: [0; 3],
        }
    }

    fn set(&mut self, name: &str, value: f64) {
        match name {
            "lr" => self.lr = value,
            "lr_decay" => self.lr_decay = value,
            "momentum" => self.momentum = value,
            "max_in" => self.max_in_norm = value,
            "p_carry" => self.p_carry = value,
            "unroll" => self.unroll = value as usize,
            "layers" => self.layers = value as usize,
            "units" => self.units = value as usize,
            "conv_layers" => self.conv_layers = value as usize,
            "kw1" => self.kernel_widths[0] = value as usize,
            "kw2" => self.kernel_widths[1] = value as usize,
            "kw3" => self.kernel_widths[2] = value as usize,
            "nf1" => self.num_filters[0] = value as usize,
            "nf2" => self.num_filters[1] = value as usize,
            "nf3" => self.num_filters[2] = value as usize,
            other => unreachable!("unknown parameter {other}"),
        }
    }

    /// Raw value of a searched field by its space name.
    pub fn get(&self, name: &str) -> f64 {
        match name {
            "lr" => self.lr,
            "lr_decay" => self.lr_decay,
            "momentum" => self.momentum,
            "max_in" => self.max_in_norm,
            "p_carry" => self.p_carry,
            "unroll" => self.unroll as f64,
            "layers" => self.layers as f64,
            "units" => self.units as f64,
            "conv_layers" => self.conv_layers as f64,
            "kw1" => self.kernel_widths[0] as f64,
            "kw2" => self.kernel_widths[1] as f64,
            "kw3" => self.kernel_widths[2] as f64,
            "nf1" => self.num_filters[0] as f64,
            "nf2" => self.num_filters[1] as f64,
            "nf3" => self.num_filters[2] as f64,
            other => unreachable!("unknown parameter {other}"),
        }
    }

    /// Sensible desk-scale defaults per family (used when training a single
    /// model without a search).
    pub fn default_for(family: ModelFamily) -> Self {
        let mut h = Hyperparameters::empty(family);
        h.max_in_norm = 2.0;
        match family {
            ModelFamily::Dnn => {
                h.lr = 0.05;
                h.lr_decay = 1e-4;
                h.momentum = 0.9;
                h.layers = 2;
                h.units = 128;
            }
            ModelFamily::Cnn => {
                h.lr = 0.05;
                h.lr_decay = 1e-4;
                h.momentum = 0.9;
                h.layers = 1;
                h.units = 64;
                h.conv_layers = 2;
                h.kernel_widths = [5, 5, 3];
                h.num_filters = [16, 32, 16];
            }
            ModelFamily::LstmF => {
                h.lr = 0.03;
                h.unroll = 16;
                h.p_carry = 0.5;
                h.layers = 1;
                h.units = 64;
            }
            ModelFamily::LstmS => {
                h.lr = 0.03;
                h.unroll = 64;
                h.p_carry = 0.5;
                h.layers = 1;
                h.units = 64;
            }
            ModelFamily::BLstmS => {
                h.lr = 0.03;
                h.unroll = 64;
                h.layers = 1;
                h.units = 64;
            }
        }
        h
    }
}
