//! Periodic convolutional surrogate `M_θ` with the global (`s1`) and spatial (`s2`)
//! log-variance heads, plus layer-wise spectral normalization for the constrained baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::autodiff::{NodeId, ParamGroup, ParamSizes, Shape, Tape};
use crate::error::{JawsError, Result};
use crate::field::check_grid;

/// Bounds applied to the `s2` log-variance map.
pub const S2_CLAMP: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// No uncertainty head (MSE-family methods).
    None,
    /// A single learnable log-variance shared by every grid point.
    Global,
    /// Two periodic conv layers on the detached penultimate features.
    Spatial { channels: usize, kernel: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub grid: usize,
    pub channels: usize,
    pub kernel: usize,
    /// Number of backbone conv layers (>= 2).
    pub depth: usize,
    pub head: HeadKind,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            grid: 128,
            channels: 32,
            kernel: 5,
            depth: 4,
            head: HeadKind::Spatial {
                channels: 16,
                kernel: 5,
            },
        }
    }
}

/// Position of one conv layer inside a flat parameter array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvLayer {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel
    }

    pub fn weight<'a>(&self, flat: &'a [f64]) -> &'a [f64] {
        &flat[self.weight_offset..self.weight_offset + self.weight_len()]
    }

    pub fn weight_mut<'a>(&self, flat: &'a mut [f64]) -> &'a mut [f64] {
        &mut flat[self.weight_offset..self.weight_offset + self.weight_len()]
    }

    pub fn bias<'a>(&self, flat: &'a [f64]) -> &'a [f64] {
        &flat[self.bias_offset..self.bias_offset + self.cout]
    }
}

/// One entry of the checkpoint layout manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub group: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub backbone: Vec<ConvLayer>,
    pub head: Vec<ConvLayer>,
    pub sizes: ParamSizes,
}

fn stack(dims: &[(usize, usize)], kernel: usize, start: usize) -> (Vec<ConvLayer>, usize) {
    let mut offset = start;
    let layers = dims
        .iter()
        .map(|&(cin, cout)| {
            let l = ConvLayer {
                cin,
                cout,
                kernel,
                weight_offset: offset,
                bias_offset: offset + cout * cin * kernel,
            };
            offset = l.bias_offset + cout;
            l
        })
        .collect();
    (layers, offset)
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        check_grid(self.grid)?;
        if self.depth < 2 || self.channels == 0 || self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(JawsError::InvalidConfig(format!(
                "need depth >= 2, channels >= 1 and an odd kernel (got {self:?})"
            )));
        }
        if self.kernel > self.grid {
            return Err(JawsError::InvalidConfig("kernel wider than grid".into()));
        }
        if let HeadKind::Spatial { channels, kernel } = self.head {
            if channels == 0 || kernel % 2 == 0 || kernel > self.grid {
                return Err(JawsError::InvalidConfig(format!(
                    "bad spatial head ({channels} channels, kernel {kernel})"
                )));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let c = self.channels;
        let mut dims = vec![(1, c)];
        dims.extend(std::iter::repeat_n((c, c), self.depth - 2));
        dims.push((c, 1));
        let (backbone, theta) = stack(&dims, self.kernel, 0);
        let (head, phi) = match self.head {
            HeadKind::None => (Vec::new(), 0),
            HeadKind::Global => (Vec::new(), 1),
            HeadKind::Spatial { channels, kernel } => {
                stack(&[(c, channels), (channels, 1)], kernel, 0)
            }
        };
        Layout {
            backbone,
            head,
            sizes: ParamSizes { theta, phi },
        }
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let layout = self.layout();
        let mut out = Vec::new();
        let mut push_layers = |prefix: &str, group: &str, layers: &[ConvLayer]| {
            for (i, l) in layers.iter().enumerate() {
                out.push(ManifestEntry {
                    name: format!("{prefix}.{i}.weight"),
                    group: group.into(),
                    offset: l.weight_offset,
                    shape: vec![l.cout, l.cin, l.kernel],
                });
                out.push(ManifestEntry {
                    name: format!("{prefix}.{i}.bias"),
                    group: group.into(),
                    offset: l.bias_offset,
                    shape: vec![l.cout],
                });
            }
        };
        push_layers("backbone", "theta", &layout.backbone);
        push_layers("head", "phi", &layout.head);
        if self.head == HeadKind::Global {
            out.push(ManifestEntry {
                name: "head.s2_global".into(),
                group: "phi".into(),
                offset: 0,
                shape: vec![1],
            });
        }
        out.push(ManifestEntry {
            name: "s1".into(),
            group: "s1".into(),
            offset: 0,
            shape: vec![1],
        });
        out
    }
}

/// Backbone weights `theta`, head weights `phi`, and the global log-variance `s1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub s1: f64,
}

/// Initialization offsets for the uncertainty parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyInit {
    pub s1: f64,
    pub s2_bias: f64,
}

impl ModelParams {
    /// Kaiming fan-in normal hidden layers, zero final layers, `s1 = 0`, zero `s2` bias.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        Self::init_with(arch, seed, UncertaintyInit::default())
    }

    pub fn init_with(arch: Architecture, seed: u64, unc: UncertaintyInit) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; layout.sizes.theta];
        let mut phi = vec![0.0; layout.sizes.phi];
        let fill = |flat: &mut [f64], layers: &[ConvLayer], rng: &mut ChaCha8Rng| {
            for l in &layers[..layers.len() - 1] {
                let std = (2.0 / (l.cin * l.kernel) as f64).sqrt();
                for w in l.weight_mut(flat) {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = std * z;
                }
            }
        };
        fill(&mut theta, &layout.backbone, &mut rng);
        match arch.head {
            HeadKind::None => {}
            HeadKind::Global => phi[0] = unc.s2_bias,
            HeadKind::Spatial { .. } => {
                fill(&mut phi, &layout.head, &mut rng);
                let last = layout.head[layout.head.len() - 1];
                phi[last.bias_offset] = unc.s2_bias;
            }
        }
        Ok(Self {
            arch,
            theta,
            phi,
            s1: unc.s1,
        })
    }

    pub fn sizes(&self) -> ParamSizes {
        ParamSizes {
            theta: self.theta.len(),
            phi: self.phi.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let sizes = self.arch.layout().sizes;
        if sizes != self.sizes() {
            return Err(JawsError::ArchMismatch(format!(
                "layout expects {sizes:?}, arrays have {:?}",
                self.sizes()
            )));
        }
        if !self.s1.is_finite() {
            return Err(JawsError::ArchMismatch("s1 is not finite".into()));
        }
        Ok(())
    }

    pub fn new_tape(&self) -> Tape {
        Tape::new(self.sizes())
    }

    /// Registers every parameter on `tape` once; the bound handles are reused across
    /// all forward passes recorded on that tape.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        let layout = self.arch.layout();
        let bind_layers = |tape: &mut Tape, layers: &[ConvLayer], group: ParamGroup, flat: &[f64]| {
            layers
                .iter()
                .map(|l| {
                    let w = tape.param(
                        group,
                        l.weight_offset,
                        l.weight(flat),
                        Shape::new(l.cout, l.cin * l.kernel),
                    )?;
                    let b = tape.param(group, l.bias_offset, l.bias(flat), Shape::vector(l.cout))?;
                    Ok(BoundLayer { w, b, kernel: l.kernel })
                })
                .collect::<Result<Vec<_>>>()
        };
        let backbone = bind_layers(tape, &layout.backbone, ParamGroup::Theta, &self.theta)?;
        let head = match self.arch.head {
            HeadKind::None => BoundHead::None,
            HeadKind::Global => {
                BoundHead::Global(tape.param(ParamGroup::Phi, 0, &self.phi, Shape::scalar())?)
            }
            HeadKind::Spatial { .. } => {
                BoundHead::Spatial(bind_layers(tape, &layout.head, ParamGroup::Phi, &self.phi)?)
            }
        };
        let s1 = tape.param(ParamGroup::S1, 0, &[self.s1], Shape::scalar())?;
        Ok(BoundParams {
            grid: self.arch.grid,
            backbone,
            head,
            s1,
        })
    }

    /// Records a full forward pass of `u` on a tape bound to these parameters.
    pub fn forward(&self, u: &[f64], tape: &mut Tape) -> Result<(BoundParams, ModelOutput)> {
        let bound = self.bind(tape)?;
        let out = bound.forward_values(tape, u)?;
        Ok((bound, out))
    }

    /// One-step prediction without keeping the tape.
    pub fn predict(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut tape = self.new_tape();
        let (_, out) = self.forward(u, &mut tape)?;
        Ok(tape.value(out.prediction).to_vec())
    }

    /// `s2(x)` for input `u`, if the model has an uncertainty head.
    pub fn s2_map(&self, u: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut tape = self.new_tape();
        let (_, out) = self.forward(u, &mut tape)?;
        Ok(out.s2.map(|s| {
            let v = tape.value(s);
            if v.len() == 1 {
                vec![v[0]; u.len()]
            } else {
                v.to_vec()
            }
        }))
    }

    /// Concatenated `[theta, phi, s1]`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.theta.len() + self.phi.len() + 1);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.phi);
        v.push(self.s1);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let (t, p) = (self.theta.len(), self.phi.len());
        assert_eq!(flat.len(), t + p + 1);
        self.theta.copy_from_slice(&flat[..t]);
        self.phi.copy_from_slice(&flat[t..t + p]);
        self.s1 = flat[t + p];
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub w: NodeId,
    pub b: NodeId,
    pub kernel: usize,
}

#[derive(Clone, Debug)]
pub enum BoundHead {
    None,
    Global(NodeId),
    Spatial(Vec<BoundLayer>),
}

/// Parameter nodes registered on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub grid: usize,
    pub backbone: Vec<BoundLayer>,
    pub head: BoundHead,
    pub s1: NodeId,
}

/// Nodes produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    pub input: NodeId,
    pub prediction: NodeId,
    /// Penultimate backbone feature map `[channels, N]`.
    pub features: NodeId,
    /// Clamped log-variance: `[1, N]` for the spatial head, scalar for the global one.
    pub s2: Option<NodeId>,
}

impl BoundParams {
    pub fn forward_values(&self, tape: &mut Tape, u: &[f64]) -> Result<ModelOutput> {
        if u.len() != self.grid {
            return Err(JawsError::ShapeMismatch {
                expected: self.grid,
                got: u.len(),
            });
        }
        let input = tape.input(u.to_vec(), Shape::vector(self.grid));
        self.forward(tape, input)
    }

    /// Forward pass from an existing node (used for unrolled rollouts on one tape).
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<ModelOutput> {
        let shape = tape.shape(input);
        if shape != Shape::vector(self.grid) {
            return Err(JawsError::ShapeMismatch {
                expected: self.grid,
                got: shape.len(),
            });
        }
        let (features, prediction) = self.backbone(tape, input);

        let s2 = match &self.head {
            BoundHead::None => None,
            BoundHead::Global(s) => Some(tape.clamp(*s, S2_CLAMP.0, S2_CLAMP.1)),
            BoundHead::Spatial(layers) => {
                let mut g = tape.detach(features);
                for (i, layer) in layers.iter().enumerate() {
                    g = tape.conv(g, layer.w, Some(layer.b), layer.kernel);
                    if i + 1 < layers.len() {
                        g = tape.silu(g);
                    }
                }
                Some(tape.clamp(g, S2_CLAMP.0, S2_CLAMP.1))
            }
        };
        Ok(ModelOutput {
            input,
            prediction,
            features,
            s2,
        })
    }
}

impl BoundParams {
    /// Backbone-only pass (no uncertainty head); returns the prediction node.
    pub fn predict_node(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let shape = tape.shape(input);
        if shape != Shape::vector(self.grid) {
            return Err(JawsError::ShapeMismatch {
                expected: self.grid,
                got: shape.len(),
            });
        }
        Ok(self.backbone(tape, input).1)
    }

    fn backbone(&self, tape: &mut Tape, input: NodeId) -> (NodeId, NodeId) {
        let last = self.backbone.len() - 1;
        let mut h = input;
        for layer in &self.backbone[..last] {
            let z = tape.conv(h, layer.w, Some(layer.b), layer.kernel);
            h = tape.silu(z);
        }
        let out = &self.backbone[last];
        let increment = tape.conv(h, out.w, Some(out.b), out.kernel);
        (h, tape.add(input, increment))
    }
}

/// Warm-start vectors for the per-layer power iterations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectralNormState {
    vectors: Vec<Vec<f64>>,
}

impl SpectralNormState {
    pub fn new(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = arch
            .layout()
            .backbone
            .iter()
            .map(|l| {
                (0..l.cin * arch.grid)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self { vectors }
    }
}

/// Estimates the operator 2-norm of a bias-free periodic conv layer on an `n`-point grid
/// by power iteration on `AᵀA`, updating `v` in place (warm start).
pub fn conv_operator_norm(
    weight: &[f64],
    layer: &ConvLayer,
    n: usize,
    v: &mut [f64],
    iters: usize,
) -> f64 {
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(v);
    if nv == 0.0 || weight.iter().all(|w| *w == 0.0) {
        return 0.0;
    }
    v.iter_mut().for_each(|a| *a /= nv);
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let av = kernels::conv_forward(v, layer.cin, n, weight, layer.cout, layer.kernel, None);
        sigma = norm(&av);
        if sigma == 0.0 {
            return 0.0;
        }
        let atav = kernels::conv_input_adjoint(&av, layer.cout, n, weight, layer.cin, layer.kernel);
        let na = norm(&atav);
        if na == 0.0 {
            return sigma;
        }
        for (a, b) in v.iter_mut().zip(&atav) {
            *a = b / na;
        }
    }
    let av = kernels::conv_forward(v, layer.cin, n, weight, layer.cout, layer.kernel, None);
    sigma.max(norm(&av))
}

/// Divides every backbone layer's weight by its estimated operator norm.
/// Zero layers are left untouched.
pub fn spectral_normalize(params: &ModelParams, n_power_iters: usize) -> Result<ModelParams> {
    if n_power_iters == 0 {
        return Err(JawsError::InvalidConfig("n_power_iters must be >= 1".into()));
    }
    let mut out = params.clone();
    let mut state = SpectralNormState::new(&params.arch, 0x5eed);
    rescale_layers(&mut out, &mut state, n_power_iters, |sigma| sigma);
    Ok(out)
}

/// Projects each backbone layer onto `‖W‖ <= 1` (divides only when the estimate exceeds 1).
/// Returns the per-layer norm estimates taken before projection.
pub fn project_spectral(
    params: &mut ModelParams,
    state: &mut SpectralNormState,
    n_power_iters: usize,
) -> Vec<f64> {
    rescale_layers(params, state, n_power_iters, |sigma| sigma.max(1.0))
}

fn rescale_layers(
    params: &mut ModelParams,
    state: &mut SpectralNormState,
    iters: usize,
    divisor: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let n = params.arch.grid;
    let layout = params.arch.layout();
    layout
        .backbone
        .iter()
        .zip(state.vectors.iter_mut())
        .map(|(layer, v)| {
            let sigma = conv_operator_norm(layer.weight(&params.theta), layer, n, v, iters);
            if sigma > 0.0 {
                let d = divisor(sigma);
                layer
                    .weight_mut(&mut params.theta)
                    .iter_mut()
                    .for_each(|w| *w /= d);
            }
            sigma
        })
        .collect()
}

/// Per-layer operator norm estimates with a fresh start vector.
pub fn layer_norms(params: &ModelParams, iters: usize) -> Vec<f64> {
    let mut state = SpectralNormState::new(&params.arch, 0x5eed);
    let n = params.arch.grid;
    params
        .arch
        .layout()
        .backbone
        .iter()
        .zip(state.vectors.iter_mut())
        .map(|(layer, v)| conv_operator_norm(layer.weight(&params.theta), layer, n, v, iters))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> Architecture {
        Architecture {
            grid: 16,
            channels: 4,
            kernel: 3,
            depth: 3,
            head: HeadKind::Spatial {
                channels: 2,
                kernel: 3,
            },
        }
    }

    #[test]
    fn manifest_covers_flat_arrays() {
        let arch = small_arch();
        let layout = arch.layout();
        let theta: usize = arch
            .manifest()
            .iter()
            .filter(|e| e.group == "theta")
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        let phi: usize = arch
            .manifest()
            .iter()
            .filter(|e| e.group == "phi")
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        assert_eq!(theta, layout.sizes.theta);
        assert_eq!(phi, layout.sizes.phi);
    }

    #[test]
    fn init_is_deterministic_and_identity() {
        let a = ModelParams::init(small_arch(), 9).unwrap();
        let b = ModelParams::init(small_arch(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.s1, 0.0);
        let u: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(a.predict(&u).unwrap(), u);
        assert!(a.s2_map(&u).unwrap().unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let p = ModelParams::init(small_arch(), 1).unwrap();
        assert!(matches!(
            p.predict(&[0.0; 8]),
            Err(JawsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn scalar_layer_normalizes_to_unit() {
        let arch = Architecture {
            grid: 8,
            channels: 1,
            kernel: 1,
            depth: 2,
            head: HeadKind::None,
        };
        let mut p = ModelParams::init(arch, 0).unwrap();
        p.theta = vec![-3.5, 0.1, 0.25, 0.0];
        let q = spectral_normalize(&p, 5).unwrap();
        assert!((q.theta[0].abs() - 1.0).abs() < 1e-12);
        assert!((q.theta[2].abs() - 1.0).abs() < 1e-12);
        // biases untouched
        assert_eq!(q.theta[1], 0.1);
    }
}
