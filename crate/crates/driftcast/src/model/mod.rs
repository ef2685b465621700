//! Adaptive spatio-temporal forecasting network.
//!
//! The forward path is: input embedding, optional per-location bottleneck
//! adapters, a gated temporal-convolution + graph-diffusion stack, and a
//! linear decoder producing the `H`-step forecast. Parameters are
//! partitioned into the traditional set (embedding, ST stack, decoder) and
//! the adapter set; the online phase fine-tunes only the adapter set.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Model dimensions and stack layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of locations (graph nodes) N.
    pub n_locations: usize,
    /// Look-back window length L.
    pub look_back: usize,
    /// Forecast horizon H.
    pub horizon: usize,
    /// Feature dimension d.
    pub n_features: usize,
    /// Embedding width d_h (also the residual channel count of the stack).
    pub embed_dim: usize,
    /// Width d_o of the representation handed to the decoder.
    pub st_output_dim: usize,
    /// Adapter bottleneck width d_m.
    pub adapter_dim: usize,
    /// Number of gated conv + diffusion blocks; block b uses dilation 2^b.
    pub st_blocks: usize,
    /// Graph diffusion steps K (K = 0 disables spatial mixing).
    pub diffusion_steps: usize,
    /// Temporal kernel size k.
    pub kernel_size: usize,
    /// One adapter shared by all locations instead of one per location.
    pub adapter_shared: bool,
}

impl ModelConfig {
    /// Reference hyperparameters: L = H = 12, d_h = 32, d_o = 256, d_m = 4,
    /// two blocks with dilations 1 and 2, K = 2, kernel 2.
    pub fn reference(n_locations: usize, n_features: usize) -> Self {
        Self {
            n_locations,
            look_back: 12,
            horizon: 12,
            n_features,
            embed_dim: 32,
            st_output_dim: 256,
            adapter_dim: 4,
            st_blocks: 2,
            diffusion_steps: 2,
            kernel_size: 2,
            adapter_shared: false,
        }
    }

    /// Receptive field of the temporal stack: `1 + (k-1) * (2^blocks - 1)`.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * ((1 << self.st_blocks) - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_locations", self.n_locations),
            ("look_back", self.look_back),
            ("horizon", self.horizon),
            ("n_features", self.n_features),
            ("embed_dim", self.embed_dim),
            ("st_output_dim", self.st_output_dim),
            ("adapter_dim", self.adapter_dim),
            ("st_blocks", self.st_blocks),
            ("kernel_size", self.kernel_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.adapter_dim >= self.embed_dim {
            return Err(Error::Config(format!(
                "adapter_dim {} must be a bottleneck (< embed_dim {})",
                self.adapter_dim, self.embed_dim
            )));
        }
        if self.look_back < self.receptive_field() {
            return Err(Error::Config(format!(
                "look_back {} shorter than the stack's receptive field {}",
                self.look_back,
                self.receptive_field()
            )));
        }
        Ok(())
    }
}

/// Spatial adjacency with its random-walk normalization `D^-1 (A + I)`.
///
/// The self-loop keeps isolated nodes well-defined; every row of the
/// normalized form sums to 1.
#[derive(Clone, Debug)]
pub struct AdjacencyMatrix {
    raw: Tensor,
    normalized: Tensor,
}

impl AdjacencyMatrix {
    pub fn new(raw: Tensor) -> Result<Self> {
        let shape = raw.shape();
        if shape.len() != 2 || shape[0] != shape[1] {
            return Err(Error::ShapeMismatch {
                op: "adjacency",
                lhs: shape.to_vec(),
                rhs: shape.to_vec(),
            });
        }
        if raw.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Numeric(
                "adjacency entries must be finite and non-negative".into(),
            ));
        }
        let n = shape[0];
        let mut norm = raw.data().to_vec();
        for i in 0..n {
            norm[i * n + i] += 1.0;
            let row_sum: f64 = norm[i * n..(i + 1) * n].iter().sum();
            for v in &mut norm[i * n..(i + 1) * n] {
                *v /= row_sum;
            }
        }
        Ok(Self {
            raw,
            normalized: Tensor::from_vec(vec![n, n], norm)?,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Tensor::zeros(vec![n, n])).expect("zero matrix is valid")
    }

    pub fn n_locations(&self) -> usize {
        self.raw.shape()[0]
    }

    pub fn raw(&self) -> &Tensor {
        &self.raw
    }

    /// Row-stochastic normalized form.
    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }
}

#[derive(Clone)]
struct AdapterIds {
    down: ParamId,
    up: ParamId,
}

#[derive(Clone)]
struct BlockIds {
    filter: ParamId,
    gate: ParamId,
    graph: Vec<ParamId>,
    dilation: usize,
}

/// The forecasting network: parameter store plus the ids of each component.
#[derive(Clone)]
pub struct AdaptiveSTNetwork {
    config: ModelConfig,
    store: ParamStore,
    embed_w: ParamId,
    embed_b: ParamId,
    adapters: Vec<AdapterIds>,
    blocks: Vec<BlockIds>,
    proj_w: ParamId,
    proj_b: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
}

/// Tape handles for one binding of the network's parameters.
///
/// Bind once per tape and reuse across every forward pass recorded on it, so
/// a batched update accumulates each parameter's gradient on a single leaf
/// per parameter.
pub struct BoundParams {
    embed_w: Var,
    embed_b: Var,
    adapters: Vec<(Var, Var)>,
    blocks: Vec<(Var, Var, Vec<Var>)>,
    proj_w: Var,
    proj_b: Var,
    dec_w: Var,
    dec_b: Var,
}

impl AdaptiveSTNetwork {
    /// Initialize with uniform(+-1/sqrt(fan_in)) weights, zero biases, and
    /// zero adapter up-projections, so the adapter path starts as identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;

        let mut uniform =
            |store: &mut ParamStore, name: String, shape: Vec<usize>, fan_in: usize| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let len: usize = shape.iter().product();
                let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
                store.register(name, Tensor::from_vec(shape, data).expect("init shape"))
            };

        let embed_w = uniform(
            &mut store,
            "embed.w".into(),
            vec![c.n_features, c.embed_dim],
            c.n_features,
        );
        let embed_b = store.register("embed.b", Tensor::zeros(vec![c.embed_dim]));

        let adapter_count = if c.adapter_shared { 1 } else { c.n_locations };
        let mut adapters = Vec::with_capacity(adapter_count);
        for n in 0..adapter_count {
            let down = uniform(
                &mut store,
                format!("adapter.{n}.down"),
                vec![c.embed_dim, c.adapter_dim],
                c.embed_dim,
            );
            let up = store.register(
                format!("adapter.{n}.up"),
                Tensor::zeros(vec![c.adapter_dim, c.embed_dim]),
            );
            adapters.push(AdapterIds { down, up });
        }

        let mut blocks = Vec::with_capacity(c.st_blocks);
        for b in 0..c.st_blocks {
            let conv_shape = vec![c.kernel_size, c.embed_dim, c.embed_dim];
            let conv_fan = c.kernel_size * c.embed_dim;
            let filter = uniform(
                &mut store,
                format!("block.{b}.filter"),
                conv_shape.clone(),
                conv_fan,
            );
            let gate = uniform(&mut store, format!("block.{b}.gate"), conv_shape, conv_fan);
            let graph = (0..=c.diffusion_steps)
                .map(|k| {
                    uniform(
                        &mut store,
                        format!("block.{b}.graph.{k}"),
                        vec![c.embed_dim, c.embed_dim],
                        c.embed_dim,
                    )
                })
                .collect();
            blocks.push(BlockIds {
                filter,
                gate,
                graph,
                dilation: 1 << b,
            });
        }

        let proj_w = uniform(
            &mut store,
            "proj.w".into(),
            vec![c.embed_dim, c.st_output_dim],
            c.embed_dim,
        );
        let proj_b = store.register("proj.b", Tensor::zeros(vec![c.st_output_dim]));
        let dec_w = uniform(
            &mut store,
            "decoder.w".into(),
            vec![c.st_output_dim, c.horizon * c.n_features],
            c.st_output_dim,
        );
        let dec_b = store.register("decoder.b", Tensor::zeros(vec![c.horizon * c.n_features]));

        Ok(Self {
            config,
            store,
            embed_w,
            embed_b,
            adapters,
            blocks,
            proj_w,
            proj_b,
            dec_w,
            dec_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Adapter parameter ids (theta_a).
    pub fn params_adapter(&self) -> Vec<ParamId> {
        self.adapters.iter().flat_map(|a| [a.down, a.up]).collect()
    }

    /// Traditional parameter ids (theta_t): everything except the adapters.
    pub fn params_traditional(&self) -> Vec<ParamId> {
        let adapter: Vec<ParamId> = self.params_adapter();
        self.store
            .ids()
            .filter(|id| !adapter.contains(id))
            .collect()
    }

    /// Record every parameter once on `tape` for reuse across forwards.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            embed_w: tape.param(&self.store, self.embed_w),
            embed_b: tape.param(&self.store, self.embed_b),
            adapters: self
                .adapters
                .iter()
                .map(|a| {
                    (
                        tape.param(&self.store, a.down),
                        tape.param(&self.store, a.up),
                    )
                })
                .collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    (
                        tape.param(&self.store, b.filter),
                        tape.param(&self.store, b.gate),
                        b.graph
                            .iter()
                            .map(|&g| tape.param(&self.store, g))
                            .collect(),
                    )
                })
                .collect(),
            proj_w: tape.param(&self.store, self.proj_w),
            proj_b: tape.param(&self.store, self.proj_b),
            dec_w: tape.param(&self.store, self.dec_w),
            dec_b: tape.param(&self.store, self.dec_b),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        if shape != [c.n_locations, c.look_back, c.n_features] {
            return Err(Error::ShapeMismatch {
                op: "forward input",
                lhs: shape.to_vec(),
                rhs: vec![c.n_locations, c.look_back, c.n_features],
            });
        }
        Ok(())
    }

    /// Input embedding: per (location, step) linear map `d -> d_h`.
    pub fn embed(&self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).shape())?;
        let c = &self.config;
        let flat = tape.reshape(x, vec![c.n_locations * c.look_back, c.n_features])?;
        let projected = tape.matmul(flat, bound.embed_w)?;
        let biased = tape.add_bias(projected, bound.embed_b)?;
        tape.reshape(biased, vec![c.n_locations, c.look_back, c.embed_dim])
    }

    /// Per-location residual bottleneck:
    /// `relu(h_n W_down) W_up + h_n` for each location n.
    pub fn via_forward(&self, tape: &mut Tape, bound: &BoundParams, h: Var) -> Result<Var> {
        let c = &self.config;
        let shape = tape.value(h).shape().to_vec();
        if shape.len() != 3 || shape[0] != c.n_locations || shape[2] != c.embed_dim {
            return Err(Error::ShapeMismatch {
                op: "via_forward",
                lhs: shape,
                rhs: vec![c.n_locations, c.look_back, c.embed_dim],
            });
        }
        let steps = shape[1];
        let mut adapted = Vec::with_capacity(c.n_locations);
        for n in 0..c.n_locations {
            let (down, up) = if c.adapter_shared {
                bound.adapters[0]
            } else {
                bound.adapters[n]
            };
            let row = tape.narrow(h, 0, n, 1)?;
            let row2 = tape.reshape(row, vec![steps, c.embed_dim])?;
            let squeezed = tape.matmul(row2, down)?;
            let activated = tape.relu(squeezed);
            let expanded = tape.matmul(activated, up)?;
            adapted.push(tape.add(expanded, row2)?);
        }
        tape.stack0(&adapted)
    }

    /// Gated temporal convolutions with graph diffusion, then a projection
    /// of the final time step to `d_o`.
    pub fn st_forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        h: Var,
        adj: &AdjacencyMatrix,
    ) -> Result<Var> {
        let c = &self.config;
        if adj.n_locations() != c.n_locations {
            return Err(Error::ShapeMismatch {
                op: "st_forward adjacency",
                lhs: adj.raw().shape().to_vec(),
                rhs: vec![c.n_locations, c.n_locations],
            });
        }
        let a_hat = tape.constant(adj.normalized().clone());
        let mut x = h;
        for (block, ids) in self.blocks.iter().zip(&bound.blocks) {
            let (filter_w, gate_w, graph_w) = ids;
            let filtered = tape.causal_dilated_conv1d(x, *filter_w, block.dilation)?;
            let gated = tape.causal_dilated_conv1d(x, *gate_w, block.dilation)?;
            let t = tape.tanh(filtered);
            let s = tape.sigmoid(gated);
            let u = tape.mul(t, s)?;

            let len_out = tape.value(u).shape()[1];
            let flat_rows = c.n_locations * len_out;
            // z = sum_k A^k u W_k, accumulated by repeated left-multiplication
            let u2 = tape.reshape(u, vec![flat_rows, c.embed_dim])?;
            let mut z = tape.matmul(u2, graph_w[0])?;
            let mut diffused = u;
            for w_k in &graph_w[1..] {
                let spread = tape.reshape(diffused, vec![c.n_locations, len_out * c.embed_dim])?;
                let mixed = tape.matmul(a_hat, spread)?;
                diffused = tape.reshape(mixed, vec![c.n_locations, len_out, c.embed_dim])?;
                let flat = tape.reshape(diffused, vec![flat_rows, c.embed_dim])?;
                let term = tape.matmul(flat, *w_k)?;
                z = tape.add(z, term)?;
            }
            let z3 = tape.reshape(z, vec![c.n_locations, len_out, c.embed_dim])?;

            let crop_start = (c.kernel_size - 1) * block.dilation;
            let residual = tape.narrow(x, 1, crop_start, len_out)?;
            x = tape.add(z3, residual)?;
        }
        let final_len = tape.value(x).shape()[1];
        let last = tape.narrow(x, 1, final_len - 1, 1)?;
        let last2 = tape.reshape(last, vec![c.n_locations, c.embed_dim])?;
        let projected = tape.matmul(last2, bound.proj_w)?;
        let biased = tape.add_bias(projected, bound.proj_b)?;
        Ok(tape.relu(biased))
    }

    /// Linear readout to the forecast tensor (N, H, d).
    pub fn decode(&self, tape: &mut Tape, bound: &BoundParams, h_tilde: Var) -> Result<Var> {
        let c = &self.config;
        let out = tape.matmul(h_tilde, bound.dec_w)?;
        let biased = tape.add_bias(out, bound.dec_b)?;
        tape.reshape(biased, vec![c.n_locations, c.horizon, c.n_features])
    }

    /// Full forward pass over an already-recorded input node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: Var,
        adj: &AdjacencyMatrix,
        use_adapter: bool,
    ) -> Result<Var> {
        let embedded = self.embed(tape, bound, x)?;
        let features = if use_adapter {
            self.via_forward(tape, bound, embedded)?
        } else {
            embedded
        };
        let h_tilde = self.st_forward(tape, bound, features, adj)?;
        self.decode(tape, bound, h_tilde)
    }

    /// One-shot inference on a fresh tape; returns the forecast values.
    pub fn predict(&self, x: &Tensor, adj: &AdjacencyMatrix, use_adapter: bool) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let input = tape.constant(x.clone());
        let out = self.forward(&mut tape, &bound, input, adj, use_adapter)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_locations: 3,
            look_back: 4,
            horizon: 2,
            n_features: 1,
            embed_dim: 4,
            st_output_dim: 6,
            adapter_dim: 2,
            st_blocks: 1,
            diffusion_steps: 2,
            kernel_size: 2,
            adapter_shared: false,
        }
    }

    pub(crate) fn tiny(seed: u64) -> AdaptiveSTNetwork {
        AdaptiveSTNetwork::new(tiny_config(), seed).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::tiny_config;
    use super::*;
    use crate::numerics::{finite_difference_gradient, max_relative_error};

    fn rand_input(cfg: &ModelConfig, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = cfg.n_locations * cfg.look_back * cfg.n_features;
        Tensor::from_vec(
            vec![cfg.n_locations, cfg.look_back, cfg.n_features],
            (0..len).map(|_| rng.random_range(-1.5..1.5)).collect(),
        )
        .unwrap()
    }

    fn ring_adjacency(n: usize) -> AdjacencyMatrix {
        let mut a = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            let j = (i + 1) % n;
            if i != j {
                a.data_mut()[i * n + j] = 1.0;
                a.data_mut()[j * n + i] = 1.0;
            }
        }
        AdjacencyMatrix::new(a).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(tiny_config().validate().is_ok());
        let mut bad = tiny_config();
        bad.adapter_dim = 4;
        assert!(bad.validate().is_err());
        let mut short = tiny_config();
        short.look_back = 1;
        assert!(short.validate().is_err());
        assert_eq!(ModelConfig::reference(5, 1).receptive_field(), 4);
    }

    #[test]
    fn adjacency_rows_sum_to_one() {
        let adj = ring_adjacency(4);
        let n = 4;
        for i in 0..n {
            let row_sum: f64 = adj.normalized().data()[i * n..(i + 1) * n].iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacency_isolated_node_stays_finite() {
        // Node 2 has no edges; the self-loop keeps its row defined.
        let mut a = Tensor::zeros(vec![3, 3]);
        a.data_mut()[1] = 1.0;
        a.data_mut()[3] = 1.0;
        let adj = AdjacencyMatrix::new(a).unwrap();
        assert!(adj.normalized().is_finite());
        assert_eq!(adj.normalized().data()[8], 1.0);
    }

    #[test]
    fn adjacency_rejects_negative_entries() {
        let mut a = Tensor::zeros(vec![2, 2]);
        a.data_mut()[1] = -1.0;
        assert!(AdjacencyMatrix::new(a).is_err());
    }

    #[test]
    fn embed_with_identity_weights_is_identity() {
        let mut cfg = tiny_config();
        cfg.n_features = 4; // d == d_h so the identity map is expressible
        let mut net = AdaptiveSTNetwork::new(cfg.clone(), 1).unwrap();
        let mut eye = Tensor::zeros(vec![4, 4]);
        for i in 0..4 {
            eye.data_mut()[i * 4 + i] = 1.0;
        }
        let id = net.embed_w;
        net.store_mut().get_mut(id).value = eye;

        let x = rand_input(&cfg, 2);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x.clone());
        let h = net.embed(&mut tape, &bound, input).unwrap();
        assert!(tape.value(h).bitwise_eq(&x));
    }

    #[test]
    fn embed_of_zero_input_is_bias() {
        let cfg = tiny_config();
        let mut net = AdaptiveSTNetwork::new(cfg.clone(), 1).unwrap();
        let id = net.embed_b;
        net.store_mut().get_mut(id).value = Tensor::full(vec![4], 0.25);
        let x = Tensor::zeros(vec![3, 4, 1]);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x);
        let h = net.embed(&mut tape, &bound, input).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn embed_output_shape_with_reference_dims() {
        let cfg = ModelConfig::reference(5, 1);
        let net = AdaptiveSTNetwork::new(cfg.clone(), 1).unwrap();
        let x = rand_input(&cfg, 3);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x);
        let h = net.embed(&mut tape, &bound, input).unwrap();
        assert_eq!(tape.value(h).shape(), &[5, 12, 32]);
    }

    #[test]
    fn fresh_adapter_is_exact_identity() {
        let cfg = tiny_config();
        let net = AdaptiveSTNetwork::new(cfg.clone(), 9).unwrap();
        let x = rand_input(&cfg, 4);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x);
        let h = net.embed(&mut tape, &bound, input).unwrap();
        let adapted = net.via_forward(&mut tape, &bound, h).unwrap();
        assert!(tape.value(adapted).bitwise_eq(tape.value(h)));
    }

    #[test]
    fn adapter_hand_example() {
        // d_h = 2, d_m = 1, W_down = [1, 0]^T, W_up = [1, 1], row [2, 3]
        // -> relu(2) * [1, 1] + [2, 3] = [4, 5]
        let cfg = ModelConfig {
            n_locations: 1,
            look_back: 2,
            horizon: 1,
            n_features: 1,
            embed_dim: 2,
            adapter_dim: 1,
            st_output_dim: 2,
            st_blocks: 1,
            diffusion_steps: 0,
            kernel_size: 2,
            adapter_shared: false,
        };
        let mut net = AdaptiveSTNetwork::new(cfg, 1).unwrap();
        let adapter = &net.adapters[0];
        let (down, up) = (adapter.down, adapter.up);
        net.store_mut().get_mut(down).value = Tensor::from_vec(vec![2, 1], vec![1.0, 0.0]).unwrap();
        net.store_mut().get_mut(up).value = Tensor::from_vec(vec![1, 2], vec![1.0, 1.0]).unwrap();

        let h = Tensor::from_vec(vec![1, 2, 2], vec![2.0, 3.0, -1.0, 0.5]).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let hv = tape.constant(h);
        let out = net.via_forward(&mut tape, &bound, hv).unwrap();
        assert_eq!(tape.value(out).data()[..2], [4.0, 5.0]);
        // relu(-1) = 0 on the second step: unchanged
        assert_eq!(tape.value(out).data()[2..], [-1.0, 0.5]);
    }

    #[test]
    fn adapter_is_local_per_location() {
        let cfg = tiny_config();
        let mut net = AdaptiveSTNetwork::new(cfg.clone(), 5).unwrap();
        // make the adapters non-trivial so locality is not vacuous
        let ups: Vec<ParamId> = net.adapters.iter().map(|a| a.up).collect();
        for up in ups {
            let shape = net.store.get(up).value.shape().to_vec();
            let len: usize = shape.iter().product();
            net.store_mut().get_mut(up).value =
                Tensor::from_vec(shape, (0..len).map(|i| 0.1 * (i as f64 + 1.0)).collect())
                    .unwrap();
        }
        let base = rand_input(&cfg, 6);
        let mut perturbed = base.clone();
        let loc = 1;
        for t in 0..cfg.look_back {
            perturbed.data_mut()[(loc * cfg.look_back + t) * cfg.n_features] += 0.5;
        }

        let run = |x: &Tensor| {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let input = tape.constant(x.clone());
            let h = net.embed(&mut tape, &bound, input).unwrap();
            let adapted = net.via_forward(&mut tape, &bound, h).unwrap();
            tape.value(adapted).clone()
        };
        let out_base = run(&base);
        let out_pert = run(&perturbed);
        let row = cfg.look_back * cfg.embed_dim;
        for n in 0..cfg.n_locations {
            let differs = out_base.data()[n * row..(n + 1) * row]
                .iter()
                .zip(&out_pert.data()[n * row..(n + 1) * row])
                .any(|(a, b)| a != b);
            assert_eq!(differs, n == loc, "location {n}");
        }
    }

    #[test]
    fn st_single_location_matches_pure_temporal_path() {
        // With one node, A_hat = [1], so sum_k A^k u W_k == u (sum_k W_k):
        // the diffusion collapses onto a dense temporal layer.
        let mut cfg = tiny_config();
        cfg.n_locations = 1;
        let net = AdaptiveSTNetwork::new(cfg.clone(), 7).unwrap();
        let adj = AdjacencyMatrix::identity(1);

        let mut collapsed = AdaptiveSTNetwork::new(
            ModelConfig {
                diffusion_steps: 0,
                ..cfg.clone()
            },
            7,
        )
        .unwrap();
        // copy shared weights; set the single graph weight to sum_k W_k
        let copies: Vec<(String, Tensor)> = net
            .store
            .iter()
            .map(|(_, p)| (p.name.clone(), p.value.clone()))
            .collect();
        for (name, value) in copies {
            let found = collapsed
                .store
                .iter()
                .find(|(_, cp)| cp.name == name)
                .map(|(id, _)| id);
            if let Some(cid) = found {
                collapsed.store_mut().get_mut(cid).value = value;
            }
        }
        for b in 0..cfg.st_blocks {
            let mut sum = Tensor::zeros(vec![cfg.embed_dim, cfg.embed_dim]);
            for k in 0..=cfg.diffusion_steps {
                let (_, p) = net
                    .store
                    .iter()
                    .find(|(_, p)| p.name == format!("block.{b}.graph.{k}"))
                    .unwrap();
                for (s, v) in sum.data_mut().iter_mut().zip(p.value.data()) {
                    *s += v;
                }
            }
            let (cid, _) = collapsed
                .store
                .iter()
                .find(|(_, p)| p.name == format!("block.{b}.graph.0"))
                .unwrap();
            collapsed.store_mut().get_mut(cid).value = sum;
        }

        let x = rand_input(&cfg, 8);
        let full = net.predict(&x, &adj, false).unwrap();
        let temporal = collapsed.predict(&x, &adj, false).unwrap();
        assert!(full.max_abs_diff(&temporal).unwrap() < 1e-12);
    }

    #[test]
    fn zero_diffusion_steps_ignore_adjacency() {
        let mut cfg = tiny_config();
        cfg.diffusion_steps = 0;
        let net = AdaptiveSTNetwork::new(cfg.clone(), 11).unwrap();
        let x = rand_input(&cfg, 12);
        let out_ring = net.predict(&x, &ring_adjacency(3), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut random = Tensor::zeros(vec![3, 3]);
        for v in random.data_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let out_rand = net
            .predict(&x, &AdjacencyMatrix::new(random).unwrap(), true)
            .unwrap();
        assert!(out_ring.bitwise_eq(&out_rand));
    }

    #[test]
    fn st_output_shape_with_reference_dims() {
        let cfg = ModelConfig::reference(5, 1);
        let net = AdaptiveSTNetwork::new(cfg.clone(), 1).unwrap();
        let x = rand_input(&cfg, 3);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x);
        let h = net.embed(&mut tape, &bound, input).unwrap();
        let out = net
            .st_forward(&mut tape, &bound, h, &ring_adjacency(5))
            .unwrap();
        assert_eq!(tape.value(out).shape(), &[5, 256]);
    }

    #[test]
    fn decode_constant_bias_and_shapes() {
        let cfg = ModelConfig::reference(4, 1);
        let mut net = AdaptiveSTNetwork::new(cfg.clone(), 1).unwrap();
        let (w, b) = (net.dec_w, net.dec_b);
        net.store_mut().get_mut(w).value = Tensor::zeros(vec![256, 12]);
        net.store_mut().get_mut(b).value = Tensor::full(vec![12], 3.5);
        let x = rand_input(&cfg, 3);
        let pred = net.predict(&x, &ring_adjacency(4), true).unwrap();
        assert_eq!(pred.shape(), &[4, 12, 1]);
        assert!(pred.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn decode_hand_example() {
        // d_o = 1, H = 2, d = 1, W_d = [[1, 2]], h_tilde = [3] -> [3, 6]
        let cfg = ModelConfig {
            n_locations: 1,
            look_back: 2,
            horizon: 2,
            n_features: 1,
            embed_dim: 2,
            adapter_dim: 1,
            st_output_dim: 1,
            st_blocks: 1,
            diffusion_steps: 0,
            kernel_size: 2,
            adapter_shared: false,
        };
        let mut net = AdaptiveSTNetwork::new(cfg, 1).unwrap();
        let (w, b) = (net.dec_w, net.dec_b);
        net.store_mut().get_mut(w).value = Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap();
        net.store_mut().get_mut(b).value = Tensor::zeros(vec![2]);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let h_tilde = tape.constant(Tensor::from_vec(vec![1, 1], vec![3.0]).unwrap());
        let out = net.decode(&mut tape, &bound, h_tilde).unwrap();
        assert_eq!(tape.value(out).shape(), &[1, 2, 1]);
        assert_eq!(tape.value(out).data(), &[3.0, 6.0]);
    }

    #[test]
    fn adapter_path_matches_plain_path_at_init() {
        let cfg = tiny_config();
        let net = AdaptiveSTNetwork::new(cfg.clone(), 21).unwrap();
        let adj = ring_adjacency(3);
        let x = rand_input(&cfg, 22);
        let with = net.predict(&x, &adj, true).unwrap();
        let without = net.predict(&x, &adj, false).unwrap();
        assert!(with.bitwise_eq(&without));
    }

    #[test]
    fn forward_stays_finite_across_seeds() {
        let cfg = tiny_config();
        let adj = ring_adjacency(3);
        for seed in 0..100 {
            let net = AdaptiveSTNetwork::new(cfg.clone(), seed).unwrap();
            let x = rand_input(&cfg, seed + 1000);
            let pred = net.predict(&x, &adj, true).unwrap();
            assert!(pred.is_finite(), "seed {seed}");
        }
    }

    #[test]
    fn parameter_partition_is_exact() {
        let cfg = tiny_config();
        let net = AdaptiveSTNetwork::new(cfg.clone(), 2).unwrap();
        let adapter = net.params_adapter();
        let traditional = net.params_traditional();
        assert_eq!(adapter.len() + traditional.len(), net.store.len());
        assert!(adapter.iter().all(|id| !traditional.contains(id)));
        let entries = net.store.entry_count(&adapter);
        assert_eq!(
            entries,
            cfg.n_locations * 2 * cfg.embed_dim * cfg.adapter_dim
        );

        let shared = AdaptiveSTNetwork::new(
            ModelConfig {
                adapter_shared: true,
                ..cfg.clone()
            },
            2,
        )
        .unwrap();
        assert_eq!(
            shared.store.entry_count(&shared.params_adapter()),
            2 * cfg.embed_dim * cfg.adapter_dim
        );
    }

    #[test]
    fn full_forward_gradients_match_finite_differences() {
        let cfg = tiny_config();
        let mut net = AdaptiveSTNetwork::new(cfg.clone(), 31).unwrap();
        // non-zero adapter up-projections so their gradient path is live
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let ups: Vec<ParamId> = net.adapters.iter().map(|a| a.up).collect();
        for up in ups {
            let shape = net.store.get(up).value.shape().to_vec();
            let len: usize = shape.iter().product();
            net.store_mut().get_mut(up).value = Tensor::from_vec(
                shape,
                (0..len).map(|_| rng.random_range(-0.5..0.5)).collect(),
            )
            .unwrap();
        }
        let adj = ring_adjacency(3);
        let x = rand_input(&cfg, 33);
        let target = {
            let len = cfg.n_locations * cfg.horizon * cfg.n_features;
            Tensor::from_vec(
                vec![cfg.n_locations, cfg.horizon, cfg.n_features],
                (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };

        // autodiff gradients for every parameter
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x.clone());
        let pred = net.forward(&mut tape, &bound, input, &adj, true).unwrap();
        let tv = tape.constant(target.clone());
        let diff = tape.sub(pred, tv).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        net.store_mut().zero_grad();
        // reborrow dance: accumulate into a clone of the store
        let mut store = net.store.clone();
        tape.accumulate_param_grads(&mut store).unwrap();

        for id in net.store.ids() {
            let base = store.get(id).value.clone();
            let oracle = finite_difference_gradient(
                |probe| {
                    let mut probed = net.clone();
                    probed.store_mut().get_mut(id).value = probe.clone();
                    let mut t = Tape::new();
                    let b = probed.bind(&mut t);
                    let xv = t.constant(x.clone());
                    let p = probed.forward(&mut t, &b, xv, &adj, true)?;
                    let tv = t.constant(target.clone());
                    let d = t.sub(p, tv)?;
                    let s = t.mul(d, d)?;
                    let l = t.mean_all(s);
                    t.value(l).item()
                },
                &base,
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(&store.get(id).gradient, &oracle, 1e-5);
            assert!(
                err < 1e-4,
                "param {} gradient error {err}",
                store.get(id).name
            );
        }
    }
}
