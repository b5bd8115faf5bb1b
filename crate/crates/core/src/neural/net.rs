use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Scalar, Tensor};
use super::NeuralError;
use crate::encoding::{PlaneStack, MOVE_ACTIONS, SENSE_ACTIONS, STACK_CHANNELS};

const SQUARES: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub trunk_channels: usize,
    pub trunk_blocks: usize,
    pub sense_head_channels: usize,
    pub move_head_channels: usize,
    pub value_hidden: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            trunk_channels: 64,
            trunk_blocks: 6,
            sense_head_channels: 2,
            move_head_channels: 8,
            value_hidden: 32,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Small enough to train on a single core in minutes.
    pub fn desk() -> Self {
        Self {
            trunk_channels: 16,
            trunk_blocks: 2,
            sense_head_channels: 2,
            move_head_channels: 2,
            value_hidden: 16,
            seed: 0,
        }
    }

    /// The configuration used for gradient verification.
    pub fn tiny() -> Self {
        Self {
            trunk_channels: 4,
            trunk_blocks: 1,
            sense_head_channels: 2,
            move_head_channels: 2,
            value_hidden: 8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let fields = [
            ("trunk_channels", self.trunk_channels),
            ("trunk_blocks", self.trunk_blocks),
            ("sense_head_channels", self.sense_head_channels),
            ("move_head_channels", self.move_head_channels),
            ("value_hidden", self.value_hidden),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(NeuralError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// A policy head: 1x1 conv to a few channels, rectifier, then a dense
/// layer over the flattened board.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyHead<T> {
    /// `[trunk, channels]`
    pub conv_w: Tensor<T>,
    pub conv_b: Tensor<T>,
    /// `[64 * channels, actions]`, input index `square * channels + c`.
    pub fc_w: Tensor<T>,
    pub fc_b: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueHead<T> {
    /// `[trunk, 1]`
    pub conv_w: Tensor<T>,
    pub conv_b: Tensor<T>,
    /// `[64, hidden]`
    pub fc1_w: Tensor<T>,
    pub fc1_b: Tensor<T>,
    /// `[hidden, 1]`
    pub fc2_w: Tensor<T>,
    pub fc2_b: Tensor<T>,
}

/// Residual block `relu(x + conv2(relu(conv1(x))))`. Conv weights are laid
/// out `[tap, in, out]` with tap `(dy + 1) * 3 + (dx + 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights<T> {
    pub conv1_w: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub conv2_w: Tensor<T>,
    pub conv2_b: Tensor<T>,
}

/// Every learnable array. Also used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    /// `[1800, trunk]`
    pub input_w: Tensor<T>,
    pub input_b: Tensor<T>,
    pub blocks: Vec<BlockWeights<T>>,
    pub sense: PolicyHead<T>,
    pub moves: PolicyHead<T>,
    pub value: ValueHead<T>,
}

impl<T: Scalar> Weights<T> {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let c = config.trunk_channels;
        let head = |h: usize, actions: usize| PolicyHead {
            conv_w: Tensor::zeros(&[c, h]),
            conv_b: Tensor::zeros(&[h]),
            fc_w: Tensor::zeros(&[SQUARES * h, actions]),
            fc_b: Tensor::zeros(&[actions]),
        };
        Self {
            input_w: Tensor::zeros(&[STACK_CHANNELS, c]),
            input_b: Tensor::zeros(&[c]),
            blocks: (0..config.trunk_blocks)
                .map(|_| BlockWeights {
                    conv1_w: Tensor::zeros(&[9, c, c]),
                    conv1_b: Tensor::zeros(&[c]),
                    conv2_w: Tensor::zeros(&[9, c, c]),
                    conv2_b: Tensor::zeros(&[c]),
                })
                .collect(),
            sense: head(config.sense_head_channels, SENSE_ACTIONS),
            moves: head(config.move_head_channels, MOVE_ACTIONS),
            value: ValueHead {
                conv_w: Tensor::zeros(&[c, 1]),
                conv_b: Tensor::zeros(&[1]),
                fc1_w: Tensor::zeros(&[SQUARES, config.value_hidden]),
                fc1_b: Tensor::zeros(&[config.value_hidden]),
                fc2_w: Tensor::zeros(&[config.value_hidden, 1]),
                fc2_b: Tensor::zeros(&[1]),
            },
        }
    }

    /// Arrays in canonical order with their checkpoint names.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("input.w".to_string(), &self.input_w),
            ("input.b".to_string(), &self.input_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv1.w"), &b.conv1_w));
            out.push((format!("block{i}.conv1.b"), &b.conv1_b));
            out.push((format!("block{i}.conv2.w"), &b.conv2_w));
            out.push((format!("block{i}.conv2.b"), &b.conv2_b));
        }
        for (name, h) in [("sense", &self.sense), ("move", &self.moves)] {
            out.push((format!("{name}.conv.w"), &h.conv_w));
            out.push((format!("{name}.conv.b"), &h.conv_b));
            out.push((format!("{name}.fc.w"), &h.fc_w));
            out.push((format!("{name}.fc.b"), &h.fc_b));
        }
        let v = &self.value;
        for (name, t) in [
            ("value.conv.w", &v.conv_w),
            ("value.conv.b", &v.conv_b),
            ("value.fc1.w", &v.fc1_w),
            ("value.fc1.b", &v.fc1_b),
            ("value.fc2.w", &v.fc2_w),
            ("value.fc2.b", &v.fc2_b),
        ] {
            out.push((name.to_string(), t));
        }
        out
    }

    /// Same order as [`Weights::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.input_w, &mut self.input_b];
        for b in &mut self.blocks {
            out.extend([&mut b.conv1_w, &mut b.conv1_b, &mut b.conv2_w, &mut b.conv2_b]);
        }
        for h in [&mut self.sense, &mut self.moves] {
            out.extend([&mut h.conv_w, &mut h.conv_b, &mut h.fc_w, &mut h.fc_b]);
        }
        let v = &mut self.value;
        out.extend([
            &mut v.conv_w,
            &mut v.conv_b,
            &mut v.fc1_w,
            &mut v.fc1_b,
            &mut v.fc2_w,
            &mut v.fc2_b,
        ]);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= k;
            }
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &Weights<T>, k: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(k, b.data(), a.data_mut());
        }
    }

    pub fn l2_norm(&self) -> T {
        self.tensors()
            .iter()
            .map(|t| dot(t.data(), t.data()))
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        let mut out = Weights::<U> {
            input_w: self.input_w.cast(),
            input_b: self.input_b.cast(),
            blocks: Vec::new(),
            sense: cast_head(&self.sense),
            moves: cast_head(&self.moves),
            value: ValueHead {
                conv_w: self.value.conv_w.cast(),
                conv_b: self.value.conv_b.cast(),
                fc1_w: self.value.fc1_w.cast(),
                fc1_b: self.value.fc1_b.cast(),
                fc2_w: self.value.fc2_w.cast(),
                fc2_b: self.value.fc2_b.cast(),
            },
        };
        out.blocks = self
            .blocks
            .iter()
            .map(|b| BlockWeights {
                conv1_w: b.conv1_w.cast(),
                conv1_b: b.conv1_b.cast(),
                conv2_w: b.conv2_w.cast(),
                conv2_b: b.conv2_b.cast(),
            })
            .collect();
        out
    }
}

fn cast_head<T: Scalar, U: Scalar>(h: &PolicyHead<T>) -> PolicyHead<U> {
    PolicyHead {
        conv_w: h.conv_w.cast(),
        conv_b: h.conv_b.cast(),
        fc_w: h.fc_w.cast(),
        fc_b: h.fc_b.cast(),
    }
}

/// Which policy heads to evaluate. The value head always runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heads {
    pub sense: bool,
    pub moves: bool,
}

impl Heads {
    pub const ALL: Heads = Heads {
        sense: true,
        moves: true,
    };
    pub const SENSE: Heads = Heads {
        sense: true,
        moves: false,
    };
    pub const MOVE: Heads = Heads {
        sense: false,
        moves: true,
    };
}

/// Network outputs for one input. Logits of a skipped head are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput<T> {
    pub sense_logits: Vec<T>,
    pub move_logits: Vec<T>,
    pub value: T,
}

/// Loss gradients with respect to the outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrad<T> {
    pub sense: Option<Vec<T>>,
    pub moves: Option<Vec<T>>,
    pub value: T,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Cache<T> {
    heads: Heads,
    /// Trunk activations, `[64, trunk]` each: the input layer output and
    /// then every block's output.
    trunk: Vec<Vec<T>>,
    /// Each block's inner activation.
    inner: Vec<Vec<T>>,
    sense_h: Vec<T>,
    move_h: Vec<T>,
    value_h: Vec<T>,
    value_z: Vec<T>,
    value: T,
}

impl<T: Scalar> Cache<T> {
    /// Whether every rectifier pre-activation has the same sign as in
    /// `other`. Used to skip finite differences that straddle a kink.
    pub(crate) fn same_pattern(&self, other: &Cache<T>) -> bool {
        let flat = |c: &Cache<T>| -> Vec<bool> {
            c.trunk
                .iter()
                .chain(&c.inner)
                .chain([&c.sense_h, &c.move_h, &c.value_h, &c.value_z])
                .flat_map(|v| v.iter().map(|x| *x > T::zero()))
                .collect()
        };
        flat(self) == flat(other)
    }
}

/// Sparse view of a network input: every non-zero `(channel, square, value)`.
pub trait InputPlanes<T> {
    fn visit(&self, f: &mut dyn FnMut(usize, usize, T));
}

impl<T: Scalar> InputPlanes<T> for PlaneStack {
    fn visit(&self, f: &mut dyn FnMut(usize, usize, T)) {
        for (c, &plane) in self.channels().iter().enumerate() {
            let mut bits = plane;
            while bits != 0 {
                f(c, bits.trailing_zeros() as usize, T::one());
                bits &= bits - 1;
            }
        }
    }
}

/// One dense `[1800, 8, 8]` input.
pub struct DenseInput<'a, T>(pub &'a [T]);

impl<T: Scalar> InputPlanes<T> for DenseInput<'_, T> {
    fn visit(&self, f: &mut dyn FnMut(usize, usize, T)) {
        for (i, &v) in self.0.iter().enumerate() {
            if v != T::zero() {
                f(i / SQUARES, i % SQUARES, v);
            }
        }
    }
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes `g` wherever the rectifier output `out` is not positive.
fn relu_mask<T: Scalar>(g: &mut [T], out: &[T]) {
    for (gi, &o) in g.iter_mut().zip(out) {
        if o <= T::zero() {
            *gi = T::zero();
        }
    }
}

fn neighbors(s: usize) -> impl Iterator<Item = (usize, usize)> {
    let (r, f) = ((s / 8) as i32, (s % 8) as i32);
    (0..9).filter_map(move |tap| {
        let (dy, dx) = (tap as i32 / 3 - 1, tap as i32 % 3 - 1);
        let (nr, nf) = (r + dy, f + dx);
        ((0..8).contains(&nr) && (0..8).contains(&nf)).then_some((tap, (nr * 8 + nf) as usize))
    })
}

/// Same-padded 3x3 convolution over `[64, cin]` into `[64, cout]`.
fn conv3<T: Scalar>(x: &[T], w: &[T], b: &[T], cin: usize, cout: usize) -> Vec<T> {
    let mut out = vec![T::zero(); SQUARES * cout];
    for s in 0..SQUARES {
        let o = &mut out[s * cout..(s + 1) * cout];
        o.copy_from_slice(b);
        for (tap, n) in neighbors(s) {
            let xn = &x[n * cin..(n + 1) * cin];
            for (i, &a) in xn.iter().enumerate() {
                if a != T::zero() {
                    let wi = &w[(tap * cin + i) * cout..(tap * cin + i + 1) * cout];
                    axpy(a, wi, o);
                }
            }
        }
    }
    out
}

/// Backward of [`conv3`]; `g` is the gradient at the conv output.
#[allow(clippy::too_many_arguments)]
fn conv3_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    g: &[T],
    cin: usize,
    cout: usize,
    gw: &mut [T],
    gb: &mut [T],
    gx: Option<&mut [T]>,
) {
    let mut gx = gx;
    for s in 0..SQUARES {
        let gs = &g[s * cout..(s + 1) * cout];
        if gs.iter().all(|v| *v == T::zero()) {
            continue;
        }
        axpy(T::one(), gs, gb);
        for (tap, n) in neighbors(s) {
            for i in 0..cin {
                let row = (tap * cin + i) * cout;
                let a = x[n * cin + i];
                if a != T::zero() {
                    axpy(a, gs, &mut gw[row..row + cout]);
                }
                if let Some(gx) = gx.as_deref_mut() {
                    gx[n * cin + i] += dot(&w[row..row + cout], gs);
                }
            }
        }
    }
}

/// Per-square dense layer `[64, cin] -> [64, cout]` followed by a rectifier.
fn conv1_relu<T: Scalar>(x: &[T], w: &[T], b: &[T], cin: usize, cout: usize) -> Vec<T> {
    let mut out = vec![T::zero(); SQUARES * cout];
    for s in 0..SQUARES {
        let o = &mut out[s * cout..(s + 1) * cout];
        o.copy_from_slice(b);
        for i in 0..cin {
            let a = x[s * cin + i];
            if a != T::zero() {
                axpy(a, &w[i * cout..(i + 1) * cout], o);
            }
        }
    }
    relu(&mut out);
    out
}

/// Backward of [`conv1_relu`]; `g` is the gradient at its (rectified) output.
#[allow(clippy::too_many_arguments)]
fn conv1_backward<T: Scalar>(
    x: &[T],
    out: &[T],
    w: &[T],
    g: &mut [T],
    cin: usize,
    cout: usize,
    gw: &mut [T],
    gb: &mut [T],
    gx: &mut [T],
) {
    relu_mask(g, out);
    for s in 0..SQUARES {
        let gs = &g[s * cout..(s + 1) * cout];
        if gs.iter().all(|v| *v == T::zero()) {
            continue;
        }
        axpy(T::one(), gs, gb);
        for i in 0..cin {
            let a = x[s * cin + i];
            if a != T::zero() {
                axpy(a, gs, &mut gw[i * cout..(i + 1) * cout]);
            }
            gx[s * cin + i] += dot(&w[i * cout..(i + 1) * cout], gs);
        }
    }
}

/// Dense layer `y = b + x W` with `W` laid out `[in, out]`.
fn linear<T: Scalar>(x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut out = b.to_vec();
    for (i, &a) in x.iter().enumerate() {
        if a != T::zero() {
            axpy(a, &w[i * n..(i + 1) * n], &mut out);
        }
    }
    out
}

/// Backward of [`linear`] whose input `x` came out of a rectifier, so input
/// gradients are only needed where `x > 0`.
fn linear_backward_relu_input<T: Scalar>(
    x: &[T],
    w: &[T],
    g: &[T],
    gw: &mut [T],
    gb: &mut [T],
) -> Vec<T> {
    let n = g.len();
    axpy(T::one(), g, gb);
    x.iter()
        .enumerate()
        .map(|(i, &a)| {
            if a > T::zero() {
                axpy(a, g, &mut gw[i * n..(i + 1) * n]);
                dot(&w[i * n..(i + 1) * n], g)
            } else {
                T::zero()
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueNet<T> {
    pub config: NetworkConfig,
    pub weights: Weights<T>,
}

impl<T: Scalar> PolicyValueNet<T> {
    /// Fan-in scaled normal initialization from `config.seed`. The final
    /// layers of all heads and of every residual branch start at zero, so
    /// initial policies are uniform, the value is 0 and blocks are identities.
    pub fn new(config: NetworkConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut weights = Weights::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.trunk_channels;
        let mut init = |t: &mut Tensor<T>, fan_in: usize| {
            let std = (2.0 / fan_in as f64).sqrt();
            for v in t.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = T::of(z * std);
            }
        };
        init(&mut weights.input_w, STACK_CHANNELS);
        for b in &mut weights.blocks {
            init(&mut b.conv1_w, 9 * c);
        }
        init(&mut weights.sense.conv_w, c);
        init(&mut weights.moves.conv_w, c);
        init(&mut weights.value.conv_w, c);
        init(&mut weights.value.fc1_w, SQUARES);
        Ok(Self { config, weights })
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        Ok(Self {
            weights: Weights::zeros(&config),
            config,
        })
    }

    pub fn cast<U: Scalar>(&self) -> PolicyValueNet<U> {
        PolicyValueNet {
            config: self.config.clone(),
            weights: self.weights.cast(),
        }
    }

    /// All heads for every input in the batch.
    pub fn forward(&self, batch: &[PlaneStack]) -> Vec<NetOutput<T>> {
        batch.iter().map(|x| self.forward_one(x, Heads::ALL).0).collect()
    }

    /// Batch given as a dense `[B, 1800, 8, 8]` tensor.
    pub fn forward_tensor(&self, batch: &Tensor<T>) -> Result<Vec<NetOutput<T>>, NeuralError> {
        let shape = batch.shape();
        if shape.len() != 4 || shape[1..] != PlaneStack::SHAPE {
            return Err(NeuralError::Shape(format!(
                "input shape {shape:?}, expected [B, 1800, 8, 8]"
            )));
        }
        let per = STACK_CHANNELS * SQUARES;
        Ok(batch
            .data()
            .chunks_exact(per)
            .map(|x| self.forward_one(&DenseInput(x), Heads::ALL).0)
            .collect())
    }

    pub fn forward_one(&self, input: &dyn InputPlanes<T>, heads: Heads) -> (NetOutput<T>, Cache<T>) {
        let w = &self.weights;
        let c = self.config.trunk_channels;

        let mut a = vec![T::zero(); SQUARES * c];
        for s in 0..SQUARES {
            a[s * c..(s + 1) * c].copy_from_slice(w.input_b.data());
        }
        let iw = w.input_w.data();
        input.visit(&mut |ch, s, v| axpy(v, &iw[ch * c..(ch + 1) * c], &mut a[s * c..(s + 1) * c]));
        relu(&mut a);

        let mut trunk = vec![a];
        let mut inner = Vec::with_capacity(w.blocks.len());
        for b in &w.blocks {
            let x = trunk.last().unwrap();
            let mut h = conv3(x, b.conv1_w.data(), b.conv1_b.data(), c, c);
            relu(&mut h);
            let mut y = conv3(&h, b.conv2_w.data(), b.conv2_b.data(), c, c);
            axpy(T::one(), x, &mut y);
            relu(&mut y);
            inner.push(h);
            trunk.push(y);
        }
        let x = trunk.last().unwrap();

        let policy = |head: &PolicyHead<T>, on: bool| -> (Vec<T>, Vec<T>) {
            if !on {
                return (Vec::new(), Vec::new());
            }
            let hc = head.conv_b.len();
            let h = conv1_relu(x, head.conv_w.data(), head.conv_b.data(), c, hc);
            let logits = linear(&h, head.fc_w.data(), head.fc_b.data());
            (h, logits)
        };
        let (sense_h, sense_logits) = policy(&w.sense, heads.sense);
        let (move_h, move_logits) = policy(&w.moves, heads.moves);

        let v = &w.value;
        let value_h = conv1_relu(x, v.conv_w.data(), v.conv_b.data(), c, 1);
        let mut value_z = linear(&value_h, v.fc1_w.data(), v.fc1_b.data());
        relu(&mut value_z);
        let value = linear(&value_z, v.fc2_w.data(), v.fc2_b.data())[0].tanh();

        let out = NetOutput {
            sense_logits,
            move_logits,
            value,
        };
        debug_assert!(
            out.sense_logits.iter().chain(&out.move_logits).all(|v| v.is_finite())
                && out.value.is_finite(),
            "non-finite network output"
        );
        let cache = Cache {
            heads,
            trunk,
            inner,
            sense_h,
            move_h,
            value_h,
            value_z,
            value,
        };
        (out, cache)
    }

    /// Accumulates parameter gradients for one example into `grads`.
    pub fn backward(
        &self,
        input: &dyn InputPlanes<T>,
        cache: &Cache<T>,
        grad: &OutputGrad<T>,
        grads: &mut Weights<T>,
    ) {
        let w = &self.weights;
        let c = self.config.trunk_channels;
        let x = cache.trunk.last().unwrap();
        let mut gx = vec![T::zero(); SQUARES * c];

        let heads = [
            (&w.sense, &mut grads.sense, &cache.sense_h, grad.sense.as_deref(), cache.heads.sense),
            (&w.moves, &mut grads.moves, &cache.move_h, grad.moves.as_deref(), cache.heads.moves),
        ];
        for (head, gh, h, g, on) in heads {
            let Some(g) = g else { continue };
            assert!(on, "gradient for a head skipped in the forward pass");
            let hc = head.conv_b.len();
            let mut gh_act =
                linear_backward_relu_input(h, head.fc_w.data(), g, gh.fc_w.data_mut(), gh.fc_b.data_mut());
            conv1_backward(
                x,
                h,
                head.conv_w.data(),
                &mut gh_act,
                c,
                hc,
                gh.conv_w.data_mut(),
                gh.conv_b.data_mut(),
                &mut gx,
            );
        }

        let (v, gv) = (&w.value, &mut grads.value);
        let gpre = grad.value * (T::one() - cache.value * cache.value);
        let mut gz = linear_backward_relu_input(
            &cache.value_z,
            v.fc2_w.data(),
            &[gpre],
            gv.fc2_w.data_mut(),
            gv.fc2_b.data_mut(),
        );
        relu_mask(&mut gz, &cache.value_z);
        let mut gvh = linear_backward_relu_input(
            &cache.value_h,
            v.fc1_w.data(),
            &gz,
            gv.fc1_w.data_mut(),
            gv.fc1_b.data_mut(),
        );
        conv1_backward(
            x,
            &cache.value_h,
            v.conv_w.data(),
            &mut gvh,
            c,
            1,
            gv.conv_w.data_mut(),
            gv.conv_b.data_mut(),
            &mut gx,
        );

        for (i, b) in w.blocks.iter().enumerate().rev() {
            let gb = &mut grads.blocks[i];
            let (xin, h, y) = (&cache.trunk[i], &cache.inner[i], &cache.trunk[i + 1]);
            relu_mask(&mut gx, y);
            let mut gh = vec![T::zero(); SQUARES * c];
            conv3_backward(
                h,
                b.conv2_w.data(),
                &gx,
                c,
                c,
                gb.conv2_w.data_mut(),
                gb.conv2_b.data_mut(),
                Some(&mut gh),
            );
            relu_mask(&mut gh, h);
            // The skip connection passes gx through unchanged.
            conv3_backward(
                xin,
                b.conv1_w.data(),
                &gh,
                c,
                c,
                gb.conv1_w.data_mut(),
                gb.conv1_b.data_mut(),
                Some(&mut gx),
            );
        }

        relu_mask(&mut gx, &cache.trunk[0]);
        for s in 0..SQUARES {
            axpy(T::one(), &gx[s * c..(s + 1) * c], grads.input_b.data_mut());
        }
        let giw = grads.input_w.data_mut();
        input.visit(&mut |ch, s, val| axpy(val, &gx[s * c..(s + 1) * c], &mut giw[ch * c..(ch + 1) * c]));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_stack(seed: u64) -> PlaneStack {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = PlaneStack::zeros();
        let mut frame = [0u64; 90];
        for slot in 0..20 {
            for p in frame.iter_mut() {
                *p = rng.random::<u64>() & rng.random::<u64>() & rng.random::<u64>();
            }
            s.set_frame(slot, &frame);
        }
        s
    }

    #[test]
    fn fresh_net_has_uniform_policies_and_zero_value() {
        let net = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
        let out = &net.forward(&[sample_stack(1)])[0];
        assert_eq!(out.sense_logits.len(), 64);
        assert_eq!(out.move_logits.len(), 4673);
        assert!(out.sense_logits.iter().chain(&out.move_logits).all(|&v| v == 0.0));
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn zero_residual_branch_is_identity() {
        let mut cfg = NetworkConfig::tiny();
        cfg.trunk_blocks = 2;
        let net = PolicyValueNet::<f64>::new(cfg).unwrap();
        let (_, cache) = net.forward_one(&sample_stack(2), Heads::ALL);
        assert_eq!(cache.trunk[0], cache.trunk[1]);
        assert_eq!(cache.trunk[1], cache.trunk[2]);
    }

    #[test]
    fn dense_and_sparse_inputs_agree() {
        let mut net = PolicyValueNet::<f64>::new(NetworkConfig::tiny()).unwrap();
        for t in net.weights.tensors_mut() {
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v += ((i * 7919) % 13) as f64 * 0.01 - 0.06;
            }
        }
        let s = sample_stack(3);
        let dense: Vec<f64> = s.to_dense().iter().map(|&v| v as f64).collect();
        let t = Tensor::from_vec(&[1, 1800, 8, 8], dense).unwrap();
        let a = net.forward_tensor(&t).unwrap();
        let b = net.forward(&[s]);
        for (x, y) in a[0].move_logits.iter().zip(&b[0].move_logits) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a[0].value - b[0].value).abs() < 1e-12);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
        let t = Tensor::zeros(&[1, 90, 8, 8]);
        assert!(matches!(net.forward_tensor(&t), Err(NeuralError::Shape(_))));
    }

    #[test]
    fn zero_channel_config_is_rejected() {
        let cfg = NetworkConfig {
            trunk_channels: 0,
            ..NetworkConfig::tiny()
        };
        assert!(PolicyValueNet::<f32>::new(cfg).is_err());
    }

    #[test]
    fn named_and_mut_orders_agree() {
        let mut w = Weights::<f32>::zeros(&NetworkConfig::tiny());
        let shapes: Vec<Vec<usize>> = w.named().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let shapes_mut: Vec<Vec<usize>> = w.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, shapes_mut);
        let names: std::collections::HashSet<String> = w.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), shapes.len());
    }
}
