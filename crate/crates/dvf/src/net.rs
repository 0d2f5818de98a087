use crate::error::{Error, Result};
use crate::loss::ProblemSystem;
use crate::spaces::CompositeFunctionSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// A fully connected network mapping grid coordinates to field values:
/// affine layers with tanh on hidden layers and identity on the output.
/// Parameters live in one flat vector, per layer the weight matrix
/// (row-major, rows = outputs) followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn layer_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights from the given seed, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in net.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.gen_range(-limit..limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// All-zero parameters; the forward pass is then identically zero.
    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        if sizes.len() < 2 {
            return Err(Error::Config(
                "network needs an input and an output layer".into(),
            ));
        }
        if sizes[0] != 2 {
            return Err(Error::Config(format!(
                "network input dimension must be 2, got {}",
                sizes[0]
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("zero-width network layer".into()));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; layer_param_count(sizes)],
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params.iter().fold(0.0f64, |m, p| m.max(p.abs()))
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Evaluates one point, filling `acts[l]` with the activations of layer
    /// `l` (`acts[0]` is the input). Returns nothing; the output lives in
    /// the last entry.
    fn forward_into(&self, x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for r in 0..n_out {
                let row = &weights[r * n_in..(r + 1) * n_in];
                let mut acc = bias[r];
                for (w, a) in row.iter().zip(input) {
                    acc += w * a;
                }
                out.push(if l < self.layers() - 1 { acc.tanh() } else { acc });
            }
            off += n_in * n_out + n_out;
        }
    }

    fn fresh_activations(&self) -> Vec<Vec<f64>> {
        self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect()
    }

    /// Batched forward pass: `points` are (x, y) pairs, the result holds
    /// the outputs row-major, one row of `output_dim` values per point.
    pub fn forward(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let mut acts = self.fresh_activations();
        let out_dim = self.output_dim();
        let mut out = Vec::with_capacity(points.len() * out_dim);
        for p in points {
            self.forward_into(p, &mut acts);
            out.extend_from_slice(acts.last().unwrap());
        }
        out
    }

    /// Reverse-mode gradients of `sum(outputs * cotangent)` with respect to
    /// every parameter. `cotangent` is row-major with one row per point and
    /// must match the paired forward shape.
    pub fn backward(&self, points: &[[f64; 2]], cotangent: &[f64]) -> Result<Vec<f64>> {
        let out_dim = self.output_dim();
        if cotangent.len() != points.len() * out_dim {
            return Err(Error::DimensionMismatch {
                expected: points.len() * out_dim,
                got: cotangent.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut acts = self.fresh_activations();
        let layer_offsets: Vec<usize> = {
            let mut offs = vec![0];
            for w in self.sizes.windows(2) {
                offs.push(offs.last().unwrap() + w[0] * w[1] + w[1]);
            }
            offs
        };
        let mut delta = Vec::new();
        let mut delta_prev = Vec::new();
        for (k, p) in points.iter().enumerate() {
            self.forward_into(p, &mut acts);
            delta.clear();
            delta.extend_from_slice(&cotangent[k * out_dim..(k + 1) * out_dim]);
            for l in (0..self.layers()).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let off = layer_offsets[l];
                let weights = &self.params[off..off + n_in * n_out];
                let wg = &mut grads[off..off + n_in * n_out + n_out];
                let input = &acts[l];
                for r in 0..n_out {
                    let d = delta[r];
                    for (g, a) in wg[r * n_in..(r + 1) * n_in].iter_mut().zip(input) {
                        *g += d * a;
                    }
                    wg[n_in * n_out + r] += d;
                }
                if l > 0 {
                    delta_prev.clear();
                    delta_prev.resize(n_in, 0.0);
                    for r in 0..n_out {
                        let d = delta[r];
                        for (dp, w) in delta_prev.iter_mut().zip(&weights[r * n_in..]) {
                            *dp += d * w;
                        }
                    }
                    for (dp, a) in delta_prev.iter_mut().zip(input) {
                        *dp *= 1.0 - a * a;
                    }
                    std::mem::swap(&mut delta, &mut delta_prev);
                }
            }
        }
        Ok(grads)
    }

    /// Evaluates the network at every grid point and scatters the outputs
    /// into a full dof vector of the composite space: output channels run
    /// over the parts and their components in order.
    pub fn tabulate_dofs(&self, space: &CompositeFunctionSpace) -> Result<Vec<f64>> {
        let channels = self.channel_offsets(space)?;
        let points = grid_points(space);
        let out = self.forward(&points);
        let out_dim = self.output_dim();
        let mut v = vec![0.0; space.dim()];
        for (k, row) in out.chunks_exact(out_dim).enumerate() {
            for (c, &val) in row.iter().enumerate() {
                v[channels[c] + k] = val;
            }
        }
        Ok(v)
    }

    /// Pulls a loss gradient with respect to the full dof vector back to a
    /// gradient with respect to the parameters, through the tabulation.
    pub fn parameter_gradient(
        &self,
        space: &CompositeFunctionSpace,
        dof_gradient: &[f64],
    ) -> Result<Vec<f64>> {
        if dof_gradient.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: dof_gradient.len(),
            });
        }
        let channels = self.channel_offsets(space)?;
        let points = grid_points(space);
        let out_dim = self.output_dim();
        let n = space.grid().size();
        let mut cot = vec![0.0; points.len() * out_dim];
        for k in 0..n {
            for (c, &off) in channels.iter().enumerate() {
                cot[k * out_dim + c] = dof_gradient[off + k];
            }
        }
        self.backward(&points, &cot)
    }

    /// Flat dof offset of each output channel: channel c covers one
    /// component of one part.
    fn channel_offsets(&self, space: &CompositeFunctionSpace) -> Result<Vec<usize>> {
        let n = space.grid().size();
        let mut offsets = Vec::new();
        for part in 0..space.num_parts() {
            let comps = space.part(part).num_components();
            for c in 0..comps {
                offsets.push(space.offset(part) + c * n);
            }
        }
        if offsets.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: offsets.len(),
                got: self.output_dim(),
            });
        }
        Ok(offsets)
    }
}

fn grid_points(space: &CompositeFunctionSpace) -> Vec<[f64; 2]> {
    let grid = space.grid();
    grid.indices()
        .map(|(i, j)| {
            let (x, y) = grid.point(i, j);
            [x, y]
        })
        .collect()
}

/// Adamax: Adam with an infinity-norm second moment. The update is
/// `m = b1*m + (1-b1)*g`, `u = max(b2*u, |g|)`,
/// `p -= lr/(1-b1^t) * m/(u+eps)`.
#[derive(Clone, Debug)]
pub struct Adamax {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<f64>,
    u: Vec<f64>,
}

impl Adamax {
    pub const DEFAULT_LR: f64 = 0.002;

    pub fn new(param_count: usize, lr: f64) -> Adamax {
        Adamax::with_hyperparameters(param_count, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(
        param_count: usize,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Adamax {
        Adamax {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: vec![0.0; param_count],
            u: vec![0.0; param_count],
        }
    }

    /// The per-parameter infinity-norm accumulator, exposed for tests.
    pub fn infinity_accumulator(&self) -> &[f64] {
        &self.u
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bias = 1.0 - self.beta1.powi(self.t as i32);
        let scale = self.lr / bias;
        for (((p, &g), m), u) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.u)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *u = (self.beta2 * *u).max(g.abs());
            *p -= scale * *m / (*u + self.eps);
        }
    }
}

/// One line of the training trace; all values refer to the parameter state
/// at the start of the epoch, before that epoch's optimizer step.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub sqrt_loss: f64,
    /// Trial-norm distance from the direct discrete solution.
    pub err_discrete: f64,
    /// Relative mesh-norm error against the closed form if one exists,
    /// otherwise against the direct solution.
    pub err_exact: f64,
    /// Running minimum of `err_exact`.
    pub best_err: f64,
}

/// Outcome of a training run: the per-epoch trace and the parameters that
/// achieved the best error seen.
#[derive(Debug)]
pub struct TrainOutcome {
    pub trace: Vec<TraceRow>,
    pub best_params: Vec<f64>,
    pub best_epoch: usize,
}

/// Runs `epochs` Adamax steps on the network against the system's loss.
/// Epoch `e` of the trace records the state after `e` steps; a zero-epoch
/// run records nothing and leaves the network untouched.
pub fn train(
    sys: &ProblemSystem,
    net: &mut Mlp,
    epochs: usize,
    learning_rate: f64,
) -> Result<TrainOutcome> {
    let space = sys.space();
    net.channel_offsets(space)?;
    let mut opt = Adamax::new(net.param_count(), learning_rate);
    let mut trace = Vec::with_capacity(epochs);
    let mut best_err = f64::INFINITY;
    let mut best_params = net.params().to_vec();
    let mut best_epoch = 0;
    for epoch in 0..epochs {
        let v = net.tabulate_dofs(space)?;
        let (loss, dv) = sys.loss_and_gradient(&v)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                value: loss,
                param_max: net.max_abs_param(),
            });
        }
        let err_discrete = sys.discrete_error(&v);
        let err_exact = sys.relative_target_error(&v)?;
        if err_exact < best_err {
            best_err = err_exact;
            best_params = net.params().to_vec();
            best_epoch = epoch;
        }
        trace.push(TraceRow {
            epoch,
            loss,
            sqrt_loss: loss.max(0.0).sqrt(),
            err_discrete,
            err_exact,
            best_err,
        });
        let g = net.parameter_gradient(space, &dv)?;
        opt.step(net.params_mut(), &g);
    }
    Ok(TrainOutcome {
        trace,
        best_params,
        best_epoch,
    })
}

#[derive(Serialize, Deserialize)]
struct ParamsHeader {
    layers: Vec<usize>,
    activation: String,
    seed: u64,
    param_count: usize,
}

/// Writes the parameters as a length-prefixed JSON header followed by the
/// raw little-endian 64-bit values.
pub fn save_params(net: &Mlp, seed: u64, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&ParamsHeader {
        layers: net.sizes().to_vec(),
        activation: "tanh".into(),
        seed,
        param_count: net.param_count(),
    })
    .expect("header serialization cannot fail");
    let mut file = std::fs::File::create(path)?;
    file.write_all(&(header.len() as u64).to_le_bytes())?;
    file.write_all(&header)?;
    for p in net.params() {
        file.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a parameter file written by [`save_params`]; returns the network
/// and the seed recorded at save time.
pub fn load_params(path: &Path) -> Result<(Mlp, u64)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::BadParamsFile("missing header length".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::BadParamsFile("truncated header".into()));
    }
    let header: ParamsHeader = serde_json::from_slice(&bytes[8..8 + hlen])
        .map_err(|e| Error::BadParamsFile(e.to_string()))?;
    let mut net = Mlp::zeros(&header.layers)?;
    let body = &bytes[8 + hlen..];
    if header.param_count != net.param_count() || body.len() != 8 * net.param_count() {
        return Err(Error::BadParamsFile(format!(
            "expected {} parameters, file carries {} bytes",
            net.param_count(),
            body.len()
        )));
    }
    for (p, chunk) in net.params_mut().iter_mut().zip(body.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((net, header.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{BilinearForm, SpaceSignature};
    use crate::calculus::{grad, Sign};
    use crate::field::{dot, GridFunction};
    use crate::grid::Grid;
    use crate::loss::SystemInputs;
    use crate::spaces::{interior_mask, select_dofs, FunctionSpace};

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[2, 5, 3]).unwrap();
        let out = net.forward(&[[0.3, 0.7], [0.0, 1.0]]);
        assert_eq!(out, vec![0.0; 6]);
    }

    #[test]
    fn single_hidden_unit_matches_the_closed_form() {
        let mut net = Mlp::zeros(&[2, 1, 1]).unwrap();
        let (a, b, c, d, e) = (0.4, -0.7, 0.2, 1.3, -0.5);
        net.params_mut().copy_from_slice(&[a, b, c, d, e]);
        let (x, y) = (0.3, 0.9);
        let out = net.forward(&[[x, y]]);
        let want = d * (a * x + b * y + c).tanh() + e;
        assert!((out[0] - want).abs() <= 1e-15);
    }

    #[test]
    fn invalid_layer_lists_are_rejected() {
        assert!(Mlp::zeros(&[2]).is_err());
        assert!(Mlp::zeros(&[3, 4, 1]).is_err());
        assert!(Mlp::zeros(&[2, 0, 1]).is_err());
    }

    #[test]
    fn tabulation_follows_the_dof_ordering() {
        let grid = Grid::new(2, 2).unwrap();
        let space =
            CompositeFunctionSpace::new(vec![("u", FunctionSpace::new(grid, &[]))]).unwrap();
        let net = Mlp::new(&[2, 4, 1], 11).unwrap();
        let v = net.tabulate_dofs(&space).unwrap();
        let direct = GridFunction::from_fn(grid, |x, y| net.forward(&[[x, y]])[0]);
        assert_eq!(v, direct.data());
    }

    #[test]
    fn tabulation_covers_vector_parts_component_major() {
        let grid = Grid::new(2, 2).unwrap();
        let space = CompositeFunctionSpace::new(vec![
            ("u", FunctionSpace::new(grid, &[2])),
            ("p", FunctionSpace::new(grid, &[])),
        ])
        .unwrap();
        let net = Mlp::new(&[2, 6, 3], 5).unwrap();
        let v = net.tabulate_dofs(&space).unwrap();
        let n = grid.size();
        for (k, (i, j)) in grid.indices().enumerate() {
            let (x, y) = grid.point(i, j);
            let out = net.forward(&[[x, y]]);
            assert_eq!(v[k], out[0]);
            assert_eq!(v[n + k], out[1]);
            assert_eq!(v[2 * n + k], out[2]);
        }
    }

    #[test]
    fn output_dimension_mismatch_is_rejected() {
        let grid = Grid::new(2, 2).unwrap();
        let space =
            CompositeFunctionSpace::new(vec![("u", FunctionSpace::new(grid, &[2]))]).unwrap();
        let net = Mlp::new(&[2, 4, 1], 0).unwrap();
        assert!(net.tabulate_dofs(&space).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let net = Mlp::new(&[2, 8, 2], 3).unwrap();
        let points = [[0.1, 0.2], [0.8, 0.5]];
        let g = net.backward(&points, &[0.0; 4]).unwrap();
        assert_eq!(g, vec![0.0; net.param_count()]);
    }

    #[test]
    fn cotangent_shape_mismatch_is_rejected() {
        let net = Mlp::new(&[2, 8, 2], 3).unwrap();
        assert!(net.backward(&[[0.1, 0.2]], &[1.0]).is_err());
    }

    #[test]
    fn linear_layer_gradient_is_the_outer_product() {
        let mut net = Mlp::zeros(&[2, 2]).unwrap();
        net.params_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 0.5, -0.5]);
        let point = [[0.3, 0.7]];
        let cot = [2.0, -1.0];
        let g = net.backward(&point, &cot).unwrap();
        assert_eq!(
            g,
            vec![
                2.0 * 0.3,
                2.0 * 0.7,
                -1.0 * 0.3,
                -1.0 * 0.7,
                2.0,
                -1.0
            ]
        );
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Mlp::new(&[2, 16, 2], 42).unwrap();
        let points = [[0.15, 0.35], [0.6, 0.85], [0.5, 0.5]];
        let cot = [0.7, -0.3, 0.2, 1.1, -0.9, 0.4];
        let g = net.backward(&points, &cot).unwrap();
        let objective = |n: &Mlp| -> f64 {
            n.forward(&points)
                .iter()
                .zip(&cot)
                .map(|(o, c)| o * c)
                .sum()
        };
        let step = 1e-6;
        let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut probe = net.clone();
        for k in 0..net.param_count() {
            let orig = probe.params()[k];
            probe.params_mut()[k] = orig + step;
            let up = objective(&probe);
            probe.params_mut()[k] = orig - step;
            let down = objective(&probe);
            probe.params_mut()[k] = orig;
            let fd = (up - down) / (2.0 * step);
            assert!(
                (g[k] - fd).abs() <= 1e-6 * scale,
                "param {k}: {} vs {}",
                g[k],
                fd
            );
        }
    }

    #[test]
    fn initialization_is_seed_deterministic() {
        let a = Mlp::new(&[2, 32, 32, 1], 9).unwrap();
        let b = Mlp::new(&[2, 32, 32, 1], 9).unwrap();
        let c = Mlp::new(&[2, 32, 32, 1], 10).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        for w in a.params() {
            assert!(w.abs() < 1.0);
        }
    }

    #[test]
    fn adamax_first_step_moves_by_the_learning_rate() {
        let mut opt = Adamax::new(3, Adamax::DEFAULT_LR);
        let mut p = vec![1.0, 2.0, 3.0];
        opt.step(&mut p, &[1.0, 1.0, 1.0]);
        let want = 1.0 - 0.002 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() <= 1e-15);
        assert!((p[1] - (1.0 + want)).abs() <= 1e-15);
    }

    #[test]
    fn adamax_ignores_zero_gradients_from_the_start() {
        let mut opt = Adamax::new(2, 0.01);
        let mut p = vec![0.5, -0.5];
        for _ in 0..5 {
            opt.step(&mut p, &[0.0, 0.0]);
        }
        assert_eq!(p, vec![0.5, -0.5]);
    }

    #[test]
    fn infinity_accumulator_is_monotone_without_decay() {
        let mut opt = Adamax::with_hyperparameters(4, 0.002, 0.9, 1.0, 1e-8);
        let mut p = vec![0.0; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut prev = vec![0.0; 4];
        for _ in 0..50 {
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            opt.step(&mut p, &g);
            for (now, before) in opt.infinity_accumulator().iter().zip(&prev) {
                assert!(now >= before);
            }
            prev = opt.infinity_accumulator().to_vec();
        }
    }

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_sig() -> SpaceSignature {
        SpaceSignature::new(&[("u", &[])])
    }

    fn stiffness_integrand(u: &[GridFunction], v: &[GridFunction]) -> GridFunction {
        dot(&grad(&u[0], Sign::Plus), &grad(&v[0], Sign::Plus))
    }

    fn mass_integrand(u: &[GridFunction], v: &[GridFunction]) -> GridFunction {
        dot(&u[0], &v[0])
    }

    fn poisson_system(n: usize) -> crate::loss::ProblemSystem {
        let grid = Grid::new(n, n).unwrap();
        let space_u = FunctionSpace::new(grid, &[]);
        let space = CompositeFunctionSpace::new(vec![("u", space_u.clone())]).unwrap();
        let bc = select_dofs(&space_u, &interior_mask(grid), true).unwrap();
        let bc = space.combine_dofs(&[bc]).unwrap();
        let stiffness = BilinearForm::new("stiffness", scalar_sig(), scalar_sig(), stiffness_integrand)
            .with_radius(1);
        let mass = BilinearForm::new("l2", scalar_sig(), scalar_sig(), mass_integrand).with_radius(0);
        crate::loss::ProblemSystem::build(SystemInputs {
            name: "poisson",
            space: &space,
            operator: &stiffness,
            test_gram: &stiffness,
            trial_gram: &stiffness,
            mass: &mass,
            forcing: vec![GridFunction::constant(grid, 1.0)],
            bc,
            lift: None,
            pressure_part: None,
            target: None,
        })
        .unwrap()
    }

    #[test]
    fn end_to_end_parameter_gradient_matches_finite_differences() {
        let sys = poisson_system(4);
        let net = Mlp::new(&[2, 8, 1], 21).unwrap();
        let v = net.tabulate_dofs(sys.space()).unwrap();
        let (_, dv) = sys.loss_and_gradient(&v).unwrap();
        let g = net.parameter_gradient(sys.space(), &dv).unwrap();
        let loss_of = |n: &Mlp| {
            let v = n.tabulate_dofs(sys.space()).unwrap();
            sys.loss_value(&v).unwrap()
        };
        let step = 1e-6;
        let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut probe = net.clone();
        for k in 0..net.param_count() {
            let orig = probe.params()[k];
            probe.params_mut()[k] = orig + step;
            let up = loss_of(&probe);
            probe.params_mut()[k] = orig - step;
            let down = loss_of(&probe);
            probe.params_mut()[k] = orig;
            let fd = (up - down) / (2.0 * step);
            assert!(
                (g[k] - fd).abs() <= 1e-5 * scale,
                "param {k}: {} vs {}",
                g[k],
                fd
            );
        }
    }

    #[test]
    fn zero_epochs_leaves_the_network_untouched() {
        let sys = poisson_system(3);
        let mut net = Mlp::new(&[2, 4, 1], 1).unwrap();
        let before = net.params().to_vec();
        let outcome = train(&sys, &mut net, 0, 0.002).unwrap();
        assert!(outcome.trace.is_empty());
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn short_training_reduces_the_loss() {
        let sys = poisson_system(3);
        let mut net = Mlp::new(&[2, 16, 1], 2).unwrap();
        let outcome = train(&sys, &mut net, 200, 0.01).unwrap();
        let first = outcome.trace.first().unwrap();
        let last = outcome.trace.last().unwrap();
        assert_eq!(first.epoch, 0);
        assert_eq!(outcome.trace.len(), 200);
        assert!(last.loss < first.loss / 10.0);
        let mut best = f64::INFINITY;
        for row in &outcome.trace {
            best = best.min(row.err_exact);
            assert_eq!(row.best_err, best);
            assert!((row.sqrt_loss.powi(2) - row.loss).abs() <= 1e-12 * row.loss.max(1e-30));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let sys = poisson_system(3);
        let run = || {
            let mut net = Mlp::new(&[2, 8, 1], 77).unwrap();
            let outcome = train(&sys, &mut net, 30, 0.002).unwrap();
            (net.params().to_vec(), outcome.trace.last().unwrap().loss)
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert_eq!(p1, p2);
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn non_finite_loss_aborts_with_the_epoch() {
        let sys = poisson_system(3);
        let mut net = Mlp::new(&[2, 4, 1], 1).unwrap();
        for p in net.params_mut() {
            *p = f64::INFINITY;
        }
        match train(&sys, &mut net, 5, 0.002) {
            Err(Error::NonFiniteLoss { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected a non-finite loss abort, got {other:?}"),
        }
    }

    #[test]
    fn params_file_round_trips() {
        let net = Mlp::new(&[2, 6, 3], 123).unwrap();
        let dir = std::env::temp_dir().join("dvf-net-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("params.bin");
        save_params(&net, 123, &path).unwrap();
        let (loaded, seed) = load_params(&path).unwrap();
        assert_eq!(seed, 123);
        assert_eq!(loaded.sizes(), net.sizes());
        assert_eq!(loaded.params(), net.params());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn corrupt_params_files_are_rejected() {
        let dir = std::env::temp_dir().join("dvf-net-test-bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.bin");
        std::fs::write(&path, [1, 2, 3]).unwrap();
        assert!(matches!(
            load_params(&path),
            Err(Error::BadParamsFile(_))
        ));
        std::fs::remove_file(&path).unwrap();
    }
}
