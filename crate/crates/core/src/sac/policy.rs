use rand::Rng;
use rand_distr::StandardNormal;

use super::config::LogStdMode;
use crate::error::Result;
use crate::numcore::gaussian::{squash_backward, squash_sample};
use crate::numcore::{Activation, DenseNet, ForwardCache, GaussianHead, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    /// Uniform in `[−1, 1]ᵈ`.
    Random,
    /// Squashed-Gaussian sample.
    Explore,
    /// `tanh(mean)`.
    Greedy,
}

/// Tanh-activated trunk (layer-normalized first hidden layer) feeding a
/// squashed diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    net: DenseNet<f64>,
    global_log_std: Vec<f64>,
    action_dim: usize,
    mode: LogStdMode,
}

/// Reparameterized batch of actions with what is needed to differentiate them.
pub struct PolicySample {
    pub actions: Matrix<f64>,
    pub log_probs: Vec<f64>,
    pub(crate) raw_log_std: Matrix<f64>,
    pub(crate) noise: Matrix<f64>,
    pub(crate) cache: ForwardCache<f64>,
}

/// Gradients of a scalar objective with respect to the policy parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrads {
    pub net: Vec<f64>,
    pub global_log_std: Vec<f64>,
}

impl PolicyModel {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], mode: LogStdMode) -> Result<Self> {
        let out = match mode {
            LogStdMode::StateDependent => 2 * action_dim,
            LogStdMode::Global => action_dim,
        };
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(out))
            .collect();
        Ok(Self {
            net: DenseNet::zeros(&sizes, Activation::Tanh, true)?,
            global_log_std: vec![0.0; action_dim],
            action_dim,
            mode,
        })
    }

    pub fn from_parts(net: DenseNet<f64>, global_log_std: Vec<f64>, mode: LogStdMode) -> Result<Self> {
        let action_dim = global_log_std.len();
        let expect = match mode {
            LogStdMode::StateDependent => 2 * action_dim,
            LogStdMode::Global => action_dim,
        };
        if net.output_dim() != expect {
            return Err(crate::error::config_err(format!(
                "policy network outputs {}, expected {expect}",
                net.output_dim()
            )));
        }
        Ok(Self {
            net,
            global_log_std,
            action_dim,
            mode,
        })
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.net.init_uniform(rng);
    }

    pub fn net(&self) -> &DenseNet<f64> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet<f64> {
        &mut self.net
    }

    pub fn global_log_std(&self) -> &[f64] {
        &self.global_log_std
    }

    pub fn global_log_std_mut(&mut self) -> &mut [f64] {
        &mut self.global_log_std
    }

    pub fn mode(&self) -> LogStdMode {
        self.mode
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn split(&self, out: &Matrix<f64>) -> (Matrix<f64>, Matrix<f64>) {
        let d = self.action_dim;
        let mean = out.columns(0, d);
        let ls = match self.mode {
            LogStdMode::StateDependent => out.columns(d, d),
            LogStdMode::Global => {
                let mut m = Matrix::zeros(out.rows(), d);
                for i in 0..out.rows() {
                    m.row_mut(i).copy_from_slice(&self.global_log_std);
                }
                m
            }
        };
        (mean, ls)
    }

    /// Gaussian head for one observation.
    pub fn head(&self, observation: &[f64]) -> Result<GaussianHead<f64>> {
        let out = self.net.forward(observation)?;
        let (mean, ls) = self.split(&Matrix::from_vec(1, out.len(), out));
        Ok(GaussianHead::new(mean.into_vec(), ls.into_vec()))
    }

    pub fn act<R: Rng + ?Sized>(&self, observation: &[f64], mode: ActMode, rng: &mut R) -> Result<Vec<f64>> {
        match mode {
            ActMode::Random => Ok((0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()),
            ActMode::Explore => {
                let head = self.head(observation)?;
                let noise: Vec<f64> = (0..self.action_dim).map(|_| rng.sample(StandardNormal)).collect();
                Ok(head.sample_squashed(&noise).0)
            }
            ActMode::Greedy => Ok(self.head(observation)?.greedy()),
        }
    }

    /// Batched reparameterized sampling for the given standard-normal noise.
    pub fn sample(&self, obs: Matrix<f64>, noise: Matrix<f64>) -> PolicySample {
        let cache = self.net.forward_cached(obs);
        let (mean, raw_log_std) = self.split(cache.output());
        let n = mean.rows();
        let mut actions = Matrix::zeros(n, self.action_dim);
        let log_probs = (0..n)
            .map(|i| squash_sample(mean.row(i), raw_log_std.row(i), noise.row(i), actions.row_mut(i)))
            .collect();
        PolicySample {
            actions,
            log_probs,
            raw_log_std,
            noise,
            cache,
        }
    }

    /// Backpropagates upstream gradients on the sampled actions and their
    /// log-probabilities into the policy parameters.
    pub fn backward(&self, sample: &PolicySample, d_actions: &Matrix<f64>, d_log_probs: &[f64]) -> PolicyGrads {
        let d = self.action_dim;
        let n = sample.actions.rows();
        let out_cols = self.net.output_dim();
        let mut upstream = Matrix::zeros(n, out_cols);
        let mut global = vec![0.0; d];
        let (mut dm, mut dl) = (vec![0.0; d], vec![0.0; d]);
        for i in 0..n {
            squash_backward(
                sample.raw_log_std.row(i),
                sample.noise.row(i),
                sample.actions.row(i),
                d_actions.row(i),
                d_log_probs[i],
                &mut dm,
                &mut dl,
            );
            let row = upstream.row_mut(i);
            row[..d].copy_from_slice(&dm);
            match self.mode {
                LogStdMode::StateDependent => row[d..].copy_from_slice(&dl),
                LogStdMode::Global => global.iter_mut().zip(&dl).for_each(|(g, v)| *g += v),
            }
        }
        let mut net = vec![0.0; self.net.params().len()];
        self.net.backward_batch(&sample.cache, &upstream, &mut net, false);
        PolicyGrads {
            net,
            global_log_std: global,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(mode: LogStdMode) -> PolicyModel {
        let mut p = PolicyModel::new(3, 2, &[8, 8], mode).unwrap();
        p.init(&mut ChaCha8Rng::seed_from_u64(2));
        p
    }

    #[test]
    fn greedy_is_deterministic() {
        let p = policy(LogStdMode::StateDependent);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let o = [0.1, -0.2, 0.3];
        assert_eq!(
            p.act(&o, ActMode::Greedy, &mut r1).unwrap(),
            p.act(&o, ActMode::Greedy, &mut r2).unwrap()
        );
    }

    #[test]
    fn random_mode_stays_in_box() {
        let p = policy(LogStdMode::Global);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a = p.act(&[0.0; 3], ActMode::Random, &mut rng).unwrap();
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn explore_mean_matches_pushforward_mean() {
        // Monte-Carlo mean of tanh(μ + σξ) against a quadrature of the same
        // pushforward, within 3 standard errors.
        let p = policy(LogStdMode::StateDependent);
        let o = [0.4, 0.1, -0.6];
        let head = p.head(&o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| p.act(&o, ActMode::Explore, &mut rng).unwrap()).collect();
        for dim in 0..2 {
            let (m, s) = (head.mean()[dim], head.log_std()[dim].exp());
            let steps = 20_000;
            let (lo, hi) = (-10.0, 10.0);
            let h = (hi - lo) / steps as f64;
            let mut expect = 0.0;
            let mut second = 0.0;
            for k in 0..steps {
                let x = lo + (k as f64 + 0.5) * h;
                let w = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * h;
                let a = (m + s * x).tanh();
                expect += a * w;
                second += a * a * w;
            }
            let se = ((second - expect * expect) / n as f64).sqrt();
            let mc = draws.iter().map(|a| a[dim]).sum::<f64>() / n as f64;
            assert!((mc - expect).abs() < 3.0 * se, "dim {dim}: {mc} vs {expect} (se {se})");
        }
    }

    #[test]
    fn batched_sample_matches_single_head() {
        let p = policy(LogStdMode::StateDependent);
        let obs = Matrix::from_rows(&[[0.1, 0.2, 0.3], [-0.5, 0.0, 0.9]]);
        let noise = Matrix::from_rows(&[[0.3, -1.0], [1.2, 0.4]]);
        let s = p.sample(obs.clone(), noise.clone());
        for i in 0..2 {
            let (a, lp) = p.head(obs.row(i)).unwrap().sample_squashed(noise.row(i));
            assert_eq!(s.actions.row(i), a.as_slice());
            assert!((s.log_probs[i] - lp).abs() < 1e-12);
        }
    }
}
