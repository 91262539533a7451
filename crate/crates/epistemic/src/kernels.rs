//! Covariance functions: classic kernels, analytic NNGP kernels for
//! common activations, the layer recursion, and a Monte-Carlo estimator
//! for activations without a closed form, plus Gram-matrix assembly.
//!
//! The NNGP kernels follow the standard layer recursion: the input-layer
//! kernel is `k0(x, x') = sb2 + sw2 * <x, x'> / d`, and each hidden layer
//! maps the current 2x2 covariance of pre-activations through
//! `sb2 + sw2 * E[h(u) h(v)]`. For ReLU this expectation is the arc-cosine
//! kernel, for erf the arcsine kernel; the Monte-Carlo path estimates it
//! by sampling `(u, v)` from the current bivariate Gaussian.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

use crate::linalg;
use crate::rng::{derive_seed, hash_f64s, Stream};

/// Tolerance when clamping inverse-trig arguments to [-1, 1]. Rounding
/// noise at coincident inputs routinely lands a hair outside; anything
/// beyond this indicates a genuine bug upstream.
const TRIG_CLAMP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("input dimensions disagree: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid kernel parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("inverse-trig argument {arg} outside [-1,1] beyond tolerance")]
    InverseTrigDomain { arg: f64 },
    #[error("non-finite kernel value at layer {layer}")]
    NonFinite { layer: usize },
    #[error("MC layer covariance not positive semidefinite (pivot {pivot:.3e})")]
    McCovarianceNotPsd { pivot: f64 },
    #[error("kernel evaluation failed at entry ({row}, {col}): {source}")]
    AtEntry {
        row: usize,
        col: usize,
        #[source]
        source: Box<KernelError>,
    },
    #[error("gram matrix io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("gram binary block malformed: {0}")]
    MalformedBinary(String),
}

/// Pointwise activation functions understood by the MC kernel estimator
/// and the finite-width networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Erf,
    Cos,
    /// Identity; mostly useful to validate estimators, since
    /// `E[u v]` equals the covariance itself.
    Linear,
}

impl Activation {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
            Activation::Erf => statrs::function::erf::erf(u),
            Activation::Cos => u.cos(),
            Activation::Linear => u,
        }
    }

    /// Derivative; ReLU uses subgradient 0 at the kink.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - u.tanh().powi(2),
            Activation::Erf => 2.0 / std::f64::consts::PI.sqrt() * (-u * u).exp(),
            Activation::Cos => -u.sin(),
            Activation::Linear => 1.0,
        }
    }
}

/// Description of a covariance function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    Rbf {
        length_scale: f64,
    },
    Ess {
        length_scale: f64,
        period: f64,
    },
    NngpRelu {
        depth: usize,
        weight_var: f64,
        bias_var: f64,
    },
    NngpErf {
        depth: usize,
        weight_var: f64,
        bias_var: f64,
    },
    NngpCosine1l {
        weight_var: f64,
        bias_var: f64,
    },
    NngpRbfNet1l {
        weight_var: f64,
        bias_var: f64,
        unit_var: f64,
        center_var: f64,
    },
    NngpMc {
        depth: usize,
        weight_var: f64,
        bias_var: f64,
        activation: Activation,
        samples: usize,
        seed: u64,
    },
}

impl KernelSpec {
    pub fn rbf(length_scale: f64) -> Self {
        KernelSpec::Rbf { length_scale }
    }

    /// ESS with the defaults used for the periodic experiments
    /// (`l = 1`, `p = 2 pi`, the period of the sine data).
    pub fn ess_default() -> Self {
        KernelSpec::Ess {
            length_scale: 1.0,
            period: std::f64::consts::TAU,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let positive = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(KernelError::InvalidParam { name, value })
            }
        };
        let nonneg = |name: &'static str, value: f64| {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(KernelError::InvalidParam { name, value })
            }
        };
        match *self {
            KernelSpec::Rbf { length_scale } => positive("length_scale", length_scale),
            KernelSpec::Ess {
                length_scale,
                period,
            } => {
                positive("length_scale", length_scale)?;
                positive("period", period)
            }
            KernelSpec::NngpRelu {
                depth,
                weight_var,
                bias_var,
            }
            | KernelSpec::NngpErf {
                depth,
                weight_var,
                bias_var,
            } => {
                positive("weight_var", weight_var)?;
                nonneg("bias_var", bias_var)?;
                positive("depth", depth as f64)
            }
            KernelSpec::NngpCosine1l {
                weight_var,
                bias_var,
            } => {
                positive("weight_var", weight_var)?;
                nonneg("bias_var", bias_var)
            }
            KernelSpec::NngpRbfNet1l {
                weight_var,
                bias_var,
                unit_var,
                center_var,
            } => {
                positive("weight_var", weight_var)?;
                nonneg("bias_var", bias_var)?;
                positive("unit_var", unit_var)?;
                positive("center_var", center_var)
            }
            KernelSpec::NngpMc {
                depth,
                weight_var,
                bias_var,
                samples,
                ..
            } => {
                positive("weight_var", weight_var)?;
                nonneg("bias_var", bias_var)?;
                positive("depth", depth as f64)?;
                positive("samples", samples as f64)
            }
        }
    }

    /// Evaluate the kernel at a pair of inputs.
    pub fn eval(&self, x: &ArrayView1<f64>, x2: &ArrayView1<f64>) -> Result<f64, KernelError> {
        if x.len() != x2.len() {
            return Err(KernelError::DimensionMismatch {
                left: x.len(),
                right: x2.len(),
            });
        }
        match *self {
            KernelSpec::Rbf { length_scale } => Ok(k_rbf(x, x2, length_scale)),
            KernelSpec::Ess {
                length_scale,
                period,
            } => Ok(k_ess(x, x2, length_scale, period)),
            KernelSpec::NngpRelu { .. } => k_nngp_relu(x, x2, self),
            KernelSpec::NngpErf { .. } => k_nngp_erf(x, x2, self),
            KernelSpec::NngpCosine1l { .. } => k_nngp_cosine_1l(x, x2, self),
            KernelSpec::NngpRbfNet1l { .. } => k_nngp_rbfnet_1l(x, x2, self),
            KernelSpec::NngpMc { .. } => Ok(k_nngp_mc(x, x2, self)?.value),
        }
    }

    /// Copy of the spec with the MC seed replaced (identity for
    /// analytic kernels); Gram assembly derives one seed per entry.
    fn with_seed(&self, seed: u64) -> KernelSpec {
        match *self {
            KernelSpec::NngpMc {
                depth,
                weight_var,
                bias_var,
                activation,
                samples,
                ..
            } => KernelSpec::NngpMc {
                depth,
                weight_var,
                bias_var,
                activation,
                samples,
                seed,
            },
            other => other,
        }
    }
}

fn sq_dist(x: &ArrayView1<f64>, x2: &ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(x2.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn sq_sum(x: &ArrayView1<f64>, x2: &ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(x2.iter())
        .map(|(a, b)| (a + b) * (a + b))
        .sum()
}

fn dot(x: &ArrayView1<f64>, x2: &ArrayView1<f64>) -> f64 {
    x.iter().zip(x2.iter()).map(|(a, b)| a * b).sum()
}

/// Squared-exponential kernel `exp(-||x - x'||^2 / (2 l^2))`.
pub fn k_rbf(x: &ArrayView1<f64>, x2: &ArrayView1<f64>, length_scale: f64) -> f64 {
    (-sq_dist(x, x2) / (2.0 * length_scale * length_scale)).exp()
}

/// Exp-sine-squared kernel `exp(-2 sin^2(pi ||x - x'|| / p) / l^2)`.
pub fn k_ess(x: &ArrayView1<f64>, x2: &ArrayView1<f64>, length_scale: f64, period: f64) -> f64 {
    let d = sq_dist(x, x2).sqrt();
    let s = (std::f64::consts::PI * d / period).sin();
    (-2.0 * s * s / (length_scale * length_scale)).exp()
}

/// Input-layer NNGP kernel `sb2 + sw2 * <x, x'> / d`.
pub fn k_base(x: &ArrayView1<f64>, x2: &ArrayView1<f64>, weight_var: f64, bias_var: f64) -> f64 {
    bias_var + weight_var * dot(x, x2) / x.len() as f64
}

fn clamp_unit(arg: f64) -> Result<f64, KernelError> {
    if arg.abs() <= 1.0 {
        Ok(arg)
    } else if arg.abs() <= 1.0 + TRIG_CLAMP_TOL {
        Ok(arg.clamp(-1.0, 1.0))
    } else {
        Err(KernelError::InverseTrigDomain { arg })
    }
}

struct LayerState {
    kxx: f64,
    kxy: f64,
    kyy: f64,
}

impl LayerState {
    fn base(
        x: &ArrayView1<f64>,
        x2: &ArrayView1<f64>,
        weight_var: f64,
        bias_var: f64,
    ) -> LayerState {
        LayerState {
            kxx: k_base(x, x, weight_var, bias_var),
            kxy: k_base(x, x2, weight_var, bias_var),
            kyy: k_base(x2, x2, weight_var, bias_var),
        }
    }

    fn check_finite(&self, layer: usize) -> Result<(), KernelError> {
        if self.kxx.is_finite() && self.kxy.is_finite() && self.kyy.is_finite() {
            Ok(())
        } else {
            Err(KernelError::NonFinite { layer })
        }
    }
}

/// Arc-cosine (ReLU) NNGP kernel after `depth` hidden layers.
pub fn k_nngp_relu(
    x: &ArrayView1<f64>,
    x2: &ArrayView1<f64>,
    spec: &KernelSpec,
) -> Result<f64, KernelError> {
    let KernelSpec::NngpRelu {
        depth,
        weight_var,
        bias_var,
    } = *spec
    else {
        return Err(KernelError::InvalidParam {
            name: "family",
            value: f64::NAN,
        });
    };
    let mut state = LayerState::base(x, x2, weight_var, bias_var);
    for layer in 1..=depth {
        let norm = (state.kxx * state.kyy).sqrt();
        let theta = clamp_unit(state.kxy / norm)?.acos();
        state = LayerState {
            kxx: bias_var + weight_var / 2.0 * state.kxx,
            kyy: bias_var + weight_var / 2.0 * state.kyy,
            kxy: bias_var
                + weight_var / (2.0 * std::f64::consts::PI)
                    * norm
                    * (theta.sin() + (std::f64::consts::PI - theta) * theta.cos()),
        };
        state.check_finite(layer)?;
    }
    Ok(state.kxy)
}

fn erf_step(cross: f64, diag_a: f64, diag_b: f64) -> Result<f64, KernelError> {
    let arg = clamp_unit(2.0 * cross / ((1.0 + 2.0 * diag_a) * (1.0 + 2.0 * diag_b)).sqrt())?;
    Ok(2.0 / std::f64::consts::PI * arg.asin())
}

/// Arcsine (erf) NNGP kernel after `depth` hidden layers.
pub fn k_nngp_erf(
    x: &ArrayView1<f64>,
    x2: &ArrayView1<f64>,
    spec: &KernelSpec,
) -> Result<f64, KernelError> {
    let KernelSpec::NngpErf {
        depth,
        weight_var,
        bias_var,
    } = *spec
    else {
        return Err(KernelError::InvalidParam {
            name: "family",
            value: f64::NAN,
        });
    };
    let mut state = LayerState::base(x, x2, weight_var, bias_var);
    for layer in 1..=depth {
        state = LayerState {
            kxx: bias_var + weight_var * erf_step(state.kxx, state.kxx, state.kxx)?,
            kyy: bias_var + weight_var * erf_step(state.kyy, state.kyy, state.kyy)?,
            kxy: bias_var + weight_var * erf_step(state.kxy, state.kxx, state.kyy)?,
        };
        state.check_finite(layer)?;
    }
    Ok(state.kxy)
}

/// Single-hidden-layer cosine-activation NNGP kernel (closed form).
pub fn k_nngp_cosine_1l(
    x: &ArrayView1<f64>,
    x2: &ArrayView1<f64>,
    spec: &KernelSpec,
) -> Result<f64, KernelError> {
    let KernelSpec::NngpCosine1l {
        weight_var,
        bias_var,
    } = *spec
    else {
        return Err(KernelError::InvalidParam {
            name: "family",
            value: f64::NAN,
        });
    };
    let d = x.len() as f64;
    Ok(bias_var
        + weight_var / 2.0
            * ((-weight_var * sq_dist(x, x2) / (2.0 * d)).exp()
                + (-weight_var * sq_sum(x, x2) / (2.0 * d) - 2.0 * bias_var).exp()))
}

/// Single-hidden-layer RBF-network NNGP kernel (closed form).
///
/// The derived scales follow from the unit width `sg2` and center prior
/// variance `smu2`: `1/se2 = 2/sg2 + 1/smu2`, `ss2 = 2 sg2 + sg2^2/smu2`,
/// `sm2 = 2 smu2 + sg2`.
pub fn k_nngp_rbfnet_1l(
    x: &ArrayView1<f64>,
    x2: &ArrayView1<f64>,
    spec: &KernelSpec,
) -> Result<f64, KernelError> {
    let KernelSpec::NngpRbfNet1l {
        weight_var,
        bias_var,
        unit_var: sg2,
        center_var: smu2,
    } = *spec
    else {
        return Err(KernelError::InvalidParam {
            name: "family",
            value: f64::NAN,
        });
    };
    let d = x.len() as f64;
    let se2 = 1.0 / (2.0 / sg2 + 1.0 / smu2);
    let ss2 = 2.0 * sg2 + sg2 * sg2 / smu2;
    let sm2 = 2.0 * smu2 + sg2;
    let norm_x: f64 = x.iter().map(|v| v * v).sum();
    let norm_x2: f64 = x2.iter().map(|v| v * v).sum();
    Ok(bias_var
        + weight_var
            * (se2 / smu2).powf(d / 2.0)
            * (-norm_x / (2.0 * sm2)).exp()
            * (-sq_dist(x, x2) / (2.0 * ss2)).exp()
            * (-norm_x2 / (2.0 * sm2)).exp())
}

/// Monte-Carlo NNGP kernel estimate plus the standard error of the final
/// layer's cross moment.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    pub value: f64,
    /// Delta-method standard error of the last layer's `E[h(u) h(v)]`
    /// estimate (exact for depth 1; ignores upstream layer error beyond).
    pub std_error: f64,
}

/// Monte-Carlo estimate of the NNGP kernel: per layer, draw `samples`
/// bivariate-normal pairs from the current 2x2 covariance and average the
/// activation products. Deterministic given the spec's seed; invariant to
/// swapping `x` and `x2` because the pair is canonically ordered first.
pub fn k_nngp_mc(
    x: &ArrayView1<f64>,
    x2: &ArrayView1<f64>,
    spec: &KernelSpec,
) -> Result<McEstimate, KernelError> {
    let KernelSpec::NngpMc {
        depth,
        weight_var,
        bias_var,
        activation,
        samples,
        seed,
    } = *spec
    else {
        return Err(KernelError::InvalidParam {
            name: "family",
            value: f64::NAN,
        });
    };
    // canonical order keeps the estimator symmetric under argument swap
    let swap = x
        .iter()
        .zip(x2.iter())
        .find_map(|(a, b)| match a.total_cmp(b) {
            std::cmp::Ordering::Equal => None,
            ord => Some(ord == std::cmp::Ordering::Greater),
        })
        .unwrap_or(false);
    let (a, b) = if swap {
        (x2.reborrow(), x.reborrow())
    } else {
        (x.reborrow(), x2.reborrow())
    };

    let mut stream = Stream::new(seed);
    let mut state = LayerState::base(&a, &b, weight_var, bias_var);
    let mut last_se = 0.0;
    for layer in 1..=depth {
        state.check_finite(layer - 1)?;
        // 2x2 Cholesky of the symmetrized layer covariance
        if state.kxx <= 0.0 {
            return Err(KernelError::McCovarianceNotPsd { pivot: state.kxx });
        }
        let l11 = state.kxx.sqrt();
        let l21 = state.kxy / l11;
        let mut pivot = state.kyy - l21 * l21;
        if pivot < 0.0 {
            if pivot < -TRIG_CLAMP_TOL * state.kyy.abs().max(1.0) {
                return Err(KernelError::McCovarianceNotPsd { pivot });
            }
            pivot = 0.0;
        }
        let l22 = pivot.sqrt();
        let (mut s_uu, mut s_uv, mut s_vv, mut s_uv2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..samples {
            let z1 = stream.normal();
            let z2 = stream.normal();
            let u = l11 * z1;
            let v = l21 * z1 + l22 * z2;
            let hu = activation.apply(u);
            let hv = activation.apply(v);
            s_uu += hu * hu;
            s_uv += hu * hv;
            s_vv += hv * hv;
            s_uv2 += hu * hv * hu * hv;
        }
        let n = samples as f64;
        let mean_uv = s_uv / n;
        let var_uv = (s_uv2 / n - mean_uv * mean_uv).max(0.0);
        last_se = weight_var * (var_uv / n).sqrt();
        state = LayerState {
            kxx: bias_var + weight_var * s_uu / n,
            kxy: bias_var + weight_var * mean_uv,
            kyy: bias_var + weight_var * s_vv / n,
        };
    }
    state.check_finite(depth)?;
    Ok(McEstimate {
        value: state.kxy,
        std_error: last_se,
    })
}

/// Where a Gram matrix came from: spec plus input hashes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: KernelSpec,
    pub x_hash: u64,
    pub x2_hash: Option<u64>,
}

/// A (cross-)Gram matrix of kernel evaluations.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub provenance: Provenance,
}

/// Square Gram matrix on one point set. Entries above the diagonal are
/// computed and mirrored, which symmetrizes exactly; MC entries use the
/// per-pair seed `derive_seed(spec.seed, [i, j])` with `i <= j`, so the
/// result is independent of the parallel schedule.
pub fn gram(spec: &KernelSpec, x: &ArrayView2<f64>) -> Result<GramMatrix, KernelError> {
    spec.validate()?;
    let n = x.nrows();
    let base_seed = match spec {
        KernelSpec::NngpMc { seed, .. } => *seed,
        _ => 0,
    };
    let rows: Vec<Result<Vec<f64>, KernelError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n - i);
            for j in i..n {
                let pair_spec = spec.with_seed(derive_seed(base_seed, &[i as u64, j as u64]));
                let v = pair_spec
                    .eval(&x.row(i), &x.row(j))
                    .map_err(|source| KernelError::AtEntry {
                        row: i,
                        col: j,
                        source: Box::new(source),
                    })?;
                row.push(v);
            }
            Ok(row)
        })
        .collect();
    let mut values = Array2::<f64>::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(GramMatrix {
        values,
        provenance: Provenance {
            spec: *spec,
            x_hash: hash_f64s(x.iter()),
            x2_hash: None,
        },
    })
}

/// Rectangular cross-Gram matrix `K[i, j] = k(x_i, x2_j)`.
pub fn cross_gram(
    spec: &KernelSpec,
    x: &ArrayView2<f64>,
    x2: &ArrayView2<f64>,
) -> Result<GramMatrix, KernelError> {
    spec.validate()?;
    if x.ncols() != x2.ncols() {
        return Err(KernelError::DimensionMismatch {
            left: x.ncols(),
            right: x2.ncols(),
        });
    }
    let (n, m) = (x.nrows(), x2.nrows());
    let base_seed = match spec {
        KernelSpec::NngpMc { seed, .. } => *seed,
        _ => 0,
    };
    let rows: Vec<Result<Vec<f64>, KernelError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let pair_spec = spec.with_seed(derive_seed(base_seed, &[i as u64, j as u64]));
                let v = pair_spec
                    .eval(&x.row(i), &x2.row(j))
                    .map_err(|source| KernelError::AtEntry {
                        row: i,
                        col: j,
                        source: Box::new(source),
                    })?;
                row.push(v);
            }
            Ok(row)
        })
        .collect();
    let mut values = Array2::<f64>::zeros((n, m));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(GramMatrix {
        values,
        provenance: Provenance {
            spec: *spec,
            x_hash: hash_f64s(x.iter()),
            x2_hash: Some(hash_f64s(x2.iter())),
        },
    })
}

impl GramMatrix {
    /// Opt-in PSD repair: clamp negative eigenvalues at zero and rebuild.
    /// Returns the magnitude of the most negative eigenvalue found (0 when
    /// the matrix was already PSD). The default inference path relies on
    /// the likelihood noise jitter instead.
    pub fn repair_psd(&mut self) -> Result<f64, KernelError> {
        let n = self.values.nrows();
        if self.values.ncols() != n {
            return Err(KernelError::DimensionMismatch {
                left: n,
                right: self.values.ncols(),
            });
        }
        let (vals, vecs) = linalg::symmetric_eigen(&self.values.view()).map_err(|_| {
            KernelError::MalformedBinary("eigendecomposition failed on non-square input".into())
        })?;
        let worst = vals.iter().cloned().fold(0.0f64, f64::min);
        if worst >= 0.0 {
            return Ok(0.0);
        }
        let clamped = vals.mapv(|v| v.max(0.0));
        let mut rebuilt = Array2::<f64>::zeros((n, n));
        for k in 0..n {
            if clamped[k] == 0.0 {
                continue;
            }
            let col = vecs.column(k);
            for i in 0..n {
                for j in 0..n {
                    rebuilt[[i, j]] += clamped[k] * col[i] * col[j];
                }
            }
        }
        // exact symmetry despite accumulation rounding
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (rebuilt[[i, j]] + rebuilt[[j, i]]);
                rebuilt[[i, j]] = s;
                rebuilt[[j, i]] = s;
            }
        }
        self.values = rebuilt;
        Ok(-worst)
    }

    /// CSV serialization, one matrix row per line.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), KernelError> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.values.rows() {
            let rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            w.write_record(&rec)
                .map_err(|e| KernelError::MalformedBinary(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian binary block: an 8-byte row count followed by the
    /// row-major doubles. The column count is implied by the block length.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<(), KernelError> {
        writer.write_all(&(self.values.nrows() as u64).to_le_bytes())?;
        for v in self.values.iter() {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut reader: R, provenance: Provenance) -> Result<Self, KernelError> {
        let mut header = [0u8; 8];
        reader.read_exact(&mut header)?;
        let rows = u64::from_le_bytes(header) as usize;
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        if rows == 0 || payload.len() % 8 != 0 {
            return Err(KernelError::MalformedBinary(format!(
                "{} payload bytes for {} rows",
                payload.len(),
                rows
            )));
        }
        let total = payload.len() / 8;
        if total % rows != 0 {
            return Err(KernelError::MalformedBinary(format!(
                "{total} doubles not divisible by {rows} rows"
            )));
        }
        let cols = total / rows;
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(GramMatrix {
            values: Array2::from_shape_vec((rows, cols), values)
                .expect("shape consistent by construction"),
            provenance,
        })
    }
}
